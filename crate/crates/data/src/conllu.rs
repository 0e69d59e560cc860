//! Minimal CoNLL-U reading and writing: ID, FORM, UPOS and HEAD columns.

use std::fs;
use std::path::Path;

use crate::DataError;

/// Dependency tree over words. `heads[k]` is the 1-based head of word `k + 1`,
/// `0` marking the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldTree {
    pub forms: Vec<String>,
    pub heads: Vec<usize>,
    pub upos: Vec<String>,
}

impl GoldTree {
    pub fn new(forms: Vec<String>, heads: Vec<usize>, upos: Vec<String>) -> Result<Self, DataError> {
        let tree = GoldTree { forms, heads, upos };
        tree.validate().map_err(DataError::Invalid)?;
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    fn validate(&self) -> Result<(), String> {
        let n = self.heads.len();
        if n == 0 {
            return Err("empty sentence".into());
        }
        if self.forms.len() != n || self.upos.len() != n {
            return Err("column lengths differ".into());
        }
        if let Some(h) = self.heads.iter().find(|&&h| h > n) {
            return Err(format!("head {} out of range for {} words", h, n));
        }
        let roots = self.heads.iter().filter(|&&h| h == 0).count();
        if roots != 1 {
            return Err(format!("expected exactly one root, found {}", roots));
        }
        Ok(())
    }

    /// 1-based children of word `k` (1-based); `0` gives the root word.
    pub fn children(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.heads
            .iter()
            .enumerate()
            .filter(move |&(_, &h)| h == k)
            .map(|(i, _)| i + 1)
    }
}

/// Parses CoNLL-U text, skipping comments, multiword ranges and empty nodes.
pub fn parse_conllu(text: &str, path: &str) -> Result<Vec<GoldTree>, DataError> {
    let err = |line: usize, message: String| DataError::Parse {
        path: path.to_owned(),
        line,
        message,
    };
    let mut trees = Vec::new();
    let mut forms = Vec::new();
    let mut heads = Vec::new();
    let mut upos = Vec::new();
    let mut start_line = 1;

    let mut finish = |forms: &mut Vec<String>,
                      heads: &mut Vec<usize>,
                      upos: &mut Vec<String>,
                      line: usize|
     -> Result<(), DataError> {
        if heads.is_empty() {
            return Ok(());
        }
        let tree = GoldTree {
            forms: std::mem::take(forms),
            heads: std::mem::take(heads),
            upos: std::mem::take(upos),
        };
        tree.validate().map_err(|m| err(line, m))?;
        trees.push(tree);
        Ok(())
    };

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish(&mut forms, &mut heads, &mut upos, start_line)?;
            start_line = lineno + 1;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(err(lineno, format!("expected 10 tab-separated columns, got {}", cols.len())));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let id: usize = cols[0]
            .parse()
            .map_err(|_| err(lineno, format!("invalid ID {:?}", cols[0])))?;
        if id != heads.len() + 1 {
            return Err(err(lineno, format!("expected word ID {}, got {}", heads.len() + 1, id)));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| err(lineno, format!("invalid HEAD {:?}", cols[6])))?;
        forms.push(cols[1].to_owned());
        upos.push(cols[3].to_owned());
        heads.push(head);
    }
    finish(&mut forms, &mut heads, &mut upos, start_line)?;
    Ok(trees)
}

pub fn read_conllu(path: impl AsRef<Path>) -> Result<Vec<GoldTree>, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_conllu(&text, &path.display().to_string())
}

pub fn to_conllu(trees: &[GoldTree]) -> String {
    let mut out = String::new();
    for tree in trees {
        for (k, ((form, head), upos)) in tree.forms.iter().zip(&tree.heads).zip(&tree.upos).enumerate() {
            out.push_str(&format!(
                "{}\t{}\t_\t{}\t_\t_\t{}\t_\t_\t_\n",
                k + 1,
                form,
                if upos.is_empty() { "_" } else { upos },
                head
            ));
        }
        out.push('\n');
    }
    out
}

pub fn write_conllu(path: impl AsRef<Path>, trees: &[GoldTree]) -> Result<(), DataError> {
    fs::write(&path, to_conllu(trees)).map_err(|e| DataError::io(&path, e))
}
