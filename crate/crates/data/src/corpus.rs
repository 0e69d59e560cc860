use std::fs;
use std::path::Path;

use crate::DataError;

/// One whitespace-tokenized sentence per line.
pub fn read_tokenized(path: impl AsRef<Path>) -> Result<Vec<Vec<String>>, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    Ok(text
        .lines()
        .map(|line| line.split_whitespace().map(str::to_owned).collect())
        .collect())
}

/// Two aligned files; every line pair must be non-empty on both sides.
pub fn read_parallel(
    src: impl AsRef<Path>,
    tgt: impl AsRef<Path>,
) -> Result<Vec<(Vec<String>, Vec<String>)>, DataError> {
    let source = read_tokenized(&src)?;
    let target = read_tokenized(&tgt)?;
    if source.len() != target.len() {
        return Err(DataError::Invalid(format!(
            "{} has {} lines but {} has {}",
            src.as_ref().display(),
            source.len(),
            tgt.as_ref().display(),
            target.len()
        )));
    }
    for (i, (s, t)) in source.iter().zip(&target).enumerate() {
        if s.is_empty() || t.is_empty() {
            return Err(DataError::Parse {
                path: if s.is_empty() { src.as_ref() } else { tgt.as_ref() }
                    .display()
                    .to_string(),
                line: i + 1,
                message: "empty sentence".into(),
            });
        }
    }
    Ok(source.into_iter().zip(target).collect())
}

pub fn write_tokenized(path: impl AsRef<Path>, sentences: &[Vec<String>]) -> Result<(), DataError> {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&s.join(" "));
        out.push('\n');
    }
    fs::write(&path, out).map_err(|e| DataError::io(&path, e))
}
