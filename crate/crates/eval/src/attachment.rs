//! Directed and undirected attachment accuracy.

use treeattn_data::GoldTree;

use crate::EvalError;

pub const PUNCT: &str = "PUNCT";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttachmentReport {
    pub directed: f64,
    pub undirected: f64,
    pub counted: usize,
    pub excluded: usize,
}

impl AttachmentReport {
    pub fn to_tsv(&self) -> String {
        format!("{}\t{}\t{}\t{}", self.directed, self.undirected, self.counted, self.excluded)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    directed: usize,
    undirected: usize,
    counted: usize,
    excluded: usize,
}

fn sentence_counts(pred: &[usize], gold: &GoldTree, index: usize) -> Result<Counts, EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::Alignment {
            index,
            detail: format!("predicted {} words, gold has {}", pred.len(), gold.len()),
        });
    }
    if let Some(&bad) = pred.iter().find(|&&h| h > pred.len()) {
        return Err(EvalError::Alignment {
            index,
            detail: format!("head {} out of range", bad),
        });
    }
    let mut c = Counts::default();
    for (k, &h) in pred.iter().enumerate() {
        if gold.upos[k] == PUNCT {
            c.excluded += 1;
            continue;
        }
        c.counted += 1;
        let word = k + 1;
        if h == gold.heads[k] {
            c.directed += 1;
            c.undirected += 1;
        } else if h != 0 && gold.heads[h - 1] == word {
            // predicted head is one of the word's gold dependents
            c.undirected += 1;
        }
    }
    Ok(c)
}

/// Token-level DA/UA over a corpus. Words whose gold tag is punctuation
/// are left out as dependents; they may still be heads.
pub fn attachment_accuracy(pred: &[Vec<usize>], gold: &[GoldTree]) -> Result<AttachmentReport, EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::Alignment {
            index: pred.len().min(gold.len()),
            detail: format!("{} predicted trees vs {} gold trees", pred.len(), gold.len()),
        });
    }
    let mut total = Counts::default();
    for (i, (p, g)) in pred.iter().zip(gold).enumerate() {
        let c = sentence_counts(p, g, i)?;
        total.directed += c.directed;
        total.undirected += c.undirected;
        total.counted += c.counted;
        total.excluded += c.excluded;
    }
    let ratio = |x: usize| if total.counted == 0 { 0.0 } else { x as f64 / total.counted as f64 };
    Ok(AttachmentReport {
        directed: ratio(total.directed),
        undirected: ratio(total.undirected),
        counted: total.counted,
        excluded: total.excluded,
    })
}

/// Every word headed by its left neighbour; the first word is the root.
pub fn left_branching(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Every word headed by its right neighbour; the last word is the root.
pub fn right_branching(n: usize) -> Vec<usize> {
    (0..n).map(|k| if k + 1 == n { 0 } else { k + 2 }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineReport {
    pub left: AttachmentReport,
    pub right: AttachmentReport,
    /// Undirected accuracy of the adjacent-word chain.
    pub undirected_chain: f64,
}

pub fn branching_baselines(gold: &[GoldTree]) -> Result<BaselineReport, EvalError> {
    let left: Vec<Vec<usize>> = gold.iter().map(|g| left_branching(g.len())).collect();
    let right: Vec<Vec<usize>> = gold.iter().map(|g| right_branching(g.len())).collect();
    let left = attachment_accuracy(&left, gold)?;
    Ok(BaselineReport {
        left,
        right: attachment_accuracy(&right, gold)?,
        undirected_chain: left.undirected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gold(heads: Vec<usize>, upos: &[&str]) -> GoldTree {
        let forms = (0..heads.len()).map(|k| format!("w{}", k)).collect();
        GoldTree::new(forms, heads, upos.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn two_word_worked_case() {
        let g = gold(vec![2, 0], &["NOUN", "VERB"]);
        let r = attachment_accuracy(&[vec![0, 1]], &[g]).unwrap();
        assert_eq!(r.directed, 0.0);
        assert_eq!(r.undirected, 0.5);
        assert_eq!((r.counted, r.excluded), (2, 0));
    }

    #[test]
    fn perfect_prediction() {
        let g = gold(vec![2, 0, 2], &["DET", "NOUN", "PUNCT"]);
        let r = attachment_accuracy(&[g.heads.clone()], &[g]).unwrap();
        assert_eq!((r.directed, r.undirected), (1.0, 1.0));
        assert_eq!((r.counted, r.excluded), (2, 1));
    }

    #[test]
    fn length_mismatch_names_the_sentence() {
        let g = gold(vec![0], &["X"]);
        let err = attachment_accuracy(&[vec![0], vec![0, 1]], &[g.clone(), g]).unwrap_err();
        assert!(matches!(err, EvalError::Alignment { index: 1, .. }));
    }

    #[test]
    fn branching_shapes() {
        assert_eq!(left_branching(1), vec![0]);
        assert_eq!(right_branching(1), vec![0]);
        assert_eq!(left_branching(3), vec![0, 1, 2]);
        assert_eq!(right_branching(3), vec![2, 3, 0]);
        let chain = gold(vec![0, 1, 2, 3], &["X"; 4]);
        let r = branching_baselines(&[chain]).unwrap();
        assert_eq!(r.undirected_chain, 1.0);
        assert_eq!(r.left.directed, 1.0);
        // the right chain reverses every edge and moves the root
        assert_eq!(r.right.directed, 0.0);
        assert_eq!(r.right.undirected, 0.75);
    }
}
