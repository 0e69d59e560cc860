//! Corpus BLEU with the arithmetic of the classic `multi-bleu.perl`
//! script: up to 4-grams, uniform weights, clipped counts, brevity penalty
//! and no smoothing. Single reference per sentence.

use std::collections::HashMap;

use treeattn_core::SeededRng;

use crate::EvalError;

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics of one or more sentence pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn sentence<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> Self {
        let mut stats = BleuStats {
            hyp_len: hyp.len(),
            ref_len: reference.len(),
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let ref_counts = ngram_counts(reference, n);
            let hyp_counts = ngram_counts(hyp, n);
            stats.totals[n - 1] = hyp.len().saturating_sub(n - 1);
            stats.matches[n - 1] = hyp_counts
                .iter()
                .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
                .sum();
        }
        stats
    }

    pub fn add(&mut self, other: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    /// BLEU scaled to 0..100.
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for n in 0..MAX_ORDER {
            if self.matches[n] == 0 || self.totals[n] == 0 {
                return 0.0;
            }
            log_sum += (self.matches[n] as f64 / self.totals[n] as f64).ln();
        }
        let bp = if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        };
        100.0 * bp * (log_sum / MAX_ORDER as f64).exp()
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(|t| t.as_ref()).collect()).or_insert(0) += 1;
        }
    }
    counts
}

fn check_aligned(hyps: usize, refs: usize) -> Result<(), EvalError> {
    if hyps != refs {
        return Err(EvalError::Alignment {
            index: hyps.min(refs),
            detail: format!("{} hypotheses vs {} references", hyps, refs),
        });
    }
    Ok(())
}

pub fn sentence_stats<S: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<S>]) -> Result<Vec<BleuStats>, EvalError> {
    check_aligned(hyps.len(), refs.len())?;
    Ok(hyps.iter().zip(refs).map(|(h, r)| BleuStats::sentence(h, r)).collect())
}

/// Corpus-level BLEU: statistics are summed over sentences before the
/// score is formed.
pub fn bleu<S: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<S>]) -> Result<f64, EvalError> {
    let mut total = BleuStats::default();
    for s in sentence_stats(hyps, refs)? {
        total.add(&s);
    }
    Ok(total.score())
}

/// Paired bootstrap p-values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Significance {
    pub bleu_a: f64,
    pub bleu_b: f64,
    /// Fraction of resamples with BLEU(A) <= BLEU(B).
    pub p_a_not_better: f64,
    /// Fraction of resamples with BLEU(B) <= BLEU(A).
    pub p_b_not_better: f64,
    pub resamples: usize,
}

/// Paired bootstrap resampling over sentences.
pub fn bootstrap_significance<S: AsRef<str>>(
    hyps_a: &[Vec<S>],
    hyps_b: &[Vec<S>],
    refs: &[Vec<S>],
    resamples: usize,
    seed: u64,
) -> Result<Significance, EvalError> {
    let a = sentence_stats(hyps_a, refs)?;
    let b = sentence_stats(hyps_b, refs)?;
    if refs.is_empty() || resamples == 0 {
        return Err(EvalError::Shape("bootstrap needs sentences and at least one resample".into()));
    }
    let corpus = |stats: &[BleuStats]| {
        let mut t = BleuStats::default();
        stats.iter().for_each(|s| t.add(s));
        t.score()
    };
    let mut rng = SeededRng::new(seed);
    let n = refs.len();
    let (mut a_le, mut b_le) = (0usize, 0usize);
    for _ in 0..resamples {
        let (mut sa, mut sb) = (BleuStats::default(), BleuStats::default());
        for _ in 0..n {
            let k = rng.index(n);
            sa.add(&a[k]);
            sb.add(&b[k]);
        }
        let (x, y) = (sa.score(), sb.score());
        if x <= y {
            a_le += 1;
        }
        if y <= x {
            b_le += 1;
        }
    }
    Ok(Significance {
        bleu_a: corpus(&a),
        bleu_b: corpus(&b),
        p_a_not_better: a_le as f64 / resamples as f64,
        p_b_not_better: b_le as f64 / resamples as f64,
        resamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn short_hypothesis_example() {
        let score = bleu(&[toks("a b c d")], &[toks("a b c d e")]).unwrap();
        let expected = 100.0 * (1.0f64 - 5.0 / 4.0).exp();
        assert!((score - expected).abs() < 1e-12);
        assert!((score - 77.88).abs() < 0.01);
    }

    #[test]
    fn identical_corpus_scores_100() {
        let c = vec![toks("the cat sat on the mat"), toks("a dog ran off")];
        assert!((bleu(&c, &c).unwrap() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn no_four_gram_match_scores_zero() {
        assert_eq!(bleu(&[toks("a b c x d")], &[toks("a b c d e")]).unwrap(), 0.0);
        assert_eq!(bleu(&[toks("a b")], &[toks("a b")]).unwrap(), 0.0);
    }

    #[test]
    fn clipping_limits_repeats() {
        let s = BleuStats::sentence(&toks("the the the the"), &toks("the cat"));
        assert_eq!(s.matches[0], 1);
        assert_eq!(s.totals[0], 4);
    }

    #[test]
    fn corpus_score_is_not_mean_of_sentence_scores() {
        let hyps = vec![toks("a b c d e f"), toks("x y z w")];
        let refs = vec![toks("a b c d e f"), toks("x y z q")];
        let corpus = bleu(&hyps, &refs).unwrap();
        let mean = (bleu(&hyps[..1], &refs[..1]).unwrap() + bleu(&hyps[1..], &refs[1..]).unwrap()) / 2.0;
        assert!((corpus - mean).abs() > 1.0);
    }

    #[test]
    fn misaligned_corpora_fail() {
        assert!(bleu(&[toks("a")], &[]).is_err());
    }
}
