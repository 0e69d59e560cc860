//! Collapsing subword-level head scores into word-level scores.

use treeattn_core::{Matrix, Real};
use treeattn_data::Segmentation;

use crate::EvalError;

/// Merges the tokens `span` of a square score matrix into one index.
///
/// Scores from outside into the span add up (the word is a dependent), scores
/// from the span outward add up (the word is a head), and the whole block
/// inside the span becomes the new diagonal entry, so root scores survive.
pub fn collapse_span<T: Real>(phi: &Matrix<T>, span: std::ops::Range<usize>) -> Matrix<T> {
    let n = phi.rows();
    let (u, v) = (span.start, span.end);
    assert!(u < v && v <= n, "span {:?} outside a {}x{} matrix", u..v, n, n);
    let width = v - u;
    let m = n - width + 1;
    // map old index -> new index
    let target = |k: usize| {
        if k < u {
            k
        } else if k < v {
            u
        } else {
            k - width + 1
        }
    };
    let mut out = Matrix::zeros(m, m);
    for i in 0..n {
        for j in 0..n {
            out[(target(i), target(j))] += phi[(i, j)];
        }
    }
    out
}

/// Word-level scores from subword-level scores, collapsing multi-token
/// words one at a time from left to right.
pub fn collapse_bpe_scores<T: Real>(phi: &Matrix<T>, seg: &Segmentation) -> Result<Matrix<T>, EvalError> {
    if !phi.is_square() || phi.rows() != seg.num_tokens() {
        return Err(EvalError::Shape(format!(
            "score matrix is {}x{} but the segmentation covers {} tokens",
            phi.rows(),
            phi.cols(),
            seg.num_tokens()
        )));
    }
    let mut out = phi.clone();
    // after collapsing word w, every later span starts `removed` tokens earlier
    let mut removed = 0;
    for (w, span) in seg.spans().iter().enumerate() {
        let width = span.end - span.start;
        if width > 1 {
            let start = span.start - removed;
            debug_assert_eq!(start, w);
            out = collapse_span(&out, start..start + width);
            removed += width - 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_subword_example() {
        let phi = Matrix::from_fn(3, 3, |i, j| (10 * (i + 1) + j + 1) as f64);
        let seg = Segmentation::new(vec![0..1, 1..3], 3).unwrap();
        let hat = collapse_bpe_scores(&phi, &seg).unwrap();
        let p = |i: usize, j: usize| phi[(i - 1, j - 1)];
        assert_eq!(hat.shape(), (2, 2));
        assert_eq!(hat[(0, 0)], p(1, 1));
        assert_eq!(hat[(0, 1)], p(1, 2) + p(1, 3));
        assert_eq!(hat[(1, 0)], p(2, 1) + p(3, 1));
        assert_eq!(hat[(1, 1)], p(2, 2) + p(2, 3) + p(3, 2) + p(3, 3));
    }

    #[test]
    fn single_subword_words_pass_through() {
        let phi = Matrix::from_fn(4, 4, |i, j| (i as f64) - 0.5 * j as f64);
        let hat = collapse_bpe_scores(&phi, &Segmentation::identity(4)).unwrap();
        assert_eq!(hat, phi);
    }

    #[test]
    fn mismatched_segmentation_is_rejected() {
        let phi = Matrix::<f64>::zeros(3, 3);
        assert!(collapse_bpe_scores(&phi, &Segmentation::identity(4)).is_err());
    }
}
