use proptest::prelude::*;
use treeattn_core::matrix_tree::enumerate_trees;
use treeattn_core::{Mat, SeededRng};
use treeattn_data::Segmentation;
use treeattn_eval::collapse::collapse_span;
use treeattn_eval::{cle_decode, collapse_bpe_scores, greedy_decode, tree_score};

fn random_phi(rng: &mut SeededRng, n: usize, scale: f64) -> Mat {
    Mat::from_vec(n, n, rng.uniform_vec(n * n, -scale, scale))
}

/// Best tree by exhaustive enumeration, scored with the same word-order sum.
fn brute_force(phi: &Mat) -> (f64, Vec<Vec<usize>>) {
    let mut best = f64::NEG_INFINITY;
    let mut argmax = Vec::new();
    for t in enumerate_trees(phi.rows()).unwrap() {
        let heads: Vec<usize> = t
            .heads()
            .iter()
            .enumerate()
            .map(|(j, &h)| if h == j { 0 } else { h + 1 })
            .collect();
        let s = tree_score(phi, &heads);
        if s > best {
            best = s;
            argmax = vec![heads];
        } else if s == best {
            argmax.push(heads);
        }
    }
    (best, argmax)
}

#[test]
fn cle_matches_exhaustive_maximum() {
    let mut rng = SeededRng::new(11);
    for draw in 0..500 {
        let n = 1 + draw % 6;
        let phi = random_phi(&mut rng, n, 3.0);
        let tree = cle_decode(&phi);
        let (best, argmax) = brute_force(&phi);
        assert_eq!(tree.score, best, "draw {}: {:?}", draw, phi);
        assert!(argmax.contains(&tree.heads), "draw {}", draw);
        assert_eq!(tree.score, tree_score(&phi, &tree.heads));
    }
}

#[test]
fn cle_handles_integer_ties() {
    let mut rng = SeededRng::new(12);
    for _ in 0..200 {
        let n = 2 + rng.index(4);
        let phi = Mat::from_vec(n, n, (0..n * n).map(|_| rng.index(3) as f64).collect());
        let (best, _) = brute_force(&phi);
        assert_eq!(cle_decode(&phi).score, best);
    }
}

#[test]
fn greedy_agrees_with_cle_when_acyclic() {
    let mut rng = SeededRng::new(13);
    let mut acyclic = 0;
    for _ in 0..500 {
        let n = 2 + rng.index(5);
        let phi = random_phi(&mut rng, n, 2.0);
        let greedy = greedy_decode(&phi);
        if greedy.is_tree() {
            acyclic += 1;
            assert_eq!(greedy.heads, cle_decode(&phi).heads);
        }
    }
    assert!(acyclic > 20, "too few acyclic draws: {}", acyclic);
}

#[test]
fn worked_example_scores_nine() {
    let phi = Mat::from_rows(&[
        vec![0.0, 5.0, 1.0],
        vec![0.0, 0.0, 4.0],
        vec![2.0, 1.0, 0.0],
    ]);
    let tree = cle_decode(&phi);
    assert_eq!(tree.heads, vec![0, 1, 2]);
    assert_eq!(tree.score, 9.0);
}

fn segmentation_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..=3, 1..=4)
}

fn seg_from_widths(widths: &[usize]) -> Segmentation {
    let mut spans = Vec::new();
    let mut start = 0;
    for &w in widths {
        spans.push(start..start + w);
        start += w;
    }
    Segmentation::new(spans, start).unwrap()
}

/// One-shot block sum: entry (a, b) adds every subword score from word a to word b.
fn block_sum(phi: &Mat, seg: &Segmentation) -> Mat {
    let m = seg.num_words();
    let mut out = Mat::zeros(m, m);
    for (a, sa) in seg.spans().iter().enumerate() {
        for (b, sb) in seg.spans().iter().enumerate() {
            for i in sa.clone() {
                for j in sb.clone() {
                    out[(a, b)] += phi[(i, j)];
                }
            }
        }
    }
    out
}

proptest! {
    #[test]
    fn collapse_equals_block_sum(widths in segmentation_strategy(), seed in 0u64..1000) {
        let seg = seg_from_widths(&widths);
        let n = seg.num_tokens();
        let phi = random_phi(&mut SeededRng::new(seed), n, 2.0);
        let collapsed = collapse_bpe_scores(&phi, &seg).unwrap();
        prop_assert!(collapsed.max_abs_diff(&block_sum(&phi, &seg)) < 1e-12);
    }

    #[test]
    fn collapse_order_does_not_matter(seed in 0u64..1000) {
        // words [0,1] and [3,4,5] out of seven subwords
        let phi = random_phi(&mut SeededRng::new(seed), 7, 2.0);
        let left_first = collapse_span(&collapse_span(&phi, 0..2), 2..5);
        let right_first = collapse_span(&collapse_span(&phi, 3..6), 0..2);
        prop_assert!(left_first.max_abs_diff(&right_first) < 1e-12);
    }

    #[test]
    fn collapse_is_identity_without_multi_token_words(n in 1usize..8, seed in 0u64..1000) {
        let phi = random_phi(&mut SeededRng::new(seed), n, 2.0);
        let collapsed = collapse_bpe_scores(&phi, &Segmentation::identity(n)).unwrap();
        prop_assert_eq!(collapsed, phi);
    }

    #[test]
    fn cle_tree_is_valid(n in 1usize..8, seed in 0u64..1000) {
        let phi = random_phi(&mut SeededRng::new(seed), n, 2.0);
        let tree = cle_decode(&phi);
        let zero_based: Vec<usize> = tree.heads.iter().enumerate()
            .map(|(j, &h)| if h == 0 { j } else { h - 1 }).collect();
        prop_assert!(treeattn_core::matrix_tree::is_arborescence(&zero_based));
    }
}

#[test]
fn three_subword_example() {
    // the second word is tokens 2 and 3
    let phi = Mat::from_rows(&[
        vec![1.0, 2.0, 3.0],
        vec![4.0, 5.0, 6.0],
        vec![7.0, 8.0, 9.0],
    ]);
    let seg = Segmentation::from_marked_tokens(&["a", "b@@", "c"]);
    let out = collapse_bpe_scores(&phi, &seg).unwrap();
    assert_eq!(out, Mat::from_rows(&[vec![1.0, 5.0], vec![11.0, 28.0]]));
}

#[test]
fn mismatched_segmentation_is_rejected() {
    let phi = Mat::zeros(3, 3);
    assert!(collapse_bpe_scores(&phi, &Segmentation::identity(4)).is_err());
}
