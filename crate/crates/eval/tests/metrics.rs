use proptest::prelude::*;
use treeattn_core::SeededRng;
use treeattn_data::synthetic::make_synthetic_corpus;
use treeattn_data::GoldTree;
use treeattn_eval::attachment::{left_branching, right_branching};
use treeattn_eval::{attachment_accuracy, bleu, bootstrap_significance, branching_baselines, BleuStats};

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn corpus(rng: &mut SeededRng, n: usize) -> (Vec<Vec<String>>, Vec<Vec<String>>) {
    let words = ["a", "b", "c", "d", "e", "f"];
    let sent = |rng: &mut SeededRng| -> Vec<String> {
        let len = 3 + rng.index(6);
        (0..len).map(|_| rng.choose(&words).to_string()).collect()
    };
    let refs: Vec<_> = (0..n).map(|_| sent(rng)).collect();
    let hyps: Vec<_> = refs
        .iter()
        .map(|r| r.iter().map(|w| if rng.bernoulli(0.3) { "x".to_string() } else { w.clone() }).collect())
        .collect();
    (hyps, refs)
}

#[test]
fn bleu_worked_example() {
    let score = bleu(&[toks("a b c d")], &[toks("a b c d e")]).unwrap();
    assert!((score - 77.88).abs() < 0.01, "{}", score);
}

#[test]
fn bleu_is_sum_of_sentence_statistics() {
    let (hyps, refs) = corpus(&mut SeededRng::new(3), 40);
    let mut total = BleuStats::default();
    for (h, r) in hyps.iter().zip(&refs) {
        total.add(&BleuStats::sentence(h, r));
    }
    assert_eq!(total.score(), bleu(&hyps, &refs).unwrap());
}

#[test]
fn bootstrap_is_deterministic_under_a_seed() {
    let mut rng = SeededRng::new(4);
    let (a, refs) = corpus(&mut rng, 50);
    let (b, _) = corpus(&mut rng, 50);
    let first = bootstrap_significance(&a, &b, &refs, 200, 9).unwrap();
    let second = bootstrap_significance(&a, &b, &refs, 200, 9).unwrap();
    assert_eq!(first, second);
}

#[test]
fn identical_systems_are_never_significantly_different() {
    let (a, refs) = corpus(&mut SeededRng::new(5), 30);
    let s = bootstrap_significance(&a, &a, &refs, 100, 1).unwrap();
    assert_eq!(s.p_a_not_better, 1.0);
    assert_eq!(s.p_b_not_better, 1.0);
}

#[test]
fn a_dominating_system_wins_every_resample() {
    let (b, refs) = corpus(&mut SeededRng::new(6), 30);
    let s = bootstrap_significance(&refs, &b, &refs, 100, 1).unwrap();
    assert_eq!(s.bleu_a, 100.0);
    assert_eq!(s.p_a_not_better, 0.0);
    assert_eq!(s.p_b_not_better, 1.0);
}

#[test]
fn misaligned_corpora_are_rejected() {
    let (a, refs) = corpus(&mut SeededRng::new(7), 5);
    assert!(bleu(&a[..4], &refs).is_err());
}

fn gold(heads: Vec<usize>, upos: Vec<&str>) -> GoldTree {
    let forms = (0..heads.len()).map(|k| format!("w{}", k)).collect();
    GoldTree::new(forms, heads, upos.into_iter().map(String::from).collect()).unwrap()
}

#[test]
fn two_word_worked_case() {
    let r = attachment_accuracy(&[vec![0, 1]], &[gold(vec![2, 0], vec!["NOUN", "VERB"])]).unwrap();
    assert_eq!((r.directed, r.undirected), (0.0, 0.5));
}

#[test]
fn punctuation_is_excluded_only_as_dependent() {
    let g = gold(vec![0, 1, 1], vec!["VERB", "NOUN", "PUNCT"]);
    // word 2 headed by the punctuation mark: still counted, just wrong
    let r = attachment_accuracy(&[vec![0, 3, 1]], &[g]).unwrap();
    assert_eq!((r.counted, r.excluded), (2, 1));
    assert_eq!(r.directed, 0.5);
}

#[test]
fn accuracy_is_token_weighted() {
    let g1 = gold(vec![0, 1], vec!["VERB", "NOUN"]);
    let g2 = gold(vec![0, 1, 2, 3], vec!["VERB", "NOUN", "NOUN", "NOUN"]);
    let p1 = vec![2, 0];
    let p2 = vec![0, 1, 2, 3];
    let both = attachment_accuracy(&[p1, p2], &[g1, g2]).unwrap();
    assert_eq!(both.counted, 6);
    assert!((both.directed - 4.0 / 6.0).abs() < 1e-15);
}

#[test]
fn branching_baselines_on_small_trees() {
    let g = gold(vec![0, 1, 2], vec!["X", "X", "X"]);
    assert_eq!(left_branching(3), vec![0, 1, 2]);
    assert_eq!(right_branching(3), vec![2, 3, 0]);
    let b = branching_baselines(&[g]).unwrap();
    assert_eq!(b.left.directed, 1.0);
    assert_eq!(b.right.directed, 0.0);
    assert_eq!(b.right.undirected, 2.0 / 3.0);
}

#[test]
fn branching_baselines_on_synthetic_corpus() {
    let gold = make_synthetic_corpus(1000, 1).gold_trees();
    let b = branching_baselines(&gold).unwrap();
    // the grammar has left-pointing det and prepositional edges, so both
    // baselines land strictly between the extremes
    for r in [b.left, b.right] {
        assert!(r.directed > 0.0 && r.directed < 1.0, "{:?}", r);
        assert!(r.undirected >= r.directed);
    }
    assert_eq!(b.undirected_chain, b.left.undirected);
    let again = branching_baselines(&make_synthetic_corpus(1000, 1).gold_trees()).unwrap();
    assert_eq!(b, again);
}

proptest! {
    #[test]
    fn accuracy_ignores_sentence_order(seed in 0u64..500) {
        let mut rng = SeededRng::new(seed);
        let mut gold_trees = Vec::new();
        let mut preds = Vec::new();
        for _ in 0..5 {
            let n = 2 + rng.index(5);
            let heads = left_branching(n);
            gold_trees.push(gold(heads, vec!["X"; n]));
            preds.push((0..n).map(|_| rng.index(n + 1)).collect::<Vec<_>>());
        }
        let r = attachment_accuracy(&preds, &gold_trees).unwrap();
        preds.reverse();
        gold_trees.reverse();
        let s = attachment_accuracy(&preds, &gold_trees).unwrap();
        prop_assert_eq!(r.counted, s.counted);
        prop_assert!((r.directed - s.directed).abs() < 1e-15);
        prop_assert!((r.undirected - s.undirected).abs() < 1e-15);
        prop_assert!(r.directed <= r.undirected);
    }
}
