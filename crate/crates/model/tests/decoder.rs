use treeattn_core::{gradcheck::check_gradients, Mat, SeededRng, Tape};
use treeattn_data::batch::{Batch, SentencePair};
use treeattn_model::decoder::{attend, fuse_1set, gate_syntax, syntactic_vector_separate, syntactic_vector_shared};
use treeattn_model::nn::Dropout;
use treeattn_model::{Model, ModelConfig, ModelMode};

fn random(rng: &mut SeededRng, rows: usize, cols: usize) -> Mat {
    Mat::from_vec(rows, cols, rng.uniform_vec(rows * cols, -1.0, 1.0))
}

fn small_model(mode: ModelMode, seed: u64) -> Model {
    let mut cfg = ModelConfig::new(mode, 12, 12);
    cfg.dim = 8;
    cfg.init_range = 0.3;
    Model::new(cfg, seed).unwrap()
}

#[test]
fn attention_over_one_word() {
    let mut rng = SeededRng::new(1);
    let mut tape = Tape::new();
    let h = tape.constant(random(&mut rng, 4, 1));
    let w = tape.constant(random(&mut rng, 4, 4));
    let s_val = random(&mut rng, 4, 1);
    let s = tape.constant(s_val.clone());
    let (alpha, c) = attend(&mut tape, h, w, s);
    assert_eq!(tape.value(alpha).as_slice(), &[1.0]);
    assert!(tape.value(c).max_abs_diff(&s_val) < 1e-15);
}

#[test]
fn zero_attention_weights_give_uniform_alpha() {
    let mut rng = SeededRng::new(2);
    let mut tape = Tape::new();
    let h = tape.constant(random(&mut rng, 4, 1));
    let w = tape.constant(Mat::zeros(4, 4));
    let s = tape.constant(random(&mut rng, 4, 5));
    let (alpha, _) = attend(&mut tape, h, w, s);
    assert!(tape.value(alpha).as_slice().iter().all(|&a| (a - 0.2).abs() < 1e-15));
}

#[test]
fn context_is_weighted_sum_of_columns() {
    let mut rng = SeededRng::new(3);
    let mut tape = Tape::new();
    let h_val = random(&mut rng, 6, 1);
    let w_val = random(&mut rng, 6, 6);
    let s_val = random(&mut rng, 6, 7);
    let (h, w, s) = (tape.constant(h_val.clone()), tape.constant(w_val.clone()), tape.constant(s_val.clone()));
    let (alpha, c) = attend(&mut tape, h, w, s);
    let alpha = tape.value(alpha).as_slice().to_vec();

    // independent: scores_j = sum_ab h_a W_ab S_bj, then softmax and sum
    let scores: Vec<f64> = (0..7)
        .map(|j| {
            let mut acc = 0.0;
            for a in 0..6 {
                for b in 0..6 {
                    acc += h_val[(a, 0)] * w_val[(a, b)] * s_val[(b, j)];
                }
            }
            acc
        })
        .collect();
    let z: f64 = scores.iter().map(|s| s.exp()).sum();
    for j in 0..7 {
        assert!((alpha[j] - scores[j].exp() / z).abs() < 1e-12);
    }
    for i in 0..6 {
        let expected: f64 = (0..7).map(|j| alpha[j] * s_val[(i, j)]).sum();
        assert!((tape.value(c)[(i, 0)] - expected).abs() <= 1e-12);
    }
}

#[test]
fn shared_syntactic_vector_selects_and_averages() {
    let mut rng = SeededRng::new(4);
    let m_val = random(&mut rng, 4, 3);
    let mut tape = Tape::new();
    let m = tape.constant(m_val.clone());
    let one_hot = tape.constant(Mat::from_vec(3, 1, vec![0.0, 1.0, 0.0]));
    let d = syntactic_vector_shared(&mut tape, m, one_hot);
    assert_eq!(tape.value(d).column(0), m_val.column(1));
    let uniform = tape.constant(Mat::filled(3, 1, 1.0 / 3.0));
    let d = syntactic_vector_shared(&mut tape, m, uniform);
    for i in 0..4 {
        let mean = m_val.row(i).iter().sum::<f64>() / 3.0;
        assert!((tape.value(d)[(i, 0)] - mean).abs() < 1e-15);
    }
}

#[test]
fn hard_heads_and_one_hot_attention_pick_the_head_value() {
    let mut rng = SeededRng::new(5);
    let sv_val = random(&mut rng, 4, 3);
    // word 0 is root, word 0 heads word 1, word 1 heads word 2
    let beta = Mat::from_vec(3, 3, vec![1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    let mut tape = Tape::new();
    let sv = tape.constant(sv_val.clone());
    let b = tape.constant(beta);
    let m = tape.matmul(sv, b);
    let alpha = tape.constant(Mat::from_vec(3, 1, vec![0.0, 0.0, 1.0]));
    let d = syntactic_vector_shared(&mut tape, m, alpha);
    assert_eq!(tape.value(d).column(0), sv_val.column(1));
}

#[test]
fn separate_syntactic_vector_behaves_like_attention() {
    let mut rng = SeededRng::new(6);
    let mut tape = Tape::new();
    let h = tape.constant(random(&mut rng, 4, 1));
    let m_val = random(&mut rng, 4, 3);
    let m = tape.constant(m_val.clone());
    let zero = tape.constant(Mat::zeros(4, 4));
    let (gamma, d) = syntactic_vector_separate(&mut tape, h, zero, m);
    assert!(tape.value(gamma).as_slice().iter().all(|&g| (g - 1.0 / 3.0).abs() < 1e-15));
    for i in 0..4 {
        let mean = m_val.row(i).iter().sum::<f64>() / 3.0;
        assert!((tape.value(d)[(i, 0)] - mean).abs() < 1e-15);
    }
    let single = tape.constant(Mat::column_vector(m_val.column(2)));
    let w = tape.constant(random(&mut rng, 4, 4));
    let (gamma, d) = syntactic_vector_separate(&mut tape, h, w, single);
    assert_eq!(tape.value(gamma).as_slice(), &[1.0]);
    assert_eq!(tape.value(d).column(0), m_val.column(2));
}

#[test]
fn gate_values_and_norm() {
    let mut rng = SeededRng::new(7);
    let d_val = random(&mut rng, 6, 1);
    let mut tape = Tape::new();
    let d = tape.constant(d_val.clone());
    let h = tape.constant(random(&mut rng, 6, 1));
    let zero = tape.constant(Mat::zeros(6, 6));
    let (d_hat, gate) = gate_syntax(&mut tape, d, h, zero);
    assert!(tape.value(d_hat).max_abs_diff(&d_val.map(|v| 0.5 * v)) < 1e-15);
    let norm = treeattn_model::nn::norm(tape.value(gate).as_slice());
    assert!((norm - 0.5 * 6f64.sqrt()).abs() < 1e-15);

    let ones = tape.constant(Mat::filled(6, 1, 1.0));
    let closed = tape.constant(Mat::filled(6, 6, -100.0));
    let (d_hat, _) = gate_syntax(&mut tape, d, ones, closed);
    assert!(tape.value(d_hat).max_abs() < 1e-40);

    let w_val = random(&mut rng, 6, 6);
    let h_val = random(&mut rng, 6, 1);
    let (w, hv) = (tape.constant(w_val.clone()), tape.constant(h_val.clone()));
    let (_, gate) = gate_syntax(&mut tape, d, hv, w);
    let expected: f64 = (0..6)
        .map(|i| {
            let pre: f64 = (0..6).map(|k| w_val[(i, k)] * h_val[(k, 0)]).sum();
            let g = 1.0 / (1.0 + (-pre).exp());
            g * g
        })
        .sum::<f64>()
        .sqrt();
    let got = treeattn_model::nn::norm(tape.value(gate).as_slice());
    assert!((got - expected).abs() <= 1e-12);
    assert!(got > 0.0 && got < 6f64.sqrt());
}

#[test]
fn fused_annotations_follow_the_gate() {
    let mut rng = SeededRng::new(8);
    let (s_val, m_val) = (random(&mut rng, 4, 3), random(&mut rng, 4, 3));
    let mut tape = Tape::new();
    let (s, m) = (tape.constant(s_val.clone()), tape.constant(m_val.clone()));
    // s has mixed signs, so push the gate through a constant positive input
    let ones = tape.constant(Mat::filled(4, 3, 1.0));
    let closed = tape.constant(Mat::filled(4, 4, -200.0));
    let open = tape.constant(Mat::filled(4, 4, 200.0));
    let s_pos = tape.add(s, ones);
    let fused_closed = fuse_1set(&mut tape, s_pos, m, closed);
    let fused_open = fuse_1set(&mut tape, s_pos, m, open);
    let shifted = s_val.map(|v| v + 1.0);
    assert!(tape.value(fused_closed).max_abs_diff(&shifted) < 1e-12);
    assert!(tape.value(fused_open).max_abs_diff(&shifted.zip_map(&m_val, |a, b| a + b)) < 1e-12);

    let leaves = [random(&mut rng, 4, 3), random(&mut rng, 4, 3), random(&mut rng, 4, 4)];
    let check = check_gradients(&leaves, 1e-5, |tape, v| {
        let f = fuse_1set(tape, v[0], v[1], v[2]);
        let sq = tape.mul(f, f);
        Ok(tape.sum(sq))
    })
    .unwrap();
    assert!(check.max_relative_error() <= 1e-4);
}

#[test]
fn output_is_a_distribution() {
    let m = small_model(ModelMode::SaShared, 1);
    let pass = m.teacher_forced(&[4, 5, 6], &[7, 8]).unwrap();
    for dist in &pass.distributions {
        assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        assert!(dist.iter().all(|&p| p > 0.0));
    }
    for trace in &pass.traces {
        assert!((trace.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        let gate = trace.gate.as_ref().unwrap();
        assert!(gate.iter().all(|&g| g > 0.0 && g < 1.0));
        let norm = trace.gate_norm.unwrap();
        assert!(norm > 0.0 && norm < 8f64.sqrt());
    }
}

#[test]
fn baseline_ignores_syntactic_weights() {
    // A baseline model has no head-word parameters; its prediction only
    // changes when the shared parameters change.
    let base = small_model(ModelMode::Baseline, 2);
    let shared = small_model(ModelMode::SaShared, 2);
    for name in base.params.names() {
        if name != "dec.out.w" {
            assert_eq!(base.params.get(name), shared.params.get(name), "{}", name);
        }
    }
    let mut perturbed = shared.clone();
    perturbed.params.get_mut("attn.value").unwrap().as_mut_slice()[0] += 1.0;
    let a = shared.teacher_forced(&[4, 5, 6], &[7]).unwrap();
    let b = perturbed.teacher_forced(&[4, 5, 6], &[7]).unwrap();
    assert_ne!(a.distributions, b.distributions);
    let trace = base.teacher_forced(&[4, 5, 6], &[7]).unwrap().traces;
    assert!(trace.iter().all(|t| t.syntactic.is_none() && t.gate.is_none()));
}

#[test]
fn separate_mode_differs_only_through_its_own_attention() {
    let shared = small_model(ModelMode::SaShared, 3);
    let separate = small_model(ModelMode::SaSeparate, 3);
    for name in shared.params.names() {
        assert_eq!(shared.params.get(name), separate.params.get(name), "{}", name);
    }
    let (src, tgt) = ([4, 5, 6, 7], [8, 9]);
    let a = shared.teacher_forced(&src, &tgt).unwrap();
    let b = separate.teacher_forced(&src, &tgt).unwrap();
    // the first step sees identical state, so word attention agrees
    assert_eq!(a.traces[0].alpha, b.traces[0].alpha);
    // each mode mixes the same syntactic annotations with its own weights
    let syn = shared.encode(&src).unwrap().m.unwrap();
    for (pass, use_gamma) in [(&a, false), (&b, true)] {
        for trace in &pass.traces {
            let w = if use_gamma { trace.gamma.clone().unwrap() } else { trace.alpha.clone() };
            let d = trace.syntactic.as_ref().unwrap();
            for i in 0..8 {
                let expected: f64 = (0..4).map(|j| syn[(i, j)] * w[j]).sum();
                assert!((d[i] - expected).abs() < 1e-12);
            }
        }
    }
    assert!(a.traces.iter().all(|t| t.gamma.is_none()));
}

#[test]
fn log_likelihood_factorizes_over_steps() {
    let m = small_model(ModelMode::SaSeparate, 4);
    let (src, tgt) = (vec![4, 5, 6, 7], vec![8, 9, 10]);
    let pass = m.teacher_forced(&src, &tgt).unwrap();
    assert_eq!(pass.log_probs.len(), tgt.len() + 1);
    let pairs = vec![SentencePair { source: src, target: tgt }];
    let (nll, tokens) = m.evaluate_batch(&Batch::from_pairs(vec![0], &pairs)).unwrap();
    assert_eq!(tokens, 4);
    assert!((nll + pass.log_likelihood()).abs() < 1e-10);
}

#[test]
fn greedy_decoding_is_bounded_by_twice_the_source_length() {
    let m = small_model(ModelMode::SaHard, 5);
    let out = m.translate(&[4, 5]).unwrap();
    assert!(out.tokens.len() <= 4);
    assert!(out.traces.len() <= 4);
    let mut d = Dropout::disabled();
    assert!(!d.is_active());
    assert!(d.mask(2, 2).is_none());
}
