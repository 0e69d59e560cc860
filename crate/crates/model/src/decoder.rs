//! Stacked LSTM decoder with input feeding, word attention and the
//! syntactic context variants.

use treeattn_core::{Axis, Mat, Tape, Var};

use crate::config::{DecoderMode, ModelConfig};
use crate::encoder::{EncodedBatch, EncodedSentence};
use crate::nn::{affine, broadcast_bias, lstm_step, norm, Dropout};
use crate::params::{Bound, TARGET_EMBEDDING};
use crate::ModelError;

/// Attention with a precomputed query `q = W_a^T h` (`d x 1`), keys stored
/// transposed (`n x d`) and values `d x n`. Returns the weights (`n x 1`)
/// and the weighted sum of value columns.
fn attend_with(tape: &mut Tape, q: Var, keys_t: Var, values: Var) -> (Var, Var) {
    let scores = tape.matmul(keys_t, q);
    let alpha = tape.softmax_cols(scores);
    let context = tape.matmul(values, alpha);
    (alpha, context)
}

/// Word attention: `alpha = softmax(h^T W_a S)` as an `n x 1` column and
/// the context `c = S alpha`.
pub fn attend(tape: &mut Tape, h: Var, w_a: Var, s: Var) -> (Var, Var) {
    let w_t = tape.transpose(w_a);
    let q = tape.matmul(w_t, h);
    let s_t = tape.transpose(s);
    attend_with(tape, q, s_t, s)
}

/// Syntactic vector reusing the word attention weights: `M alpha`.
pub fn syntactic_vector_shared(tape: &mut Tape, m: Var, alpha: Var) -> Var {
    tape.matmul(m, alpha)
}

/// Syntactic vector from a dedicated attention layer over `M`.
pub fn syntactic_vector_separate(tape: &mut Tape, h: Var, w_m: Var, m: Var) -> (Var, Var) {
    attend(tape, h, w_m, m)
}

/// Gated syntactic vector `d * sigmoid(W_g h)`; also returns the gate.
pub fn gate_syntax(tape: &mut Tape, d_syn: Var, h: Var, w_g: Var) -> (Var, Var) {
    let pre = tape.matmul(w_g, h);
    let gate = tape.sigmoid(pre);
    (tape.mul(d_syn, gate), gate)
}

/// Folds the syntactic annotations into the content annotations:
/// `s_i + sigmoid(W_g s_i) * m_i`.
pub fn fuse_1set(tape: &mut Tape, s: Var, m: Var, w_g: Var) -> Var {
    let pre = tape.matmul(w_g, s);
    let gate = tape.sigmoid(pre);
    let gated = tape.mul(gate, m);
    tape.add(s, gated)
}

/// What the decoder attends to for one source sentence.
#[derive(Debug, Clone, Copy)]
pub struct SourceMemory {
    pub len: usize,
    content: Var,
    content_t: Var,
    syntax: Option<Var>,
    syntax_t: Option<Var>,
}

pub fn prepare_memory(
    tape: &mut Tape,
    params: &Bound,
    mode: DecoderMode,
    sentence: &EncodedSentence,
) -> Result<SourceMemory, ModelError> {
    let need_m = || {
        sentence
            .m
            .ok_or_else(|| ModelError::Unsupported("decoder mode needs syntactic annotations".into()))
    };
    let (content, syntax) = match mode {
        DecoderMode::Baseline => (sentence.s, None),
        DecoderMode::OneSet => (fuse_1set(tape, sentence.s, need_m()?, params.var("enc.fuse.w")), None),
        DecoderMode::Shared | DecoderMode::HardShared | DecoderMode::Separate => (sentence.s, Some(need_m()?)),
    };
    let content_t = tape.transpose(content);
    let syntax_t = match (mode, syntax) {
        (DecoderMode::Separate, Some(m)) => Some(tape.transpose(m)),
        _ => None,
    };
    Ok(SourceMemory {
        len: sentence.len,
        content,
        content_t,
        syntax,
        syntax_t,
    })
}

/// Recurrent state for a block of `B` sentences; every entry is `d x B`.
#[derive(Debug, Clone)]
pub struct DecoderState {
    pub h: Vec<Var>,
    pub c: Vec<Var>,
    /// Input-feed vector from the previous step (zero at the first step).
    pub u: Var,
}

/// Weights bound once per tape, with biases already broadcast.
pub struct DecoderWeights {
    mode: DecoderMode,
    dim: usize,
    embed: Var,
    lstm: Vec<(Var, Var)>,
    attn_t: Var,
    syn_attn_t: Option<Var>,
    gate: Option<Var>,
    out_w: Var,
    out_b: Var,
    vocab_b: Var,
    zero: Var,
}

impl DecoderWeights {
    pub fn new(tape: &mut Tape, params: &Bound, config: &ModelConfig, batch: usize) -> Self {
        let mode = config.mode.decoder();
        let lstm = (0..config.layers)
            .map(|l| {
                let b = params.var(&format!("dec.l{}.b", l));
                (params.var(&format!("dec.l{}.w", l)), broadcast_bias(tape, b, batch))
            })
            .collect();
        let attn_t = tape.transpose(params.var("dec.attn.w"));
        let syn_attn_t = (mode == DecoderMode::Separate).then(|| {
            let w = params.var("dec.syn_attn.w");
            tape.transpose(w)
        });
        let gate = matches!(mode, DecoderMode::Shared | DecoderMode::Separate | DecoderMode::HardShared)
            .then(|| params.var("dec.gate.w"));
        let out_b = params.var("dec.out.b");
        let vocab_b = params.var("dec.vocab.b");
        DecoderWeights {
            mode,
            dim: config.dim,
            embed: params.var(TARGET_EMBEDDING),
            lstm,
            attn_t,
            syn_attn_t,
            gate,
            out_w: params.var("dec.out.w"),
            out_b: broadcast_bias(tape, out_b, batch),
            vocab_b: broadcast_bias(tape, vocab_b, batch),
            zero: tape.constant(Mat::zeros(config.dim, 1)),
        }
    }
}

/// Initial state: each layer's final encoder states, projected linearly.
pub fn initial_state(tape: &mut Tape, params: &Bound, config: &ModelConfig, encoded: &EncodedBatch) -> DecoderState {
    let batch = encoded.sentences.len();
    let mut h = Vec::with_capacity(config.layers);
    let mut c = Vec::with_capacity(config.layers);
    for (l, &(fh, fc)) in encoded.final_states.iter().enumerate() {
        let project = |tape: &mut Tape, part: &str, x: Var| {
            let w = params.var(&format!("dec.init.l{}.{}.w", l, part));
            let b = params.var(&format!("dec.init.l{}.{}.b", l, part));
            let b = broadcast_bias(tape, b, batch);
            affine(tape, w, x, b)
        };
        h.push(project(tape, "h", fh));
        c.push(project(tape, "c", fc));
    }
    let u = tape.constant(Mat::zeros(config.dim, batch));
    DecoderState { h, c, u }
}

/// Tape nodes produced by one decoder step.
#[derive(Debug, Clone)]
pub struct StepVars {
    /// Unnormalized scores over the target vocabulary, `V x B`.
    pub logits: Var,
    /// Per sentence (`None` once finished): word attention, `n x 1`.
    pub alpha: Vec<Option<Var>>,
    /// Per sentence: separate syntactic attention, `n x 1`.
    pub gamma: Vec<Option<Var>>,
    pub context: Var,
    pub syntactic: Option<Var>,
    /// `sigmoid(W_g h)`, `d x B`.
    pub gate: Option<Var>,
}

/// Plain-value record of one decoding step for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub alpha: Vec<f64>,
    pub context: Vec<f64>,
    pub syntactic: Option<Vec<f64>>,
    pub gamma: Option<Vec<f64>>,
    pub gate: Option<Vec<f64>>,
    pub gate_norm: Option<f64>,
}

impl StepVars {
    pub fn trace(&self, tape: &Tape, b: usize) -> StepTrace {
        let col = |v: Var| tape.value(v).column(b);
        let gate = self.gate.map(col);
        StepTrace {
            alpha: self.alpha[b].map(|a| tape.value(a).column(0)).unwrap_or_default(),
            context: col(self.context),
            syntactic: self.syntactic.map(col),
            gamma: self.gamma[b].map(|g| tape.value(g).column(0)),
            gate_norm: gate.as_ref().map(|g| norm(g)),
            gate,
        }
    }
}

/// One decoding step for a block of sentences. Sentences marked inactive
/// still advance their recurrent state but skip attention.
#[allow(clippy::too_many_arguments)]
pub fn decode_step(
    tape: &mut Tape,
    weights: &DecoderWeights,
    memories: &[SourceMemory],
    state: &DecoderState,
    y_prev: &[usize],
    active: &[bool],
    dropout: &mut Dropout,
) -> Result<(StepVars, DecoderState), ModelError> {
    let batch = memories.len();
    if y_prev.len() != batch || active.len() != batch {
        return Err(ModelError::Config("decoder inputs disagree on batch size".into()));
    }
    let emb = tape.embedding(weights.embed, y_prev);
    let emb = dropout.apply(tape, emb);
    let mut x = tape.concat(&[emb, state.u], Axis::Rows);
    let mut hs = Vec::with_capacity(weights.lstm.len());
    let mut cs = Vec::with_capacity(weights.lstm.len());
    for (l, &(w, b)) in weights.lstm.iter().enumerate() {
        let (h, c) = lstm_step(tape, w, b, x, state.h[l], state.c[l]);
        hs.push(h);
        cs.push(c);
        x = if l + 1 < weights.lstm.len() { dropout.apply(tape, h) } else { h };
    }
    let top = *hs.last().expect("at least one layer");

    let q = tape.matmul(weights.attn_t, top);
    let q_syn = weights.syn_attn_t.map(|w| tape.matmul(w, top));
    let mut alphas = Vec::with_capacity(batch);
    let mut gammas = Vec::with_capacity(batch);
    let mut contexts = Vec::with_capacity(batch);
    let mut syntactic = Vec::with_capacity(batch);
    for (b, mem) in memories.iter().enumerate() {
        if !active[b] {
            alphas.push(None);
            gammas.push(None);
            contexts.push(weights.zero);
            syntactic.push(weights.zero);
            continue;
        }
        let q_b = if batch == 1 { q } else { tape.column(q, b) };
        let (alpha, c) = attend_with(tape, q_b, mem.content_t, mem.content);
        alphas.push(Some(alpha));
        contexts.push(c);
        match weights.mode {
            DecoderMode::Baseline | DecoderMode::OneSet => gammas.push(None),
            DecoderMode::Shared | DecoderMode::HardShared => {
                let m = mem.syntax.expect("prepared with syntax");
                syntactic.push(syntactic_vector_shared(tape, m, alpha));
                gammas.push(None);
            }
            DecoderMode::Separate => {
                let qs = q_syn.expect("separate attention weights");
                let qs_b = if batch == 1 { qs } else { tape.column(qs, b) };
                let (m, m_t) = (mem.syntax.expect("prepared"), mem.syntax_t.expect("prepared"));
                let (gamma, d) = attend_with(tape, qs_b, m_t, m);
                syntactic.push(d);
                gammas.push(Some(gamma));
            }
        }
    }
    let context = tape.concat(&contexts, Axis::Cols);
    let (syn, gate, g_input) = match weights.gate {
        Some(w_g) => {
            let d_syn = tape.concat(&syntactic, Axis::Cols);
            let (d_hat, gate) = gate_syntax(tape, d_syn, top, w_g);
            let input = tape.concat(&[top, context, d_hat], Axis::Rows);
            (Some(d_syn), Some(gate), input)
        }
        None => (None, None, tape.concat(&[top, context], Axis::Rows)),
    };
    let pre = affine(tape, weights.out_w, g_input, weights.out_b);
    let u = tape.tanh(pre);
    let logits = affine(tape, weights.embed, u, weights.vocab_b);
    debug_assert_eq!(tape.shape(u).0, weights.dim);
    Ok((
        StepVars {
            logits,
            alpha: alphas,
            gamma: gammas,
            context,
            syntactic: syn,
            gate,
        },
        DecoderState { h: hs, c: cs, u },
    ))
}

/// Softmax of a logit column in plain values.
pub fn distribution(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Log-softmax of a logit column in plain values.
pub fn log_distribution(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_total = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&l| l - log_total).collect()
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
