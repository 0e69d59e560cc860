//! Bidirectional LSTM encoder and the head-word selection layer.

use treeattn_core::matrix_tree::{hard_select_on_tape, marginals_on_tape};
use treeattn_core::{Axis, Mat, Tape, Var};
use treeattn_data::Vocab;

use crate::config::{AttentionMode, ModelConfig};
use crate::nn::{broadcast_bias, lstm_step, Dropout};
use crate::params::{Bound, ParamStore};
use crate::ModelError;

/// Tape nodes for one encoded sentence.
#[derive(Debug, Clone, Copy)]
pub struct EncodedSentence {
    pub len: usize,
    /// Content annotations, `d x n`.
    pub s: Var,
    /// Head scores, `n x n`; entry `(i, j)` scores word `i` heading word `j`.
    pub phi: Option<Var>,
    /// Attention over heads, `n x n`, one distribution per column.
    pub beta: Option<Var>,
    /// Syntactic annotations `S_v beta`, `d x n`.
    pub m: Option<Var>,
}

#[derive(Debug, Clone)]
pub struct EncodedBatch {
    pub sentences: Vec<EncodedSentence>,
    /// Per layer: final hidden and cell states, forward half stacked over
    /// backward half, `d x B`.
    pub final_states: Vec<(Var, Var)>,
    pub max_abs_phi: f64,
}

/// Plain-value encoder output for a single sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub s: Mat,
    pub phi: Option<Mat>,
    pub beta: Option<Mat>,
    pub m: Option<Mat>,
}

impl EncoderOutput {
    pub fn len(&self) -> usize {
        self.s.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.s.cols() == 0
    }

    /// Distribution over the heads of word `j` (0-based). Entry `j` of the
    /// returned vector is the probability that `j` is the root.
    pub fn head_distribution(&self, j: usize) -> Result<Vec<f64>, ModelError> {
        let beta = self
            .beta
            .as_ref()
            .ok_or_else(|| ModelError::Unsupported("model has no head-word attention".into()))?;
        if j >= beta.cols() {
            return Err(ModelError::Config(format!(
                "word {} out of range for a sentence of {} words",
                j,
                beta.cols()
            )));
        }
        Ok(beta.column(j))
    }
}

fn check_sources(config: &ModelConfig, sources: &[&[usize]]) -> Result<(), ModelError> {
    if sources.is_empty() {
        return Err(ModelError::Config("empty batch".into()));
    }
    for (b, s) in sources.iter().enumerate() {
        if s.is_empty() {
            return Err(ModelError::Config(format!("source sentence {} is empty", b)));
        }
        if s.len() > config.max_source_len {
            return Err(ModelError::Config(format!(
                "source sentence {} has {} tokens, limit is {}",
                b,
                s.len(),
                config.max_source_len
            )));
        }
        if let Some(&bad) = s.iter().find(|&&id| id >= config.src_vocab_size) {
            return Err(ModelError::Config(format!(
                "source id {} outside vocabulary of {}",
                bad, config.src_vocab_size
            )));
        }
    }
    Ok(())
}

/// `out[t][:, b] = seq[len_b - 1 - t][:, b]` for `t < len_b`, zero beyond.
/// Applying it twice restores the valid positions.
fn reverse_within_lengths(tape: &mut Tape, seq: &[Var], lengths: &[usize]) -> Vec<Var> {
    let steps = seq.len();
    if lengths.iter().all(|&l| l == steps) && lengths.len() == 1 {
        return seq.iter().rev().copied().collect();
    }
    let rows = tape.shape(seq[0]).0;
    let zero = tape.constant(Mat::zeros(rows, 1));
    (0..steps)
        .map(|t| {
            let cols: Vec<Var> = lengths
                .iter()
                .enumerate()
                .map(|(b, &len)| {
                    if t < len {
                        tape.column(seq[len - 1 - t], b)
                    } else {
                        zero
                    }
                })
                .collect();
            tape.concat(&cols, Axis::Cols)
        })
        .collect()
}

fn last_valid(tape: &mut Tape, seq: &[Var], lengths: &[usize]) -> Var {
    if lengths.len() == 1 {
        return seq[lengths[0] - 1];
    }
    let cols: Vec<Var> = lengths
        .iter()
        .enumerate()
        .map(|(b, &len)| tape.column(seq[len - 1], b))
        .collect();
    tape.concat(&cols, Axis::Cols)
}

fn run_lstm(tape: &mut Tape, w: Var, b: Var, inputs: &[Var], hidden: usize) -> (Vec<Var>, Vec<Var>) {
    let batch = tape.shape(inputs[0]).1;
    let b = broadcast_bias(tape, b, batch);
    let mut h = tape.constant(Mat::zeros(hidden, batch));
    let mut c = h;
    let mut hs = Vec::with_capacity(inputs.len());
    let mut cs = Vec::with_capacity(inputs.len());
    for &x in inputs {
        let (h1, c1) = lstm_step(tape, w, b, x, h, c);
        hs.push(h1);
        cs.push(c1);
        h = h1;
        c = c1;
    }
    (hs, cs)
}

/// Head scores `phi = (W_q S)^T (W_k S) / sqrt(d)`.
pub fn head_scores(tape: &mut Tape, s: Var, w_q: Var, w_k: Var) -> Var {
    let d = tape.shape(s).0;
    let sq = tape.matmul(w_q, s);
    let sk = tape.matmul(w_k, s);
    let sq_t = tape.transpose(sq);
    let raw = tape.matmul(sq_t, sk);
    tape.scale(raw, 1.0 / (d as f64).sqrt())
}

/// Attention over heads for the given mode, from scores `phi`.
pub fn head_attention(tape: &mut Tape, phi: Var, mode: AttentionMode) -> Result<Var, ModelError> {
    match mode {
        AttentionMode::None => Err(ModelError::Unsupported("model has no head-word attention".into())),
        AttentionMode::Flat => Ok(tape.softmax_cols(phi)),
        AttentionMode::Structured => Ok(marginals_on_tape(tape, phi)?.beta),
        AttentionMode::StructuredHard => {
            let beta = marginals_on_tape(tape, phi)?.beta;
            Ok(hard_select_on_tape(tape, beta))
        }
    }
}

/// Encodes a batch of unpadded source sentences.
pub fn encode_batch(
    tape: &mut Tape,
    params: &Bound,
    config: &ModelConfig,
    sources: &[&[usize]],
    dropout: &mut Dropout,
) -> Result<EncodedBatch, ModelError> {
    check_sources(config, sources)?;
    let lengths: Vec<usize> = sources.iter().map(|s| s.len()).collect();
    let steps = lengths.iter().copied().max().unwrap_or(0);
    let half = config.half();
    let table = params.var("enc.embed");

    let mut inputs: Vec<Var> = (0..steps)
        .map(|t| {
            let ids: Vec<usize> = sources.iter().map(|s| s.get(t).copied().unwrap_or(Vocab::PAD_ID)).collect();
            let x = tape.embedding(table, &ids);
            dropout.apply(tape, x)
        })
        .collect();

    let mut final_states = Vec::with_capacity(config.layers);
    let mut top = None;
    for l in 0..config.layers {
        let (wf, bf) = (params.var(&format!("enc.l{}.fwd.w", l)), params.var(&format!("enc.l{}.fwd.b", l)));
        let (wb, bb) = (params.var(&format!("enc.l{}.bwd.w", l)), params.var(&format!("enc.l{}.bwd.b", l)));
        let (hf, cf) = run_lstm(tape, wf, bf, &inputs, half);
        let reversed = reverse_within_lengths(tape, &inputs, &lengths);
        let (hb, cb) = run_lstm(tape, wb, bb, &reversed, half);

        let final_h = [last_valid(tape, &hf, &lengths), last_valid(tape, &hb, &lengths)];
        let final_c = [last_valid(tape, &cf, &lengths), last_valid(tape, &cb, &lengths)];
        let final_h = tape.concat(&final_h, Axis::Rows);
        let final_c = tape.concat(&final_c, Axis::Rows);
        final_states.push((final_h, final_c));

        if l + 1 < config.layers {
            let hb_orig = reverse_within_lengths(tape, &hb, &lengths);
            inputs = hf
                .iter()
                .zip(&hb_orig)
                .map(|(&f, &b)| {
                    let both = tape.concat(&[f, b], Axis::Rows);
                    dropout.apply(tape, both)
                })
                .collect();
        } else {
            top = Some((hf, hb));
        }
    }
    let (hf, hb) = top.expect("at least one layer");

    let mode = config.mode.attention();
    let mut max_abs_phi = 0.0f64;
    let mut sentences = Vec::with_capacity(sources.len());
    for (b, &len) in lengths.iter().enumerate() {
        let fwd: Vec<Var> = (0..len).map(|t| tape.column(hf[t], b)).collect();
        let bwd: Vec<Var> = (0..len).map(|t| tape.column(hb[len - 1 - t], b)).collect();
        let fwd = tape.concat(&fwd, Axis::Cols);
        let bwd = tape.concat(&bwd, Axis::Cols);
        let s = tape.concat(&[fwd, bwd], Axis::Rows);
        let mut sentence = EncodedSentence {
            len,
            s,
            phi: None,
            beta: None,
            m: None,
        };
        if mode != AttentionMode::None {
            let phi = head_scores(tape, s, params.var("attn.query"), params.var("attn.key"));
            max_abs_phi = max_abs_phi.max(tape.value(phi).max_abs());
            let beta = head_attention(tape, phi, mode)?;
            let sv = tape.matmul(params.var("attn.value"), s);
            let m = tape.matmul(sv, beta);
            sentence.phi = Some(phi);
            sentence.beta = Some(beta);
            sentence.m = Some(m);
        }
        sentences.push(sentence);
    }
    Ok(EncodedBatch {
        sentences,
        final_states,
        max_abs_phi,
    })
}

/// Encodes one sentence without dropout and returns plain values.
pub fn encode(params: &ParamStore, config: &ModelConfig, source: &[usize]) -> Result<EncoderOutput, ModelError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let batch = encode_batch(&mut tape, &bound, config, &[source], &mut Dropout::disabled())?;
    let sent = batch.sentences[0];
    let value = |v: Option<Var>| v.map(|v| tape.value(v).clone());
    Ok(EncoderOutput {
        s: tape.value(sent.s).clone(),
        phi: value(sent.phi),
        beta: value(sent.beta),
        m: value(sent.m),
    })
}
