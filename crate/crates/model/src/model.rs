use std::collections::BTreeMap;

use treeattn_core::{Mat, Tape, Var};
use treeattn_data::{Batch, Vocab};

use crate::config::ModelConfig;
use crate::decoder::{
    argmax, decode_step, distribution, initial_state, log_distribution, prepare_memory, DecoderWeights, SourceMemory, StepTrace,
};
use crate::encoder::{encode, encode_batch, EncoderOutput};
use crate::nn::Dropout;
use crate::params::{Bound, ParamStore};
use crate::ModelError;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

/// Loss nodes for one batch.
#[derive(Debug, Clone, Copy)]
pub struct BatchLoss {
    /// Mean negative log-likelihood per target token.
    pub loss: Var,
    /// Sum of negative log-likelihoods.
    pub nll_sum: f64,
    pub tokens: usize,
    pub max_abs_phi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradients {
    pub loss: f64,
    pub nll_sum: f64,
    pub tokens: usize,
    pub max_abs_phi: f64,
    pub grads: BTreeMap<String, Mat>,
}

/// Output of greedy decoding. `tokens` excludes the end-of-sentence marker.
#[derive(Debug, Clone, PartialEq)]
pub struct Translation {
    pub tokens: Vec<usize>,
    pub traces: Vec<StepTrace>,
}

/// Teacher-forced pass over a reference translation. Entry `t` of each
/// vector belongs to the step predicting reference token `t` (the last one
/// predicts end of sentence).
#[derive(Debug, Clone, PartialEq)]
pub struct ForcedPass {
    pub log_probs: Vec<f64>,
    pub distributions: Vec<Vec<f64>>,
    pub traces: Vec<StepTrace>,
}

impl ForcedPass {
    pub fn log_likelihood(&self) -> f64 {
        self.log_probs.iter().sum()
    }
}

fn decoder_input(target: &[usize], t: usize) -> usize {
    if t == 0 {
        Vocab::BOS_ID
    } else {
        target.get(t - 1).copied().unwrap_or(Vocab::PAD_ID)
    }
}

fn gold(target: &[usize], t: usize) -> Option<usize> {
    match t.cmp(&target.len()) {
        std::cmp::Ordering::Less => Some(target[t]),
        std::cmp::Ordering::Equal => Some(Vocab::EOS_ID),
        std::cmp::Ordering::Greater => None,
    }
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let params = ParamStore::init(&config, seed);
        Ok(Model { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self, ModelError> {
        config.validate()?;
        let expected = crate::params::parameter_shapes(&config);
        for (name, &(rows, cols)) in &expected {
            match params.get(name) {
                None => return Err(ModelError::Checkpoint(format!("missing tensor '{}'", name))),
                Some(m) if m.shape() != (rows, cols) => {
                    return Err(ModelError::Checkpoint(format!(
                        "tensor '{}' has shape {:?}, expected {:?}",
                        name,
                        m.shape(),
                        (rows, cols)
                    )))
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = params.names().find(|n| !expected.contains_key(*n)) {
            return Err(ModelError::Checkpoint(format!("unknown tensor '{}'", extra)));
        }
        Ok(Model { config, params })
    }

    /// Builds the teacher-forced loss of `batch` on `tape`.
    pub fn batch_loss(
        &self,
        tape: &mut Tape,
        params: &Bound,
        batch: &Batch,
        dropout: &mut Dropout,
    ) -> Result<BatchLoss, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::Config("empty batch".into()));
        }
        let size = batch.len();
        let sources: Vec<&[usize]> = (0..size).map(|b| batch.source(b)).collect();
        let targets: Vec<&[usize]> = (0..size).map(|b| batch.target(b)).collect();
        if let Some(bad) = targets.iter().flat_map(|t| t.iter()).find(|&&id| id >= self.config.tgt_vocab_size) {
            return Err(ModelError::Config(format!(
                "target id {} outside vocabulary of {}",
                bad, self.config.tgt_vocab_size
            )));
        }
        let encoded = encode_batch(tape, params, &self.config, &sources, dropout)?;
        let mode = self.config.mode.decoder();
        let memories = encoded
            .sentences
            .iter()
            .map(|s| prepare_memory(tape, params, mode, s))
            .collect::<Result<Vec<SourceMemory>, _>>()?;
        let weights = DecoderWeights::new(tape, params, &self.config, size);
        let mut state = initial_state(tape, params, &self.config, &encoded);

        let steps = targets.iter().map(|t| t.len()).max().unwrap_or(0) + 1;
        let vocab = self.config.tgt_vocab_size;
        let mut total: Option<Var> = None;
        let mut tokens = 0;
        for t in 0..steps {
            let y_prev: Vec<usize> = targets.iter().map(|tgt| decoder_input(tgt, t)).collect();
            let golds: Vec<Option<usize>> = targets.iter().map(|tgt| gold(tgt, t)).collect();
            let active: Vec<bool> = golds.iter().map(Option::is_some).collect();
            let (step, next) = decode_step(tape, &weights, &memories, &state, &y_prev, &active, dropout)?;
            state = next;
            let mut pick = Mat::zeros(vocab, size);
            for (b, g) in golds.iter().enumerate() {
                if let Some(g) = *g {
                    pick[(g, b)] = 1.0;
                    tokens += 1;
                }
            }
            let log_p = tape.log_softmax_cols(step.logits);
            let pick = tape.constant(pick);
            let picked = tape.mul(log_p, pick);
            let step_sum = tape.sum(picked);
            total = Some(match total {
                Some(acc) => tape.add(acc, step_sum),
                None => step_sum,
            });
        }
        let total = total.expect("at least one step");
        let nll_sum = -tape.scalar(total);
        let loss = tape.scale(total, -1.0 / tokens as f64);
        Ok(BatchLoss {
            loss,
            nll_sum,
            tokens,
            max_abs_phi: encoded.max_abs_phi,
        })
    }

    /// Loss and parameter gradients for one batch.
    pub fn gradients(&self, batch: &Batch, dropout: &mut Dropout) -> Result<BatchGradients, ModelError> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, true);
        let out = self.batch_loss(&mut tape, &bound, batch, dropout)?;
        let loss = tape.scalar(out.loss);
        let mut grads = BTreeMap::new();
        if loss.is_finite() {
            let all = tape.backward(out.loss)?;
            for (name, &var) in bound.iter() {
                let g = all.get(var).cloned().unwrap_or_else(|| {
                    let (r, c) = tape.shape(var);
                    Mat::zeros(r, c)
                });
                grads.insert(name.clone(), g);
            }
        }
        Ok(BatchGradients {
            loss,
            nll_sum: out.nll_sum,
            tokens: out.tokens,
            max_abs_phi: out.max_abs_phi,
            grads,
        })
    }

    /// Summed negative log-likelihood and token count, without dropout.
    pub fn evaluate_batch(&self, batch: &Batch) -> Result<(f64, usize), ModelError> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let out = self.batch_loss(&mut tape, &bound, batch, &mut Dropout::disabled())?;
        Ok((out.nll_sum, out.tokens))
    }

    pub fn encode(&self, source: &[usize]) -> Result<EncoderOutput, ModelError> {
        encode(&self.params, &self.config, source)
    }

    /// Greedy decoding; stops at end of sentence or after twice the source
    /// length.
    pub fn translate(&self, source: &[usize]) -> Result<Translation, ModelError> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let mut dropout = Dropout::disabled();
        let encoded = encode_batch(&mut tape, &bound, &self.config, &[source], &mut dropout)?;
        let memory = prepare_memory(&mut tape, &bound, self.config.mode.decoder(), &encoded.sentences[0])?;
        let weights = DecoderWeights::new(&mut tape, &bound, &self.config, 1);
        let mut state = initial_state(&mut tape, &bound, &self.config, &encoded);
        let mut y_prev = Vocab::BOS_ID;
        let mut tokens = Vec::new();
        let mut traces = Vec::new();
        for _ in 0..2 * source.len() {
            let (step, next) = decode_step(&mut tape, &weights, &[memory], &state, &[y_prev], &[true], &mut dropout)?;
            state = next;
            traces.push(step.trace(&tape, 0));
            let y = argmax(tape.value(step.logits).as_slice());
            if y == Vocab::EOS_ID {
                break;
            }
            tokens.push(y);
            y_prev = y;
        }
        Ok(Translation { tokens, traces })
    }

    /// Runs the decoder on a reference translation.
    pub fn teacher_forced(&self, source: &[usize], target: &[usize]) -> Result<ForcedPass, ModelError> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let mut dropout = Dropout::disabled();
        let encoded = encode_batch(&mut tape, &bound, &self.config, &[source], &mut dropout)?;
        let memory = prepare_memory(&mut tape, &bound, self.config.mode.decoder(), &encoded.sentences[0])?;
        let weights = DecoderWeights::new(&mut tape, &bound, &self.config, 1);
        let mut state = initial_state(&mut tape, &bound, &self.config, &encoded);
        let mut pass = ForcedPass {
            log_probs: Vec::new(),
            distributions: Vec::new(),
            traces: Vec::new(),
        };
        for t in 0..=target.len() {
            let y_prev = decoder_input(target, t);
            let (step, next) = decode_step(&mut tape, &weights, &[memory], &state, &[y_prev], &[true], &mut dropout)?;
            state = next;
            let logits = tape.value(step.logits).as_slice();
            let dist = distribution(logits);
            let g = gold(target, t).expect("within reference length");
            pass.log_probs.push(log_distribution(logits)[g]);
            pass.distributions.push(dist);
            pass.traces.push(step.trace(&tape, 0));
        }
        Ok(pass)
    }
}
