//! Mini-batch maximum-likelihood training with Adam and
//! perplexity-driven learning-rate decay.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use treeattn_core::{Mat, SeededRng};
use treeattn_data::batch::{make_batches, sequential_batches, SentencePair};

use crate::model::Model;
use crate::nn::Dropout;
use crate::ModelError;

/// Random streams derived from the run seed.
pub const SHUFFLE_STREAM: u64 = 1;
pub const DROPOUT_STREAM: u64 = 2;

pub const LOG_HEADER: &str = "step\ttrain_loss\tvalid_ppl\tlr";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub max_decays: usize,
    /// Updates between validation passes.
    pub eval_interval: usize,
    pub max_epochs: usize,
    /// Hard cap on updates; zero means no cap.
    pub max_updates: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            learning_rate: 0.001,
            lr_decay: 0.5,
            max_decays: 5,
            eval_interval: 500,
            max_epochs: 20,
            max_updates: 0,
            clip_norm: 5.0,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::Config(msg.into()));
        if self.batch_size == 0 || self.eval_interval == 0 || self.max_epochs == 0 {
            return bad("batch size, evaluation interval and epoch limit must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) {
            return bad("learning rate and clipping norm must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return bad("learning-rate decay must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Learning rate after `decays` halvings (or other decay factor).
pub fn decayed_lr(initial: f64, decay: f64, decays: usize) -> f64 {
    initial * decay.powi(decays as i32)
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    #[serde(skip)]
    pub m: BTreeMap<String, Mat>,
    #[serde(skip)]
    pub v: BTreeMap<String, Mat>,
}

impl Adam {
    pub fn new(model: &Model) -> Self {
        let zeros: BTreeMap<String, Mat> = model
            .params
            .iter()
            .map(|(name, m)| (name.clone(), Mat::zeros(m.rows(), m.cols())))
            .collect();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(&mut self, model: &mut Model, grads: &BTreeMap<String, Mat>, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (name, param) in model.params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let m = self.m.get_mut(name).expect("moment for every parameter");
            let v = self.v.get_mut(name).expect("moment for every parameter");
            let p = param.as_mut_slice();
            for (((p, m), v), &g) in p
                .iter_mut()
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
                .zip(g.as_slice())
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
}

pub fn global_norm(grads: &BTreeMap<String, Mat>) -> f64 {
    grads
        .values()
        .flat_map(|g| g.as_slice())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

/// Rescales gradients to a global norm of at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_gradients(grads: &mut BTreeMap<String, Mat>, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    let factor = (max_norm / norm).min(1.0);
    if factor < 1.0 {
        for g in grads.values_mut() {
            g.as_mut_slice().iter_mut().for_each(|x| *x *= factor);
        }
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub update: usize,
    pub epoch: usize,
    pub lr: f64,
    pub decays: usize,
    pub best_valid_ppl: Option<f64>,
    pub best_update: usize,
}

/// What a validation result did to the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observation {
    Improved,
    Decayed,
    Unchanged,
}

impl TrainState {
    /// Applies the schedule to a validation perplexity: a new best is
    /// recorded, an increase over the best decays the learning rate.
    pub fn observe(&mut self, ppl: f64, config: &TrainConfig) -> Observation {
        match self.best_valid_ppl {
            Some(best) if ppl > best => {
                self.decays += 1;
                self.lr = decayed_lr(config.learning_rate, config.lr_decay, self.decays);
                Observation::Decayed
            }
            Some(best) if ppl == best => Observation::Unchanged,
            _ => {
                self.best_valid_ppl = Some(ppl);
                self.best_update = self.update;
                Observation::Improved
            }
        }
    }

    pub fn finished(&self, config: &TrainConfig) -> bool {
        self.decays >= config.max_decays
    }

    pub fn new(config: &TrainConfig) -> Self {
        TrainState {
            update: 0,
            epoch: 0,
            lr: config.learning_rate,
            decays: 0,
            best_valid_ppl: None,
            best_update: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub train_loss: f64,
    pub valid_ppl: f64,
    pub lr: f64,
}

impl LogRow {
    pub fn to_tsv(&self) -> String {
        format!("{}\t{}\t{}\t{}", self.step, self.train_loss, self.valid_ppl, self.lr)
    }
}

/// Teacher-forced perplexity `exp(total NLL / tokens)` without dropout.
pub fn perplexity(model: &Model, pairs: &[SentencePair], batch_size: usize) -> Result<f64, ModelError> {
    if pairs.is_empty() {
        return Err(ModelError::Config("no sentences to evaluate".into()));
    }
    let mut nll = 0.0;
    let mut tokens = 0;
    for batch in sequential_batches(pairs, batch_size) {
        let (n, t) = model.evaluate_batch(&batch)?;
        nll += n;
        tokens += t;
    }
    Ok((nll / tokens as f64).exp())
}

/// Result of a training run: the best model by validation perplexity with
/// its optimizer state, and the final schedule state.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Model,
    pub best_adam: Adam,
    pub state: TrainState,
    pub log: Vec<LogRow>,
}

pub struct Trainer {
    pub model: Model,
    pub adam: Adam,
    pub state: TrainState,
    pub config: TrainConfig,
    shuffle_rng: SeededRng,
    dropout_rng: SeededRng,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self, ModelError> {
        config.validate()?;
        Ok(Trainer {
            adam: Adam::new(&model),
            state: TrainState::new(&config),
            shuffle_rng: SeededRng::derive(config.seed, SHUFFLE_STREAM),
            dropout_rng: SeededRng::derive(config.seed, DROPOUT_STREAM),
            model,
            config,
        })
    }

    /// One clipped Adam update; returns the batch's summed NLL and token count.
    pub fn update(&mut self, batch: &treeattn_data::Batch, batch_id: usize) -> Result<(f64, usize), ModelError> {
        let rate = self.model.config.dropout;
        let mut dropout = Dropout::new(rate, &mut self.dropout_rng);
        let out = self.model.gradients(batch, &mut dropout).map_err(|e| match e {
            e if e.is_numeric() => ModelError::AtBatch {
                batch: batch_id,
                source: Box::new(e),
            },
            e => e,
        })?;
        if !out.loss.is_finite() {
            return Err(ModelError::NonFiniteLoss {
                batch: batch_id,
                max_abs_phi: out.max_abs_phi,
            });
        }
        let mut grads = out.grads;
        let norm = clip_gradients(&mut grads, self.config.clip_norm);
        if !norm.is_finite() {
            return Err(ModelError::NonFiniteLoss {
                batch: batch_id,
                max_abs_phi: out.max_abs_phi,
            });
        }
        self.adam.update(&mut self.model, &grads, self.state.lr);
        self.state.update += 1;
        Ok((out.nll_sum, out.tokens))
    }

    /// Trains until the learning rate has been decayed `max_decays` times or
    /// a limit is reached. Log rows are written to `log` as they happen.
    pub fn run(
        mut self,
        train: &[SentencePair],
        valid: &[SentencePair],
        log: &mut dyn Write,
    ) -> Result<TrainOutcome, ModelError> {
        if train.is_empty() || valid.is_empty() {
            return Err(ModelError::Config("training and validation corpora must be non-empty".into()));
        }
        let io = |e: std::io::Error| ModelError::Io {
            path: "training log".into(),
            source: e,
        };
        writeln!(log, "{}", LOG_HEADER).map_err(io)?;
        let mut rows = Vec::new();
        let mut best = (self.model.clone(), self.adam.clone());
        let mut interval_nll = 0.0;
        let mut interval_tokens = 0usize;
        let mut last_eval = 0;
        let mut done = false;
        let cap = if self.config.max_updates == 0 { usize::MAX } else { self.config.max_updates };

        while !done && self.state.epoch < self.config.max_epochs {
            let batches = make_batches(train, self.config.batch_size, &mut self.shuffle_rng);
            for batch in &batches {
                let id = self.state.update;
                let (nll, tokens) = self.update(batch, id)?;
                interval_nll += nll;
                interval_tokens += tokens;
                let at_cap = self.state.update >= cap;
                if self.state.update % self.config.eval_interval == 0 || at_cap {
                    let row = self.evaluate(valid, interval_nll / interval_tokens as f64, &mut best)?;
                    writeln!(log, "{}", row.to_tsv()).map_err(io)?;
                    rows.push(row);
                    interval_nll = 0.0;
                    interval_tokens = 0;
                    last_eval = self.state.update;
                    if self.state.finished(&self.config) || at_cap {
                        done = true;
                        break;
                    }
                }
            }
            self.state.epoch += 1;
        }
        if last_eval != self.state.update && interval_tokens > 0 {
            let row = self.evaluate(valid, interval_nll / interval_tokens as f64, &mut best)?;
            writeln!(log, "{}", row.to_tsv()).map_err(io)?;
            rows.push(row);
        }
        log.flush().map_err(io)?;
        Ok(TrainOutcome {
            best: best.0,
            best_adam: best.1,
            state: self.state,
            log: rows,
        })
    }

    fn evaluate(
        &mut self,
        valid: &[SentencePair],
        train_loss: f64,
        best: &mut (Model, Adam),
    ) -> Result<LogRow, ModelError> {
        let ppl = perplexity(&self.model, valid, self.config.batch_size)?;
        let row = LogRow {
            step: self.state.update,
            train_loss,
            valid_ppl: ppl,
            lr: self.state.lr,
        };
        if self.state.observe(ppl, &self.config) == Observation::Improved {
            *best = (self.model.clone(), self.adam.clone());
        }
        Ok(row)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learning_rate_after_three_decays() {
        assert!((decayed_lr(0.001, 0.5, 3) - 0.000125).abs() < 1e-18);
    }

    #[test]
    fn schedule_decays_on_increase_and_stops() {
        let config = TrainConfig::default();
        let mut state = TrainState::new(&config);
        assert_eq!(state.observe(10.0, &config), Observation::Improved);
        assert_eq!(state.observe(9.0, &config), Observation::Improved);
        assert_eq!(state.observe(9.0, &config), Observation::Unchanged);
        for k in 1..=5 {
            assert!(!state.finished(&config));
            assert_eq!(state.observe(9.5, &config), Observation::Decayed);
            assert!((state.lr - 0.001 * 0.5f64.powi(k)).abs() < 1e-18);
        }
        assert!(state.finished(&config));
        assert_eq!(state.best_valid_ppl, Some(9.0));
    }

    #[test]
    fn clipping_keeps_direction() {
        let mut grads = BTreeMap::new();
        grads.insert("a".to_string(), Mat::from_vec(1, 2, vec![3.0, 4.0]));
        grads.insert("b".to_string(), Mat::from_vec(1, 1, vec![12.0]));
        let before = grads.clone();
        let norm = clip_gradients(&mut grads, 5.0);
        assert_eq!(norm, 13.0);
        assert!((global_norm(&grads) - 5.0).abs() < 1e-12);
        for (name, g) in &grads {
            for (x, y) in g.as_slice().iter().zip(before[name].as_slice()) {
                assert!((x / y - 5.0 / 13.0).abs() < 1e-15);
            }
        }
        let mut small = before.clone();
        clip_gradients(&mut small, 100.0);
        assert_eq!(small, before);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { lr_decay: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { batch_size: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
