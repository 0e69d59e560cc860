//! Training options: command-line flags over a JSON config file over defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use treeattn_model::{ModelConfig, ModelMode, TrainConfig};

use crate::error::CliError;

/// Every option is optional here so that unset flags fall through to the
/// config file. Config files use the flag names as keys.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TrainOptions {
    /// Model variant
    #[arg(long)]
    pub mode: Option<ModelMode>,
    /// Training source file (one tokenized sentence per line)
    #[arg(long)]
    pub src: Option<PathBuf>,
    /// Training target file
    #[arg(long)]
    pub tgt: Option<PathBuf>,
    #[arg(long)]
    pub valid_src: Option<PathBuf>,
    #[arg(long)]
    pub valid_tgt: Option<PathBuf>,
    /// Checkpoint to write
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Training log (defaults to the checkpoint path plus `.log.tsv`)
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub max_decays: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Stop after this many updates (0 for no limit)
    #[arg(long)]
    pub max_updates: Option<usize>,
    #[arg(long)]
    pub eval_interval: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub init_range: Option<f64>,
    #[arg(long)]
    pub max_source_len: Option<usize>,
}

impl TrainOptions {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::error::io_error(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e)))
    }

    /// Fields set in `self` win over those in `fallback`.
    pub fn or(self, fallback: TrainOptions) -> TrainOptions {
        TrainOptions {
            mode: self.mode.or(fallback.mode),
            src: self.src.or(fallback.src),
            tgt: self.tgt.or(fallback.tgt),
            valid_src: self.valid_src.or(fallback.valid_src),
            valid_tgt: self.valid_tgt.or(fallback.valid_tgt),
            out: self.out.or(fallback.out),
            log: self.log.or(fallback.log),
            seed: self.seed.or(fallback.seed),
            lr: self.lr.or(fallback.lr),
            lr_decay: self.lr_decay.or(fallback.lr_decay),
            max_decays: self.max_decays.or(fallback.max_decays),
            epochs: self.epochs.or(fallback.epochs),
            max_updates: self.max_updates.or(fallback.max_updates),
            eval_interval: self.eval_interval.or(fallback.eval_interval),
            batch_size: self.batch_size.or(fallback.batch_size),
            clip_norm: self.clip_norm.or(fallback.clip_norm),
            embed_dim: self.embed_dim.or(fallback.embed_dim),
            layers: self.layers.or(fallback.layers),
            dropout: self.dropout.or(fallback.dropout),
            init_range: self.init_range.or(fallback.init_range),
            max_source_len: self.max_source_len.or(fallback.max_source_len),
        }
    }
}

/// Fully resolved training run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub mode: ModelMode,
    pub src: PathBuf,
    pub tgt: PathBuf,
    pub valid_src: PathBuf,
    pub valid_tgt: PathBuf,
    pub out: PathBuf,
    pub log: PathBuf,
    pub training: TrainConfig,
    pub dim: usize,
    pub layers: usize,
    pub dropout: f64,
    pub init_range: f64,
    pub max_source_len: usize,
}

impl RunConfig {
    pub fn resolve(flags: TrainOptions, file: Option<TrainOptions>) -> Result<RunConfig, CliError> {
        let o = flags.or(file.unwrap_or_default());
        let required = |v: Option<PathBuf>, name: &str| {
            v.ok_or_else(|| CliError::Usage(format!("missing required option --{}", name)))
        };
        let out = required(o.out, "out")?;
        let log = o.log.unwrap_or_else(|| {
            let mut p = out.clone().into_os_string();
            p.push(".log.tsv");
            p.into()
        });
        let t = TrainConfig::default();
        let m = ModelConfig::new(ModelMode::Baseline, 0, 0);
        let training = TrainConfig {
            batch_size: o.batch_size.unwrap_or(t.batch_size),
            learning_rate: o.lr.unwrap_or(t.learning_rate),
            lr_decay: o.lr_decay.unwrap_or(t.lr_decay),
            max_decays: o.max_decays.unwrap_or(t.max_decays),
            eval_interval: o.eval_interval.unwrap_or(t.eval_interval),
            max_epochs: o.epochs.unwrap_or(t.max_epochs),
            max_updates: o.max_updates.unwrap_or(t.max_updates),
            clip_norm: o.clip_norm.unwrap_or(t.clip_norm),
            seed: o.seed.unwrap_or(t.seed),
        };
        training.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(RunConfig {
            mode: o.mode.ok_or_else(|| CliError::Usage("missing required option --mode".into()))?,
            src: required(o.src, "src")?,
            tgt: required(o.tgt, "tgt")?,
            valid_src: required(o.valid_src, "valid-src")?,
            valid_tgt: required(o.valid_tgt, "valid-tgt")?,
            out,
            log,
            training,
            dim: o.embed_dim.unwrap_or(m.dim),
            layers: o.layers.unwrap_or(m.layers),
            dropout: o.dropout.unwrap_or(m.dropout),
            init_range: o.init_range.unwrap_or(m.init_range),
            max_source_len: o.max_source_len.unwrap_or(m.max_source_len),
        })
    }

    pub fn model_config(&self, src_vocab: usize, tgt_vocab: usize) -> ModelConfig {
        ModelConfig {
            dim: self.dim,
            layers: self.layers,
            dropout: self.dropout,
            init_range: self.init_range,
            max_source_len: self.max_source_len,
            ..ModelConfig::new(self.mode, src_vocab, tgt_vocab)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paths() -> TrainOptions {
        TrainOptions {
            mode: Some(ModelMode::SaShared),
            src: Some("s".into()),
            tgt: Some("t".into()),
            valid_src: Some("vs".into()),
            valid_tgt: Some("vt".into()),
            out: Some("ckpt".into()),
            ..Default::default()
        }
    }

    #[test]
    fn defaults_apply_without_flags() {
        let cfg = RunConfig::resolve(paths(), None).unwrap();
        assert_eq!(cfg.training.learning_rate, 0.001);
        assert_eq!(cfg.training.lr_decay, 0.5);
        assert_eq!(cfg.training.max_decays, 5);
        assert_eq!(cfg.dropout, 0.3);
        assert_eq!(cfg.init_range, 0.04);
        assert_eq!(cfg.log, PathBuf::from("ckpt.log.tsv"));
    }

    #[test]
    fn flags_beat_file_beats_defaults() {
        let file: TrainOptions = serde_json::from_str(r#"{"lr": 0.01, "embed-dim": 32, "seed": 7}"#).unwrap();
        let flags = TrainOptions { lr: Some(0.02), ..paths() };
        let cfg = RunConfig::resolve(flags, Some(file)).unwrap();
        assert_eq!(cfg.training.learning_rate, 0.02);
        assert_eq!(cfg.dim, 32);
        assert_eq!(cfg.training.seed, 7);
        assert_eq!(cfg.training.batch_size, 32);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(serde_json::from_str::<TrainOptions>(r#"{"learning-rate": 0.01}"#).is_err());
    }

    #[test]
    fn missing_mode_is_a_usage_error() {
        let flags = TrainOptions { mode: None, ..paths() };
        assert!(matches!(RunConfig::resolve(flags, None), Err(CliError::Usage(_))));
    }
}
