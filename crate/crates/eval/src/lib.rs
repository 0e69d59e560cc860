//! Evaluation: trees from head scores, attachment accuracy, BLEU with
//! bootstrap significance, and analysis of trained models.

use thiserror::Error;
use treeattn_core::MatrixTreeError;
use treeattn_model::ModelError;

pub mod analysis;
pub mod attachment;
pub mod bleu;
pub mod collapse;
pub mod tree;

pub use analysis::{attention_export, gate_report, induce_tree, AttentionExport, GateRecord, GateReport};
pub use attachment::{attachment_accuracy, branching_baselines, AttachmentReport, BaselineReport};
pub use bleu::{bleu, bootstrap_significance, BleuStats, Significance};
pub use collapse::collapse_bpe_scores;
pub use tree::{cle_decode, greedy_decode, tree_score, DependencyTree, GreedyHeads};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("sentence {index}: {detail}")]
    Alignment { index: usize, detail: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    MatrixTree(#[from] MatrixTreeError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
}
