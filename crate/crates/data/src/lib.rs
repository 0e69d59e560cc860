//! Corpus ingestion and generation.

pub mod batch;
pub mod bpe;
pub mod conllu;
pub mod corpus;
pub mod synthetic;
pub mod vocab;

use thiserror::Error;

pub use batch::{make_batches, Batch, SentencePair};
pub use bpe::{BpeCodes, Segmentation};
pub use conllu::{read_conllu, GoldTree};
pub use corpus::{read_parallel, read_tokenized};
pub use synthetic::{make_copy_corpus, make_synthetic_corpus, AgreementCorpus, AgreementSentence};
pub use vocab::Vocab;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("{0}")]
    Invalid(String),
}

impl DataError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
