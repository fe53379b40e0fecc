use std::path::PathBuf;

use crate::engine::NeuronId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid model config: {0}")]
    Config(String),

    #[error("token id {token} at position {position} is out of range for vocabulary of {vocab_size}")]
    TokenOutOfRange {
        token: usize,
        position: usize,
        vocab_size: usize,
    },

    #[error("sequence of {len} tokens is outside [1, {max_seq}]")]
    SequenceLength { len: usize, max_seq: usize },

    #[error("position {position} is out of range for a sequence of {len} tokens")]
    PositionOutOfRange { position: usize, len: usize },

    #[error("neuron {0} is not addressable in this model")]
    NeuronOutOfRange(NeuronId),

    #[error("neuron {0} already has an override")]
    DuplicateOverride(NeuronId),

    #[error("invalid override: {0}")]
    InvalidOverride(String),

    #[error("non-finite value in {site} (layer {layer:?}, position {position:?})")]
    NonFinite {
        site: &'static str,
        layer: Option<usize>,
        position: Option<usize>,
    },

    #[error("invalid question: {0}")]
    InvalidExample(String),

    #[error("template error: {0}")]
    Template(String),

    #[error("tokenizer error: {0}")]
    Tokenizer(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("weight file is malformed: {0}")]
    WeightFormat(String),

    #[error("integrity check failed for {path:?}: expected {expected}, found {found}")]
    Integrity {
        path: Option<PathBuf>,
        expected: String,
        found: String,
    },

    #[error("task generation failed: {0}")]
    Task(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("planted construction check failed: {0}")]
    PlantedCheck(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by numerical breakdown rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::Divergence { .. })
    }
}
