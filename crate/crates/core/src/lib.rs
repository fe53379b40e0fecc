//! Attribution and steering of functionally antagonistic FFN neurons in a
//! small decoder-only transformer.

pub mod aqua;
pub mod attribution;
pub mod engine;
pub mod error;
pub mod evaluation;
pub mod intervention;
pub mod io;
pub mod scalar;
pub mod tasks;
pub mod tokenizer;

pub use aqua::{ProxySet, PromptTemplate, QAExample};
pub use engine::{ActivationSnapshot, LogitObjective, Model, ModelConfig, NeuronId, OverrideMap, OverrideMode};
pub use error::{Error, Result};
pub use scalar::{Precision, Scalar};
pub use tokenizer::Tokenizer;
