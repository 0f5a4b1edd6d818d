// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error type shared by every module of the crate.

use std::path::PathBuf;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Stage of a layer at which a non-finite value was detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Embedding,
    Attention,
    FeedForward,
    Residual,
    FinalNorm,
    Logits,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Embedding => "embedding",
            Stage::Attention => "attention",
            Stage::FeedForward => "feed-forward",
            Stage::Residual => "residual",
            Stage::FinalNorm => "final-norm",
            Stage::Logits => "logits",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid model config: {0}")]
    Config(String),

    #[error("config file {path}: line {line}: {msg}")]
    ConfigParse { path: PathBuf, line: usize, msg: String },

    #[error("missing tensor `{0}`")]
    MissingTensor(String),

    #[error("tensor `{name}`: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("tensor `{name}`: unsupported dtype {dtype}")]
    UnsupportedDtype { name: String, dtype: String },

    #[error("safetensors: {0}")]
    Safetensors(String),

    #[error("empty input")]
    EmptyInput,

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },

    #[error("sequence of length {len} exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("kv cache is full ({0} positions)")]
    CacheOverflow(usize),

    #[error("non-finite value at layer {layer}, stage {stage}")]
    NonFinite { layer: usize, stage: Stage },

    #[error("non-finite value in hidden state")]
    NonFiniteHidden,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("layer pair ({source_layer}, {target_layer}) out of range for {n_layers} layers")]
    PairOutOfRange {
        source_layer: usize,
        target_layer: usize,
        n_layers: usize,
    },

    #[error("activation bank (n_layers={bank_layers}, d_model={bank_dim}) does not match model (n_layers={model_layers}, d_model={model_dim})")]
    BankMismatch {
        bank_layers: usize,
        bank_dim: usize,
        model_layers: usize,
        model_dim: usize,
    },

    #[error("{path}: line {line}: {msg}")]
    Dataset { path: PathBuf, line: usize, msg: String },

    #[error("no template for dataset `{dataset}` (language `{lang}`)")]
    MissingTemplate { dataset: String, lang: String },

    #[error("template for `{dataset}` needs field `{field}` which instance `{id}` lacks")]
    MissingField { dataset: String, id: String, field: String },

    #[error("judge/task mismatch: {0}")]
    JudgeMismatch(String),

    #[error("{0}")]
    Analytics(String),

    #[error("no language selection for `{0}`")]
    MissingSelection(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
