// SPDX-License-Identifier: MIT OR Apache-2.0

//! Cross-lingual feed-forward transplantation for decoder-only transformers.
//!
//! - [`model`]: deterministic pre-norm transformer with activation recording,
//!   substitution hooks, KV cache, greedy decoding and logit-lens decoding.
//! - [`transplant`]: activation banks, single-pair transplantation, and
//!   layer-pair sweeps (branch-cached and naive).
//! - [`eval`]: datasets, prompt templates and answer judging.
//! - [`analytics`]: upper bounds, pair selection, language consistency,
//!   perplexity and outcome categories.

pub mod analytics;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod transplant;

pub use error::{Error, Result};
pub use model::{Generation, Model, ModelConfig, TokenSequence, Tokenizer};
pub use transplant::{PairSet, SourceBank, SweepResult, TransplantMode, TransplantPair};
