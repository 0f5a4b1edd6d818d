// SPDX-License-Identifier: MIT OR Apache-2.0

//! Upper bounds, pair selection, language consistency, perplexity and
//! outcome categories over judged sweeps.

pub mod apply;
pub mod grid;
pub mod language;
pub mod selection;
pub mod stats;

pub use apply::{apply_selection, ApplyItem, ApplyReport, BankSource, LanguageApply};
pub use grid::{build_grid, layerwise_upper_bound, upper_bound, Axis, CorrectnessGrid, UpperBound};
pub use language::{
    consistency, detect_language_script, script_for_language, ConsistencyRow, LanguageDetector, Script, ScriptDetector,
};
pub use selection::{select_pairs, Candidate, LanguageChoice, PairSelection, Strategy};
pub use stats::{
    generation_perplexity, outcome_categories, perplexity_stats, OutcomeCategory, OutcomeRow, PerplexityReport,
    PPL_MIN_LEN,
};
