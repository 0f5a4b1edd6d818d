// SPDX-License-Identifier: MIT OR Apache-2.0

//! Perplexity distributions and outcome categories.

use serde::{Deserialize, Serialize};

use super::grid::CorrectnessGrid;
use crate::error::{Error, Result};
use crate::transplant::SweepResult;

/// Generations with at most this many tokens are left out of perplexity reports.
pub const PPL_MIN_LEN: usize = 5;

/// `exp(-mean log p)` for natural-log step probabilities.
///
/// Evaluated as `2^(-mean log2 p)`, the same quantity, so that uniform
/// distributions over a power-of-two vocabulary give the vocabulary size
/// exactly. `None` for an empty slice.
pub fn generation_perplexity(logprobs: &[f64]) -> Option<f64> {
    if logprobs.is_empty() {
        return None;
    }
    let bits: f64 = logprobs.iter().map(|lp| lp / std::f64::consts::LN_2).sum();
    Some((-bits / logprobs.len() as f64).exp2())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityReport {
    pub min_len: usize,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub mean: f64,
    pub max: f64,
    pub baseline_count: usize,
    pub baseline_mean: Option<f64>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Distribution of per-generation perplexity over all transplanted answers
/// longer than `min_len` tokens, with the target-baseline mean alongside.
pub fn perplexity_stats(results: &[SweepResult], min_len: usize) -> Result<PerplexityReport> {
    let ppl = |g: &crate::model::Generation| {
        (g.tokens.len() > min_len)
            .then(|| generation_perplexity(&g.logprobs))
            .flatten()
    };
    let mut values: Vec<f64> = results
        .iter()
        .flat_map(|r| r.generations.iter().filter_map(ppl))
        .collect();
    if values.is_empty() {
        return Err(Error::Analytics(format!(
            "no generation longer than {min_len} tokens for perplexity"
        )));
    }
    let baseline: Vec<f64> = results.iter().filter_map(|r| ppl(&r.baseline)).collect();
    let avg = mean(&values);
    values.sort_by(f64::total_cmp);
    Ok(PerplexityReport {
        min_len,
        count: values.len(),
        min: values[0],
        q1: quantile(&values, 0.25),
        median: quantile(&values, 0.5),
        q3: quantile(&values, 0.75),
        mean: avg,
        max: values[values.len() - 1],
        baseline_count: baseline.len(),
        baseline_mean: (!baseline.is_empty()).then(|| mean(&baseline)),
    })
}

/// (source baseline correct, target baseline correct, some pair correct).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OutcomeCategory {
    pub source_correct: bool,
    pub target_correct: bool,
    pub sweep_correct: bool,
}

impl OutcomeCategory {
    /// All eight categories, correct-first.
    pub fn all() -> [OutcomeCategory; 8] {
        std::array::from_fn(|k| OutcomeCategory {
            source_correct: k & 4 == 0,
            target_correct: k & 2 == 0,
            sweep_correct: k & 1 == 0,
        })
    }

    pub fn label(&self) -> String {
        let mark = |b: bool| if b { '+' } else { '-' };
        format!(
            "src{} tgt{} sweep{}",
            mark(self.source_correct),
            mark(self.target_correct),
            mark(self.sweep_correct)
        )
    }

    pub fn of(grid: &CorrectnessGrid) -> Result<Self> {
        let flag = |f: Option<bool>, name: &str| {
            f.ok_or_else(|| Error::Analytics(format!("grid `{}` lacks the {name} baseline flag", grid.id())))
        };
        Ok(Self {
            source_correct: flag(grid.src_correct(), "source")?,
            target_correct: flag(grid.tgt_correct(), "target")?,
            sweep_correct: grid.any_correct(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub category: OutcomeCategory,
    pub label: String,
    pub count: usize,
    pub proportion: f64,
}

/// Share of instances in each of the eight categories.
pub fn outcome_categories(grids: &[CorrectnessGrid]) -> Result<Vec<OutcomeRow>> {
    if grids.is_empty() {
        return Err(Error::Analytics("outcome categories over no grids".into()));
    }
    let cats = grids.iter().map(OutcomeCategory::of).collect::<Result<Vec<_>>>()?;
    Ok(OutcomeCategory::all()
        .into_iter()
        .map(|c| {
            let count = cats.iter().filter(|&&x| x == c).count();
            OutcomeRow {
                category: c,
                label: c.label(),
                count,
                proportion: count as f64 / grids.len() as f64,
            }
        })
        .collect())
}
