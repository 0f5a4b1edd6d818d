// SPDX-License-Identifier: MIT OR Apache-2.0

//! Task datasets, prompt rendering and answer judging.

pub mod dataset;
pub mod judge;
pub mod prompt;

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dataset::{load_dataset, option_label, parse_dataset, DatasetInstance, Rendering, TaskKind};
pub use judge::{judge_mc, judge_mc_with, judge_qa, normalize_ws, Judge, JudgeRule, Judgement, McOptions};
pub use prompt::{render_prompt, render_source, Direction, PromptVariant, TemplateRegistry};

use crate::error::{Error, Result};
use crate::io::csv_bytes;
use crate::model::{Model, DEFAULT_MAX_NEW};

pub const JUDGEMENT_CSV_HEADER: [&str; 4] = ["instance_id", "variant", "correct", "matched_span"];

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub max_new: usize,
    pub stop_ids: HashSet<u32>,
    pub direction: Direction,
    /// Generate instances on the rayon pool. Output order is unchanged.
    pub parallel: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            max_new: DEFAULT_MAX_NEW,
            stop_ids: HashSet::new(),
            direction: Direction::EnToX,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEval {
    pub instance_id: String,
    pub language: String,
    pub response: String,
    pub judgement: Judgement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: PromptVariant,
    pub items: Vec<InstanceEval>,
    pub accuracy: f64,
}

/// Mean of `correct`; an empty slice has no accuracy.
pub fn accuracy(items: &[InstanceEval]) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::InvalidArgument(
            "accuracy is undefined for an empty dataset".into(),
        ));
    }
    let hits = items.iter().filter(|e| e.judgement.correct).count();
    Ok(hits as f64 / items.len() as f64)
}

impl EvalReport {
    /// Accuracy per language tag, sorted by tag.
    pub fn per_language(&self) -> BTreeMap<String, f64> {
        let mut groups: BTreeMap<String, Vec<InstanceEval>> = BTreeMap::new();
        for e in &self.items {
            groups.entry(e.language.clone()).or_default().push(e.clone());
        }
        groups
            .into_iter()
            .filter_map(|(lang, items)| accuracy(&items).ok().map(|a| (lang, a)))
            .collect()
    }

    /// `instance_id,variant,correct,matched_span` rows.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let rows: Vec<Vec<String>> = self
            .items
            .iter()
            .map(|e| {
                vec![
                    e.instance_id.clone(),
                    self.variant.as_str().to_owned(),
                    e.judgement.correct.to_string(),
                    e.judgement.matched_span.clone().unwrap_or_default(),
                ]
            })
            .collect();
        csv_bytes(&JUDGEMENT_CSV_HEADER, &rows)
    }
}

/// Generates the target-side response for one instance and judges it.
pub fn evaluate_instance(
    model: &Model,
    reg: &TemplateRegistry,
    inst: &DatasetInstance,
    variant: PromptVariant,
    opts: &EvalOptions,
) -> Result<InstanceEval> {
    let prompt = render_prompt(reg, inst, variant, opts.direction)?;
    let tokens = model.encode(&prompt)?;
    let g = model.generate(&tokens, opts.max_new, &opts.stop_ids)?;
    let judgement = Judge::for_instance(inst, variant.is_cot()).judge(&g.text);
    Ok(InstanceEval {
        instance_id: inst.id.clone(),
        language: inst.language_tag.clone(),
        response: g.text,
        judgement,
    })
}

/// Baseline accuracy of `variant` over `instances`.
pub fn evaluate_baseline(
    model: &Model,
    reg: &TemplateRegistry,
    instances: &[DatasetInstance],
    variant: PromptVariant,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if instances.is_empty() {
        return Err(Error::InvalidArgument(
            "accuracy is undefined for an empty dataset".into(),
        ));
    }
    let run = |inst: &DatasetInstance| evaluate_instance(model, reg, inst, variant, opts);
    let items: Vec<InstanceEval> = if opts.parallel {
        instances.par_iter().map(run).collect::<Result<_>>()?
    } else {
        instances.iter().map(run).collect::<Result<_>>()?
    };
    let accuracy = accuracy(&items)?;
    Ok(EvalReport {
        variant,
        items,
        accuracy,
    })
}
