// SPDX-License-Identifier: MIT OR Apache-2.0

//! Running a pair selection on unseen instances.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::selection::PairSelection;
use crate::error::Result;
use crate::eval::{
    render_prompt, render_source, DatasetInstance, EvalOptions, Judge, Judgement, PromptVariant, TemplateRegistry,
};
use crate::model::Model;
use crate::transplant::{build_activation_bank, transplant_generate, TransplantOptions, TransplantPair};

/// Prompt the activation bank is recorded from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BankSource {
    /// The source-language rendering (the transplant proper).
    #[default]
    Source,
    /// The target prompt itself; with `(k, k)` pairs this reproduces the baseline.
    Target,
}

impl std::str::FromStr for BankSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "source" => Ok(BankSource::Source),
            "target" => Ok(BankSource::Target),
            other => Err(format!("unknown bank source `{other}` (source|target)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplyItem {
    pub instance_id: String,
    pub language: String,
    pub pair: TransplantPair,
    pub response: String,
    pub judgement: Judgement,
    pub baseline_response: String,
    pub baseline_judgement: Judgement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageApply {
    pub instances: usize,
    pub pair: TransplantPair,
    pub accuracy: f64,
    pub baseline_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplyReport {
    pub items: Vec<ApplyItem>,
    /// Languages with at least one instance.
    pub per_language: BTreeMap<String, LanguageApply>,
    /// Selected languages without unseen instances.
    pub absent: Vec<String>,
}

/// Transplants the selected pair into every instance and judges the result
/// next to the plain baseline.
pub fn apply_selection(
    model: &Model,
    reg: &TemplateRegistry,
    instances: &[DatasetInstance],
    selection: &PairSelection,
    bank_source: BankSource,
    opts: &EvalOptions,
) -> Result<ApplyReport> {
    // fail before any generation when a language has no pair
    for inst in instances {
        selection.pair(&inst.language_tag)?;
    }
    let topts = TransplantOptions {
        max_new: opts.max_new,
        stop_ids: opts.stop_ids.clone(),
        ..TransplantOptions::default()
    };
    let run = |inst: &DatasetInstance| -> Result<ApplyItem> {
        let pair = selection.pair(&inst.language_tag)?;
        let target = model.encode(&render_prompt(reg, inst, PromptVariant::Plain, opts.direction)?)?;
        let (src, tgt) = inst.source_target(opts.direction);
        let bank = match bank_source {
            BankSource::Source => {
                let source = model.encode(&render_source(reg, inst, opts.direction)?)?;
                build_activation_bank(model, &src.lang, &source)?
            }
            BankSource::Target => build_activation_bank(model, &tgt.lang, &target)?,
        };
        let g = transplant_generate(model, &target, &bank, pair, &topts)?;
        let base = model.generate(&target, opts.max_new, &opts.stop_ids)?;
        let judge = Judge::for_instance(inst, false);
        Ok(ApplyItem {
            instance_id: inst.id.clone(),
            language: inst.language_tag.clone(),
            pair,
            judgement: judge.judge(&g.text),
            response: g.text,
            baseline_judgement: judge.judge(&base.text),
            baseline_response: base.text,
        })
    };
    let items: Vec<ApplyItem> = if opts.parallel {
        instances.par_iter().map(run).collect::<Result<_>>()?
    } else {
        instances.iter().map(run).collect::<Result<_>>()?
    };

    let mut per_language = BTreeMap::new();
    for (lang, choice) in &selection.choices {
        let rows: Vec<&ApplyItem> = items.iter().filter(|e| &e.language == lang).collect();
        if rows.is_empty() {
            continue;
        }
        let n = rows.len() as f64;
        let hits = rows.iter().filter(|e| e.judgement.correct).count() as f64;
        let base = rows.iter().filter(|e| e.baseline_judgement.correct).count() as f64;
        per_language.insert(
            lang.clone(),
            LanguageApply {
                instances: rows.len(),
                pair: choice.pair,
                accuracy: hits / n,
                baseline_accuracy: base / n,
            },
        );
    }
    let absent = selection
        .choices
        .keys()
        .filter(|l| !per_language.contains_key(*l))
        .cloned()
        .collect();
    Ok(ApplyReport {
        items,
        per_language,
        absent,
    })
}
