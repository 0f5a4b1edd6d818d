// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use serde::Serialize;
use transplant_core::eval::{evaluate_baseline, DatasetInstance, EvalOptions, EvalReport, PromptVariant};
use transplant_core::io::{write_atomic, write_json_atomic};

use crate::args::{EvalArgs, VariantArg};
use crate::common::{
    file_stem, init_threads, load_groups, load_model, stop_ids, templates, CliResult, Outcome, Progress,
};

#[derive(Serialize)]
struct EvalFile<'a> {
    dataset: &'a str,
    per_language: BTreeMap<String, f64>,
    #[serde(flatten)]
    report: &'a EvalReport,
}

fn variants(v: VariantArg) -> Vec<PromptVariant> {
    match v {
        VariantArg::Plain => vec![PromptVariant::Plain],
        VariantArg::Cot => vec![PromptVariant::Cot],
        VariantArg::Pim => vec![PromptVariant::Pim],
        VariantArg::All => vec![PromptVariant::Plain, PromptVariant::Cot, PromptVariant::Pim],
    }
}

pub fn run(a: &EvalArgs) -> CliResult<Outcome> {
    init_threads(&a.common);
    let model = load_model(&a.model)?;
    let reg = templates(&a.gen)?;
    let out = &a.common.out;
    let progress = Progress::open(out)?;
    let mut datasets: BTreeMap<String, Vec<DatasetInstance>> = BTreeMap::new();
    for ((ds, _), items) in load_groups(&a.dataset, &a.common.langs, None, 0)? {
        datasets.entry(ds).or_default().extend(items);
    }
    let opts = EvalOptions {
        max_new: a.gen.max_new,
        stop_ids: stop_ids(&model),
        direction: a.gen.direction,
        parallel: a.common.jobs > 1,
    };
    let mut failures = 0;
    for (ds, instances) in &datasets {
        for variant in variants(a.variant) {
            let report = match evaluate_baseline(&model, &reg, instances, variant, &opts) {
                Ok(r) => r,
                Err(e) => {
                    failures += 1;
                    progress.warn(&format!("eval {ds} {}: failed: {e}", variant.as_str()));
                    continue;
                }
            };
            let dir = out.join("eval").join(file_stem(ds));
            let file = EvalFile {
                dataset: ds,
                per_language: report.per_language(),
                report: &report,
            };
            write_json_atomic(&dir.join(format!("{}.json", variant.as_str())), &file)?;
            write_atomic(&dir.join(format!("{}.csv", variant.as_str())), &report.to_csv()?)?;
            for (lang, acc) in &file.per_language {
                progress.log(&format!("eval {ds} {} {lang}: accuracy {acc:.4}", variant.as_str()));
            }
        }
    }
    Ok(Outcome { failures })
}
