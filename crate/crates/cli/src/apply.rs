// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use transplant_core::analytics::{apply_selection, ApplyReport, BankSource, PairSelection, Strategy};
use transplant_core::eval::{DatasetInstance, EvalOptions, JUDGEMENT_CSV_HEADER};
use transplant_core::io::{csv_bytes, read_json, write_atomic, write_json_atomic};
use transplant_core::TransplantMode;

use crate::args::{ApplyArgs, BankArg};
use crate::common::{
    config_err, file_stem, init_threads, load_groups, load_model, stop_ids, templates, CliResult, Outcome, Progress,
};
use crate::select::strategies;

#[derive(Serialize)]
struct ApplyFile<'a> {
    dataset: &'a str,
    label: &'a str,
    strategy: Strategy,
    bank: BankSource,
    selection: BTreeMap<String, [usize; 2]>,
    #[serde(flatten)]
    report: &'a ApplyReport,
}

/// Instances per dataset, languages in sorted order.
fn by_dataset(groups: crate::common::Groups) -> BTreeMap<String, Vec<DatasetInstance>> {
    let mut out: BTreeMap<String, Vec<DatasetInstance>> = BTreeMap::new();
    for ((ds, _), items) in groups {
        out.entry(ds).or_default().extend(items);
    }
    out
}

enum Source<'a> {
    Identity(usize),
    File(&'a Path),
    Default,
}

fn parse_source(s: Option<&str>) -> CliResult<Source<'_>> {
    match s {
        None => Ok(Source::Default),
        Some(spec) => match spec.strip_prefix("identity:") {
            Some(k) => k
                .parse()
                .map(Source::Identity)
                .map_err(|_| config_err(format!("bad identity layer in `{spec}`"))),
            None => Ok(Source::File(Path::new(spec))),
        },
    }
}

pub fn run(a: &ApplyArgs) -> CliResult<Outcome> {
    init_threads(&a.common);
    let model = load_model(&a.model)?;
    let reg = templates(&a.gen)?;
    let out = &a.common.out;
    let progress = Progress::open(out)?;
    let datasets = by_dataset(load_groups(&a.dataset, &a.common.langs, None, 0)?);
    let source = parse_source(a.selection.as_deref())?;
    let bank = match a.bank {
        BankArg::Source => BankSource::Source,
        BankArg::Target => BankSource::Target,
    };
    let opts = EvalOptions {
        max_new: a.gen.max_new,
        stop_ids: stop_ids(&model),
        direction: a.gen.direction,
        parallel: a.common.jobs > 1,
    };
    let n = model.n_layers();
    let mut failures = 0;
    for (ds, instances) in &datasets {
        let runs: Vec<(String, Strategy)> = match source {
            Source::Identity(k) => vec![(format!("identity-{k}"), Strategy::Oa)],
            Source::File(p) => vec![(
                p.file_stem().and_then(|s| s.to_str()).unwrap_or("custom").to_owned(),
                Strategy::Oa,
            )],
            Source::Default => strategies(a.strategy)
                .into_iter()
                .map(|s| (s.as_str().to_owned(), s))
                .collect(),
        };
        for (label, strategy) in runs {
            let sel = match source {
                Source::Identity(k) => {
                    let mut langs: Vec<&str> = instances.iter().map(|i| i.language_tag.as_str()).collect();
                    langs.dedup();
                    PairSelection::identity(&langs, ds, n, k)?
                }
                Source::File(p) => {
                    let map: BTreeMap<String, [usize; 2]> = read_json(p)?;
                    PairSelection::from_file_map(&map, strategy, ds, n, TransplantMode::Ffn)?
                }
                Source::Default => {
                    let p = out.join("selection").join(file_stem(ds)).join(format!("{label}.json"));
                    if !p.exists() {
                        return Err(config_err(format!("missing selection file {}", p.display())));
                    }
                    let map: BTreeMap<String, [usize; 2]> = read_json(&p)?;
                    PairSelection::from_file_map(&map, strategy, ds, n, TransplantMode::Ffn)?
                }
            };
            for inst in instances {
                sel.pair(&inst.language_tag)?;
            }
            let report = match apply_selection(&model, &reg, instances, &sel, bank, &opts) {
                Ok(r) => r,
                Err(e) => {
                    failures += 1;
                    progress.warn(&format!("apply {ds} {label}: failed: {e}"));
                    continue;
                }
            };
            let dir = out.join("apply").join(file_stem(ds));
            let file = ApplyFile {
                dataset: ds,
                label: &label,
                strategy,
                bank,
                selection: sel.to_file_map(),
                report: &report,
            };
            write_json_atomic(&dir.join(format!("{label}.json")), &file)?;
            let variant = format!("xtransplant-{label}");
            let rows: Vec<Vec<String>> = report
                .items
                .iter()
                .map(|e| {
                    vec![
                        e.instance_id.clone(),
                        variant.clone(),
                        e.judgement.correct.to_string(),
                        e.judgement.matched_span.clone().unwrap_or_default(),
                    ]
                })
                .collect();
            write_atomic(
                &dir.join(format!("{label}.csv")),
                &csv_bytes(&JUDGEMENT_CSV_HEADER, &rows)?,
            )?;
            for (lang, row) in &report.per_language {
                progress.log(&format!(
                    "apply {ds} {label} {lang}: accuracy {:.4} (baseline {:.4}, n={})",
                    row.accuracy, row.baseline_accuracy, row.instances
                ));
            }
        }
    }
    Ok(Outcome { failures })
}
