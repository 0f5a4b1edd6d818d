// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::path::Path;

use transplant_core::analytics::{select_pairs, CorrectnessGrid, Strategy};
use transplant_core::io::{read_json, write_json_atomic};

use crate::args::{SelectArgs, StrategyArg};
use crate::common::{files_with_suffix, pilot_datasets, subdirs, CliResult, Outcome, Progress};
use crate::pilot::{PilotMeta, META_FILE};

pub fn strategies(s: StrategyArg) -> Vec<Strategy> {
    match s {
        StrategyArg::Oa => vec![Strategy::Oa],
        StrategyArg::Sl => vec![Strategy::Sl],
        StrategyArg::Tf => vec![Strategy::Tf],
        StrategyArg::All => Strategy::ALL.to_vec(),
    }
}

/// Grids per language for one pilot dataset directory.
pub fn load_grids(dir: &Path, langs: &[String]) -> CliResult<BTreeMap<String, Vec<CorrectnessGrid>>> {
    let mut out = BTreeMap::new();
    for lang in subdirs(dir) {
        if !langs.is_empty() && !langs.contains(&lang) {
            continue;
        }
        let grids = files_with_suffix(&dir.join(&lang), ".grid.json")
            .iter()
            .map(|p| read_json(p))
            .collect::<transplant_core::Result<Vec<CorrectnessGrid>>>()?;
        if !grids.is_empty() {
            out.insert(lang, grids);
        }
    }
    Ok(out)
}

pub fn run(a: &SelectArgs) -> CliResult<Outcome> {
    let out = &a.common.out;
    let progress = Progress::open(out)?;
    let mut failures = 0;
    for ds in pilot_datasets(out, &a.dataset)? {
        let dir = out.join("pilot").join(&ds);
        let meta: PilotMeta = read_json(&dir.join(META_FILE))?;
        let pilots = load_grids(&dir, &a.common.langs)?;
        for s in strategies(a.strategy) {
            match select_pairs(&meta.dataset, &pilots, s, meta.mode) {
                Ok(sel) => {
                    let base = out.join("selection").join(&ds);
                    write_json_atomic(&base.join(format!("{}.json", s.as_str())), &sel.to_file_map())?;
                    write_json_atomic(&base.join(format!("{}.candidates.json", s.as_str())), &sel)?;
                    for (lang, c) in &sel.choices {
                        progress.log(&format!(
                            "select {ds} {} {lang}: ({}, {}) pilot accuracy {:.4}",
                            s.as_str(),
                            c.pair.source_layer,
                            c.pair.target_layer,
                            c.pilot_accuracy
                        ));
                    }
                }
                Err(e) => {
                    failures += 1;
                    progress.warn(&format!("select {ds} {}: failed: {e}", s.as_str()));
                }
            }
        }
    }
    Ok(Outcome { failures })
}
