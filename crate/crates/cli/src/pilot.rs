// SPDX-License-Identifier: MIT OR Apache-2.0

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use transplant_core::analytics::build_grid;
use transplant_core::eval::{
    render_prompt, render_source, DatasetInstance, Direction, Judge, PromptVariant, TemplateRegistry,
};
use transplant_core::io::{read_json, write_json_atomic};
use transplant_core::transplant::{sweep, PairSetKind, SweepInput, SweepRecord, TransplantOptions};
use transplant_core::{Model, PairSet, TransplantMode};

use crate::args::PilotArgs;
use crate::common::{
    config_err, file_stem, init_threads, load_groups, load_model, pilot_dir, stop_ids, templates, CliResult, Outcome,
    Progress,
};

/// Settings a pilot directory was produced with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PilotMeta {
    pub dataset: String,
    pub model: String,
    pub n_layers: usize,
    pub pairs: PairSetKind,
    pub mode: TransplantMode,
    pub direction: Direction,
    pub max_new: usize,
}

pub const META_FILE: &str = "meta.json";

pub fn run(a: &PilotArgs) -> CliResult<Outcome> {
    init_threads(&a.common);
    let model = load_model(&a.model)?;
    let reg = templates(&a.gen)?;
    let groups = load_groups(&a.dataset, &a.common.langs, a.sample, a.seed)?;
    let progress = Progress::open(&a.common.out)?;
    let mode: TransplantMode = a.mode.into();
    let pairs = PairSet::of_kind(a.pairs.into(), model.n_layers(), mode)?;
    let opts = TransplantOptions {
        max_new: a.gen.max_new,
        stop_ids: stop_ids(&model),
        ..TransplantOptions::default()
    };

    let mut datasets: Vec<&str> = groups.keys().map(|(d, _)| d.as_str()).collect();
    datasets.dedup();
    for ds in datasets {
        let meta = PilotMeta {
            dataset: ds.to_owned(),
            model: a.model.model.clone(),
            n_layers: model.n_layers(),
            pairs: pairs.kind(),
            mode,
            direction: a.gen.direction,
            max_new: a.gen.max_new,
        };
        let path = a.common.out.join("pilot").join(file_stem(ds)).join(META_FILE);
        if path.exists() && !a.force {
            let old: PilotMeta = read_json(&path)?;
            if old != meta {
                return Err(config_err(format!(
                    "{} was produced with different settings; rerun with --force",
                    path.display()
                )));
            }
        }
        write_json_atomic(&path, &meta)?;
    }

    let work: Vec<&DatasetInstance> = groups.values().flatten().collect();
    let failures = AtomicUsize::new(0);
    let ctx = Ctx {
        model: &model,
        reg: &reg,
        pairs: &pairs,
        opts: &opts,
        direction: a.gen.direction,
        out: &a.common.out,
        force: a.force,
    };
    let step = |inst: &&DatasetInstance| match ctx.one(inst) {
        Ok(true) => progress.log(&format!(
            "pilot {} {} {}: done",
            inst.dataset, inst.language_tag, inst.id
        )),
        Ok(false) => progress.log(&format!(
            "pilot {} {} {}: skipped (exists)",
            inst.dataset, inst.language_tag, inst.id
        )),
        Err(e) => {
            failures.fetch_add(1, Ordering::Relaxed);
            progress.warn(&format!(
                "pilot {} {} {}: failed: {e}",
                inst.dataset, inst.language_tag, inst.id
            ));
        }
    };
    if a.common.jobs > 1 {
        work.par_iter().for_each(step);
    } else {
        work.iter().for_each(step);
    }
    let failures = failures.into_inner();
    eprintln!("pilot: {} instances, {failures} failed", work.len());
    Ok(Outcome { failures })
}

struct Ctx<'a> {
    model: &'a Model,
    reg: &'a TemplateRegistry,
    pairs: &'a PairSet,
    opts: &'a TransplantOptions,
    direction: Direction,
    out: &'a std::path::Path,
    force: bool,
}

impl Ctx<'_> {
    /// Sweeps and judges one instance. `Ok(false)` when outputs already exist.
    fn one(&self, inst: &DatasetInstance) -> transplant_core::Result<bool> {
        let dir = pilot_dir(self.out, &inst.dataset, &inst.language_tag);
        let stem = file_stem(&inst.id);
        let sweep_path = dir.join(format!("{stem}.sweep.json"));
        let grid_path = dir.join(format!("{stem}.grid.json"));
        if !self.force && sweep_path.exists() && grid_path.exists() {
            return Ok(false);
        }
        let (src, _) = inst.source_target(self.direction);
        let source = self.model.encode(&render_source(self.reg, inst, self.direction)?)?;
        let target = self
            .model
            .encode(&render_prompt(self.reg, inst, PromptVariant::Plain, self.direction)?)?;
        let input = SweepInput {
            instance_id: &inst.id,
            source_language: &src.lang,
            source: &source,
            target: &target,
        };
        let result = sweep(self.model, input, self.pairs, self.opts)?;
        let grid = build_grid(&result, &Judge::for_instance(inst, false))?;
        // the grid is written last and marks the instance complete
        write_json_atomic(&sweep_path, &SweepRecord::from(&result))?;
        write_json_atomic(&grid_path, &grid)?;
        Ok(true)
    }
}
