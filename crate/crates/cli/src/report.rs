// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use transplant_core::analytics::{
    consistency, layerwise_upper_bound, outcome_categories, perplexity_stats, script_for_language, upper_bound, Axis,
    ConsistencyRow, CorrectnessGrid, OutcomeRow, PerplexityReport, ScriptDetector, Strategy, PPL_MIN_LEN,
};
use transplant_core::eval::Direction;
use transplant_core::io::{csv_bytes, fmt6, read_json, write_atomic, write_json_atomic};
use transplant_core::transplant::SweepRecord;
use transplant_core::SweepResult;

use crate::args::ReportArgs;
use crate::common::{files_with_suffix, pilot_datasets, subdirs, CliResult, Outcome, Progress};
use crate::pilot::{PilotMeta, META_FILE};

#[derive(Serialize)]
struct LanguageSummary {
    instances: usize,
    source_baseline: Option<f64>,
    target_baseline: Option<f64>,
    /// Upper bound per strategy candidate set; `None` when not swept.
    upper_bound: BTreeMap<&'static str, Option<f64>>,
    layerwise_source: Vec<Option<f64>>,
    layerwise_target: Vec<Option<f64>>,
    /// Row-major `[i][j]` share of instances correct at each pair.
    cells: Vec<Vec<Option<f64>>>,
    outcomes: Option<Vec<OutcomeRow>>,
    consistency: Option<ConsistencyRow>,
    perplexity: Option<PerplexityReport>,
}

#[derive(Serialize)]
struct Summary<'a> {
    meta: &'a PilotMeta,
    languages: BTreeMap<String, LanguageSummary>,
}

fn share(flags: impl Iterator<Item = Option<bool>>) -> Option<f64> {
    let (mut hit, mut n) = (0usize, 0usize);
    for f in flags.flatten() {
        hit += usize::from(f);
        n += 1;
    }
    (n > 0).then(|| hit as f64 / n as f64)
}

fn cell_shares(grids: &[CorrectnessGrid], n: usize) -> Vec<Vec<Option<f64>>> {
    (0..n)
        .map(|i| (0..n).map(|j| share(grids.iter().map(|g| g.get(i, j)))).collect())
        .collect()
}

fn required_tag(direction: Direction, lang: &str) -> &'static str {
    match direction {
        Direction::EnToX => script_for_language(lang),
        Direction::XToEn => "latin",
    }
}

fn summarize(meta: &PilotMeta, lang: &str, grids: &[CorrectnessGrid], sweeps: &[SweepResult]) -> LanguageSummary {
    let n = meta.n_layers;
    let upper_bound = Strategy::ALL
        .iter()
        .map(|s| {
            let ub = upper_bound(grids, &s.candidates(n, meta.mode)).ok();
            (s.as_str(), ub.map(|u| u.accuracy))
        })
        .collect();
    let layerwise = |axis| {
        (0..n)
            .map(|k| layerwise_upper_bound(grids, axis, k).ok().map(|u| u.accuracy))
            .collect()
    };
    LanguageSummary {
        instances: grids.len(),
        source_baseline: share(grids.iter().map(|g| g.src_correct())),
        target_baseline: share(grids.iter().map(|g| g.tgt_correct())),
        upper_bound,
        layerwise_source: layerwise(Axis::SourceFixed),
        layerwise_target: layerwise(Axis::TargetFixed),
        cells: cell_shares(grids, n),
        outcomes: outcome_categories(grids).ok(),
        consistency: (!sweeps.is_empty())
            .then(|| consistency(lang, sweeps, required_tag(meta.direction, lang), &ScriptDetector)),
        perplexity: perplexity_stats(sweeps, PPL_MIN_LEN).ok(),
    }
}

/// Yellow-green-blue ramp, pale at 0 and dark at 1.
fn color(v: f64) -> String {
    const STOPS: [(f64, f64, f64); 3] = [(255.0, 255.0, 204.0), (65.0, 182.0, 196.0), (37.0, 52.0, 148.0)];
    let v = v.clamp(0.0, 1.0) * 2.0;
    let k = (v.floor() as usize).min(1);
    let t = v - k as f64;
    let (a, b) = (STOPS[k], STOPS[k + 1]);
    let mix = |x: f64, y: f64| (x + (y - x) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

const MISSING: &str = "#cccccc";

/// Standalone SVG heatmap of per-pair accuracy.
pub fn heatmap_svg(title: &str, cells: &[Vec<Option<f64>>]) -> String {
    let n = cells.len();
    let cell = (360 / n.max(1)).clamp(6, 40);
    let (left, top) = (70, 50);
    let side = cell * n;
    let legend_x = left + side + 30;
    let width = legend_x + 70;
    let height = top + side + 60;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<text x="{left}" y="20" font-size="14">{}</text>"#, escape(title));
    for (i, row) in cells.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let (fill, label) = match v {
                Some(v) => (color(*v), fmt6(*v)),
                None => (MISSING.to_owned(), "not swept".to_owned()),
            };
            let _ = writeln!(
                s,
                r#"<rect class="cell" x="{}" y="{}" width="{cell}" height="{cell}" fill="{fill}"><title>({i}, {j}) {label}</title></rect>"#,
                left + j * cell,
                top + i * cell
            );
        }
    }
    let step = (n / 8).max(1);
    for k in (0..n).step_by(step) {
        let mid = k * cell + cell / 2;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{k}</text>"#,
            left + mid,
            top + side + 15
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{k}</text>"#,
            left - 5,
            top + mid + 4
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">target layer j</text>"#,
        left + side / 2,
        top + side + 35
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">source layer i</text>"#,
        top + side / 2,
        top + side / 2
    );
    let _ = writeln!(s, r#"<g class="legend">"#);
    let steps = 10;
    let seg = side as f64 / steps as f64;
    for k in 0..steps {
        let v = 1.0 - (k as f64 + 0.5) / steps as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{legend_x}" y="{}" width="16" height="{}" fill="{}"/>"#,
            fmt6(top as f64 + k as f64 * seg),
            fmt6(seg),
            color(v)
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}">1</text>"#, legend_x + 20, top + 10);
    let _ = writeln!(s, r#"<text x="{}" y="{}">0</text>"#, legend_x + 20, top + side);
    let _ = writeln!(s, r#"<text x="{legend_x}" y="{}">accuracy</text>"#, top - 8);
    let _ = writeln!(
        s,
        r#"<rect x="{legend_x}" y="{}" width="16" height="10" fill="{MISSING}"/><text x="{}" y="{}">n/a</text>"#,
        top + side + 10,
        legend_x + 20,
        top + side + 19
    );
    s.push_str("</g>\n</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt6).unwrap_or_default()
}

/// `(language, method) -> (accuracy, n)` from eval and apply outputs.
fn method_rows(out: &Path, ds: &str, rows: &mut BTreeMap<(String, String), (f64, usize)>) -> CliResult<()> {
    for path in files_with_suffix(&out.join("eval").join(ds), ".json") {
        let v: Value = read_json(&path)?;
        let variant = v["variant"].as_str().unwrap_or("unknown").to_owned();
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for item in v["items"].as_array().into_iter().flatten() {
            if let Some(l) = item["language"].as_str() {
                *counts.entry(l.to_owned()).or_default() += 1;
            }
        }
        for (lang, acc) in v["per_language"].as_object().into_iter().flatten() {
            if let Some(acc) = acc.as_f64() {
                let n = counts.get(lang).copied().unwrap_or(0);
                rows.insert((lang.clone(), variant.clone()), (acc, n));
            }
        }
    }
    for path in files_with_suffix(&out.join("apply").join(ds), ".json") {
        let v: Value = read_json(&path)?;
        let label = v["label"].as_str().unwrap_or("unknown");
        for (lang, row) in v["per_language"].as_object().into_iter().flatten() {
            let n = row["instances"].as_u64().unwrap_or(0) as usize;
            if let Some(acc) = row["accuracy"].as_f64() {
                rows.insert((lang.clone(), format!("xtransplant-{label}")), (acc, n));
            }
        }
    }
    Ok(())
}

pub fn run(a: &ReportArgs) -> CliResult<Outcome> {
    let out = &a.common.out;
    let progress = Progress::open(out)?;
    let mut failures = 0;
    let mut results: Vec<Vec<String>> = Vec::new();
    for ds in pilot_datasets(out, &a.dataset)? {
        let dir = out.join("pilot").join(&ds);
        let meta: PilotMeta = read_json(&dir.join(META_FILE))?;
        let report_dir = out.join("report").join(&ds);
        let mut languages = BTreeMap::new();
        let mut methods = BTreeMap::new();
        for lang in subdirs(&dir) {
            if !a.common.langs.is_empty() && !a.common.langs.contains(&lang) {
                continue;
            }
            let ldir = dir.join(&lang);
            let grids = files_with_suffix(&ldir, ".grid.json")
                .iter()
                .map(|p| read_json(p))
                .collect::<transplant_core::Result<Vec<CorrectnessGrid>>>()?;
            if grids.is_empty() {
                continue;
            }
            let mut sweeps = Vec::new();
            for p in files_with_suffix(&ldir, ".sweep.json") {
                match read_json::<SweepRecord>(&p).and_then(SweepRecord::into_result) {
                    Ok(r) => sweeps.push(r),
                    Err(e) => {
                        failures += 1;
                        progress.warn(&format!("report {ds} {lang}: {}: {e}", p.display()));
                    }
                }
            }
            let summary = summarize(&meta, &lang, &grids, &sweeps);
            let svg = heatmap_svg(
                &format!("{} / {lang} (n={})", meta.dataset, grids.len()),
                &summary.cells,
            );
            write_atomic(&report_dir.join(format!("heatmap_{lang}.svg")), svg.as_bytes())?;
            for (s, ub) in &summary.upper_bound {
                if let Some(ub) = ub {
                    methods.insert((lang.clone(), format!("upper-bound-{s}")), (*ub, grids.len()));
                }
            }
            if let Some(b) = summary.target_baseline {
                methods.insert((lang.clone(), "pilot-baseline".to_owned()), (b, grids.len()));
            }
            languages.insert(lang, summary);
        }
        method_rows(out, &ds, &mut methods)?;
        let rows: Vec<Vec<String>> = languages
            .iter()
            .map(|(lang, s)| {
                vec![
                    meta.dataset.clone(),
                    lang.clone(),
                    s.instances.to_string(),
                    opt(s.source_baseline),
                    opt(s.target_baseline),
                    opt(s.upper_bound.get("oa").copied().flatten()),
                    opt(s.upper_bound.get("sl").copied().flatten()),
                    opt(s.upper_bound.get("tf").copied().flatten()),
                    opt(s.consistency.as_ref().and_then(|c| c.transplant)),
                    opt(s.perplexity.as_ref().map(|p| p.median)),
                ]
            })
            .collect();
        let header = [
            "dataset",
            "language",
            "instances",
            "source_baseline",
            "target_baseline",
            "upper_bound_oa",
            "upper_bound_sl",
            "upper_bound_tf",
            "consistency",
            "perplexity_median",
        ];
        write_atomic(&report_dir.join("summary.csv"), &csv_bytes(&header, &rows)?)?;
        write_json_atomic(&report_dir.join("summary.json"), &Summary { meta: &meta, languages })?;
        for ((lang, method), (acc, n)) in methods {
            results.push(vec![meta.dataset.clone(), lang, method, fmt6(acc), n.to_string()]);
        }
        progress.log(&format!("report {ds}: written to {}", report_dir.display()));
    }
    write_atomic(
        &out.join("report").join("results.csv"),
        &csv_bytes(&["dataset", "language", "method", "accuracy", "n"], &results)?,
    )?;
    Ok(Outcome { failures })
}
