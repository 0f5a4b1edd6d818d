// SPDX-License-Identifier: MIT OR Apache-2.0

//! Feed-forward vs whole-hidden-state transplant on one prompt pair, and a
//! logit-lens dump.

use serde::Serialize;
use transplant_core::io::write_json_atomic;
use transplant_core::transplant::{build_activation_bank, transplant_generate, TransplantOptions};
use transplant_core::{Generation, Model, TransplantMode, TransplantPair};

use crate::args::{DemoArgs, LensArgs};
use crate::common::{config_err, load_model, stop_ids, CliResult, Outcome};

/// Crude well-formedness signals for a generated text.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TextShape {
    pub tokens: usize,
    /// Distinct token ids over token count; low values mean repetition loops.
    pub distinct_ratio: f64,
    /// Share of chars that are not control or replacement characters.
    pub printable_ratio: f64,
}

impl TextShape {
    pub fn of(g: &Generation) -> Self {
        let mut ids = g.tokens.clone();
        ids.sort_unstable();
        ids.dedup();
        let chars = g.text.chars().count();
        let printable = g
            .text
            .chars()
            .filter(|c| *c != char::REPLACEMENT_CHARACTER && (!c.is_control() || c.is_whitespace()))
            .count();
        Self {
            tokens: g.tokens.len(),
            distinct_ratio: if g.tokens.is_empty() {
                0.0
            } else {
                ids.len() as f64 / g.tokens.len() as f64
            },
            printable_ratio: if chars == 0 {
                0.0
            } else {
                printable as f64 / chars as f64
            },
        }
    }
}

#[derive(Debug, Serialize)]
pub struct DemoRun {
    pub mode: TransplantMode,
    pub text: String,
    pub token_ids: Vec<u32>,
    pub shape: TextShape,
}

#[derive(Debug, Serialize)]
pub struct DemoReport {
    pub model: String,
    pub source_layer: usize,
    pub target_layer: usize,
    pub baseline: DemoRun,
    pub ffn: DemoRun,
    pub hidden: DemoRun,
}

fn parse_pair(s: Option<&str>, n: usize) -> CliResult<(usize, usize)> {
    let Some(s) = s else {
        return Ok((n - 1, 0));
    };
    let (i, j) = s
        .split_once(',')
        .ok_or_else(|| config_err(format!("--pair expects `i,j`, got `{s}`")))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| config_err(format!("bad layer index `{v}`")))
    };
    let (i, j) = (parse(i)?, parse(j)?);
    if i >= n || j >= n {
        return Err(config_err(format!("pair ({i}, {j}) is outside a {n}-layer model")));
    }
    Ok((i, j))
}

pub fn hidden_demo(
    model: &Model,
    model_name: &str,
    source: &str,
    prompt: &str,
    pair: (usize, usize),
    max_new: usize,
) -> transplant_core::Result<DemoReport> {
    let opts = TransplantOptions {
        max_new,
        stop_ids: stop_ids(model),
        ..TransplantOptions::default()
    };
    let source = model.encode(source)?;
    let target = model.encode(prompt)?;
    let bank = build_activation_bank(model, "source", &source)?;
    let run = |mode, g: Generation| DemoRun {
        mode,
        shape: TextShape::of(&g),
        text: g.text,
        token_ids: g.tokens,
    };
    let baseline = model.generate(&target, max_new, &opts.stop_ids)?;
    let (i, j) = pair;
    let ffn = transplant_generate(
        model,
        &target,
        &bank,
        TransplantPair::new(i, j, TransplantMode::Ffn),
        &opts,
    )?;
    let hidden = transplant_generate(
        model,
        &target,
        &bank,
        TransplantPair::new(i, j, TransplantMode::Hidden),
        &opts,
    )?;
    Ok(DemoReport {
        model: model_name.to_owned(),
        source_layer: i,
        target_layer: j,
        baseline: run(TransplantMode::Ffn, baseline),
        ffn: run(TransplantMode::Ffn, ffn),
        hidden: run(TransplantMode::Hidden, hidden),
    })
}

pub fn run_demo(a: &DemoArgs) -> CliResult<Outcome> {
    let model = load_model(&a.model)?;
    let pair = parse_pair(a.pair.as_deref(), model.n_layers())?;
    let report = hidden_demo(&model, &a.model.model, &a.source_prompt, &a.prompt, pair, a.max_new)?;
    println!("pair ({}, {})", report.source_layer, report.target_layer);
    for (name, r) in [
        ("baseline", &report.baseline),
        ("ffn", &report.ffn),
        ("hidden", &report.hidden),
    ] {
        println!(
            "{name:>8}: distinct {:.3} printable {:.3} | {:?}",
            r.shape.distinct_ratio, r.shape.printable_ratio, r.text
        );
    }
    if let Some(path) = &a.out {
        write_json_atomic(path, &report)?;
    }
    Ok(Outcome::default())
}

pub fn run_lens(a: &LensArgs) -> CliResult<Outcome> {
    let model = load_model(&a.model)?;
    let tokens = model.encode(&a.prompt)?;
    let prefill = model.prefill(&tokens, true)?;
    for (layer, top) in model.logit_lens(&prefill, a.top_k)?.iter().enumerate() {
        let cols: Vec<String> = top
            .iter()
            .map(|(id, logit)| {
                let piece = model.decode(&[*id]).unwrap_or_else(|_| format!("<{id}>"));
                format!("{piece:?}:{logit:.3}")
            })
            .collect();
        println!("layer {layer:>3}: {}", cols.join(" "));
    }
    Ok(Outcome::default())
}
