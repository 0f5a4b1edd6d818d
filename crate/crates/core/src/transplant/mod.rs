// SPDX-License-Identifier: MIT OR Apache-2.0

//! Cross-lingual feed-forward transplantation.
//!
//! A source prompt is prefilled once and its per-layer feed-forward outputs at
//! the last position are banked. While the target prompt is prefilled, the
//! feed-forward output of target layer `j` at the last position is replaced by
//! banked vector `i`; the remaining layers at that position run on the
//! modified state and greedy decoding continues without further intervention.
//!
//! [`transplant_generate`] and [`sweep_naive`] run one fresh target prefill per
//! pair. [`sweep`] shares one recorded target prefill across all pairs and
//! only re-evaluates layers `j..N` at the last position for each pair.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ForwardStats, Generation, Model, PrefillResult, Substitution, TokenSequence};

mod pairs;
mod record;

pub use pairs::{PairSet, PairSetKind, TransplantMode, TransplantPair};
pub use record::{GenerationRecord, PairRecord, SweepRecord};

/// Per-layer activations of one source-prompt prefill at its last position.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceBank {
    pub language: String,
    pub prompt: TokenSequence,
    pub n_layers: usize,
    pub d_model: usize,
    /// `f_s^i` for every layer `i`.
    pub ffn_vectors: Vec<Vec<f32>>,
    /// `o_s^i` for every layer `i`, used by hidden mode.
    pub residual_vectors: Vec<Vec<f32>>,
}

impl SourceBank {
    /// Builds a bank from a recorded prefill of `prompt`.
    pub fn from_prefill(language: impl Into<String>, prompt: TokenSequence, prefill: &PrefillResult) -> Result<Self> {
        if prefill.traces.is_empty() {
            return Err(Error::InvalidArgument("source prefill was not recorded".into()));
        }
        let d_model = prefill.traces[0].ffn_out.len();
        Ok(Self {
            language: language.into(),
            prompt,
            n_layers: prefill.traces.len(),
            d_model,
            ffn_vectors: prefill.traces.iter().map(|t| t.ffn_out.clone()).collect(),
            residual_vectors: prefill.traces.iter().map(|t| t.residual_out.clone()).collect(),
        })
    }

    fn check_against(&self, model: &Model) -> Result<()> {
        if self.n_layers != model.n_layers() || self.d_model != model.d_model() {
            return Err(Error::BankMismatch {
                bank_layers: self.n_layers,
                bank_dim: self.d_model,
                model_layers: model.n_layers(),
                model_dim: model.d_model(),
            });
        }
        Ok(())
    }

    fn substitution(&self, pair: &TransplantPair) -> Substitution<'_> {
        match pair.mode {
            TransplantMode::Ffn => Substitution::Ffn {
                layer: pair.target_layer,
                vector: &self.ffn_vectors[pair.source_layer],
            },
            TransplantMode::Hidden => Substitution::Hidden {
                layer: pair.target_layer,
                vector: &self.residual_vectors[pair.source_layer],
            },
        }
    }
}

/// One recorded prefill of the source prompt.
pub fn build_activation_bank(model: &Model, language: &str, prompt: &TokenSequence) -> Result<SourceBank> {
    let pre = model.prefill(prompt, true)?;
    SourceBank::from_prefill(language, prompt.clone(), &pre)
}

/// What happens to the last prompt position's K/V after a transplant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KvPolicy {
    /// Overwrite with the K/V computed from the modified state, so later
    /// tokens attend to it.
    #[default]
    Patch,
    /// Keep the unmodified K/V; only the first generated token sees the
    /// transplant.
    KeepOriginal,
}

#[derive(Debug, Clone)]
pub struct TransplantOptions {
    pub max_new: usize,
    pub stop_ids: HashSet<u32>,
    pub kv_policy: KvPolicy,
    /// Evaluate pairs of a sweep on the rayon pool.
    pub parallel: bool,
}

impl Default for TransplantOptions {
    fn default() -> Self {
        Self {
            max_new: crate::model::DEFAULT_MAX_NEW,
            stop_ids: HashSet::new(),
            kv_policy: KvPolicy::Patch,
            parallel: false,
        }
    }
}

impl TransplantOptions {
    pub fn with_max_new(max_new: usize) -> Self {
        Self {
            max_new,
            ..Self::default()
        }
    }
}

fn check_pair(model: &Model, pair: &TransplantPair) -> Result<()> {
    let n = model.n_layers();
    if pair.source_layer >= n || pair.target_layer >= n {
        return Err(Error::PairOutOfRange {
            source_layer: pair.source_layer,
            target_layer: pair.target_layer,
            n_layers: n,
        });
    }
    Ok(())
}

/// Generation on `target` with `pair` transplanted from `bank`, computed with
/// a fresh, unshared target prefill.
pub fn transplant_generate(
    model: &Model,
    target: &TokenSequence,
    bank: &SourceBank,
    pair: TransplantPair,
    opts: &TransplantOptions,
) -> Result<Generation> {
    transplant_generate_with(model, target, bank, pair, opts, &mut ForwardStats::default())
}

pub fn transplant_generate_with(
    model: &Model,
    target: &TokenSequence,
    bank: &SourceBank,
    pair: TransplantPair,
    opts: &TransplantOptions,
    stats: &mut ForwardStats,
) -> Result<Generation> {
    bank.check_against(model)?;
    check_pair(model, &pair)?;
    if opts.max_new == 0 {
        model.prefill_with(&target.ids, false, None, &mut ForwardStats::default())?;
        return Ok(tag(model.empty_generation(), pair));
    }
    let sub = bank.substitution(&pair);
    let modified = model.prefill_with(&target.ids, false, Some(sub), stats)?;
    let (logits, mut cache) = match opts.kv_policy {
        KvPolicy::Patch => (modified.logits, modified.cache),
        KvPolicy::KeepOriginal => {
            let original = model.prefill_with(&target.ids, false, None, stats)?;
            (modified.logits, original.cache)
        }
    };
    let g = model.continue_generation(logits, &mut cache, opts.max_new, &opts.stop_ids, stats)?;
    Ok(tag(g, pair))
}

fn tag(mut g: Generation, pair: TransplantPair) -> Generation {
    g.pair = Some(pair);
    g
}

/// Inputs of one sweep: the source prompt donates, the target prompt is answered.
#[derive(Debug, Clone, Copy)]
pub struct SweepInput<'a> {
    pub instance_id: &'a str,
    pub source_language: &'a str,
    pub source: &'a TokenSequence,
    pub target: &'a TokenSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub instance_id: String,
    /// Unmodified generation on the source prompt.
    pub source_baseline: Generation,
    /// Unmodified generation on the target prompt.
    pub baseline: Generation,
    /// One generation per requested pair, in pair-set order.
    pub generations: Vec<Generation>,
    pub pair_set: PairSet,
    pub stats: ForwardStats,
}

impl SweepResult {
    pub fn get(&self, pair: &TransplantPair) -> Option<&Generation> {
        self.pair_set
            .pairs()
            .iter()
            .position(|p| p == pair)
            .map(|k| &self.generations[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TransplantPair, &Generation)> {
        self.pair_set.pairs().iter().zip(&self.generations)
    }
}

/// Sweep with branch caching: one source prefill, one recorded target
/// prefill, then per pair `(i, j)` only layers `j..N` at the last position.
pub fn sweep(model: &Model, input: SweepInput<'_>, pairs: &PairSet, opts: &TransplantOptions) -> Result<SweepResult> {
    for p in pairs.pairs() {
        check_pair(model, p)?;
    }
    let mut stats = ForwardStats::default();
    let src = model.prefill_with(&input.source.ids, true, None, &mut stats)?;
    let bank = SourceBank::from_prefill(input.source_language, input.source.clone(), &src)?;
    bank.check_against(model)?;
    let source_baseline = model.continue_generation(
        src.logits.clone(),
        &mut src.cache.clone(),
        opts.max_new,
        &opts.stop_ids,
        &mut stats,
    )?;
    let tgt = model.prefill_with(&input.target.ids, true, None, &mut stats)?;
    let baseline = model.continue_generation(
        tgt.logits.clone(),
        &mut tgt.cache.clone(),
        opts.max_new,
        &opts.stop_ids,
        &mut stats,
    )?;

    let run = |pair: &TransplantPair| -> Result<(Generation, ForwardStats)> {
        let mut st = ForwardStats::default();
        if opts.max_new == 0 {
            return Ok((tag(model.empty_generation(), *pair), st));
        }
        let j = pair.target_layer;
        let mut cache = tgt.cache.clone();
        let h = tgt.boundary_states[j].clone();
        let logits = model.rerun_last_position(&mut cache, j, h, Some(bank.substitution(pair)), &mut st)?;
        if opts.kv_policy == KvPolicy::KeepOriginal {
            cache.restore_from(&tgt.cache, tgt.cache.len() - 1, j);
        }
        let g = model.continue_generation(logits, &mut cache, opts.max_new, &opts.stop_ids, &mut st)?;
        Ok((tag(g, *pair), st))
    };
    let outcomes: Vec<Result<(Generation, ForwardStats)>> = if opts.parallel {
        pairs.pairs().par_iter().map(run).collect()
    } else {
        pairs.pairs().iter().map(run).collect()
    };
    let mut generations = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let (g, st) = o?;
        stats.merge(&st);
        generations.push(g);
    }
    Ok(SweepResult {
        instance_id: input.instance_id.to_string(),
        source_baseline,
        baseline,
        generations,
        pair_set: pairs.clone(),
        stats,
    })
}

/// Reference sweep: every generation recomputed from scratch.
pub fn sweep_naive(
    model: &Model,
    input: SweepInput<'_>,
    pairs: &PairSet,
    opts: &TransplantOptions,
) -> Result<SweepResult> {
    for p in pairs.pairs() {
        check_pair(model, p)?;
    }
    let mut stats = ForwardStats::default();
    let src = model.prefill_with(&input.source.ids, true, None, &mut stats)?;
    let bank = SourceBank::from_prefill(input.source_language, input.source.clone(), &src)?;
    let fresh = |ids: &TokenSequence, stats: &mut ForwardStats| -> Result<Generation> {
        if opts.max_new == 0 {
            return Ok(model.empty_generation());
        }
        let mut pre = model.prefill_with(&ids.ids, false, None, stats)?;
        let logits = std::mem::take(&mut pre.logits);
        model.continue_generation(logits, &mut pre.cache, opts.max_new, &opts.stop_ids, stats)
    };
    let source_baseline = fresh(input.source, &mut stats)?;
    let baseline = fresh(input.target, &mut stats)?;
    let mut generations = Vec::with_capacity(pairs.len());
    for pair in pairs.pairs() {
        generations.push(transplant_generate_with(
            model,
            input.target,
            &bank,
            *pair,
            opts,
            &mut stats,
        )?);
    }
    Ok(SweepResult {
        instance_id: input.instance_id.to_string(),
        source_baseline,
        baseline,
        generations,
        pair_set: pairs.clone(),
        stats,
    })
}
