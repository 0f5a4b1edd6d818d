// SPDX-License-Identifier: MIT OR Apache-2.0

//! On-disk form of a sweep: one JSON document per instance.

use serde::{Deserialize, Serialize};

use super::{PairSet, SweepResult, TransplantMode, TransplantPair};
use crate::error::Result;
use crate::io::round6;
use crate::model::{ForwardStats, Generation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub tokens: Vec<u32>,
    pub text: String,
    pub logprobs: Vec<f64>,
}

impl From<&Generation> for GenerationRecord {
    fn from(g: &Generation) -> Self {
        Self {
            tokens: g.tokens.clone(),
            text: g.text.clone(),
            logprobs: g.logprobs.iter().map(|&x| round6(x)).collect(),
        }
    }
}

impl GenerationRecord {
    pub fn into_generation(self, pair: Option<TransplantPair>) -> Generation {
        Generation {
            tokens: self.tokens,
            text: self.text,
            logprobs: self.logprobs,
            pair,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub i: usize,
    pub j: usize,
    pub mode: TransplantMode,
    pub tokens: Vec<u32>,
    pub text: String,
    pub logprobs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub instance_id: String,
    pub n_layers: usize,
    pub source_baseline: GenerationRecord,
    pub baseline: GenerationRecord,
    pub pairs: Vec<PairRecord>,
    pub stats: ForwardStats,
}

impl From<&SweepResult> for SweepRecord {
    fn from(r: &SweepResult) -> Self {
        let pairs = r
            .iter()
            .map(|(p, g)| {
                let rec = GenerationRecord::from(g);
                PairRecord {
                    i: p.source_layer,
                    j: p.target_layer,
                    mode: p.mode,
                    tokens: rec.tokens,
                    text: rec.text,
                    logprobs: rec.logprobs,
                }
            })
            .collect();
        Self {
            instance_id: r.instance_id.clone(),
            n_layers: r.pair_set.n_layers(),
            source_baseline: (&r.source_baseline).into(),
            baseline: (&r.baseline).into(),
            pairs,
            stats: r.stats,
        }
    }
}

impl SweepRecord {
    /// Rebuilds a sweep result. Log-probabilities carry the rounding of the file.
    pub fn into_result(self) -> Result<SweepResult> {
        let pairs: Vec<TransplantPair> = self
            .pairs
            .iter()
            .map(|p| TransplantPair::new(p.i, p.j, p.mode))
            .collect();
        let pair_set = rebuild_pair_set(self.n_layers, pairs.clone())?;
        let generations = self
            .pairs
            .into_iter()
            .zip(pairs)
            .map(|(p, pair)| Generation {
                tokens: p.tokens,
                text: p.text,
                logprobs: p.logprobs,
                pair: Some(pair),
            })
            .collect();
        Ok(SweepResult {
            instance_id: self.instance_id,
            source_baseline: self.source_baseline.into_generation(None),
            baseline: self.baseline.into_generation(None),
            generations,
            pair_set,
            stats: self.stats,
        })
    }
}

/// Recovers the named kind when the pairs are exactly one of the standard sets.
fn rebuild_pair_set(n_layers: usize, pairs: Vec<TransplantPair>) -> Result<PairSet> {
    if let Some(mode) = pairs.first().map(|p| p.mode) {
        for candidate in [
            PairSet::full(n_layers, mode),
            PairSet::source_last(n_layers, mode),
            PairSet::target_first(n_layers, mode),
        ] {
            if candidate.pairs() == pairs.as_slice() {
                return Ok(candidate);
            }
        }
    }
    PairSet::custom(n_layers, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Model, ModelConfig};
    use crate::transplant::{sweep, PairSetKind, SweepInput, TransplantOptions};

    #[test]
    fn json_layout_and_round_trip() {
        let m = Model::synthetic(3, ModelConfig::tiny(2)).unwrap();
        let src = m.encode("hello").unwrap();
        let tgt = m.encode("bonjour").unwrap();
        let input = SweepInput {
            instance_id: "inst-1",
            source_language: "en",
            source: &src,
            target: &tgt,
        };
        let r = sweep(
            &m,
            input,
            &PairSet::source_last(2, TransplantMode::Ffn),
            &TransplantOptions::with_max_new(4),
        )
        .unwrap();
        let rec = SweepRecord::from(&r);
        let json: serde_json::Value = serde_json::to_value(&rec).unwrap();
        assert_eq!(json["instance_id"], "inst-1");
        assert_eq!(json["pairs"][1]["i"], 1);
        assert_eq!(json["pairs"][1]["j"], 1);
        assert_eq!(json["pairs"][1]["mode"], "ffn");
        assert!(json["baseline"]["logprobs"].is_array());

        let back: SweepRecord = serde_json::from_value(json).unwrap();
        let rebuilt = back.into_result().unwrap();
        assert_eq!(rebuilt.pair_set.kind(), PairSetKind::SourceLast);
        assert_eq!(rebuilt.generations.len(), 2);
        assert_eq!(rebuilt.generations[0].tokens, r.generations[0].tokens);
    }
}
