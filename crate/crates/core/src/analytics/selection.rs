// SPDX-License-Identifier: MIT OR Apache-2.0

//! Offline layer-pair selection from pilot grids.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::grid::CorrectnessGrid;
use crate::error::{Error, Result};
use crate::transplant::{PairSet, TransplantMode, TransplantPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Best of all `N^2` pairs.
    Oa,
    /// Best pair with the source fixed to the last layer.
    Sl,
    /// Best pair with the target fixed to the first layer.
    Tf,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Oa, Strategy::Sl, Strategy::Tf];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Oa => "oa",
            Strategy::Sl => "sl",
            Strategy::Tf => "tf",
        }
    }

    /// Candidate pairs, in tie-break order (lowest `i`, then `j`).
    pub fn candidates(self, n_layers: usize, mode: TransplantMode) -> PairSet {
        match self {
            Strategy::Oa => PairSet::full(n_layers, mode),
            Strategy::Sl => PairSet::source_last(n_layers, mode),
            Strategy::Tf => PairSet::target_first(n_layers, mode),
        }
    }

    pub fn admits(self, n_layers: usize, p: &TransplantPair) -> bool {
        let in_range = p.source_layer < n_layers && p.target_layer < n_layers;
        in_range
            && match self {
                Strategy::Oa => true,
                Strategy::Sl => p.source_layer + 1 == n_layers,
                Strategy::Tf => p.target_layer == 0,
            }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "oa" => Ok(Strategy::Oa),
            "sl" => Ok(Strategy::Sl),
            "tf" => Ok(Strategy::Tf),
            other => Err(format!("unknown strategy `{other}` (oa|sl|tf)")),
        }
    }
}

/// Pilot accuracy of one candidate pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub i: usize,
    pub j: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageChoice {
    pub pair: TransplantPair,
    pub pilot_size: usize,
    pub pilot_accuracy: f64,
    pub candidates: Vec<Candidate>,
}

/// One pair per language for a dataset under one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSelection {
    pub strategy: Strategy,
    pub dataset: String,
    pub n_layers: usize,
    pub mode: TransplantMode,
    pub choices: BTreeMap<String, LanguageChoice>,
}

impl PairSelection {
    pub fn pair(&self, lang: &str) -> Result<TransplantPair> {
        self.choices
            .get(lang)
            .map(|c| c.pair)
            .ok_or_else(|| Error::MissingSelection(lang.to_owned()))
    }

    /// `{"<lang>": [i, j]}`.
    pub fn to_file_map(&self) -> BTreeMap<String, [usize; 2]> {
        self.choices
            .iter()
            .map(|(l, c)| (l.clone(), [c.pair.source_layer, c.pair.target_layer]))
            .collect()
    }

    /// Rebuilds a selection from its file map. Provenance is not stored there.
    pub fn from_file_map(
        map: &BTreeMap<String, [usize; 2]>,
        strategy: Strategy,
        dataset: &str,
        n_layers: usize,
        mode: TransplantMode,
    ) -> Result<Self> {
        let mut choices = BTreeMap::new();
        for (lang, &[i, j]) in map {
            let pair = TransplantPair::new(i, j, mode);
            if !strategy.admits(n_layers, &pair) {
                return Err(Error::Analytics(format!(
                    "pair ({i}, {j}) for `{lang}` is not a {} candidate for {n_layers} layers",
                    strategy.as_str()
                )));
            }
            choices.insert(
                lang.clone(),
                LanguageChoice {
                    pair,
                    pilot_size: 0,
                    pilot_accuracy: f64::NAN,
                    candidates: Vec::new(),
                },
            );
        }
        Ok(Self {
            strategy,
            dataset: dataset.to_owned(),
            n_layers,
            mode,
            choices,
        })
    }

    /// The same pair `(k, k)` for every language.
    pub fn identity(langs: &[&str], dataset: &str, n_layers: usize, k: usize) -> Result<Self> {
        let map = langs.iter().map(|l| (l.to_string(), [k, k])).collect();
        Self::from_file_map(&map, Strategy::Oa, dataset, n_layers, TransplantMode::Ffn)
    }
}

/// Highest pilot accuracy within the strategy's candidates, per language.
/// Ties go to the lowest `i`, then the lowest `j`.
pub fn select_pairs(
    dataset: &str,
    pilots: &BTreeMap<String, Vec<CorrectnessGrid>>,
    strategy: Strategy,
    mode: TransplantMode,
) -> Result<PairSelection> {
    let n_layers = pilots
        .values()
        .flat_map(|g| g.first())
        .map(|g| g.n_layers())
        .next()
        .ok_or_else(|| Error::Analytics(format!("no pilot grids for `{dataset}`")))?;
    let cands = strategy.candidates(n_layers, mode);
    let mut choices = BTreeMap::new();
    for (lang, grids) in pilots {
        if grids.is_empty() {
            return Err(Error::Analytics(format!("no pilot grids for `{dataset}`/{lang}")));
        }
        let mut scored = Vec::with_capacity(cands.len());
        for p in cands.pairs() {
            let mut correct = 0;
            for g in grids {
                if g.n_layers() != n_layers {
                    return Err(Error::Analytics(format!(
                        "grid `{}` has {} layers, expected {n_layers}",
                        g.id(),
                        g.n_layers()
                    )));
                }
                let cell = g.get(p.source_layer, p.target_layer).ok_or_else(|| {
                    Error::Analytics(format!(
                        "grid `{}` lacks pair ({}, {}) needed by {}",
                        g.id(),
                        p.source_layer,
                        p.target_layer,
                        strategy.as_str()
                    ))
                })?;
                correct += usize::from(cell);
            }
            scored.push((*p, correct));
        }
        let mut best = 0;
        for (k, &(_, c)) in scored.iter().enumerate() {
            if c > scored[best].1 {
                best = k;
            }
        }
        let total = grids.len() as f64;
        let candidates = scored
            .iter()
            .map(|&(p, c)| Candidate {
                i: p.source_layer,
                j: p.target_layer,
                correct: c,
                accuracy: c as f64 / total,
            })
            .collect();
        choices.insert(
            lang.clone(),
            LanguageChoice {
                pair: scored[best].0,
                pilot_size: grids.len(),
                pilot_accuracy: scored[best].1 as f64 / total,
                candidates,
            },
        );
    }
    Ok(PairSelection {
        strategy,
        dataset: dataset.to_owned(),
        n_layers,
        mode,
        choices,
    })
}
