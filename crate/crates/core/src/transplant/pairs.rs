// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransplantMode {
    /// Replace the target layer's feed-forward output.
    #[default]
    Ffn,
    /// Replace the target layer's whole residual output.
    Hidden,
}

impl std::fmt::Display for TransplantMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TransplantMode::Ffn => "ffn",
            TransplantMode::Hidden => "hidden",
        })
    }
}

/// Source layer `i` donates to target layer `j` (both 0-indexed).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TransplantPair {
    #[serde(rename = "i")]
    pub source_layer: usize,
    #[serde(rename = "j")]
    pub target_layer: usize,
    #[serde(default)]
    pub mode: TransplantMode,
}

impl TransplantPair {
    pub fn new(source_layer: usize, target_layer: usize, mode: TransplantMode) -> Self {
        Self {
            source_layer,
            target_layer,
            mode,
        }
    }

    pub fn ffn(source_layer: usize, target_layer: usize) -> Self {
        Self::new(source_layer, target_layer, TransplantMode::Ffn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSetKind {
    /// All `N^2` pairs.
    Full,
    /// Source fixed to the last layer: `(N-1, j)`.
    SourceLast,
    /// Target fixed to the first layer: `(i, 0)`.
    TargetFirst,
    Custom,
}

/// Ordered, duplicate-free list of pairs for one model depth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSet {
    kind: PairSetKind,
    n_layers: usize,
    pairs: Vec<TransplantPair>,
}

impl PairSet {
    /// Row-major `(i, j)` enumeration.
    pub fn full(n_layers: usize, mode: TransplantMode) -> Self {
        let pairs = (0..n_layers)
            .flat_map(|i| (0..n_layers).map(move |j| TransplantPair::new(i, j, mode)))
            .collect();
        Self {
            kind: PairSetKind::Full,
            n_layers,
            pairs,
        }
    }

    pub fn source_last(n_layers: usize, mode: TransplantMode) -> Self {
        let last = n_layers.saturating_sub(1);
        Self {
            kind: PairSetKind::SourceLast,
            n_layers,
            pairs: (0..n_layers).map(|j| TransplantPair::new(last, j, mode)).collect(),
        }
    }

    pub fn target_first(n_layers: usize, mode: TransplantMode) -> Self {
        Self {
            kind: PairSetKind::TargetFirst,
            n_layers,
            pairs: (0..n_layers).map(|i| TransplantPair::new(i, 0, mode)).collect(),
        }
    }

    pub fn of_kind(kind: PairSetKind, n_layers: usize, mode: TransplantMode) -> Result<Self> {
        match kind {
            PairSetKind::Full => Ok(Self::full(n_layers, mode)),
            PairSetKind::SourceLast => Ok(Self::source_last(n_layers, mode)),
            PairSetKind::TargetFirst => Ok(Self::target_first(n_layers, mode)),
            PairSetKind::Custom => Err(Error::InvalidArgument(
                "custom pair sets are built with PairSet::custom".into(),
            )),
        }
    }

    /// Validated custom set: every index in range, no duplicates.
    pub fn custom(n_layers: usize, pairs: Vec<TransplantPair>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &pairs {
            if p.source_layer >= n_layers || p.target_layer >= n_layers {
                return Err(Error::PairOutOfRange {
                    source_layer: p.source_layer,
                    target_layer: p.target_layer,
                    n_layers,
                });
            }
            if !seen.insert(*p) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate pair ({}, {}, {})",
                    p.source_layer, p.target_layer, p.mode
                )));
            }
        }
        Ok(Self {
            kind: PairSetKind::Custom,
            n_layers,
            pairs,
        })
    }

    pub fn kind(&self) -> PairSetKind {
        self.kind
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn pairs(&self) -> &[TransplantPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, pair: &TransplantPair) -> bool {
        self.pairs.contains(pair)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_set_sizes() {
        assert_eq!(
            PairSet::full(1, TransplantMode::Ffn).pairs(),
            &[TransplantPair::ffn(0, 0)]
        );
        let s = PairSet::full(32, TransplantMode::Ffn);
        assert_eq!(s.len(), 1024);
        let distinct: HashSet<_> = s.pairs().iter().collect();
        assert_eq!(distinct.len(), 1024);
    }

    #[test]
    fn restricted_sets_fix_one_axis() {
        let sl = PairSet::source_last(6, TransplantMode::Ffn);
        assert!(sl.pairs().iter().all(|p| p.source_layer == 5));
        assert_eq!(sl.len(), 6);
        let tf = PairSet::target_first(6, TransplantMode::Ffn);
        assert!(tf.pairs().iter().all(|p| p.target_layer == 0));
        assert_eq!(tf.len(), 6);
    }

    #[test]
    fn custom_rejects_duplicates_and_range() {
        assert!(PairSet::custom(4, vec![TransplantPair::ffn(1, 1), TransplantPair::ffn(1, 1)]).is_err());
        assert!(PairSet::custom(4, vec![TransplantPair::ffn(4, 0)]).is_err());
        assert!(PairSet::custom(4, vec![]).unwrap().is_empty());
    }

    #[test]
    fn pair_serializes_as_i_j() {
        let s = serde_json::to_string(&TransplantPair::ffn(31, 0)).unwrap();
        assert_eq!(s, r#"{"i":31,"j":0,"mode":"ffn"}"#);
    }
}
