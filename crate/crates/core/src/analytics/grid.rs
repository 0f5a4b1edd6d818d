// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-instance correctness grids and upper bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Judge;
use crate::transplant::{PairSet, SweepResult, TransplantPair};

/// `g[i][j]`: whether transplanting source layer `i` into target layer `j`
/// answered correctly. `None` marks a pair the sweep did not cover.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GridFile", into = "GridFile")]
pub struct CorrectnessGrid {
    id: String,
    n_layers: usize,
    src_correct: Option<bool>,
    tgt_correct: Option<bool>,
    cells: Vec<Option<bool>>,
}

#[derive(Serialize, Deserialize)]
struct GridFile {
    id: String,
    src_correct: Option<bool>,
    tgt_correct: Option<bool>,
    grid: Vec<Vec<Option<bool>>>,
}

impl TryFrom<GridFile> for CorrectnessGrid {
    type Error = String;

    fn try_from(f: GridFile) -> std::result::Result<Self, String> {
        let n = f.grid.len();
        if let Some(row) = f.grid.iter().position(|r| r.len() != n) {
            return Err(format!(
                "grid `{}`: row {row} has {} cells, expected {n}",
                f.id,
                f.grid[row].len()
            ));
        }
        Ok(Self {
            id: f.id,
            n_layers: n,
            src_correct: f.src_correct,
            tgt_correct: f.tgt_correct,
            cells: f.grid.into_iter().flatten().collect(),
        })
    }
}

impl From<CorrectnessGrid> for GridFile {
    fn from(g: CorrectnessGrid) -> Self {
        let n = g.n_layers;
        let grid = (0..n).map(|i| g.cells[i * n..(i + 1) * n].to_vec()).collect();
        Self {
            id: g.id,
            src_correct: g.src_correct,
            tgt_correct: g.tgt_correct,
            grid,
        }
    }
}

impl CorrectnessGrid {
    /// Empty grid; cells are filled from judged generations.
    pub fn new(id: impl Into<String>, n_layers: usize) -> Self {
        Self {
            id: id.into(),
            n_layers,
            src_correct: None,
            tgt_correct: None,
            cells: vec![None; n_layers * n_layers],
        }
    }

    /// Grid from explicit cells, row-major. Used for fixtures and tests.
    pub fn from_cells(
        id: impl Into<String>,
        n_layers: usize,
        cells: Vec<Option<bool>>,
        src_correct: Option<bool>,
        tgt_correct: Option<bool>,
    ) -> Result<Self> {
        if cells.len() != n_layers * n_layers {
            return Err(Error::Analytics(format!(
                "grid needs {} cells, got {}",
                n_layers * n_layers,
                cells.len()
            )));
        }
        Ok(Self {
            id: id.into(),
            n_layers,
            src_correct,
            tgt_correct,
            cells,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn src_correct(&self) -> Option<bool> {
        self.src_correct
    }

    pub fn tgt_correct(&self) -> Option<bool> {
        self.tgt_correct
    }

    pub fn get(&self, i: usize, j: usize) -> Option<bool> {
        if i < self.n_layers && j < self.n_layers {
            self.cells[i * self.n_layers + j]
        } else {
            None
        }
    }

    pub fn populated(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// Any populated cell is correct.
    pub fn any_correct(&self) -> bool {
        self.cells.contains(&Some(true))
    }

    fn cell(&self, p: &TransplantPair) -> Result<bool> {
        self.get(p.source_layer, p.target_layer).ok_or_else(|| {
            Error::Analytics(format!(
                "grid `{}` has no entry for pair ({}, {})",
                self.id, p.source_layer, p.target_layer
            ))
        })
    }
}

/// Judges every generation of a sweep.
pub fn build_grid(sweep: &SweepResult, judge: &Judge) -> Result<CorrectnessGrid> {
    if sweep.instance_id != judge.instance_id {
        return Err(Error::JudgeMismatch(format!(
            "sweep is for `{}`, judge is for `{}`",
            sweep.instance_id, judge.instance_id
        )));
    }
    let n = sweep.pair_set.n_layers();
    let mut grid = CorrectnessGrid::new(&sweep.instance_id, n);
    grid.src_correct = Some(judge.judge(&sweep.source_baseline.text).correct);
    grid.tgt_correct = Some(judge.judge(&sweep.baseline.text).correct);
    for (p, g) in sweep.iter() {
        grid.cells[p.source_layer * n + p.target_layer] = Some(judge.judge(&g.text).correct);
    }
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpperBound {
    pub count: usize,
    pub total: usize,
    pub accuracy: f64,
}

fn check_grids(grids: &[CorrectnessGrid], n: usize) -> Result<()> {
    if grids.is_empty() {
        return Err(Error::Analytics("upper bound over an empty grid list".into()));
    }
    if let Some(g) = grids.iter().find(|g| g.n_layers != n) {
        return Err(Error::Analytics(format!(
            "grid `{}` is {}x{}, expected {n}x{n}",
            g.id, g.n_layers, g.n_layers
        )));
    }
    Ok(())
}

/// Instances with at least one correct pair in `pairs`, and that count over
/// the number of grids.
pub fn upper_bound(grids: &[CorrectnessGrid], pairs: &PairSet) -> Result<UpperBound> {
    check_grids(grids, pairs.n_layers())?;
    let mut count = 0;
    for g in grids {
        let mut hit = false;
        for p in pairs.pairs() {
            hit |= g.cell(p)?;
        }
        count += usize::from(hit);
    }
    Ok(UpperBound {
        count,
        total: grids.len(),
        accuracy: count as f64 / grids.len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Fix source layer `i`, maximize over target layers.
    SourceFixed,
    /// Fix target layer `j`, maximize over source layers.
    TargetFixed,
}

/// Upper bound restricted to one row or column.
pub fn layerwise_upper_bound(grids: &[CorrectnessGrid], axis: Axis, index: usize) -> Result<UpperBound> {
    let n = grids.first().map(|g| g.n_layers).unwrap_or(0);
    check_grids(grids, n)?;
    if index >= n {
        return Err(Error::PairOutOfRange {
            source_layer: index,
            target_layer: index,
            n_layers: n,
        });
    }
    let mode = crate::transplant::TransplantMode::Ffn;
    let pairs: Vec<TransplantPair> = (0..n)
        .map(|k| match axis {
            Axis::SourceFixed => TransplantPair::new(index, k, mode),
            Axis::TargetFixed => TransplantPair::new(k, index, mode),
        })
        .collect();
    upper_bound(grids, &PairSet::custom(n, pairs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transplant::TransplantMode;

    fn grid(n: usize, f: impl Fn(usize, usize) -> bool) -> CorrectnessGrid {
        let cells = (0..n * n).map(|c| Some(f(c / n, c % n))).collect();
        CorrectnessGrid::from_cells("g", n, cells, Some(false), Some(false)).unwrap()
    }

    #[test]
    fn json_shape_round_trips() {
        let g = grid(2, |i, j| i == 1 && j == 0);
        let v = serde_json::to_value(&g).unwrap();
        assert_eq!(v["grid"], serde_json::json!([[false, false], [true, false]]));
        assert_eq!(v["src_correct"], false);
        let back: CorrectnessGrid = serde_json::from_value(v).unwrap();
        assert_eq!(back, g);
        let bad =
            serde_json::json!({"id": "x", "src_correct": null, "tgt_correct": null, "grid": [[true], [true, false]]});
        assert!(serde_json::from_value::<CorrectnessGrid>(bad).is_err());
    }

    #[test]
    fn upper_bound_basics() {
        let full = PairSet::full(3, TransplantMode::Ffn);
        let none = vec![grid(3, |_, _| false); 4];
        assert_eq!(upper_bound(&none, &full).unwrap().count, 0);
        let some = vec![grid(3, |i, j| i == 2 && j == 1); 4];
        let ub = upper_bound(&some, &full).unwrap();
        assert_eq!((ub.count, ub.accuracy), (4, 1.0));
        assert!(upper_bound(&[], &full).is_err());
    }

    #[test]
    fn layerwise_single_cell() {
        let gs = vec![grid(4, |i, j| i == 2 && j == 0)];
        assert_eq!(layerwise_upper_bound(&gs, Axis::SourceFixed, 2).unwrap().count, 1);
        assert_eq!(layerwise_upper_bound(&gs, Axis::SourceFixed, 1).unwrap().count, 0);
        assert_eq!(layerwise_upper_bound(&gs, Axis::TargetFixed, 0).unwrap().count, 1);
        assert!(layerwise_upper_bound(&gs, Axis::TargetFixed, 4).is_err());
    }

    #[test]
    fn missing_cells_are_errors_not_false() {
        let mut cells = vec![Some(false); 4];
        cells[0] = None;
        let g = CorrectnessGrid::from_cells("g", 2, cells, None, None).unwrap();
        assert!(upper_bound(std::slice::from_ref(&g), &PairSet::full(2, TransplantMode::Ffn)).is_err());
        assert!(upper_bound(&[g], &PairSet::source_last(2, TransplantMode::Ffn)).is_ok());
    }
}
