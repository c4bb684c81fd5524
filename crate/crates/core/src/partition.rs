//! Cell-level splits, train-only normalization and sliding windows.

use std::collections::{BTreeMap, BTreeSet};

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::selection::require_training;
use crate::features::{FeatureRow, Provenance, TaggedRow, N_HI};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SplitMode {
    FixedRatio(f64),
    Loocv(usize),
}

/// Which cells train and which test. Cell lists are sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_cells: Vec<String>,
    pub test_cells: Vec<String>,
    pub seed: u64,
    pub mode: SplitMode,
}

fn distinct_sorted(cell_ids: &[String]) -> Vec<String> {
    cell_ids.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
}

/// Splits at the cell level. `FixedRatio(r)` shuffles the sorted ids with
/// `seed` and puts the first `round(r * n)` (clamped to `1..n`) in training.
/// `Loocv(i)` holds out the `i`-th cell in sorted order.
pub fn split_cells(cell_ids: &[String], mode: SplitMode, seed: u64) -> Result<SplitPlan> {
    let mut ids = distinct_sorted(cell_ids);
    let n = ids.len();
    if n < 2 {
        return Err(Error::Validation(format!("need at least 2 cells to split, got {n}")));
    }
    let (mut train, mut test) = match mode {
        SplitMode::FixedRatio(r) => {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::Validation(format!("train fraction {r} outside (0, 1)")));
            }
            ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let cut = ((r * n as f64).round() as usize).clamp(1, n - 1);
            let test = ids.split_off(cut);
            (ids, test)
        }
        SplitMode::Loocv(fold) => {
            if fold >= n {
                return Err(Error::Index(format!("fold {fold} of {n}")));
            }
            let test = vec![ids.remove(fold)];
            (ids, test)
        }
    };
    train.sort();
    test.sort();
    Ok(SplitPlan { train_cells: train, test_cells: test, seed, mode })
}

/// One plan per cell.
pub fn loocv_folds(cell_ids: &[String], seed: u64) -> Result<Vec<SplitPlan>> {
    let n = distinct_sorted(cell_ids).len();
    if n < 2 {
        return Err(Error::Validation(format!("need at least 2 cells to split, got {n}")));
    }
    (0..n).map(|i| split_cells(cell_ids, SplitMode::Loocv(i), seed)).collect()
}

impl SplitPlan {
    pub fn provenance(&self, cell_id: &str) -> Option<Provenance> {
        if self.train_cells.iter().any(|c| c == cell_id) {
            Some(Provenance::Train)
        } else if self.test_cells.iter().any(|c| c == cell_id) {
            Some(Provenance::Test)
        } else {
            None
        }
    }

    /// Tags every row with its side of the split. Rows of unknown cells are
    /// an error.
    pub fn tag(&self, rows: &[FeatureRow]) -> Result<Vec<TaggedRow>> {
        rows.iter()
            .map(|r| {
                let provenance = self.provenance(&r.cell_id).ok_or_else(|| {
                    Error::Validation(format!("cell '{}' is not in the split", r.cell_id))
                })?;
                Ok(TaggedRow { provenance, row: r.clone() })
            })
            .collect()
    }

    pub fn to_text(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let plan: Self = serde_json::from_str(text)?;
        if plan.train_cells.iter().any(|c| plan.test_cells.contains(c)) {
            return Err(Error::Validation("split manifest has overlapping cells".into()));
        }
        Ok(plan)
    }
}

/// Min-max scaling fitted on training rows: features to `[-1, 1]`, SOH to
/// `[0, 1]`. Values outside the training range are not clipped.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    fitted: bool,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub target_min: f64,
    pub target_max: f64,
}

impl Normalizer {
    pub fn fit(rows: &[TaggedRow]) -> Result<Self> {
        require_training(rows, "normalizer fit")?;
        if rows.is_empty() {
            return Err(Error::Validation("normalizer fit on zero rows".into()));
        }
        let mut min = vec![f64::INFINITY; N_HI];
        let mut max = vec![f64::NEG_INFINITY; N_HI];
        let (mut tmin, mut tmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in rows {
            for (k, &v) in r.row.features.hi.iter().enumerate() {
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
            tmin = tmin.min(r.row.features.soh);
            tmax = tmax.max(r.row.features.soh);
        }
        Ok(Self { fitted: true, min, max, target_min: tmin, target_max: tmax })
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    fn check(&self) -> Result<()> {
        if self.fitted {
            Ok(())
        } else {
            Err(Error::State("normalizer applied before fit".into()))
        }
    }

    pub fn scale_feature(&self, k: usize, x: f64) -> Result<f64> {
        self.check()?;
        let (lo, hi) = (self.min[k], self.max[k]);
        Ok(if hi > lo { 2.0 * (x - lo) / (hi - lo) - 1.0 } else { 0.0 })
    }

    pub fn scale_features(&self, hi: &[f64; N_HI]) -> Result<[f64; N_HI]> {
        self.check()?;
        let mut out = [0.0; N_HI];
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.scale_feature(k, hi[k])?;
        }
        Ok(out)
    }

    pub fn scale_target(&self, y: f64) -> Result<f64> {
        self.check()?;
        let span = self.target_max - self.target_min;
        Ok(if span > 0.0 { (y - self.target_min) / span } else { 0.0 })
    }

    pub fn unscale_target(&self, z: f64) -> Result<f64> {
        self.check()?;
        Ok(self.target_min + z * (self.target_max - self.target_min))
    }

    /// Scaled copies of `rows`.
    pub fn apply(&self, rows: &[FeatureRow]) -> Result<Vec<FeatureRow>> {
        rows.iter()
            .map(|r| {
                let mut out = r.clone();
                out.features.hi = self.scale_features(&r.features.hi)?;
                out.features.soh = self.scale_target(r.features.soh)?;
                Ok(out)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub cell_id: String,
    /// Cycle index of the last (target) cycle.
    pub cycle: u32,
    /// `k` rows of `d_sel` features, oldest first.
    pub x: Vec<Vec<f64>>,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SequenceDataset {
    pub k: usize,
    pub d_sel: usize,
    pub windows: Vec<Window>,
}

/// One cell's per-cycle inputs and targets, ordered by cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSeries {
    pub cell_id: String,
    pub cycles: Vec<u32>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

/// Groups rows by cell (sorted by id) and orders each cell by cycle, mapping
/// every row through `project` to its input vector.
pub fn group_series(rows: &[FeatureRow], project: impl Fn(&FeatureRow) -> Vec<f64>) -> Vec<CellSeries> {
    let mut by_cell: BTreeMap<&str, Vec<&FeatureRow>> = BTreeMap::new();
    for r in rows {
        by_cell.entry(&r.cell_id).or_default().push(r);
    }
    by_cell
        .into_iter()
        .map(|(cell, mut rs)| {
            rs.sort_by_key(|r| r.cycle_index);
            CellSeries {
                cell_id: cell.to_string(),
                cycles: rs.iter().map(|r| r.cycle_index).collect(),
                x: rs.iter().map(|r| project(r)).collect(),
                y: rs.iter().map(|r| r.features.soh).collect(),
            }
        })
        .collect()
}

/// Sliding windows of `k` consecutive cycles. A gap in the cycle numbering
/// (a dropped cycle) starts a new run; windows never cross a gap or a cell
/// boundary. A run of length `L` gives `max(0, L - k + 1)` windows.
pub fn make_windows(series: &[CellSeries], k: usize) -> Result<SequenceDataset> {
    if k == 0 {
        return Err(Error::Validation("window length must be at least 1".into()));
    }
    let mut d_sel = None;
    let mut windows = Vec::new();
    for s in series {
        if s.cycles.len() != s.x.len() || s.x.len() != s.y.len() {
            return Err(Error::Shape(format!("cell '{}' has ragged series", s.cell_id)));
        }
        for row in &s.x {
            match d_sel {
                None => d_sel = Some(row.len()),
                Some(d) if d != row.len() => {
                    return Err(Error::Shape(format!("feature width {} vs {d}", row.len())));
                }
                _ => {}
            }
        }
        let before = windows.len();
        let mut run_start = 0;
        for end in 0..s.cycles.len() {
            if end > 0 && s.cycles[end] != s.cycles[end - 1] + 1 {
                run_start = end;
            }
            if end + 1 - run_start >= k {
                let lo = end + 1 - k;
                windows.push(Window {
                    cell_id: s.cell_id.clone(),
                    cycle: s.cycles[end],
                    x: s.x[lo..=end].to_vec(),
                    y: s.y[end],
                });
            }
        }
        if windows.len() == before {
            info!("cell {}: {} cycles yield no window of length {k}", s.cell_id, s.cycles.len());
        }
    }
    Ok(SequenceDataset { k, d_sel: d_sel.unwrap_or(0), windows })
}

impl SequenceDataset {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn cells(&self) -> BTreeSet<&str> {
        self.windows.iter().map(|w| w.cell_id.as_str()).collect()
    }
}

/// Fails if any cell contributes windows to both datasets.
pub fn check_disjoint(train: &SequenceDataset, test: &SequenceDataset) -> Result<()> {
    let a = train.cells();
    if let Some(c) = test.cells().into_iter().find(|c| a.contains(c)) {
        return Err(Error::Provenance(format!("cell '{c}' appears in both train and test windows")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::HiVector;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("cell{i:02}")).collect()
    }

    fn row(cell: &str, cycle: u32, hi0: f64, soh: f64) -> FeatureRow {
        let mut hi = [0.0; N_HI];
        hi[0] = hi0;
        FeatureRow { cell_id: cell.into(), cycle_index: cycle, features: HiVector { hi, soh } }
    }

    fn series(cell: &str, len: u32) -> CellSeries {
        CellSeries {
            cell_id: cell.into(),
            cycles: (1..=len).collect(),
            x: (1..=len).map(|c| vec![c as f64]).collect(),
            y: (1..=len).map(|c| c as f64).collect(),
        }
    }

    #[test]
    fn loocv_gives_singleton_folds() {
        let folds = loocv_folds(&ids(4), 0).unwrap();
        assert_eq!(folds.len(), 4);
        for (i, f) in folds.iter().enumerate() {
            assert_eq!(f.test_cells, vec![ids(4)[i].clone()]);
            assert_eq!(f.train_cells.len(), 3);
        }
    }

    #[test]
    fn fixed_ratio_is_deterministic() {
        let a = split_cells(&ids(10), SplitMode::FixedRatio(0.8), 7).unwrap();
        let b = split_cells(&ids(10), SplitMode::FixedRatio(0.8), 7).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.train_cells.len(), a.test_cells.len()), (8, 2));
        let text = a.to_text().unwrap();
        assert_eq!(SplitPlan::from_text(&text).unwrap(), a);
    }

    #[test]
    fn split_rejects_single_cell() {
        assert!(matches!(
            split_cells(&ids(1), SplitMode::FixedRatio(0.5), 0),
            Err(Error::Validation(_))
        ));
        assert!(loocv_folds(&ids(1), 0).is_err());
    }

    proptest! {
        #[test]
        fn splits_partition_the_cells(n in 2usize..30, r in 0.05f64..0.95, seed in any::<u64>()) {
            let all = ids(n);
            let p = split_cells(&all, SplitMode::FixedRatio(r), seed).unwrap();
            prop_assert!(!p.train_cells.is_empty() && !p.test_cells.is_empty());
            let mut union: Vec<String> = p.train_cells.iter().chain(&p.test_cells).cloned().collect();
            union.sort();
            prop_assert_eq!(union, all);
        }

        #[test]
        fn window_count_formula(len in 0u32..40, k in 1usize..12) {
            let ds = make_windows(&[series("a", len)], k).unwrap();
            prop_assert_eq!(ds.len(), (len as usize + 1).saturating_sub(k));
        }
    }

    #[test]
    fn normalizer_examples() {
        let train = vec![
            TaggedRow { provenance: Provenance::Train, row: row("a", 1, 0.0, 0.8) },
            TaggedRow { provenance: Provenance::Train, row: row("a", 2, 10.0, 1.0) },
        ];
        let n = Normalizer::fit(&train).unwrap();
        assert_eq!(n.scale_feature(0, 5.0).unwrap(), 0.0);
        assert!((n.scale_feature(0, 12.0).unwrap() - 1.4).abs() < 1e-15);
        assert_eq!(n.scale_feature(0, 0.0).unwrap(), -1.0);
        assert_eq!(n.scale_feature(0, 10.0).unwrap(), 1.0);
        // Columns 1.. are constant zero in training.
        assert_eq!(n.scale_feature(3, 42.0).unwrap(), 0.0);
        assert_eq!(n.scale_target(0.8).unwrap(), 0.0);
        assert_eq!(n.scale_target(1.0).unwrap(), 1.0);
        let z = n.scale_target(0.9).unwrap();
        assert!((n.unscale_target(z).unwrap() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn normalizer_guards() {
        let n = Normalizer::default();
        assert!(matches!(n.scale_feature(0, 1.0), Err(Error::State(_))));
        assert!(matches!(n.apply(&[row("a", 1, 1.0, 1.0)]), Err(Error::State(_))));
        let rows = vec![
            TaggedRow { provenance: Provenance::Train, row: row("a", 1, 0.0, 0.8) },
            TaggedRow { provenance: Provenance::Test, row: row("b", 1, 9.0, 0.9) },
        ];
        assert!(matches!(Normalizer::fit(&rows), Err(Error::Provenance(_))));
    }

    #[test]
    fn window_examples() {
        let ds = make_windows(&[series("a", 5)], 3).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.windows.iter().map(|w| w.cycle).collect::<Vec<_>>(), vec![3, 4, 5]);
        assert_eq!(ds.windows[0].x, vec![vec![1.0], vec![2.0], vec![3.0]]);
        assert_eq!(ds.windows[2].y, 5.0);
        assert!(make_windows(&[series("a", 2)], 3).unwrap().is_empty());
        let two = make_windows(&[series("a", 5), series("b", 5)], 3).unwrap();
        assert_eq!(two.len(), 6);
        for w in &two.windows {
            let c = w.cycle as f64;
            assert_eq!(w.x, vec![vec![c - 2.0], vec![c - 1.0], vec![c]]);
        }
        assert!(make_windows(&[series("a", 5)], 0).is_err());
    }

    #[test]
    fn gaps_break_windows() {
        let mut s = series("a", 6);
        s.cycles = vec![1, 2, 3, 5, 6, 7];
        let ds = make_windows(&[s], 3).unwrap();
        assert_eq!(ds.windows.iter().map(|w| w.cycle).collect::<Vec<_>>(), vec![3, 7]);
    }

    #[test]
    fn disjointness_is_checked() {
        let a = make_windows(&[series("a", 4)], 2).unwrap();
        let b = make_windows(&[series("b", 4)], 2).unwrap();
        check_disjoint(&a, &b).unwrap();
        assert!(matches!(check_disjoint(&a, &a), Err(Error::Provenance(_))));
    }

    #[test]
    fn tagging_follows_plan() {
        let plan = split_cells(&ids(3), SplitMode::Loocv(1), 0).unwrap();
        let rows = vec![row("cell00", 1, 0.0, 1.0), row("cell01", 1, 0.0, 1.0)];
        let tagged = plan.tag(&rows).unwrap();
        assert_eq!(tagged[0].provenance, Provenance::Train);
        assert_eq!(tagged[1].provenance, Provenance::Test);
        assert!(plan.tag(&[row("zzz", 1, 0.0, 1.0)]).is_err());
    }

    #[test]
    fn grouping_orders_cycles() {
        let rows = vec![row("b", 2, 2.0, 0.9), row("a", 1, 1.0, 1.0), row("b", 1, 3.0, 1.0)];
        let s = group_series(&rows, |r| vec![r.features.hi[0]]);
        assert_eq!(s[0].cell_id, "a");
        assert_eq!(s[1].cycles, vec![1, 2]);
        assert_eq!(s[1].x, vec![vec![3.0], vec![2.0]]);
    }
}
