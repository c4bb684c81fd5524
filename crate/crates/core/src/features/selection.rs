//! Dual-metric feature ranking: mutual information decides, Spearman is
//! reported alongside.

use serde::{Deserialize, Serialize};

use super::hi::{FeatureRow, N_HI};
use super::stats::{mutual_information, spearman};
use crate::error::{Error, Result};

pub const DEFAULT_K_SEL: usize = 10;
pub const DEFAULT_MI_BINS: usize = 16;

/// Which side of a cell-level split a row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggedRow {
    pub provenance: Provenance,
    pub row: FeatureRow,
}

/// Fails unless every row is training data.
pub fn require_training(rows: &[TaggedRow], what: &str) -> Result<()> {
    if let Some(bad) = rows.iter().find(|r| r.provenance != Provenance::Train) {
        return Err(Error::Provenance(format!(
            "{what} given a {:?} row (cell {} cycle {})",
            bad.provenance, bad.row.cell_id, bad.row.cycle_index
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub mi_scores: Vec<f64>,
    pub spearman: Vec<f64>,
    pub spearman_abs: Vec<f64>,
    /// Indices (0-based, HI1 = 0) of the retained features, best first.
    pub retained: Vec<usize>,
    pub bins: usize,
}

impl SelectionReport {
    pub fn to_text(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// The retained columns of one indicator vector, in retained order.
    pub fn project(&self, hi: &[f64; N_HI]) -> Vec<f64> {
        self.retained.iter().map(|&i| hi[i]).collect()
    }
}

/// Ranks the 13 indicators against SOH on training rows and keeps the
/// `k_sel` with the highest MI, ties going to the lower index.
///
/// MI needs `n >= bins^2`; with fewer rows the bin count drops to
/// `floor(sqrt(n))` (at least 2).
pub fn select_features(rows: &[TaggedRow], k_sel: usize, bins: usize) -> Result<SelectionReport> {
    require_training(rows, "feature selection")?;
    if k_sel == 0 || k_sel > N_HI {
        return Err(Error::Validation(format!("k_sel {k_sel} outside 1..={N_HI}")));
    }
    if rows.len() < 4 {
        return Err(Error::Validation(format!("feature selection over {} rows", rows.len())));
    }
    let bins = bins.min((rows.len() as f64).sqrt().floor() as usize).max(2);
    let soh: Vec<f64> = rows.iter().map(|r| r.row.features.soh).collect();
    let mut mi_scores = Vec::with_capacity(N_HI);
    let mut rho = Vec::with_capacity(N_HI);
    for k in 0..N_HI {
        let col: Vec<f64> = rows.iter().map(|r| r.row.features.hi[k]).collect();
        mi_scores.push(mutual_information(&col, &soh, bins)?);
        rho.push(spearman(&col, &soh)?);
    }
    let mut order: Vec<usize> = (0..N_HI).collect();
    order.sort_by(|&a, &b| mi_scores[b].total_cmp(&mi_scores[a]).then(a.cmp(&b)));
    order.truncate(k_sel);
    Ok(SelectionReport {
        spearman_abs: rho.iter().map(|r| r.abs()).collect(),
        spearman: rho,
        mi_scores,
        retained: order,
        bins,
    })
}
