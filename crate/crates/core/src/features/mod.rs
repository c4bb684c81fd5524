//! SOH labelling, health-indicator extraction and feature ranking.

pub mod hi;
pub mod ica;
pub mod records;
pub mod savgol;
pub mod selection;
pub mod soh;
pub mod stats;

pub use hi::{extract_hi_vector, FeatureRow, HiVector, N_HI};
pub use ica::{compute_ica, IcaPeak};
pub use records::{segment_cycle, CycleProfile, CycleRecords, Sample, Step};
pub use savgol::savgol_smooth;
pub use selection::{select_features, Provenance, SelectionReport, TaggedRow};
pub use soh::compute_soh;
pub use stats::{mutual_information, spearman};

use log::info;

/// Segments and extracts every cycle, dropping (and logging) the ones that
/// cannot produce a full indicator vector.
pub fn extract_all(cycles: &[CycleRecords], q_nom: f64) -> (Vec<FeatureRow>, Vec<String>) {
    let mut rows = Vec::with_capacity(cycles.len());
    let mut dropped = Vec::new();
    for c in cycles {
        match segment_cycle(c).and_then(|p| extract_hi_vector(&p, q_nom)) {
            Ok(features) => rows.push(FeatureRow {
                cell_id: c.cell_id.clone(),
                cycle_index: c.cycle_index,
                features,
            }),
            Err(e) => {
                info!("dropping cycle: {e}");
                dropped.push(e.to_string());
            }
        }
    }
    (rows, dropped)
}
