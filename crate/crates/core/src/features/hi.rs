//! The 13 per-cycle health indicators.
//!
//! | HI | quantity |
//! |----|----------|
//! | 1 | CC charging time [s] |
//! | 2 | CV charging time [s] |
//! | 3 | current 200 s into CV [A] |
//! | 4 | voltage 500 s into the charge [V] |
//! | 5 | charge energy, CC + CV [Wh] |
//! | 6 | CC energy / CV energy |
//! | 7 | initial CC voltage [V] |
//! | 8 | CC voltage slope [V/s] |
//! | 9 | entropy of CC voltages [bits] |
//! | 10 | skewness of CC voltages |
//! | 11 | dQ/dV peak voltage [V] |
//! | 12 | dQ/dV peak area [Ah] |
//! | 13 | dQ/dV peak height [Ah/V] |

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::ica::compute_ica;
use super::records::{CycleProfile, Point};
use super::soh::{compute_soh, interpolate_at, trapezoid};
use super::stats::{histogram_entropy, ls_slope, skewness};
use crate::error::{Error, Result};

pub const N_HI: usize = 13;
pub const CV_PROBE_S: f64 = 200.0;
pub const CHARGE_PROBE_S: f64 = 500.0;
pub const ENTROPY_BINS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiVector {
    pub hi: [f64; N_HI],
    pub soh: f64,
}

fn skip(p: &CycleProfile, why: &str) -> Error {
    Error::Skipped(format!("cell {} cycle {}: {why}", p.cell_id, p.cycle_index))
}

/// Charge-clock time series of `(seconds since CC start, value)` over CC then
/// CV. A CV segment whose clock restarts is shifted to follow CC.
fn charge_series(p: &CycleProfile, value: impl Fn(&Point) -> f64) -> Vec<(f64, f64)> {
    let t0 = p.cc[0].t;
    let cc_end = p.cc[p.cc.len() - 1].t;
    let cv_offset = match p.cv.first() {
        Some(first) if first.t <= cc_end => cc_end - first.t,
        _ => 0.0,
    };
    p.cc.iter()
        .map(|x| (x.t - t0, value(x)))
        .chain(p.cv.iter().map(|x| (x.t + cv_offset - t0, value(x))))
        .collect()
}

/// Extracts all 13 indicators plus the SOH label. Any indicator that cannot be
/// formed (short CV phase, zero CV energy, failed ICA) drops the cycle with
/// [`Error::Skipped`].
pub fn extract_hi_vector(p: &CycleProfile, q_nom: f64) -> Result<HiVector> {
    if p.cc.is_empty() || p.cv.is_empty() {
        return Err(skip(p, "CC or CV segment empty"));
    }
    let duration = |seg: &[Point]| seg[seg.len() - 1].t - seg[0].t;
    let hi1 = duration(&p.cc);
    let hi2 = duration(&p.cv);

    let cv_t0 = p.cv[0].t;
    let cv_current: Vec<(f64, f64)> = p.cv.iter().map(|x| (x.t - cv_t0, x.current)).collect();
    let hi3 = interpolate_at(&cv_current, CV_PROBE_S)
        .ok_or_else(|| skip(p, "CV phase shorter than 200 s"))?;

    let hi4 = interpolate_at(&charge_series(p, |x| x.voltage), CHARGE_PROBE_S)
        .ok_or_else(|| skip(p, "charge shorter than 500 s"))?;

    let e_cc = trapezoid(&p.cc, |x| x.voltage * x.current) / 3600.0;
    let e_cv = trapezoid(&p.cv, |x| x.voltage * x.current) / 3600.0;
    let hi5 = e_cc + e_cv;
    if e_cv == 0.0 {
        return Err(skip(p, "zero CV energy"));
    }
    let hi6 = e_cc / e_cv;

    let t: Vec<f64> = p.cc.iter().map(|x| x.t).collect();
    let v: Vec<f64> = p.cc.iter().map(|x| x.voltage).collect();
    let hi7 = v[0];
    let hi8 = ls_slope(&t, &v);
    let hi9 = histogram_entropy(&v, ENTROPY_BINS);
    let hi10 = skewness(&v);

    let peak = compute_ica(p)?;
    let soh = compute_soh(p, q_nom)?;
    let hi = [
        hi1, hi2, hi3, hi4, hi5, hi6, hi7, hi8, hi9, hi10, peak.voltage, peak.area, peak.magnitude,
    ];
    if let Some(i) = hi.iter().position(|x| !x.is_finite()) {
        return Err(skip(p, &format!("HI{} is not finite", i + 1)));
    }
    Ok(HiVector { hi, soh })
}

/// One row of the feature table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub cell_id: String,
    pub cycle_index: u32,
    pub features: HiVector,
}

pub fn feature_header() -> Vec<String> {
    let mut h = vec!["cell_id".to_string(), "cycle_index".to_string()];
    h.extend((1..=N_HI).map(|i| format!("hi{i}")));
    h.push("soh".into());
    h
}

pub fn write_feature_table<W: Write>(writer: W, rows: &[FeatureRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(feature_header())?;
    for r in rows {
        let mut rec = vec![r.cell_id.clone(), r.cycle_index.to_string()];
        rec.extend(r.features.hi.iter().map(|v| v.to_string()));
        rec.push(r.features.soh.to_string());
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_table<R: Read>(reader: R) -> Result<Vec<FeatureRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    if rdr.headers()?.iter().collect::<Vec<_>>() != feature_header() {
        return Err(Error::Parse("feature table header mismatch".into()));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|e| Error::Parse(format!("column {i}: {e}")))
        };
        let mut hi = [0.0; N_HI];
        for (k, slot) in hi.iter_mut().enumerate() {
            *slot = num(2 + k)?;
        }
        out.push(FeatureRow {
            cell_id: rec[0].to_string(),
            cycle_index: rec[1].parse().map_err(|e| Error::Parse(format!("cycle_index: {e}")))?,
            features: HiVector { hi, soh: num(2 + N_HI)? },
        });
    }
    Ok(out)
}
