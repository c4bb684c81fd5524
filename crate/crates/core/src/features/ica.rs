//! Incremental capacity (dQ/dV) analysis of the CC charge segment.

use serde::{Deserialize, Serialize};

use super::records::{CycleProfile, Point};
use super::savgol::savgol_smooth;
use crate::error::{Error, Result};

pub const GRID_STEP_V: f64 = 0.002;
pub const SMOOTH_WINDOW: usize = 21;
pub const SMOOTH_ORDER: usize = 3;

/// Dominant dQ/dV peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcaPeak {
    /// Voltage at the maximum [V].
    pub voltage: f64,
    /// Area of the contiguous region at or above half maximum [Ah].
    pub area: f64,
    /// Maximum of the smoothed curve [Ah/V].
    pub magnitude: f64,
}

/// The smoothed dQ/dV curve on its uniform voltage grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IcaCurve {
    pub voltage: Vec<f64>,
    pub dqdv: Vec<f64>,
}

fn skip(profile: &CycleProfile, why: &str) -> Error {
    Error::Skipped(format!("cell {} cycle {}: {why}", profile.cell_id, profile.cycle_index))
}

/// Builds the smoothed dQ/dV curve: cumulative charge over CC, voltage
/// smoothing and monotonicity check, resampling of Q onto a 2 mV grid,
/// central differences, then Savitzky-Golay (21, 3).
pub fn ica_curve(profile: &CycleProfile) -> Result<IcaCurve> {
    let cc: &[Point] = &profile.cc;
    if cc.len() < 3 {
        return Err(Error::Validation(format!(
            "cell {} cycle {}: ICA needs at least 3 CC samples, got {}",
            profile.cell_id,
            profile.cycle_index,
            cc.len()
        )));
    }
    let mut q = Vec::with_capacity(cc.len());
    let mut acc = 0.0;
    q.push(0.0);
    for w in cc.windows(2) {
        acc += 0.5 * (w[0].current + w[1].current) * (w[1].t - w[0].t) / 3600.0;
        q.push(acc);
    }
    let raw_v: Vec<f64> = cc.iter().map(|p| p.voltage).collect();
    let window = SMOOTH_WINDOW.min(if cc.len() % 2 == 1 { cc.len() } else { cc.len() - 1 });
    let v = savgol_smooth(&raw_v, window, SMOOTH_ORDER.min(window - 1))?;
    if v.windows(2).any(|w| w[1] < w[0]) {
        return Err(skip(profile, "CC voltage not monotone after smoothing"));
    }
    // Collapse voltage plateaus, keeping the charge reached at the end of each.
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (&vi, &qi) in v.iter().zip(&q) {
        match pts.last_mut() {
            Some(last) if last.0 == vi => last.1 = qi,
            _ => pts.push((vi, qi)),
        }
    }
    let (v0, v1) = (pts[0].0, pts[pts.len() - 1].0);
    let n_grid = ((v1 - v0) / GRID_STEP_V).floor() as usize + 1;
    if n_grid < SMOOTH_WINDOW {
        return Err(skip(profile, "CC voltage span too narrow for the dQ/dV grid"));
    }
    let grid: Vec<f64> = (0..n_grid).map(|j| v0 + j as f64 * GRID_STEP_V).collect();
    let mut q_grid = Vec::with_capacity(n_grid);
    let mut seg = 0;
    for &g in &grid {
        while seg + 2 < pts.len() && pts[seg + 1].0 < g {
            seg += 1;
        }
        let ((va, qa), (vb, qb)) = (pts[seg], pts[(seg + 1).min(pts.len() - 1)]);
        q_grid.push(if vb > va { qa + (qb - qa) * (g - va) / (vb - va) } else { qa });
    }
    let h = GRID_STEP_V;
    let raw: Vec<f64> = (0..n_grid)
        .map(|j| match j {
            0 => (q_grid[1] - q_grid[0]) / h,
            j if j + 1 == n_grid => (q_grid[j] - q_grid[j - 1]) / h,
            j => (q_grid[j + 1] - q_grid[j - 1]) / (2.0 * h),
        })
        .collect();
    let dqdv = savgol_smooth(&raw, SMOOTH_WINDOW, SMOOTH_ORDER)?;
    Ok(IcaCurve { voltage: grid, dqdv })
}

/// Peak voltage, half-maximum area and peak height of the dQ/dV curve.
pub fn compute_ica(profile: &CycleProfile) -> Result<IcaPeak> {
    let curve = ica_curve(profile)?;
    peak_of(&curve).ok_or_else(|| skip(profile, "dQ/dV curve has no positive peak"))
}

pub fn peak_of(curve: &IcaCurve) -> Option<IcaPeak> {
    let y = &curve.dqdv;
    let (imax, &ymax) = y
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, &f64)>, (i, v)| match best {
            Some((_, b)) if *b >= *v => best,
            _ => Some((i, v)),
        })?;
    if !(ymax > 0.0) {
        return None;
    }
    let half = ymax / 2.0;
    let mut lo = imax;
    while lo > 0 && y[lo - 1] >= half {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < y.len() && y[hi + 1] >= half {
        hi += 1;
    }
    let area = (lo..hi)
        .map(|j| 0.5 * (y[j] + y[j + 1]) * (curve.voltage[j + 1] - curve.voltage[j]))
        .sum();
    Some(IcaPeak {
        voltage: curve.voltage[imax],
        area,
        magnitude: ymax,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::erf::erf;

    fn cc_profile(cc: Vec<Point>) -> CycleProfile {
        CycleProfile {
            cell_id: "c".into(),
            cycle_index: 1,
            cc,
            cv: vec![],
            discharge: vec![],
        }
    }

    /// Voltage ramps linearly; current is chosen so that dQ/dV is a Gaussian
    /// with the given amplitude, center and width.
    fn gaussian_profile(amp: f64, mu: f64, sigma: f64) -> CycleProfile {
        let (va, vb, total) = (3.4, 4.0, 3600.0);
        let dv_dt = (vb - va) / total;
        let cc = (0..=3600)
            .map(|i| {
                let t = i as f64;
                let v = va + dv_dt * t;
                let g = amp * (-(v - mu).powi(2) / (2.0 * sigma * sigma)).exp();
                Point { t, current: 3600.0 * g * dv_dt, voltage: v }
            })
            .collect();
        cc_profile(cc)
    }

    #[test]
    fn recovers_gaussian_peak() {
        let (amp, mu, sigma) = (2.0, 3.7, 0.05);
        let peak = compute_ica(&gaussian_profile(amp, mu, sigma)).unwrap();
        // Mass of a Gaussian above half maximum: erf(sqrt(ln 2)).
        let frac = erf(std::f64::consts::LN_2.sqrt());
        assert!((frac - 0.760968).abs() < 1e-6);
        let want_area = amp * sigma * (2.0 * std::f64::consts::PI).sqrt() * frac;
        assert!((peak.voltage - mu).abs() / mu < 0.02, "{peak:?}");
        assert!((peak.magnitude - amp).abs() / amp < 0.02, "{peak:?}");
        assert!((peak.area - want_area).abs() / want_area < 0.05, "{peak:?} vs {want_area}");
    }

    #[test]
    fn linear_charge_curve_is_flat() {
        // Constant current with a linear voltage ramp: Q(V) is linear.
        let slope = 0.5; // Ah per V
        let cc: Vec<Point> = (0..=1200)
            .map(|i| {
                let t = i as f64 * 3.0;
                let v = 3.5 + t * 0.5 / 3600.0;
                Point { t, current: slope * 0.5, voltage: v }
            })
            .collect();
        let curve = ica_curve(&cc_profile(cc)).unwrap();
        for y in &curve.dqdv {
            assert!((y - slope).abs() < 1e-6, "{y}");
        }
        let peak = peak_of(&curve).unwrap();
        let span = curve.voltage.last().unwrap() - curve.voltage[0];
        assert!((peak.area - slope * span).abs() < 1e-6);
    }

    #[test]
    fn two_sample_segment_rejected() {
        let cc = vec![
            Point { t: 0.0, current: 1.0, voltage: 3.5 },
            Point { t: 1.0, current: 1.0, voltage: 3.6 },
        ];
        assert!(matches!(compute_ica(&cc_profile(cc)), Err(Error::Validation(_))));
    }

    #[test]
    fn falling_voltage_is_skipped() {
        let cc = (0..100)
            .map(|i| Point { t: i as f64, current: 1.0, voltage: 4.0 - i as f64 * 1e-3 })
            .collect();
        assert!(matches!(compute_ica(&cc_profile(cc)), Err(Error::Skipped(_))));
    }
}
