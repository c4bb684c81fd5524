use super::records::{CycleProfile, Point};
use crate::error::{Error, Result};

/// Trapezoidal integral of `f(point)` over time, in the function's units times seconds.
pub(crate) fn trapezoid(points: &[Point], f: impl Fn(&Point) -> f64) -> f64 {
    points
        .windows(2)
        .map(|w| 0.5 * (f(&w[0]) + f(&w[1])) * (w[1].t - w[0].t))
        .sum()
}

/// Linear interpolation of `value` at time `t`; `None` outside the sampled span.
pub(crate) fn interpolate_at(points: &[(f64, f64)], t: f64) -> Option<f64> {
    let first = points.first()?;
    let last = points.last()?;
    if t < first.0 || t > last.0 {
        return None;
    }
    for w in points.windows(2) {
        let ((t0, y0), (t1, y1)) = (w[0], w[1]);
        if t >= t0 && t <= t1 && t1 > t0 {
            return Some(y0 + (y1 - y0) * (t - t0) / (t1 - t0));
        }
    }
    (t == first.0).then_some(first.1)
}

/// Capacity delivered on discharge as a fraction of `q_nom` (Ah).
pub fn compute_soh(profile: &CycleProfile, q_nom: f64) -> Result<f64> {
    if !(q_nom > 0.0) {
        return Err(Error::Validation(format!("nominal capacity {q_nom} must be positive")));
    }
    if profile.discharge.is_empty() {
        return Err(Error::Skipped(format!(
            "cell {} cycle {}: empty discharge segment",
            profile.cell_id, profile.cycle_index
        )));
    }
    let amp_seconds = trapezoid(&profile.discharge, |p| p.current.abs());
    Ok(amp_seconds / 3600.0 / q_nom)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(discharge: Vec<Point>) -> CycleProfile {
        CycleProfile {
            cell_id: "c".into(),
            cycle_index: 1,
            cc: vec![],
            cv: vec![],
            discharge,
        }
    }

    fn constant(current: f64, duration: f64, step: f64) -> Vec<Point> {
        let n = (duration / step).round() as usize;
        (0..=n)
            .map(|i| Point {
                t: i as f64 * step,
                current,
                voltage: 3.5,
            })
            .collect()
    }

    #[test]
    fn constant_current_examples() {
        assert!((compute_soh(&profile(constant(-1.0, 3600.0, 60.0)), 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((compute_soh(&profile(constant(-1.0, 2880.0, 60.0)), 1.0).unwrap() - 0.8).abs() < 1e-12);
    }

    /// Dense-grid trapezoid oracle for a 1 A -> 0 A ramp over 7200 s.
    #[test]
    fn ramp_integrates_to_one_ah() {
        let coarse: Vec<Point> = [0.0, 7200.0]
            .iter()
            .map(|&t| Point { t, current: 1.0 - t / 7200.0, voltage: 3.5 })
            .collect();
        let fine: Vec<Point> = (0..=72_000)
            .map(|i| {
                let t = i as f64 * 0.1;
                Point { t, current: 1.0 - t / 7200.0, voltage: 3.5 }
            })
            .collect();
        let oracle: f64 = fine.windows(2).map(|w| 0.5 * (w[0].current + w[1].current) * 0.1).sum::<f64>() / 3600.0;
        assert!((oracle - 1.0).abs() < 1e-9);
        let soh = compute_soh(&profile(coarse), 1.0).unwrap();
        assert!((soh - 1.0).abs() < 1e-12);
        assert!((compute_soh(&profile(fine), 1.0).unwrap() - soh).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_nominal_capacity() {
        let p = profile(constant(-1.0, 100.0, 10.0));
        assert!(matches!(compute_soh(&p, 0.0), Err(Error::Validation(_))));
        assert!(compute_soh(&p, -2.0).is_err());
        assert!(matches!(compute_soh(&profile(vec![]), 1.0), Err(Error::Skipped(_))));
    }

    #[test]
    fn interpolation() {
        let pts = [(0.0, 1.0), (10.0, 3.0), (20.0, 3.0)];
        assert_eq!(interpolate_at(&pts, 5.0), Some(2.0));
        assert_eq!(interpolate_at(&pts, 0.0), Some(1.0));
        assert_eq!(interpolate_at(&pts, 20.0), Some(3.0));
        assert_eq!(interpolate_at(&pts, 25.0), None);
    }
}
