//! MAE, RMSE, R² and seed aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    /// Absent when the targets have zero variance.
    pub r2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2_missing: Option<String>,
}

pub fn compute_metrics(y: &[f64], y_hat: &[f64]) -> Result<Metrics> {
    if y.len() != y_hat.len() {
        return Err(Error::Shape(format!("{} targets vs {} predictions", y.len(), y_hat.len())));
    }
    if y.is_empty() {
        return Err(Error::Validation("metrics over an empty test set".into()));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let (mut abs, mut ss_res, mut ss_tot) = (0.0, 0.0, 0.0);
    for (&a, &b) in y.iter().zip(y_hat) {
        abs += (a - b).abs();
        ss_res += (a - b).powi(2);
        ss_tot += (a - mean).powi(2);
    }
    let mae = abs / n;
    let rmse = (ss_res / n).sqrt();
    let (r2, r2_missing) = if ss_tot > 0.0 {
        (Some(1.0 - ss_res / ss_tot), None)
    } else {
        (None, Some("zero target variance".to_string()))
    };
    Ok(Metrics { mae, rmse, r2, r2_missing })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample standard deviation (n - 1); zero for a single value.
    pub std: f64,
    pub n: usize,
}

pub fn aggregate(values: &[f64]) -> Option<Aggregate> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some(Aggregate { mean, std, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn perfect_prediction() {
        let y = [0.9, 0.85, 0.8];
        let m = compute_metrics(&y, &y).unwrap();
        assert_eq!((m.mae, m.rmse, m.r2), (0.0, 0.0, Some(1.0)));
    }

    #[test]
    fn constant_prediction_example() {
        let m = compute_metrics(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap();
        assert!((m.mae - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.rmse - 0.816496580927726).abs() < 1e-12);
        assert_eq!(m.r2, Some(0.0));
    }

    #[test]
    fn zero_variance_reports_missing_r2() {
        let m = compute_metrics(&[0.9; 4], &[0.8; 4]).unwrap();
        assert!(m.r2.is_none());
        assert!(m.r2_missing.is_some());
        assert!(compute_metrics(&[], &[]).is_err());
        assert!(compute_metrics(&[1.0], &[]).is_err());
    }

    #[test]
    fn identities_hold_on_random_vectors() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let n = rng.random_range(2..40);
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let m = compute_metrics(&y, &p).unwrap();
            assert!(m.rmse >= m.mae);
            assert!(m.mae >= 0.0);
            let ss_res: f64 = y.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum();
            assert!((m.rmse.powi(2) * n as f64 - ss_res).abs() < 1e-10);
            let mean = y.iter().sum::<f64>() / n as f64;
            let ss_tot: f64 = y.iter().map(|a| (a - mean).powi(2)).sum();
            let r2 = m.r2.unwrap();
            assert!(r2 <= 1.0);
            assert!((r2 - (1.0 - n as f64 * m.rmse.powi(2) / ss_tot)).abs() < 1e-10);
        }
    }

    #[test]
    fn aggregate_uses_sample_std() {
        let a = aggregate(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((a.mean, a.std, a.n), (2.0, 1.0, 3));
        assert_eq!(aggregate(&[4.0]).unwrap().std, 0.0);
        assert!(aggregate(&[]).is_none());
    }
}
