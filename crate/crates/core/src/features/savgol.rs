//! Savitzky-Golay smoothing by local least-squares polynomial fits.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Weights that evaluate, at offset 0, the degree-`order` least-squares
/// polynomial through samples at integer `offsets`.
fn center_weights(offsets: &[f64], order: usize) -> Vec<f64> {
    let a = DMatrix::from_fn(offsets.len(), order + 1, |i, j| offsets[i].powi(j as i32));
    // Row 0 of pinv(A) maps the samples to the constant coefficient.
    let pinv = a.pseudo_inverse(1e-12).expect("SVD of a Vandermonde block");
    pinv.row(0).iter().copied().collect()
}

/// Smooths `y` with a centered window of odd length `window` and polynomial
/// order `order`. Near the ends the window shrinks to the samples available
/// (and the order to at most `count - 1`), so edge points are fitted from one
/// side only.
pub fn savgol_smooth(y: &[f64], window: usize, order: usize) -> Result<Vec<f64>> {
    if window.is_multiple_of(2) {
        return Err(Error::Validation(format!("Savitzky-Golay window {window} must be odd")));
    }
    if order >= window {
        return Err(Error::Validation(format!("polynomial order {order} must be below window {window}")));
    }
    if y.len() < window {
        return Err(Error::Validation(format!(
            "series of {} samples shorter than window {window}",
            y.len()
        )));
    }
    let half = window / 2;
    let n = y.len();
    let offsets: Vec<f64> = (0..window).map(|i| i as f64 - half as f64).collect();
    let interior = center_weights(&offsets, order);
    let mut out = vec![0.0; n];
    for i in 0..n {
        if i >= half && i + half < n {
            out[i] = interior.iter().zip(&y[i - half..=i + half]).map(|(w, v)| w * v).sum();
        } else {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let offs: Vec<f64> = (lo..=hi).map(|j| j as f64 - i as f64).collect();
            let w = center_weights(&offs, order.min(offs.len() - 1));
            out[i] = w.iter().zip(&y[lo..=hi]).map(|(w, v)| w * v).sum();
        }
    }
    Ok(out)
}
