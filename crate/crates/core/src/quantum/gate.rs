use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat2 = [[Complex64; 2]; 2];

const UNITARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateLabel {
    H,
    X,
    Rx(f64),
    Ry(f64),
    Rz(f64),
    /// `RZ(gamma) * RY(beta) * RZ(alpha)`.
    Rot(f64, f64, f64),
    Custom,
}

/// A single-qubit unitary together with the label it was built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gate1Q {
    matrix: Mat2,
    label: GateLabel,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub(crate) fn matmul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub(crate) fn ry_matrix(theta: f64) -> Mat2 {
    let (s, co) = (theta / 2.0).sin_cos();
    [[c(co, 0.0), c(-s, 0.0)], [c(s, 0.0), c(co, 0.0)]]
}

pub(crate) fn rz_matrix(theta: f64) -> Mat2 {
    let (s, co) = (theta / 2.0).sin_cos();
    [[c(co, -s), c(0.0, 0.0)], [c(0.0, 0.0), c(co, s)]]
}

impl Gate1Q {
    pub fn h() -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            matrix: [[c(r, 0.0), c(r, 0.0)], [c(r, 0.0), c(-r, 0.0)]],
            label: GateLabel::H,
        }
    }

    pub fn x() -> Self {
        Self {
            matrix: [[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]],
            label: GateLabel::X,
        }
    }

    pub fn rx(theta: f64) -> Self {
        let (s, co) = (theta / 2.0).sin_cos();
        Self {
            matrix: [[c(co, 0.0), c(0.0, -s)], [c(0.0, -s), c(co, 0.0)]],
            label: GateLabel::Rx(theta),
        }
    }

    pub fn ry(theta: f64) -> Self {
        Self {
            matrix: ry_matrix(theta),
            label: GateLabel::Ry(theta),
        }
    }

    pub fn rz(theta: f64) -> Self {
        Self {
            matrix: rz_matrix(theta),
            label: GateLabel::Rz(theta),
        }
    }

    pub fn rot(alpha: f64, beta: f64, gamma: f64) -> Self {
        let m = matmul(&rz_matrix(gamma), &matmul(&ry_matrix(beta), &rz_matrix(alpha)));
        Self {
            matrix: m,
            label: GateLabel::Rot(alpha, beta, gamma),
        }
    }

    /// Wraps an arbitrary matrix, rejecting it unless `U^dagger U = I` to 1e-12.
    pub fn custom(matrix: Mat2) -> Result<Self> {
        let dev = unitarity_deviation(&matrix);
        if !(dev < UNITARY_TOL) {
            return Err(Error::Validation(format!(
                "gate matrix is not unitary (max |U^dagger U - I| = {dev:e})"
            )));
        }
        Ok(Self {
            matrix,
            label: GateLabel::Custom,
        })
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.matrix
    }

    pub fn label(&self) -> GateLabel {
        self.label
    }
}

/// Largest entry of `|U^dagger U - I|`.
pub fn unitarity_deviation(m: &Mat2) -> f64 {
    if m.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return f64::INFINITY;
    }
    let mut worst = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..2 {
                acc += m[k][i].conj() * m[k][j];
            }
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((acc - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn named_gates_are_unitary() {
        for g in [
            Gate1Q::h(),
            Gate1Q::x(),
            Gate1Q::rx(0.3),
            Gate1Q::ry(-2.1),
            Gate1Q::rz(PI),
            Gate1Q::rot(0.4, -1.2, 2.9),
        ] {
            assert!(unitarity_deviation(g.matrix()) < 1e-12, "{:?}", g.label());
        }
    }

    #[test]
    fn rejects_non_unitary() {
        let m = [[c(1.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
        assert!(matches!(Gate1Q::custom(m), Err(Error::Validation(_))));
        let nan = [[c(f64::NAN, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
        assert!(Gate1Q::custom(nan).is_err());
        assert!(Gate1Q::custom(*Gate1Q::h().matrix()).is_ok());
    }

    #[test]
    fn rot_is_rz_ry_rz_product() {
        let (a, b, g) = (0.7, -0.25, 1.9);
        let rot = Gate1Q::rot(a, b, g);
        let by_hand = matmul(
            Gate1Q::rz(g).matrix(),
            &matmul(Gate1Q::ry(b).matrix(), Gate1Q::rz(a).matrix()),
        );
        for i in 0..2 {
            for j in 0..2 {
                assert!((rot.matrix()[i][j] - by_hand[i][j]).norm() < 1e-12);
            }
        }
    }
}
