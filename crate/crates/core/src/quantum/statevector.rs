use num_complex::Complex64;

use super::gate::{Gate1Q, Mat2};
use crate::error::{Error, Result};

pub const MAX_QUBITS: usize = 14;

/// Dense register of `2^n` amplitudes. Qubit 0 is the least significant bit
/// of the basis-state index.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>` on `n` qubits.
    pub fn zero_state(n: usize) -> Result<Self> {
        if !(1..=MAX_QUBITS).contains(&n) {
            return Err(Error::Config(format!(
                "qubit count {n} outside 1..={MAX_QUBITS}"
            )));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n_qubits: n, amps })
    }

    /// Builds a state from explicit amplitudes; they must have unit norm.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() || len > 1 << MAX_QUBITS {
            return Err(Error::Shape(format!(
                "amplitude count {len} is not 2^n for 1 <= n <= {MAX_QUBITS}"
            )));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Validation(format!("state norm^2 is {norm}, expected 1")));
        }
        Ok(Self {
            n_qubits: len.trailing_zeros() as usize,
            amps,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub(crate) fn amps_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Resets to `|0...0>` without reallocating.
    pub fn reset(&mut self) {
        self.amps.fill(Complex64::new(0.0, 0.0));
        self.amps[0] = Complex64::new(1.0, 0.0);
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.n_qubits {
            return Err(Error::Index(format!(
                "qubit {q} on a {}-qubit register",
                self.n_qubits
            )));
        }
        Ok(())
    }

    pub fn apply_1q(&mut self, gate: &Gate1Q, target: usize) -> Result<()> {
        self.check_qubit(target)?;
        self.apply_matrix(gate.matrix(), target);
        Ok(())
    }

    /// Applies a 2x2 matrix to `target`. Callers guarantee the index and unitarity.
    pub(crate) fn apply_matrix(&mut self, m: &Mat2, target: usize) {
        let stride = 1usize << target;
        let [[m00, m01], [m10, m11]] = *m;
        if m01 == Complex64::new(0.0, 0.0) && m10 == Complex64::new(0.0, 0.0) {
            for block in self.amps.chunks_exact_mut(2 * stride) {
                let (lo, hi) = block.split_at_mut(stride);
                lo.iter_mut().for_each(|a| *a *= m00);
                hi.iter_mut().for_each(|a| *a *= m11);
            }
            return;
        }
        for block in self.amps.chunks_exact_mut(2 * stride) {
            let (lo, hi) = block.split_at_mut(stride);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = m00 * x + m01 * y;
                *b = m10 * x + m11 * y;
            }
        }
    }

    /// Pauli X by amplitude swap.
    pub(crate) fn apply_x_unchecked(&mut self, target: usize) {
        let stride = 1usize << target;
        for block in self.amps.chunks_exact_mut(2 * stride) {
            let (lo, hi) = block.split_at_mut(stride);
            lo.swap_with_slice(hi);
        }
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::Validation(format!(
                "CNOT control and target are both qubit {control}"
            )));
        }
        self.apply_cnot_unchecked(control, target);
        Ok(())
    }

    pub(crate) fn apply_cnot_unchecked(&mut self, control: usize, target: usize) {
        let cmask = 1usize << control;
        let tmask = 1usize << target;
        for i in 0..self.amps.len() {
            if i & cmask != 0 && i & tmask == 0 {
                self.amps.swap(i, i | tmask);
            }
        }
    }

    /// `<Z_q>`, clamped to `[-1, 1]` against rounding.
    pub fn expect_z(&self, q: usize) -> Result<f64> {
        self.check_qubit(q)?;
        let mask = 1usize << q;
        let mut acc = 0.0;
        for (i, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            if i & mask == 0 {
                acc += p;
            } else {
                acc -= p;
            }
        }
        Ok(acc.clamp(-1.0, 1.0))
    }

    /// `<Z_q>` for every qubit, written into `out` (length `n_qubits`).
    pub(crate) fn expect_z_all_into(&self, out: &mut [f64]) {
        out.fill(0.0);
        for (i, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            for (q, o) in out.iter_mut().enumerate() {
                if (i >> q) & 1 == 0 {
                    *o += p;
                } else {
                    *o -= p;
                }
            }
        }
        out.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
    }

    /// Reduced density matrix of qubit `q` as `(rho_00, rho_01, rho_11)`,
    /// with `rho_01 = sum conj(a_0) a_1` over amplitude pairs differing in bit `q`.
    pub(crate) fn qubit_moments(&self, q: usize) -> (f64, Complex64, f64) {
        let stride = 1usize << q;
        let (mut r00, mut r01, mut r11) = (0.0, Complex64::new(0.0, 0.0), 0.0);
        for block in self.amps.chunks_exact(2 * stride) {
            let (lo, hi) = block.split_at(stride);
            for (a, b) in lo.iter().zip(hi) {
                r00 += a.norm_sqr();
                r11 += b.norm_sqr();
                r01 += a.conj() * b;
            }
        }
        (r00, r01, r11)
    }

    pub fn expect_z_all(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_qubits];
        self.expect_z_all_into(&mut out);
        out
    }
}
