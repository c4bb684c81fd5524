//! Angle-encoded, hardware-efficient variational circuit read out through
//! per-qubit `<Z>`, with parameter-shift gradients.
//!
//! Circuit, for `n` qubits and `L` layers:
//!
//! ```text
//! |0>^n -> H, RY(atan v_q), RZ(atan v_q^2) on every qubit
//!       -> L x [ CNOT(q -> q+1 mod n) for all q ; ROT(a, b, g) on every qubit ]
//!       -> optional bit-flip noise -> <Z_q>
//! ```
//!
//! Every angle (encoding and variational) drives a Pauli rotation, so
//! `d<Z>/d theta = (f(theta + pi/2) - f(theta - pi/2)) / 2` holds exactly for all
//! of them.

use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::gate::{matmul, ry_matrix, rz_matrix, Mat2};
use super::noise::{trajectory_rng, NoiseMode, NoisePlacement, NoiseSpec};
use super::statevector::{StateVector, MAX_QUBITS};
use crate::error::{Error, Result};

pub const SHIFT: f64 = FRAC_PI_2;

/// Largest number of inner noise sites enumerated exactly when noise follows
/// every variational layer.
const MAX_EXACT_NOISE_SITES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Entangler {
    #[default]
    RingCnot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VqcConfig {
    pub n_qubits: usize,
    pub n_layers: usize,
    pub entangler: Entangler,
    pub noise: Option<NoiseSpec>,
}

impl VqcConfig {
    pub fn new(n_qubits: usize, n_layers: usize) -> Result<Self> {
        let cfg = Self {
            n_qubits,
            n_layers,
            entangler: Entangler::RingCnot,
            noise: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_noise(mut self, noise: Option<NoiseSpec>) -> Result<Self> {
        self.noise = noise;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits < 2 || self.n_qubits > MAX_QUBITS {
            return Err(Error::Config(format!(
                "ring entangler needs 2..={MAX_QUBITS} qubits, got {}",
                self.n_qubits
            )));
        }
        if self.n_layers == 0 {
            return Err(Error::Config("a circuit needs at least one variational layer".into()));
        }
        if let Some(noise) = &self.noise {
            noise.validate()?;
            if noise.mode == NoiseMode::ExactAtMeasurement
                && noise.placement == NoisePlacement::AfterEachVariationalLayer
                && noise.p > 0.0
                && self.n_qubits * (self.n_layers - 1) > MAX_EXACT_NOISE_SITES
            {
                return Err(Error::Config(format!(
                    "exact per-layer noise on {} qubits x {} layers needs more than 2^{} error patterns",
                    self.n_qubits, self.n_layers, MAX_EXACT_NOISE_SITES
                )));
            }
        }
        Ok(())
    }

    /// Number of variational angles, `3 * n_qubits * n_layers`.
    pub fn n_params(&self) -> usize {
        3 * self.n_qubits * self.n_layers
    }
}

/// Variational angles laid out `[layer][qubit][alpha, beta, gamma]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqcParams {
    n_layers: usize,
    n_qubits: usize,
    angles: Vec<f64>,
}

impl VqcParams {
    pub fn zeros(config: &VqcConfig) -> Self {
        Self {
            n_layers: config.n_layers,
            n_qubits: config.n_qubits,
            angles: vec![0.0; config.n_params()],
        }
    }

    pub fn from_vec(config: &VqcConfig, angles: Vec<f64>) -> Result<Self> {
        if angles.len() != config.n_params() {
            return Err(Error::Shape(format!(
                "expected {} variational angles, got {}",
                config.n_params(),
                angles.len()
            )));
        }
        if let Some(bad) = angles.iter().position(|a| !a.is_finite()) {
            return Err(Error::Validation(format!("variational angle {bad} is not finite")));
        }
        Ok(Self {
            n_layers: config.n_layers,
            n_qubits: config.n_qubits,
            angles,
        })
    }

    pub fn get(&self, layer: usize, qubit: usize, k: usize) -> f64 {
        self.angles[(layer * self.n_qubits + qubit) * 3 + k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.angles
    }

    fn check(&self, config: &VqcConfig) -> Result<()> {
        if self.n_layers != config.n_layers || self.n_qubits != config.n_qubits {
            return Err(Error::Shape(format!(
                "parameters shaped {}x{}x3 for a {}x{}x3 circuit",
                self.n_layers, self.n_qubits, config.n_layers, config.n_qubits
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedAngles {
    pub theta_y: Vec<f64>,
    pub theta_z: Vec<f64>,
}

/// `theta_y = atan(v)`, `theta_z = atan(v^2)`.
pub fn encode_angles(v: &[f64]) -> EncodedAngles {
    EncodedAngles {
        theta_y: v.iter().map(|x| x.atan()).collect(),
        theta_z: v.iter().map(|x| (x * x).atan()).collect(),
    }
}

/// Like [`encode_angles`] but checks the input length against the circuit width.
pub fn encode_for(config: &VqcConfig, v: &[f64]) -> Result<EncodedAngles> {
    if v.len() != config.n_qubits {
        return Err(Error::Shape(format!(
            "encoding {} values onto {} qubits",
            v.len(),
            config.n_qubits
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation("non-finite value in encoder input".into()));
    }
    Ok(encode_angles(v))
}

impl EncodedAngles {
    fn check(&self, config: &VqcConfig) -> Result<()> {
        if self.theta_y.len() != config.n_qubits || self.theta_z.len() != config.n_qubits {
            return Err(Error::Shape(format!(
                "encoded angles of length {}/{} for {} qubits",
                self.theta_y.len(),
                self.theta_z.len(),
                config.n_qubits
            )));
        }
        Ok(())
    }
}

/// Gradients of an upstream-weighted sum of `<Z_q>` outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct VqcGradient {
    /// Same layout as [`VqcParams`].
    pub params: Vec<f64>,
    pub theta_y: Vec<f64>,
    pub theta_z: Vec<f64>,
}

impl VqcGradient {
    /// Pulls the encoding-angle gradients back to the raw encoder input `v`.
    pub fn chain_to_input(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.theta_y.iter().zip(&self.theta_z))
            .map(|(&x, (&gy, &gz))| gy / (1.0 + x * x) + gz * 2.0 * x / (1.0 + x.powi(4)))
            .collect()
    }
}

/// Scalar parameter-shift derivative of `f` at `theta`.
pub fn parameter_shift(mut f: impl FnMut(f64) -> f64, theta: f64) -> f64 {
    (f(theta + SHIFT) - f(theta - SHIFT)) / 2.0
}

const HALF_SQRT: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn apply2(m: &Mat2, v: [Complex64; 2]) -> [Complex64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

/// `RZ(theta_z) RY(theta_y) H |0>`.
fn local_state(theta_y: f64, theta_z: f64) -> [Complex64; 2] {
    let h0 = [Complex64::new(HALF_SQRT, 0.0); 2];
    apply2(&matmul(&rz_matrix(theta_z), &ry_matrix(theta_y)), h0)
}

fn rot_matrix(alpha: f64, beta: f64, gamma: f64) -> Mat2 {
    matmul(&rz_matrix(gamma), &matmul(&ry_matrix(beta), &rz_matrix(alpha)))
}

/// `R^dag Z R` as `(m00, m01, m11)`: measuring it before `R` equals
/// measuring `Z` after.
fn z_observable(r: &Mat2) -> (f64, Complex64, f64) {
    let [[a, b], [c, d]] = *r;
    (a.norm_sqr() - c.norm_sqr(), a.conj() * b - c.conj() * d, b.norm_sqr() - d.norm_sqr())
}

/// `Tr(rho M)` for Hermitian `M`, clamped to `[-1, 1]`.
fn observable_value(m: (f64, Complex64, f64), rho: (f64, Complex64, f64)) -> f64 {
    (m.0 * rho.0 + m.2 * rho.2 + 2.0 * (m.1 * rho.1).re).clamp(-1.0, 1.0)
}

/// Rotations by `+SHIFT` and `-SHIFT`. Rotations compose additively, so a
/// shifted gate is the base gate times one of these.
fn shift_pair(axis: fn(f64) -> Mat2) -> [Mat2; 2] {
    [axis(SHIFT), axis(-SHIFT)]
}

/// The six shifted copies of `ROT(a, b, g) = RZ(g) RY(b) RZ(a)`, indexed
/// `[k][0 for +, 1 for -]`.
fn shifted_rots(a: [f64; 3], rz_s: &[Mat2; 2], ry_s: &[Mat2; 2]) -> [[Mat2; 2]; 3] {
    let rz_a = rz_matrix(a[0]);
    let outer = matmul(&rz_matrix(a[2]), &ry_matrix(a[1]));
    let full = matmul(&outer, &rz_a);
    let pick = |f: &dyn Fn(usize) -> Mat2| [f(0), f(1)];
    [
        pick(&|s| matmul(&full, &rz_s[s])),
        pick(&|s| matmul(&outer, &matmul(&ry_s[s], &rz_a))),
        pick(&|s| matmul(&rz_s[s], &full)),
    ]
}

/// A circuit with every angle bound, ready to run.
struct Bound<'a> {
    config: &'a VqcConfig,
    local: Vec<[Complex64; 2]>,
    rots: Vec<Mat2>,
    /// Readout factor when the circuit is pure up to the last rotation
    /// layer; `None` when inner or sampled noise needs the general path.
    readout: Option<f64>,
    /// `R^dag Z R` for each last-layer rotation.
    observables: Vec<(f64, Complex64, f64)>,
    /// Basis index each product-state index lands on after the CNOT ring.
    ring: &'static [usize],
}

fn ring_permutation(n: usize) -> &'static [usize] {
    static RINGS: [OnceLock<Vec<usize>>; MAX_QUBITS + 1] = [const { OnceLock::new() }; MAX_QUBITS + 1];
    RINGS[n].get_or_init(|| {
        (0..1usize << n)
            .map(|mut i| {
                for q in 0..n {
                    if i >> q & 1 == 1 {
                        i ^= 1 << ((q + 1) % n);
                    }
                }
                i
            })
            .collect()
    })
}

impl<'a> Bound<'a> {
    fn new(config: &'a VqcConfig, params: &VqcParams, enc: &EncodedAngles) -> Self {
        let local = enc
            .theta_y
            .iter()
            .zip(&enc.theta_z)
            .map(|(&y, &z)| local_state(y, z))
            .collect();
        let rots: Vec<Mat2> = params
            .angles
            .chunks_exact(3)
            .map(|a| rot_matrix(a[0], a[1], a[2]))
            .collect();
        let readout = match config.noise {
            None => Some(1.0),
            Some(s) if matches!(s.mode, NoiseMode::Trajectory { .. }) => None,
            Some(s) if s.placement == NoisePlacement::AfterEachVariationalLayer && s.p > 0.0 && config.n_layers > 1 => {
                None
            }
            Some(s) => Some(1.0 - 2.0 * s.p),
        };
        let n = config.n_qubits;
        let observables = rots[(config.n_layers - 1) * n..].iter().map(z_observable).collect();
        Self { config, local, rots, readout, observables, ring: ring_permutation(n) }
    }

    fn prepare(&self, state: &mut StateVector) {
        let amps = state.amps_mut();
        amps[0] = Complex64::new(1.0, 0.0);
        let mut len = 1;
        for l in &self.local {
            for i in 0..len {
                let a = amps[i];
                amps[i + len] = a * l[1];
                amps[i] = a * l[0];
            }
            len *= 2;
        }
    }

    fn entangle(&self, state: &mut StateVector) {
        let n = self.config.n_qubits;
        for q in 0..n {
            state.apply_cnot_unchecked(q, (q + 1) % n);
        }
    }

    fn rotate(&self, state: &mut StateVector, layer: usize, from_qubit: usize) {
        let n = self.config.n_qubits;
        for q in from_qubit..n {
            state.apply_matrix(&self.rots[layer * n + q], q);
        }
    }

    /// Fast readout: `state` holds the register just before the last
    /// rotation layer.
    fn measure_last(&self, state: &StateVector, factor: f64, out: &mut [f64]) {
        for (q, o) in out.iter_mut().enumerate() {
            *o = observable_value(self.observables[q], state.qubit_moments(q)) * factor;
        }
    }

    /// Product state followed directly by the first CNOT ring, written as one
    /// scatter. `work` must hold `2^n` amplitudes.
    fn prepare_entangled(&self, state: &mut StateVector, work: &mut [Complex64]) {
        work[0] = Complex64::new(1.0, 0.0);
        let mut len = 1;
        for l in &self.local {
            for i in 0..len {
                let a = work[i];
                work[i + len] = a * l[1];
                work[i] = a * l[0];
            }
            len *= 2;
        }
        let amps = state.amps_mut();
        for (i, &a) in work.iter().enumerate() {
            amps[self.ring[i]] = a;
        }
    }

    /// Fast path from the start of `layer` (entangler already applied when
    /// `entangled`) to the readout.
    fn tail(&self, state: &mut StateVector, layer: usize, entangled: bool, factor: f64, out: &mut [f64]) {
        let last = self.config.n_layers - 1;
        for l in layer..=last {
            if !(entangled && l == layer) {
                self.entangle(state);
            }
            if l < last {
                self.rotate(state, l, 0);
            }
        }
        self.measure_last(state, factor, out);
    }

    fn per_layer_noise(&self) -> Option<NoiseSpec> {
        self.config
            .noise
            .filter(|s| s.placement == NoisePlacement::AfterEachVariationalLayer && s.p > 0.0)
    }

    /// Runs layers `layer..` (starting after `from_qubit` rotations of `layer`
    /// have already been applied when `skip_entangle`), then measures into `out`
    /// with noise folded in. `out` is overwritten.
    fn finish(
        &self,
        state: &mut StateVector,
        layer: usize,
        from_qubit: usize,
        skip_entangle: bool,
        out: &mut [f64],
    ) {
        match self.config.noise.map(|s| s.mode) {
            Some(NoiseMode::Trajectory { n_trajectories, seed }) => {
                let spec = self.config.noise.unwrap();
                let start = state.clone();
                let mut acc = vec![0.0; out.len()];
                for t in 0..n_trajectories {
                    let mut rng = trajectory_rng(seed, t as u64);
                    state.clone_from(&start);
                    for l in layer..self.config.n_layers {
                        let resume = l == layer;
                        if !(resume && skip_entangle) {
                            self.entangle(state);
                        }
                        self.rotate(state, l, if resume { from_qubit } else { 0 });
                        let last = l + 1 == self.config.n_layers;
                        if spec.placement == NoisePlacement::AfterEachVariationalLayer || last {
                            // Draws happen at fixed sites whatever the angles are,
                            // so shifted circuits see the same error pattern.
                            super::noise::bitflip_trajectory(state, spec.p, &mut rng);
                        }
                    }
                    state.expect_z_all_into(out);
                    acc.iter_mut().zip(out.iter()).for_each(|(a, o)| *a += o);
                }
                for (o, a) in out.iter_mut().zip(acc) {
                    *o = a / n_trajectories as f64;
                }
            }
            _ => {
                self.exact_from(state, layer, from_qubit, skip_entangle, out);
                if let Some(spec) = self.config.noise {
                    let f = 1.0 - 2.0 * spec.p;
                    out.iter_mut().for_each(|o| *o *= f);
                }
            }
        }
    }

    /// Noise-free evolution, except that exact per-layer channels on inner
    /// layers are expanded as a weighted mixture of X-error patterns. The final
    /// channel before readout is left to the caller's attenuation factor.
    fn exact_from(
        &self,
        state: &mut StateVector,
        layer: usize,
        from_qubit: usize,
        skip_entangle: bool,
        out: &mut [f64],
    ) {
        let n_layers = self.config.n_layers;
        let inner_noise = self.per_layer_noise();
        for l in layer..n_layers {
            let resume = l == layer;
            if !(resume && skip_entangle) {
                self.entangle(state);
            }
            self.rotate(state, l, if resume { from_qubit } else { 0 });
            if let Some(spec) = inner_noise {
                if l + 1 < n_layers {
                    let n = self.config.n_qubits;
                    let mut acc = vec![0.0; out.len()];
                    let mut branch = state.clone();
                    for mask in 0..(1usize << n) {
                        let flips = mask.count_ones() as i32;
                        let w = spec.p.powi(flips) * (1.0 - spec.p).powi(n as i32 - flips);
                        if w == 0.0 {
                            continue;
                        }
                        branch.clone_from(state);
                        for q in 0..n {
                            if mask >> q & 1 == 1 {
                                branch.apply_x_unchecked(q);
                            }
                        }
                        self.exact_from(&mut branch, l + 1, 0, false, out);
                        acc.iter_mut().zip(out.iter()).for_each(|(a, o)| *a += w * o);
                    }
                    out.copy_from_slice(&acc);
                    return;
                }
            }
        }
        state.expect_z_all_into(out);
    }

    fn run(&self, state: &mut StateVector, work: &mut [Complex64], out: &mut [f64]) {
        match self.readout {
            Some(f) => {
                self.prepare_entangled(state, work);
                self.tail(state, 0, true, f, out)
            }
            None => {
                self.prepare(state);
                self.finish(state, 0, 0, false, out)
            }
        }
    }
}

fn check_all(config: &VqcConfig, params: &VqcParams, enc: &EncodedAngles) -> Result<()> {
    config.validate()?;
    params.check(config)?;
    enc.check(config)
}

/// Per-qubit `<Z>` of the circuit, each in `[-1, 1]`.
pub fn vqc_forward(config: &VqcConfig, params: &VqcParams, enc: &EncodedAngles) -> Result<Vec<f64>> {
    check_all(config, params, enc)?;
    let mut out = vec![0.0; config.n_qubits];
    let mut state = StateVector::zero_state(config.n_qubits)?;
    let mut work = vec![Complex64::new(0.0, 0.0); 1 << config.n_qubits];
    Bound::new(config, params, enc).run(&mut state, &mut work, &mut out);
    Ok(out)
}

/// Parameter-shift gradient of `sum_q upstream[q] * <Z_q>` with respect to every
/// variational and encoding angle. Each angle costs exactly two shifted
/// circuit evaluations; shared gate prefixes are replayed from cache.
pub fn vqc_grad(
    config: &VqcConfig,
    params: &VqcParams,
    enc: &EncodedAngles,
    upstream: &[f64],
) -> Result<VqcGradient> {
    check_all(config, params, enc)?;
    let n = config.n_qubits;
    if upstream.len() != n {
        return Err(Error::Shape(format!(
            "upstream gradient of length {} for {n} outputs",
            upstream.len()
        )));
    }
    let mut bound = Bound::new(config, params, enc);
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    let weigh = |plus: &[f64], minus: &[f64]| -> f64 {
        let mut g = 0.0;
        for q in 0..n {
            g += upstream[q] * (plus[q] - minus[q]) / 2.0;
        }
        g
    };
    let rz_s = shift_pair(rz_matrix);
    let ry_s = shift_pair(ry_matrix);

    // Encoding angles: the product-state preparation changes, so the whole
    // circuit is replayed.
    let mut theta_y = vec![0.0; n];
    let mut theta_z = vec![0.0; n];
    let mut state = StateVector::zero_state(n)?;
    let mut work = vec![Complex64::new(0.0, 0.0); 1 << n];
    let h0 = [Complex64::new(HALF_SQRT, 0.0); 2];
    for q in 0..n {
        let saved = bound.local[q];
        let outer = matmul(&rz_matrix(enc.theta_z[q]), &ry_matrix(enc.theta_y[q]));
        let shifted = [
            [apply2(&outer, apply2(&ry_s[0], h0)), apply2(&outer, apply2(&ry_s[1], h0))],
            [apply2(&rz_s[0], saved), apply2(&rz_s[1], saved)],
        ];
        for (which, slot) in [(0usize, &mut theta_y[q]), (1, &mut theta_z[q])] {
            for (s, out) in [(0, &mut plus), (1, &mut minus)] {
                bound.local[q] = shifted[which][s];
                bound.run(&mut state, &mut work, out);
            }
            *slot = weigh(&plus, &minus);
        }
        bound.local[q] = saved;
    }

    let mut grad_params = vec![0.0; config.n_params()];
    let Some(factor) = bound.readout else {
        // Noise between layers or sampled noise: replay every shifted circuit.
        let mut shifted = params.clone();
        for idx in 0..config.n_params() {
            for (sign, out) in [(1.0, &mut plus), (-1.0, &mut minus)] {
                shifted.angles[idx] = params.angles[idx] + sign * SHIFT;
                Bound::new(config, &shifted, enc).run(&mut state, &mut work, out);
            }
            shifted.angles[idx] = params.angles[idx];
            grad_params[idx] = weigh(&plus, &minus);
        }
        return Ok(VqcGradient { params: grad_params, theta_y, theta_z });
    };

    // Inner layers: cache the register right before each ROT gate and replay
    // only the suffix.
    let last = config.n_layers - 1;
    let mut prefixes = Vec::with_capacity(last * n);
    bound.prepare(&mut state);
    for l in 0..last {
        bound.entangle(&mut state);
        for q in 0..n {
            prefixes.push(state.clone());
            state.apply_matrix(&bound.rots[l * n + q], q);
        }
    }
    bound.entangle(&mut state);
    let before_last = state;
    let mut scratch = before_last.clone();
    for l in 0..last {
        for q in 0..n {
            let gate = l * n + q;
            let a = [params.get(l, q, 0), params.get(l, q, 1), params.get(l, q, 2)];
            let rots = shifted_rots(a, &rz_s, &ry_s);
            for k in 0..3 {
                for (s, out) in [(0, &mut plus), (1, &mut minus)] {
                    scratch.clone_from(&prefixes[gate]);
                    scratch.apply_matrix(&rots[k][s], q);
                    bound.rotate(&mut scratch, l, q + 1);
                    bound.tail(&mut scratch, l + 1, false, factor, out);
                }
                grad_params[gate * 3 + k] = weigh(&plus, &minus);
            }
        }
    }
    // Last layer: a shifted ROT on qubit q only changes output q, so the
    // shifted circuit is read out through that qubit's rotated observable.
    for q in 0..n {
        let gate = last * n + q;
        let a = [params.get(last, q, 0), params.get(last, q, 1), params.get(last, q, 2)];
        let rots = shifted_rots(a, &rz_s, &ry_s);
        let rho = before_last.qubit_moments(q);
        for k in 0..3 {
            let f = |s: usize| observable_value(z_observable(&rots[k][s]), rho) * factor;
            grad_params[gate * 3 + k] = upstream[q] * (f(0) - f(1)) / 2.0;
        }
    }
    Ok(VqcGradient { params: grad_params, theta_y, theta_z })
}
