//! Bit-flip noise: an exact attenuation of `<Z>` and a sampled trajectory form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::statevector::StateVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseMode {
    /// Fold the channel analytically into the measured expectations.
    ExactAtMeasurement,
    /// Average over sampled X-error patterns, one ChaCha stream per trajectory.
    Trajectory { n_trajectories: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoisePlacement {
    BeforeMeasurement,
    AfterEachVariationalLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub p: f64,
    pub mode: NoiseMode,
    pub placement: NoisePlacement,
}

impl NoiseSpec {
    /// Default placement and mode: one exact channel per qubit before readout.
    pub fn exact(p: f64) -> Result<Self> {
        let spec = Self {
            p,
            mode: NoiseMode::ExactAtMeasurement,
            placement: NoisePlacement::BeforeMeasurement,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability(self.p)?;
        if let NoiseMode::Trajectory { n_trajectories, .. } = self.mode {
            if n_trajectories == 0 {
                return Err(Error::Config("trajectory noise needs n_trajectories >= 1".into()));
            }
        }
        Ok(())
    }
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&p) {
        return Err(Error::Validation(format!("bit-flip probability {p} outside [0, 0.5]")));
    }
    Ok(())
}

/// `(1 - 2p)^n_channels`, the factor by which `n_channels` consecutive bit-flip
/// channels scale `<Z>`.
pub fn attenuation_factor(p: f64, n_channels: u32) -> Result<f64> {
    check_probability(p)?;
    Ok((1.0 - 2.0 * p).powi(n_channels as i32))
}

pub fn bitflip_attenuate(expectations: &[f64], p: f64, n_channels: u32) -> Result<Vec<f64>> {
    let f = attenuation_factor(p, n_channels)?;
    Ok(expectations.iter().map(|e| e * f).collect())
}

/// One sampled bit-flip trajectory: each qubit independently gets an X with
/// probability `p`.
pub fn bitflip_trajectory<R: Rng + ?Sized>(state: &mut StateVector, p: f64, rng: &mut R) {
    for q in 0..state.n_qubits() {
        if rng.random::<f64>() < p {
            state.apply_x_unchecked(q);
        }
    }
}

/// Stream `stream` of the generator seeded with `seed`. Distinct streams never
/// overlap, so parallel replicas can each take their own.
pub fn trajectory_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
