//! Synthetic fade generator producing raw cycling records.
//!
//! Each cell follows `soh(t) = 1 - s (a t + b (exp(c t) - 1))` with a per-cell
//! scale `s`, plus Gaussian SOH noise. The charge curve is drawn from SOH: the
//! CC segment is a Gaussian dQ/dV peak on a linear baseline whose position,
//! width and weight drift with fade, the CV tail lengthens, and the starting
//! voltage rises. Discharge is constant 1C, so the labelled SOH is exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::features::{CycleRecords, Sample, Step};

const V_MAX: f64 = 4.2;
const V_CUTOFF: f64 = 2.75;
const CC_DT: f64 = 30.0;
const CV_DT: f64 = 30.0;
const DIS_DT: f64 = 120.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_cells: usize,
    pub cycles_min: u32,
    pub cycles_max: u32,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// SOH noise standard deviation.
    pub sigma: f64,
    /// Standard deviation of the fade seen by each charge-curve generator.
    pub feature_noise: f64,
    /// When set, each cell's scale `s` puts its 80% crossing at a uniform
    /// fraction in this range of its cycle budget. When unset, `s = 1`.
    pub eol_fraction: Option<(f64, f64)>,
    pub q_nom: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_cells: 10,
            cycles_min: 300,
            cycles_max: 600,
            a: 2e-4,
            b: 2e-3,
            c: 0.006,
            sigma: 0.002,
            feature_noise: 0.004,
            eol_fraction: Some((0.75, 0.95)),
            q_nom: 1.1,
            seed: 2024,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_cells == 0 || self.cycles_min == 0 || self.cycles_min > self.cycles_max {
            return Err(Error::Config("synthetic spec needs cells and 1 <= cycles_min <= cycles_max".into()));
        }
        if self.a < 0.0 || self.b < 0.0 || self.a + self.b <= 0.0 {
            return Err(Error::Config("fade needs a, b >= 0 and not both zero".into()));
        }
        if self.sigma < 0.0 || self.feature_noise < 0.0 || !(self.q_nom > 0.0) {
            return Err(Error::Config("noise levels must be >= 0 and q_nom > 0".into()));
        }
        if let Some((lo, hi)) = self.eol_fraction {
            if !(0.0 < lo && lo <= hi && hi <= 1.0) {
                return Err(Error::Config(format!("eol fraction range ({lo}, {hi}) outside (0, 1]")));
            }
        }
        Ok(())
    }

    fn fade_shape(&self, t: f64) -> f64 {
        self.a * t + self.b * ((self.c * t).exp() - 1.0)
    }

    pub fn cell_id(i: usize) -> String {
        format!("SYN{:02}", i + 1)
    }
}

/// Noise-free SOH of a cell with scale `s` at cycle `t`.
pub fn fade_soh(spec: &SynthSpec, scale: f64, t: f64) -> f64 {
    1.0 - scale * spec.fade_shape(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCell {
    pub cell_id: String,
    pub n_cycles: u32,
    pub scale: f64,
}

fn phi(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Charge-curve parameters at fade level `x = 1 - soh`.
struct CurveShape {
    v0: f64,
    mu: f64,
    width: f64,
    weight: f64,
    cc_fraction: f64,
    tau: f64,
}

fn curve_shape(x: &[f64; 6]) -> CurveShape {
    CurveShape {
        v0: 3.45 + 0.25 * x[0],
        mu: 3.72 + 0.3 * x[1],
        width: 0.04 + 0.05 * x[2].max(-0.2),
        weight: (0.6 - 0.8 * x[3]).clamp(0.1, 0.9),
        cc_fraction: (0.85 - 0.6 * x[4]).clamp(0.3, 0.95),
        tau: 700.0 * (1.0 + 3.0 * x[5]).max(0.5),
    }
}

fn cycle_samples(spec: &SynthSpec, soh_obs: f64, shape: &CurveShape) -> Vec<Sample> {
    let q_cap = soh_obs * spec.q_nom;
    let i_cc = 0.5 * spec.q_nom;
    let q_cc = shape.cc_fraction * q_cap;
    let (z0, z1) = ((shape.v0 - shape.mu) / shape.width, (V_MAX - shape.mu) / shape.width);
    let (p0, p1) = (phi(z0), phi(z1));
    let q_of_v = |v: f64| {
        let peak = (phi((v - shape.mu) / shape.width) - p0) / (p1 - p0);
        let line = (v - shape.v0) / (V_MAX - shape.v0);
        q_cc * (shape.weight * peak + (1.0 - shape.weight) * line)
    };
    let v_of_q = |q: f64| {
        let (mut lo, mut hi) = (shape.v0, V_MAX);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if q_of_v(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };

    let mut out = Vec::new();
    let t_cc = q_cc / i_cc * 3600.0;
    let mut times: Vec<f64> = (0..).map(|j| j as f64 * CC_DT).take_while(|&t| t < t_cc).collect();
    times.push(t_cc);
    for &t in &times {
        let v = if t >= t_cc { V_MAX } else { v_of_q(i_cc * t / 3600.0) };
        out.push(Sample { step: Step::CcCharge, t, current: i_cc, voltage: v });
    }

    let i_cut = 0.05 * spec.q_nom;
    let t_cv = shape.tau * (i_cc / i_cut).ln();
    let mut s = CV_DT;
    while s <= t_cv {
        out.push(Sample {
            step: Step::CvCharge,
            t: t_cc + s,
            current: i_cc * (-s / shape.tau).exp(),
            voltage: V_MAX,
        });
        s += CV_DT;
    }
    let t_dis0 = t_cc + s + 600.0;

    let i_dis = spec.q_nom;
    let t_dis = q_cap / i_dis * 3600.0;
    let v_top = 4.1 - 0.3 * (1.0 - soh_obs);
    let mut times: Vec<f64> = (0..).map(|j| j as f64 * DIS_DT).take_while(|&t| t < t_dis).collect();
    times.push(t_dis);
    for &t in &times {
        let frac = t / t_dis;
        out.push(Sample {
            step: Step::Discharge,
            t: t_dis0 + t,
            current: -i_dis,
            voltage: v_top - (v_top - V_CUTOFF) * frac.powf(1.5),
        });
    }
    out
}

/// Generates every cell. Cell `i` draws from its own ChaCha stream, so
/// changing `n_cells` does not perturb the other cells.
pub fn synth_generate(spec: &SynthSpec) -> Result<(Vec<SynthCell>, Vec<CycleRecords>)> {
    spec.validate()?;
    let mut cells = Vec::with_capacity(spec.n_cells);
    let mut records = Vec::new();
    for i in 0..spec.n_cells {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let n_cycles = rng.random_range(spec.cycles_min..=spec.cycles_max);
        let scale = match spec.eol_fraction {
            Some((lo, hi)) => {
                let u = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                0.2 / spec.fade_shape(u * n_cycles as f64)
            }
            None => 1.0,
        };
        let id = SynthSpec::cell_id(i);
        for cycle in 1..=n_cycles {
            let soh = fade_soh(spec, scale, cycle as f64);
            let z: f64 = StandardNormal.sample(&mut rng);
            let soh_obs = soh + spec.sigma * z;
            let mut x = [0.0; 6];
            for xi in &mut x {
                let e: f64 = StandardNormal.sample(&mut rng);
                *xi = 1.0 - soh + spec.feature_noise * e;
            }
            records.push(CycleRecords {
                cell_id: id.clone(),
                cycle_index: cycle,
                samples: cycle_samples(spec, soh_obs, &curve_shape(&x)),
            });
        }
        cells.push(SynthCell { cell_id: id, n_cycles, scale });
    }
    Ok((cells, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{compute_soh, extract_all, segment_cycle};

    fn linear_spec() -> SynthSpec {
        SynthSpec {
            n_cells: 1,
            cycles_min: 500,
            cycles_max: 500,
            a: 1e-4,
            b: 0.0,
            sigma: 0.0,
            feature_noise: 0.0,
            eol_fraction: None,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn linear_fade_reaches_095_at_cycle_500() {
        let spec = linear_spec();
        let (_, recs) = synth_generate(&spec).unwrap();
        let last = recs.last().unwrap();
        assert_eq!(last.cycle_index, 500);
        let soh = compute_soh(&segment_cycle(last).unwrap(), spec.q_nom).unwrap();
        assert!((soh - 0.95).abs() < 1e-3, "{soh}");
    }

    #[test]
    fn noiseless_soh_strictly_decreases() {
        let spec = linear_spec();
        let (_, recs) = synth_generate(&spec).unwrap();
        let soh: Vec<f64> = recs
            .iter()
            .map(|r| compute_soh(&segment_cycle(r).unwrap(), spec.q_nom).unwrap())
            .collect();
        assert!(soh.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn default_cells_cross_eol_within_budget() {
        let spec = SynthSpec::default();
        let (cells, _) = synth_generate(&SynthSpec { cycles_min: 20, cycles_max: 30, ..spec.clone() }).unwrap();
        for c in &cells {
            assert!(fade_soh(&spec, c.scale, c.n_cycles as f64) < 0.8, "{c:?}");
        }
    }

    #[test]
    fn seeds_change_noise_not_trend() {
        let base = SynthSpec { n_cells: 1, cycles_min: 40, cycles_max: 40, eol_fraction: None, ..SynthSpec::default() };
        let (_, a) = synth_generate(&base).unwrap();
        let (_, b) = synth_generate(&SynthSpec { seed: 7, ..base.clone() }).unwrap();
        let (_, a2) = synth_generate(&base).unwrap();
        assert_eq!(a, a2);
        assert_ne!(a, b);
        let soh = |r: &CycleRecords| compute_soh(&segment_cycle(r).unwrap(), base.q_nom).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((soh(x) - soh(y)).abs() < 8.0 * base.sigma * 2f64.sqrt());
        }
    }

    #[test]
    fn every_cycle_yields_indicators() {
        let spec = SynthSpec { n_cells: 2, cycles_min: 30, cycles_max: 40, ..SynthSpec::default() };
        let (_, recs) = synth_generate(&spec).unwrap();
        let (rows, dropped) = extract_all(&recs, spec.q_nom);
        assert!(dropped.is_empty(), "{dropped:?}");
        assert_eq!(rows.len(), recs.len());
        // Fade moves the CC time, the peak voltage and the CV time in the
        // expected directions between the first and last cycle of a cell.
        let first = &rows[0].features.hi;
        let last = &rows.iter().rfind(|r| r.cell_id == rows[0].cell_id).unwrap().features.hi;
        assert!(last[0] < first[0]);
        assert!(last[1] > first[1]);
        assert!(last[10] > first[10]);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(synth_generate(&SynthSpec { n_cells: 0, ..SynthSpec::default() }).is_err());
        assert!(synth_generate(&SynthSpec { cycles_min: 9, cycles_max: 3, ..SynthSpec::default() }).is_err());
        assert!(synth_generate(&SynthSpec { a: 0.0, b: 0.0, ..SynthSpec::default() }).is_err());
    }
}
