//! Scalar statistics used by the health indicators and feature ranking.

use crate::error::{Error, Result};

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn is_constant(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[0] == w[1])
}

/// Least-squares slope of `y` against `x`; 0 when `x` has no spread.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return 0.0;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    sxy / sxx
}

/// Fisher-Pearson skewness `m3 / m2^1.5`; 0 for constant data.
pub fn skewness(x: &[f64]) -> f64 {
    if x.is_empty() || is_constant(x) {
        return 0.0;
    }
    let m = mean(x);
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    if m2 == 0.0 {
        return 0.0;
    }
    m3 / m2.powf(1.5)
}

/// Shannon entropy in bits of a `bins`-bin fixed-width histogram spanning the
/// data's own range. Constant data occupies one bin and has zero entropy.
pub fn histogram_entropy(x: &[f64], bins: usize) -> f64 {
    if x.is_empty() || bins == 0 || is_constant(x) {
        return 0.0;
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in x {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = x.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Equal-frequency bin of every element: stable sort by value (ties keep
/// their original order), then rank `r` goes to bin `r * bins / n`.
fn quantile_bins(x: &[f64], bins: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let n = x.len();
    let mut out = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = rank * bins / n;
    }
    out
}

/// Plug-in mutual information in bits between equal-frequency binnings of `x`
/// and `y`.
pub fn mutual_information(x: &[f64], y: &[f64], bins: usize) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("series of length {} and {}", x.len(), y.len())));
    }
    if bins < 2 {
        return Err(Error::Validation(format!("need at least 2 bins, got {bins}")));
    }
    let n = x.len();
    if n < bins * bins {
        return Err(Error::Validation(format!("{n} samples is fewer than bins^2 = {}", bins * bins)));
    }
    if is_constant(x) || is_constant(y) {
        return Ok(0.0);
    }
    let bx = quantile_bins(x, bins);
    let by = quantile_bins(y, bins);
    let mut joint = vec![0usize; bins * bins];
    let mut px = vec![0usize; bins];
    let mut py = vec![0usize; bins];
    for (&a, &b) in bx.iter().zip(&by) {
        joint[a * bins + b] += 1;
        px[a] += 1;
        py[b] += 1;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for a in 0..bins {
        for b in 0..bins {
            let c = joint[a * bins + b];
            if c == 0 {
                continue;
            }
            let pab = c as f64 / nf;
            mi += pab * (pab * nf * nf / (px[a] as f64 * py[b] as f64)).log2();
        }
    }
    Ok(mi.max(0.0))
}

/// Ranks starting at 1, ties sharing their mean rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// Spearman rank correlation; 0 when either argument has no rank spread.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("series of length {} and {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::Validation(format!("Spearman needs at least 3 samples, got {}", x.len())));
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    #[test]
    fn self_information_is_log2_bins() {
        let x: Vec<f64> = (0..256).map(|i| (i as f64 * 1.37).sin() * 10.0 + i as f64 * 1e-6).collect();
        assert_eq!(mutual_information(&x, &x, 16).unwrap(), 4.0);
    }

    #[test]
    fn permutation_null_stays_small() {
        let x: Vec<f64> = (0..256).map(|i| i as f64).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut scores: Vec<f64> = (0..1000)
            .map(|_| {
                let mut y = x.clone();
                y.shuffle(&mut rng);
                mutual_information(&x, &y, 4).unwrap()
            })
            .collect();
        scores.sort_by(f64::total_cmp);
        assert!(scores[989] < 0.15, "99th percentile {}", scores[989]);
    }

    #[test]
    fn mi_edge_cases() {
        let x = vec![1.0; 64];
        let y: Vec<f64> = (0..64).map(|i| i as f64).collect();
        assert_eq!(mutual_information(&x, &y, 4).unwrap(), 0.0);
        assert!(mutual_information(&y[..10], &y[..10], 4).is_err());
        assert!(mutual_information(&y, &y, 1).is_err());
        assert!(mutual_information(&y, &y[..5], 2).is_err());
    }

    #[test]
    fn spearman_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&x, &[2.0, 5.0, 7.0, 100.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[9.0, 5.0, 1.0, -3.0]).unwrap() + 1.0).abs() < 1e-12);
        let r = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r - 3f64.sqrt() / 2.0).abs() < 1e-12);
        assert_eq!(spearman(&[1.0; 4], &x).unwrap(), 0.0);
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn degenerate_statistics() {
        let c = vec![3.3; 20];
        assert_eq!(ls_slope(&(0..20).map(|i| i as f64).collect::<Vec<_>>(), &c), 0.0);
        assert_eq!(histogram_entropy(&c, 30), 0.0);
        assert_eq!(skewness(&c), 0.0);
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
    }

    proptest! {
        #[test]
        fn mi_bounds_and_symmetry(
            x in prop::collection::vec(-100.0f64..100.0, 64..200),
            seed in any::<u64>(),
        ) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut y: Vec<f64> = x.iter().map(|v| v * v).collect();
            y.shuffle(&mut rng);
            for bins in [2usize, 4, 8] {
                if x.len() < bins * bins { continue; }
                let a = mutual_information(&x, &y, bins).unwrap();
                let b = mutual_information(&y, &x, bins).unwrap();
                prop_assert!(a >= 0.0);
                prop_assert!(a <= (bins as f64).log2() + 1e-12);
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn spearman_is_rank_invariant(
            x in prop::collection::vec(-10.0f64..10.0, 3..50),
            y in prop::collection::vec(-10.0f64..10.0, 3..50),
        ) {
            let n = x.len().min(y.len());
            let (x, y) = (&x[..n], &y[..n]);
            let r = spearman(x, y).unwrap();
            prop_assert!(r.abs() <= 1.0);
            let tx: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0 * v).collect();
            let ty: Vec<f64> = y.iter().map(|v| (v / 4.0).exp()).collect();
            prop_assert_eq!(spearman(&tx, &ty).unwrap(), r);
        }
    }
}
