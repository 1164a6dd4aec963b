//! Summary statistics and goodness-of-fit tests used by the Monte Carlo
//! checks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Welford accumulator for mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. pairwise combination; order-independent up to rounding.
    pub fn merge(&mut self, other: &RunningStats) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let (na, nb) = (self.n as f64, other.n as f64);
        self.mean += delta * nb / n as f64;
        self.m2 += other.m2 + delta * delta * na * nb / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; 0 for fewer than two observations.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_err(&self) -> f64 {
        if self.n == 0 {
            f64::INFINITY
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    pub fn summary(&self) -> Summary {
        Summary {
            n: self.n,
            mean: self.mean,
            var: self.variance(),
            se: self.std_err(),
        }
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = RunningStats::new();
        for x in iter {
            s.push(x);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: u64,
    pub mean: f64,
    pub var: f64,
    /// Standard error of the mean.
    pub se: f64,
}

pub fn summarize(xs: &[f64]) -> Summary {
    xs.iter().copied().collect::<RunningStats>().summary()
}

/// Standard error of the sample variance, `sqrt((m4 - s⁴ (n-3)/(n-1)) / n)`.
pub fn variance_std_err(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 4 {
        return f64::INFINITY;
    }
    let s = summarize(xs);
    let m4 = xs.iter().map(|x| (x - s.mean).powi(4)).sum::<f64>() / n;
    ((m4 - s.var * s.var * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Inclusive lower value of each pooled bin.
    pub bin_starts: Vec<i64>,
}

impl ChiSquareResult {
    pub fn passes(&self, significance: f64) -> bool {
        self.p_value >= significance
    }
}

fn chi_square_sf(statistic: f64, dof: usize) -> Result<f64> {
    let dist = ChiSquared::new(dof as f64)
        .map_err(|e| Error::InvalidArgument(format!("chi-square with {dof} dof: {e}")))?;
    Ok(dist.sf(statistic))
}

/// Two-sample chi-square homogeneity test for integer-valued samples.
///
/// Adjacent values are pooled left to right until each bin holds at least
/// `min_count` observations from the two samples together; a short final
/// bin is folded into its neighbour.
pub fn chi_square_two_sample(a: &[i64], b: &[i64], min_count: u64) -> Result<ChiSquareResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("two-sample chi-square needs two non-empty samples".into()));
    }
    let mut table: BTreeMap<i64, (u64, u64)> = BTreeMap::new();
    for &x in a {
        table.entry(x).or_default().0 += 1;
    }
    for &x in b {
        table.entry(x).or_default().1 += 1;
    }
    let mut bins: Vec<(i64, u64, u64)> = Vec::new();
    let mut open: Option<(i64, u64, u64)> = None;
    for (&v, &(ca, cb)) in &table {
        let cur = open.get_or_insert((v, 0, 0));
        cur.1 += ca;
        cur.2 += cb;
        if cur.1 + cur.2 >= min_count {
            bins.push(*cur);
            open = None;
        }
    }
    if let Some(rest) = open {
        match bins.last_mut() {
            Some(last) => {
                last.1 += rest.1;
                last.2 += rest.2;
            }
            None => bins.push(rest),
        }
    }
    if bins.len() < 2 {
        return Ok(ChiSquareResult {
            statistic: 0.0,
            dof: 0,
            p_value: 1.0,
            bin_starts: bins.iter().map(|b| b.0).collect(),
        });
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ka, kb) = ((nb / na).sqrt(), (na / nb).sqrt());
    let statistic: f64 = bins
        .iter()
        .map(|&(_, ca, cb)| {
            let diff = ka * ca as f64 - kb * cb as f64;
            diff * diff / (ca + cb) as f64
        })
        .sum();
    let dof = bins.len() - 1;
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof)?,
        bin_starts: bins.iter().map(|b| b.0).collect(),
    })
}

/// Pearson goodness-of-fit test of `observed` counts against cell
/// probabilities `probs` (which should sum to 1, tail cell included).
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<ChiSquareResult> {
    if observed.len() != probs.len() || observed.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need matching cell counts, got {} observed and {} probabilities",
            observed.len(),
            probs.len()
        )));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::InsufficientData("no observations".into()));
    }
    let n = total as f64;
    let mut statistic = 0.0;
    for (&o, &p) in observed.iter().zip(probs) {
        if !(p > 0.0) {
            return Err(Error::InvalidArgument(format!("cell probability {p} must be > 0")));
        }
        let e = n * p;
        statistic += (o as f64 - e).powi(2) / e;
    }
    let dof = observed.len() - 1;
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof)?,
        bin_starts: (0..observed.len() as i64).collect(),
    })
}

/// Kolmogorov–Smirnov distance `sup |F_n - Φ|` to the standard normal.
pub fn ks_distance_normal(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 1.0;
    }
    let normal = Normal::standard();
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Sample covariance of paired observations.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return 0.0;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    xs[..n]
        .iter()
        .zip(&ys[..n])
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (n - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Poisson, StandardNormal};

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, 4.0, 9.0, -2.5];
        let s = summarize(&xs);
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((s.mean - mean).abs() < 1e-15 && (s.var - var).abs() < 1e-14);
        assert!((s.se - (var / 5.0).sqrt()).abs() < 1e-15);
        assert_eq!(summarize(&[3.0]).var, 0.0);
    }

    proptest! {
        #[test]
        fn merge_equals_sequential(xs in proptest::collection::vec(-1e3f64..1e3, 0..50),
                                   ys in proptest::collection::vec(-1e3f64..1e3, 0..50)) {
            let mut a: RunningStats = xs.iter().copied().collect();
            let b: RunningStats = ys.iter().copied().collect();
            a.merge(&b);
            let all: RunningStats = xs.iter().chain(&ys).copied().collect();
            prop_assert_eq!(a.count(), all.count());
            prop_assert!((a.mean() - all.mean()).abs() < 1e-9);
            prop_assert!((a.variance() - all.variance()).abs() < 1e-7 * all.variance().max(1.0));
        }
    }

    #[test]
    fn two_sample_same_law_passes_and_shift_fails() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pois = Poisson::new(4.0).unwrap();
        let a: Vec<i64> = (0..20_000).map(|_| pois.sample(&mut rng) as i64).collect();
        let b: Vec<i64> = (0..20_000).map(|_| pois.sample(&mut rng) as i64).collect();
        let r = chi_square_two_sample(&a, &b, 20).unwrap();
        assert!(r.passes(0.001), "{r:?}");
        assert!(r.dof >= 8);
        let shifted = Poisson::new(4.2).unwrap();
        let c: Vec<i64> = (0..20_000).map(|_| shifted.sample(&mut rng) as i64).collect();
        assert!(!chi_square_two_sample(&a, &c, 20).unwrap().passes(0.001));
    }

    #[test]
    fn two_sample_unequal_sizes() {
        let a = vec![0i64; 300].into_iter().chain(vec![1; 700]).collect::<Vec<_>>();
        let b = vec![0i64; 600].into_iter().chain(vec![1; 1400]).collect::<Vec<_>>();
        let r = chi_square_two_sample(&a, &b, 5).unwrap();
        assert!(r.statistic.abs() < 1e-12 && r.dof == 1);
    }

    #[test]
    fn gof_known_statistic() {
        let r = chi_square_gof(&[30, 20], &[0.5, 0.5]).unwrap();
        assert!((r.statistic - 2.0).abs() < 1e-12);
        assert!((r.p_value - 0.157_299_207).abs() < 1e-8);
        assert!(chi_square_gof(&[1, 2], &[1.0]).is_err());
    }

    #[test]
    fn ks_distance_behaviour() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        assert!(ks_distance_normal(&xs) < 1.63 / 100.0);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.5).collect();
        assert!(ks_distance_normal(&shifted) > 0.15);
        assert!((ks_distance_normal(&[0.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn variance_standard_error_scale() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let xs: Vec<f64> = (0..40_000).map(|_| rng.sample(StandardNormal)).collect();
        // normal data: SE of s² is sqrt(2/n)
        let se = variance_std_err(&xs);
        assert!((se / (2.0f64 / 40_000.0).sqrt() - 1.0).abs() < 0.05);
    }
}
