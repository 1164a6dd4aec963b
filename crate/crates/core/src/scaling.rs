//! Diffusion-scaling experiments: ensembles of `N^{(m)}_t = (N_{mt} - E N_{mt})/√m`
//! compared with the Brownian limit `σ² t`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{self, PathSimulator};
use crate::moments;
use crate::params::ModelParams;
use crate::rng::{derive_seed, derive_stream, path_rng};
use crate::stats::{self, RunningStats};

/// How each path is started.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum StartMode {
    /// Empty book at time zero, the setting of the diffusion limit theorem.
    #[default]
    EmptyBook,
    /// Burn in for `burn_in` time units, then restart the counters.
    Stationary { burn_in: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointStats {
    pub t: f64,
    pub n_paths: usize,
    pub emp_mean: f64,
    /// Standard error of `emp_mean`.
    pub mean_se: f64,
    pub emp_var: f64,
    /// Standard error of `emp_var`.
    pub var_se: f64,
    /// Brownian-limit variance `σ² t`.
    pub predicted_var: f64,
    /// Exact variance of the rescaled counter at this `m` and `t`.
    pub exact_var: f64,
    /// Kolmogorov–Smirnov distance of `N^{(m)}_t / (σ √t)` to `N(0, 1)`.
    pub ks: f64,
}

/// Covariance of `N^{(m)}_s` with the increment `N^{(m)}_t - N^{(m)}_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementCov {
    pub s: f64,
    pub t: f64,
    pub cov: f64,
    pub corr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleStats {
    pub m: u32,
    pub seed: u64,
    pub points: Vec<PointStats>,
    pub increment_cov: Vec<IncrementCov>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub params: ModelParams,
    pub seed: u64,
    pub n_paths: usize,
    pub t_grid: Vec<f64>,
    pub start: StartMode,
    pub predicted_sigma2: f64,
    pub scales: Vec<ScaleStats>,
}

impl ScalingReport {
    pub fn scale(&self, m: u32) -> Option<&ScaleStats> {
        self.scales.iter().find(|s| s.m == m)
    }
}

/// Seed of the ensemble for scale `m`.
pub fn scale_seed(master: u64, m: u32) -> u64 {
    derive_stream(master, &format!("m={m}"))
}

/// Reads `N` on `grid` along one path; the stationary mode burns in first
/// from the same stream.
pub fn counts_on_grid(params: &ModelParams, seed: u64, start: StartMode, grid: &[f64]) -> Vec<u64> {
    let mut rng = path_rng(seed);
    let init = match start {
        StartMode::EmptyBook => exact::SimState::empty(params),
        StartMode::Stationary { burn_in } => exact::stationary_start(params, burn_in, &mut rng),
    };
    let horizon = grid.last().copied().unwrap_or(0.0);
    let mut sim = PathSimulator::new(*params, horizon, init, rng);
    grid.iter().map(|&g| sim.advance_to(g).state.n).collect()
}

fn check_inputs(scales: &[u32], n_paths: usize, t_grid: &[f64], start: StartMode) -> Result<()> {
    if scales.is_empty() || scales.contains(&0) {
        return Err(Error::InvalidArgument("scales must be non-empty and >= 1".into()));
    }
    if n_paths < 100 {
        return Err(Error::InvalidArgument(format!("n_paths must be >= 100, got {n_paths}")));
    }
    if t_grid.is_empty() {
        return Err(Error::InvalidArgument("t_grid must be non-empty".into()));
    }
    let mut prev = 0.0;
    for &t in t_grid {
        if !(t > prev && t.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "t_grid must be positive and increasing, got {t} after {prev}"
            )));
        }
        prev = t;
    }
    if let StartMode::Stationary { burn_in } = start {
        if !(burn_in >= 0.0 && burn_in.is_finite()) {
            return Err(Error::InvalidArgument(format!("burn-in must be >= 0, got {burn_in}")));
        }
    }
    Ok(())
}

/// Simulates `n_paths` paths per scale and summarises the rescaled counter
/// on `t_grid`, centred with the analytic mean.
pub fn run_scaling(
    params: &ModelParams,
    scales: &[u32],
    n_paths: usize,
    t_grid: &[f64],
    seed: u64,
    start: StartMode,
) -> Result<ScalingReport> {
    check_inputs(scales, n_paths, t_grid, start)?;
    let sigma2 = params.derived().sigma2;
    let stationary = moments::stationary_stats(params);
    let mut out = Vec::with_capacity(scales.len());
    for &m in scales {
        let mf = f64::from(m);
        let real_grid: Vec<f64> = t_grid.iter().map(|t| t * mf).collect();
        let (means, exact_vars) = match start {
            StartMode::EmptyBook => {
                let curves = moments::second_moments(params, &real_grid)?;
                (curves.m, curves.wbar)
            }
            StartMode::Stationary { .. } => {
                // the burn-in only approximates the stationary law; its bias
                // decays like e^{-q₋ burn_in}
                let vars = real_grid
                    .iter()
                    .map(|&t| stationary.var(t))
                    .collect::<Result<Vec<_>>>()?;
                (real_grid.iter().map(|&t| stationary.mean(t)).collect(), vars)
            }
        };
        let sseed = scale_seed(seed, m);
        let paths: Vec<Vec<f64>> = (0..n_paths as u64)
            .into_par_iter()
            .map(|i| {
                counts_on_grid(params, derive_seed(sseed, i), start, &real_grid)
                    .into_iter()
                    .zip(&means)
                    .map(|(n, mean)| (n as f64 - mean) / mf.sqrt())
                    .collect()
            })
            .collect();
        let column = |j: usize| paths.iter().map(|p| p[j]).collect::<Vec<f64>>();
        let mut points = Vec::with_capacity(t_grid.len());
        for (j, &t) in t_grid.iter().enumerate() {
            let col = column(j);
            let s: RunningStats = col.iter().copied().collect();
            let scale = (sigma2 * t).sqrt();
            let standardised: Vec<f64> = col.iter().map(|x| x / scale).collect();
            points.push(PointStats {
                t,
                n_paths,
                emp_mean: s.mean(),
                mean_se: s.std_err(),
                emp_var: s.variance(),
                var_se: stats::variance_std_err(&col),
                predicted_var: sigma2 * t,
                exact_var: exact_vars[j] / mf,
                ks: stats::ks_distance_normal(&standardised),
            });
        }
        let mut increment_cov = Vec::new();
        for j in 1..t_grid.len() {
            let first = column(j - 1);
            let incr: Vec<f64> = paths.iter().map(|p| p[j] - p[j - 1]).collect();
            let cov = stats::covariance(&first, &incr);
            let sd = (summary_var(&first) * summary_var(&incr)).sqrt();
            increment_cov.push(IncrementCov {
                s: t_grid[j - 1],
                t: t_grid[j],
                cov,
                corr: if sd > 0.0 { cov / sd } else { 0.0 },
            });
        }
        out.push(ScaleStats {
            m,
            seed: sseed,
            points,
            increment_cov,
        });
    }
    Ok(ScalingReport {
        params: *params,
        seed,
        n_paths,
        t_grid: t_grid.to_vec(),
        start,
        predicted_sigma2: sigma2,
        scales: out,
    })
}

fn summary_var(xs: &[f64]) -> f64 {
    stats::summarize(xs).var
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_inputs() {
        let p = ModelParams::rational_example();
        assert!(run_scaling(&p, &[], 100, &[1.0], 1, StartMode::EmptyBook).is_err());
        assert!(run_scaling(&p, &[0], 100, &[1.0], 1, StartMode::EmptyBook).is_err());
        assert!(run_scaling(&p, &[1], 99, &[1.0], 1, StartMode::EmptyBook).is_err());
        assert!(run_scaling(&p, &[1], 100, &[1.0, 1.0], 1, StartMode::EmptyBook).is_err());
        assert!(run_scaling(&p, &[1], 100, &[0.0], 1, StartMode::EmptyBook).is_err());
    }

    #[test]
    fn centred_and_reproducible() {
        let p = ModelParams::rational_example();
        let r = run_scaling(&p, &[5], 2000, &[0.5, 1.0, 2.0], 11, StartMode::EmptyBook).unwrap();
        let again = run_scaling(&p, &[5], 2000, &[0.5, 1.0, 2.0], 11, StartMode::EmptyBook).unwrap();
        assert_eq!(r, again);
        for pt in &r.scale(5).unwrap().points {
            assert!(pt.emp_mean.abs() < 3.0 * pt.mean_se, "{pt:?}");
            assert!((pt.emp_var - pt.exact_var).abs() < 3.0 * pt.var_se, "{pt:?}");
            assert!(pt.emp_var >= 0.0);
        }
        assert_eq!(r.scale(5).unwrap().increment_cov.len(), 2);
    }

    #[test]
    fn stationary_mode_centres_on_linear_mean() {
        let p = ModelParams::rational_example();
        let r = run_scaling(&p, &[2], 2000, &[1.0, 3.0], 4, StartMode::Stationary { burn_in: 20.0 })
            .unwrap();
        for pt in &r.scales[0].points {
            assert!(pt.emp_mean.abs() < 3.0 * pt.mean_se, "{pt:?}");
            assert!((pt.emp_var - pt.exact_var).abs() < 3.0 * pt.var_se, "{pt:?}");
        }
    }
}
