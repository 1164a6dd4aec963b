//! Moment estimators for the observable parameter combinations.
//!
//! From one or more observed event logs: the execution share `c/(c+d)`, the
//! mean book depth `E Γ∞`, the branching ratio `ν` from the variance-to-mean
//! ratio of binned execution counts, and the implied `a/b`.
//!
//! For long bins the VMR tends to `x∞² = 1/(1-ν)²`, so `ν̂ = 1 - VMR^{-1/2}`.
//! Short bins bias `ν̂` towards 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{EventKind, EventLog};
use crate::params::ModelParams;
use crate::stats::RunningStats;

pub const MIN_BINS: usize = 100;
pub const MIN_EXECUTIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub executions: u64,
    pub cancellations: u64,
    pub observed_time: f64,
    pub bin_width: f64,
    pub bins: usize,
    /// `executions / (executions + cancellations)`, estimating `c/(c+d)`.
    pub ratio: f64,
    pub ratio_se: f64,
    /// Time average of `Γ`.
    pub mean_depth: f64,
    /// Batch-means standard error of `mean_depth`.
    pub mean_depth_se: f64,
    pub vmr: f64,
    pub nu_hat: f64,
    pub nu_hat_se: f64,
    /// `ν̂ / ratio`, estimating `a/b`.
    pub a_over_b: f64,
    pub a_over_b_se: f64,
}

const JACKKNIFE_BLOCKS: usize = 20;

/// Delete-a-block jackknife over contiguous blocks, which tolerates the
/// positive correlation between neighbouring bins.
fn jackknife_se<F: Fn(&RunningStats) -> f64>(xs: &[f64], stat: F) -> f64 {
    let g = JACKKNIFE_BLOCKS.min(xs.len());
    let blocks: Vec<RunningStats> = (0..g)
        .map(|k| xs[k * xs.len() / g..(k + 1) * xs.len() / g].iter().copied().collect())
        .collect();
    let replicates: Vec<f64> = (0..g)
        .map(|skip| {
            let mut s = RunningStats::new();
            for (k, b) in blocks.iter().enumerate() {
                if k != skip {
                    s.merge(b);
                }
            }
            stat(&s)
        })
        .collect();
    let mean = replicates.iter().sum::<f64>() / g as f64;
    let ss: f64 = replicates.iter().map(|r| (r - mean).powi(2)).sum();
    ((g as f64 - 1.0) / g as f64 * ss).sqrt()
}

/// Default bin width `50/q₋`, long enough for the VMR to be near its limit.
pub fn default_bin_width(params: &ModelParams) -> f64 {
    50.0 / params.derived().q_minus
}

pub fn estimate_params(logs: &[EventLog], bin_width: f64) -> Result<Estimates> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidArgument(format!("bin width must be > 0, got {bin_width}")));
    }
    let mut executions = 0u64;
    let mut cancellations = 0u64;
    let mut observed_time = 0.0;
    let mut gamma_area = 0.0;
    let mut counts: Vec<f64> = Vec::new();
    let mut depth_batches = RunningStats::new();
    for log in logs {
        executions += log.count(EventKind::Execution) as u64;
        cancellations += log.count(EventKind::Cancellation) as u64;
        let start = log.init.t;
        let span = log.horizon - start;
        if span <= 0.0 {
            continue;
        }
        observed_time += span;
        gamma_area += log.gamma_integral(log.horizon);
        let full_bins = (span / bin_width).floor() as usize;
        // one pass: Γ is piecewise constant between events
        let mut events = log.events.iter().peekable();
        let mut cur = log.init;
        let mut bin_start_n = cur.n;
        for k in 1..=full_bins {
            let bin_start = start + (k - 1) as f64 * bin_width;
            let edge = start + k as f64 * bin_width;
            let mut area = 0.0;
            let mut t = bin_start;
            while let Some(e) = events.next_if(|e| e.state.t <= edge) {
                area += cur.gamma as f64 * (e.state.t - t);
                t = e.state.t;
                cur = e.state;
            }
            area += cur.gamma as f64 * (edge - t);
            counts.push((cur.n - bin_start_n) as f64);
            depth_batches.push(area / bin_width);
            bin_start_n = cur.n;
        }
    }
    let bins = counts.len();
    if bins < MIN_BINS {
        return Err(Error::InsufficientData(format!(
            "{bins} complete bins of width {bin_width}; at least {MIN_BINS} needed"
        )));
    }
    if (executions as usize) < MIN_EXECUTIONS {
        return Err(Error::InsufficientData(format!(
            "{executions} executions; at least {MIN_EXECUTIONS} needed"
        )));
    }
    let departures = (executions + cancellations) as f64;
    let ratio = executions as f64 / departures;
    let ratio_se = (ratio * (1.0 - ratio) / departures).sqrt();
    let all: RunningStats = counts.iter().copied().collect();
    let vmr = all.variance() / all.mean();
    let nu_of = |v: f64| 1.0 - v.powf(-0.5);
    let nu_hat = nu_of(vmr);
    let nu_hat_se = jackknife_se(&counts, |s| nu_of(s.variance() / s.mean()));
    let a_over_b = nu_hat / ratio;
    let a_over_b_se = ((nu_hat_se / ratio).powi(2) + (nu_hat * ratio_se / (ratio * ratio)).powi(2)).sqrt();
    Ok(Estimates {
        executions,
        cancellations,
        observed_time,
        bin_width,
        bins,
        ratio,
        ratio_se,
        mean_depth: gamma_area / observed_time,
        mean_depth_se: depth_batches.std_err(),
        vmr,
        nu_hat,
        nu_hat_se,
        a_over_b,
        a_over_b_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::simulate_path;
    use crate::moments;
    use crate::params::validate_params;

    #[test]
    fn too_little_data() {
        let p = ModelParams::rational_example();
        let log = simulate_path(&p, 50.0, 1, None).unwrap();
        assert!(matches!(estimate_params(std::slice::from_ref(&log), 1.0), Err(Error::InsufficientData(_))));
        assert!(estimate_params(&[log], 0.0).is_err());
    }

    #[test]
    fn feedback_free_vmr_is_one() {
        let p = validate_params(2.0, 0.0, 2.0, 1.0, 1.0).unwrap();
        let log = simulate_path(&p, 20_000.0, 5, None).unwrap();
        let e = estimate_params(&[log], 20.0).unwrap();
        assert!(e.nu_hat.abs() < 3.0 * e.nu_hat_se, "{e:?}");
        assert!((e.ratio - 0.5).abs() < 3.0 * e.ratio_se);
        assert!((e.mean_depth - 1.0).abs() < 0.05);
    }

    #[test]
    fn short_bins_follow_the_finite_window_vmr() {
        // at Δ = 1 the VMR is Var Ñ_1 / E Ñ_1, far below its long-bin limit 16/9
        let p = ModelParams::rational_example();
        let log = simulate_path(&p, 20_000.0, 8, None).unwrap();
        let e = estimate_params(&[log], 1.0).unwrap();
        let s = moments::stationary_stats(&p);
        let vmr = s.var(1.0).unwrap() / s.mean(1.0);
        let nu_expected = 1.0 - vmr.powf(-0.5);
        assert!((e.nu_hat - nu_expected).abs() < 3.0 * e.nu_hat_se, "{} vs {nu_expected}", e.nu_hat);
        assert!(nu_expected < 0.1);
    }

    #[test]
    fn pooled_logs_count_all_bins() {
        let p = ModelParams::rational_example();
        let logs: Vec<_> = (0..4).map(|s| simulate_path(&p, 300.0, s, None).unwrap()).collect();
        let e = estimate_params(&logs, 10.0).unwrap();
        assert_eq!(e.bins, 120);
        assert_eq!(e.observed_time, 1200.0);
    }
}
