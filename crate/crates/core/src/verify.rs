//! Cross-oracle suite: the exact simulator, the cluster simulator and the
//! moment analytics checked against one another for one parameter set.
//!
//! Monte Carlo checks use a 4-standard-error band so that a full run of a
//! dozen checks rarely trips by chance; deterministic checks use fixed
//! numerical tolerances. Sample sizes scale with [`VerifyOptions::paths`].

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{self, default_lookback};
use crate::error::Result;
use crate::exact::{self, default_burn_in, PathSimulator};
use crate::moments;
use crate::params::ModelParams;
use crate::rng::{derive_seed, derive_stream, path_rng};
use crate::special::{borel_pmf, v_infinity};
use crate::stats::{self, chi_square_gof, chi_square_two_sample, RunningStats};

const SE_BAND: f64 = 4.0;
const SIGNIFICANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Monte Carlo sample size per check.
    pub paths: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { seed: 20_240_601, paths: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub params: ModelParams,
    pub options: VerifyOptions,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{tag}  {:width$}  {}", c.name, c.detail)?;
        }
        let passed = self.checks.iter().filter(|c| c.passed).count();
        write!(f, "{passed}/{} checks passed", self.checks.len())
    }
}

/// Accumulates named checks; an `Err` from a check body counts as a failure.
struct Suite {
    checks: Vec<CheckResult>,
}

impl Suite {
    fn run<F: FnOnce() -> Result<(bool, String)>>(&mut self, name: &str, body: F) {
        let (passed, detail) = body().unwrap_or_else(|e| (false, format!("error: {e}")));
        self.checks.push(CheckResult {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

fn within_se(label: &str, emp: f64, se: f64, expected: f64) -> (bool, String) {
    let z = if se > 0.0 { (emp - expected) / se } else if emp == expected { 0.0 } else { f64::INFINITY };
    (
        z.abs() <= SE_BAND,
        format!("{label}: {emp:.6} vs {expected:.6} (z = {z:+.2})"),
    )
}

fn all_of(parts: Vec<(bool, String)>) -> (bool, String) {
    let passed = parts.iter().all(|p| p.0);
    let detail = parts.into_iter().map(|p| p.1).collect::<Vec<_>>().join("; ");
    (passed, detail)
}

fn rel_close(label: &str, got: f64, want: f64, tol: f64) -> (bool, String) {
    let err = (got - want).abs() / want.abs().max(1.0);
    (err <= tol, format!("{label}: {got:.9} vs {want:.9} (err {err:.1e})"))
}

pub fn run_verify(params: &ModelParams, opts: &VerifyOptions) -> Result<VerifyReport> {
    let p = *params;
    let k = p.derived();
    let n = opts.paths.max(100);
    let stream = |tag: &str| derive_stream(opts.seed, tag);
    let mut suite = Suite { checks: Vec::new() };

    // time scale of the slowest mode
    let tau = 1.0 / k.q_minus;
    let t_short = tau;
    let t_mid = 5.0 * tau;

    let exact_grid = [t_short, t_mid];
    let exact_paths: Vec<Vec<exact::Snapshot>> = (0..n as u64)
        .into_par_iter()
        .map(|i| exact::sample_on_grid(&p, derive_seed(stream("exact"), i), None, &exact_grid))
        .collect::<Result<_>>()?;

    suite.run("first moments: exact vs closed form", || {
        let mut parts = Vec::new();
        for (j, &t) in exact_grid.iter().enumerate() {
            let fm = moments::first_moments(&p, t)?;
            let lam: RunningStats = exact_paths.iter().map(|s| s[j].state.lambda).collect();
            let gam: RunningStats = exact_paths.iter().map(|s| s[j].state.gamma as f64).collect();
            let cnt: RunningStats = exact_paths.iter().map(|s| s[j].state.n as f64).collect();
            parts.push(within_se(&format!("E Λ({t:.3})"), lam.mean(), lam.std_err(), fm.ell));
            parts.push(within_se(&format!("E Γ({t:.3})"), gam.mean(), gam.std_err(), fm.g));
            parts.push(within_se(&format!("E N({t:.3})"), cnt.mean(), cnt.std_err(), fm.m));
        }
        Ok(all_of(parts))
    });

    suite.run("variance of N: exact vs moment ODE", || {
        let curves = moments::second_moments(&p, &exact_grid)?;
        let mut parts = Vec::new();
        for (j, &t) in exact_grid.iter().enumerate() {
            let xs: Vec<f64> = exact_paths.iter().map(|s| s[j].state.n as f64).collect();
            let s = stats::summarize(&xs);
            parts.push(within_se(&format!("Var N({t:.3})"), s.var, stats::variance_std_err(&xs), curves.wbar[j]));
        }
        Ok(all_of(parts))
    });

    suite.run("law of N: exact vs cluster", || {
        let a: Vec<i64> = exact_paths.iter().map(|s| s[1].state.n as i64).collect();
        let b: Vec<i64> = (0..n as u64)
            .into_par_iter()
            .map(|i| cluster::sample_counts(&p, derive_seed(stream("cluster-n"), i), 0.0, &[t_mid]).map(|c| c[0] as i64))
            .collect::<Result<_>>()?;
        let chi = chi_square_two_sample(&a, &b, 50)?;
        let sa: RunningStats = a.iter().map(|&x| x as f64).collect();
        let sb: RunningStats = b.iter().map(|&x| x as f64).collect();
        let se = (sa.std_err().powi(2) + sb.std_err().powi(2)).sqrt();
        let (mean_ok, mean_detail) = within_se("mean difference", sa.mean() - sb.mean(), se, 0.0);
        Ok((
            chi.passes(SIGNIFICANCE) && mean_ok,
            format!(
                "N({t_mid:.3}) chi2 = {:.2} on {} dof, p = {:.4}; {mean_detail}",
                chi.statistic, chi.dof, chi.p_value
            ),
        ))
    });

    suite.run("total progeny: Borel law", || {
        if k.nu == 0.0 {
            return Ok((true, "no feedback: every cascade has size 1".into()));
        }
        let sizes: Vec<u64> = (0..n as u64)
            .into_par_iter()
            .map(|i| cluster::sample_total_progeny(&p, derive_seed(stream("borel"), i)))
            .collect::<Result<_>>()?;
        let cells = 8;
        let mut observed = vec![0u64; cells + 1];
        for &z in &sizes {
            observed[(z as usize).clamp(1, cells + 1) - 1] += 1;
        }
        let mut probs: Vec<f64> = (1..=cells as u64).map(|j| borel_pmf(j, k.nu)).collect();
        probs.push((1.0 - probs.iter().sum::<f64>()).max(f64::MIN_POSITIVE));
        let chi = chi_square_gof(&observed, &probs)?;
        Ok((
            chi.passes(SIGNIFICANCE),
            format!("chi2 = {:.2} on {} dof, p = {:.4}", chi.statistic, chi.dof, chi.p_value),
        ))
    });

    let z_grid = [t_short, t_mid];
    let z_paths: Vec<[u64; 2]> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            cluster::simulate_z(&p, t_mid, derive_seed(stream("z"), i)).map(|z| [z.z_at(t_short), z.z_at(t_mid)])
        })
        .collect::<Result<_>>()?;

    suite.run("cluster size: mean and variance", || {
        let mut parts = Vec::new();
        for (j, &t) in z_grid.iter().enumerate() {
            let xs: Vec<f64> = z_paths.iter().map(|z| z[j] as f64).collect();
            let s = stats::summarize(&xs);
            parts.push(within_se(&format!("E Z({t:.3})"), s.mean, s.se, moments::cluster_mean(&p, t)?));
            parts.push(within_se(
                &format!("Var Z({t:.3})"),
                s.var,
                stats::variance_std_err(&xs),
                moments::cluster_var(&p, t)?,
            ));
        }
        Ok(all_of(parts))
    });

    suite.run("cumulant: ODE vs cluster Monte Carlo", || {
        let theta = -1.0;
        let v = moments::cumulant_v(&p, theta, &z_grid)?;
        let mut parts = Vec::new();
        for (j, &t) in z_grid.iter().enumerate() {
            let s: RunningStats = z_paths.iter().map(|z| (theta * z[j] as f64).exp()).collect();
            parts.push(within_se(&format!("E e^(-Z({t:.3}))"), s.mean(), s.std_err(), v[j].exp()));
        }
        Ok(all_of(parts))
    });

    suite.run("cumulant: ODE vs Lambert-W limit", || {
        let t_long = 60.0 * tau;
        let thetas = [-1.0, 0.5 * k.theta0.min(1.0)];
        let mut parts = Vec::new();
        for theta in thetas {
            let v = moments::cumulant_v(&p, theta, &[t_long])?[0];
            let lim = v_infinity(theta, k.nu)?;
            let err = (v - lim).abs();
            parts.push((err <= 1e-6, format!("θ = {theta:.3}: {v:.10} vs {lim:.10} (err {err:.1e})")));
        }
        Ok(all_of(parts))
    });

    suite.run("second moments: steady state", || {
        let t_long = 50.0 * tau;
        let grid = [t_long - 10.0 * tau, t_long];
        let curves = moments::second_moments(&p, &grid)?;
        let lim = moments::moment_asymptotes(&p);
        let tol = 1e-6;
        let slope = (curves.wbar[1] - curves.wbar[0]) / (grid[1] - grid[0]);
        Ok(all_of(vec![
            rel_close("pbar", curves.pbar[1], lim.pbar, tol),
            rel_close("qbar", curves.qbar[1], lim.qbar, tol),
            rel_close("rbar", curves.rbar[1], lim.rbar, tol),
            rel_close("ubar", curves.ubar[1], lim.ubar, tol),
            rel_close("vbar", curves.vbar[1], lim.vbar, tol),
            rel_close("wbar slope", slope, k.sigma2, tol),
        ]))
    });

    suite.run("variance of N: ODE vs cluster formula", || {
        let grid = [t_short, t_mid, 20.0 * tau];
        let curves = moments::second_moments(&p, &grid)?;
        let mut parts = Vec::new();
        for (j, &t) in grid.iter().enumerate() {
            parts.push(rel_close(&format!("t = {t:.3}"), curves.wbar[j], moments::var_n_cluster(&p, t)?, 1e-6));
        }
        Ok(all_of(parts))
    });

    suite.run("log-MGF of N: derivatives at zero", || {
        let t = t_mid;
        let h1 = 1e-5;
        let h2 = 1e-3;
        let lp = moments::log_mgf_n(&p, h1, t)?;
        let lm = moments::log_mgf_n(&p, -h1, t)?;
        let lp2 = moments::log_mgf_n(&p, h2, t)?;
        let lm2 = moments::log_mgf_n(&p, -h2, t)?;
        let mean = moments::first_moments(&p, t)?.m;
        let var = moments::second_moments(&p, &[t])?.wbar[0];
        Ok(all_of(vec![
            rel_close("first derivative", (lp - lm) / (2.0 * h1), mean, 1e-5),
            rel_close("second derivative", (lp2 + lm2) / (h2 * h2), var, 1e-4),
        ]))
    });

    suite.run("stationary increments: exact and cluster vs analytic", || {
        let st = moments::stationary_stats(&p);
        let grid = [t_short, t_mid];
        let burn_in = 2.0 * default_burn_in(&p);
        let lookback = default_lookback(&p);
        let exact_n: Vec<[u64; 2]> = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = path_rng(derive_seed(stream("stationary-exact"), i));
                let init = exact::stationary_start(&p, burn_in, &mut rng);
                let mut sim = PathSimulator::new(p, t_mid, init, rng);
                [sim.advance_to(t_short).state.n, sim.advance_to(t_mid).state.n]
            })
            .collect();
        let cluster_n: Vec<Vec<u64>> = (0..n as u64)
            .into_par_iter()
            .map(|i| cluster::sample_counts(&p, derive_seed(stream("stationary-cluster"), i), lookback, &grid))
            .collect::<Result<_>>()?;
        let mut parts = Vec::new();
        for (j, &t) in grid.iter().enumerate() {
            let var = st.var(t)?;
            for (label, xs) in [
                ("exact", exact_n.iter().map(|s| s[j] as f64).collect::<Vec<_>>()),
                ("cluster", cluster_n.iter().map(|s| s[j] as f64).collect::<Vec<_>>()),
            ] {
                let s = stats::summarize(&xs);
                parts.push(within_se(&format!("{label} E N({t:.3})"), s.mean, s.se, st.mean(t)));
                parts.push(within_se(&format!("{label} Var N({t:.3})"), s.var, stats::variance_std_err(&xs), var));
            }
        }
        let t_long = 200.0 * tau;
        parts.push(rel_close("var(t)/t at long t", st.var(t_long)? / t_long, k.sigma2, 1e-2));
        Ok(all_of(parts))
    });

    Ok(VerifyReport {
        params: p,
        options: *opts,
        checks: suite.checks,
    })
}
