//! Price processes driven by buffer-Hawkes execution counters.
//!
//! * `MIDPRICE`: `S_t = (N⁺_t - N⁻_t) α/2` with independent up and down sides.
//! * `INVERSE_DEPTH`: each execution moves the price by `(α/2)/Γ_{s-}` on its side.
//! * `GEOMETRIC`: `S_t = S₀ (1+σ)^{N_t} e^{μt - σc∫₀ᵗΓ_s ds}` on a single side,
//!   whose discounted value `e^{-μt} S_t` is a martingale.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{EventKind, PathSimulator};
use crate::params::ModelParams;
use crate::rng::{derive_seed, derive_stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PriceKind {
    Midprice,
    InverseDepth,
    Geometric,
}

impl PriceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PriceKind::Midprice => "MIDPRICE",
            PriceKind::InverseDepth => "INVERSE_DEPTH",
            PriceKind::Geometric => "GEOMETRIC",
        }
    }
}

impl std::str::FromStr for PriceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "MIDPRICE" => Ok(PriceKind::Midprice),
            "INVERSE_DEPTH" => Ok(PriceKind::InverseDepth),
            "GEOMETRIC" => Ok(PriceKind::Geometric),
            _ => Err(Error::UnsupportedKind(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PriceModel {
    Midprice { alpha: f64 },
    InverseDepth { alpha: f64 },
    /// `sigma > -1` is the relative jump per execution, `drift` the mean return.
    Geometric { s0: f64, sigma: f64, drift: f64 },
}

impl PriceModel {
    pub fn kind(&self) -> PriceKind {
        match self {
            PriceModel::Midprice { .. } => PriceKind::Midprice,
            PriceModel::InverseDepth { .. } => PriceKind::InverseDepth,
            PriceModel::Geometric { .. } => PriceKind::Geometric,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PriceModel::Midprice { alpha } | PriceModel::InverseDepth { alpha } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::InvalidArgument(format!("tick alpha must be > 0, got {alpha}")));
                }
            }
            PriceModel::Geometric { s0, sigma, drift } => {
                if !(s0 > 0.0 && s0.is_finite()) {
                    return Err(Error::InvalidArgument(format!("s0 must be > 0, got {s0}")));
                }
                if !(sigma > -1.0 && sigma.is_finite()) {
                    return Err(Error::InvalidArgument(format!("sigma must be > -1, got {sigma}")));
                }
                if !drift.is_finite() {
                    return Err(Error::InvalidArgument(format!("drift must be finite, got {drift}")));
                }
            }
        }
        Ok(())
    }
}

/// How the two sides draw their random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SideSeeding {
    #[default]
    Independent,
    /// Both sides reuse the up-side stream; a diagnostic for symmetry.
    Mirrored,
}

pub fn side_seeds(seed: u64, seeding: SideSeeding) -> (u64, u64) {
    let plus = derive_stream(seed, "plus");
    match seeding {
        SideSeeding::Independent => (plus, derive_stream(seed, "minus")),
        SideSeeding::Mirrored => (plus, plus),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePath {
    pub model: PriceModel,
    pub seed: u64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

/// Quantities of one side read off on a grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SideSample {
    pub n: Vec<u64>,
    /// `Σ 1/Γ_{s-}` over executions up to each grid point.
    pub inverse_depth: Vec<f64>,
    pub gamma_integral: Vec<f64>,
}

pub fn sample_side(params: &ModelParams, seed: u64, grid: &[f64]) -> SideSample {
    let horizon = grid.last().copied().unwrap_or(0.0);
    let mut sim = PathSimulator::from_seed(*params, horizon, seed, None);
    let mut out = SideSample::default();
    let mut inv = 0.0;
    for &g in grid {
        while sim.peek().is_some_and(|e| e.state.t <= g) {
            let before = sim.state().gamma;
            let event = sim.next().expect("peeked event");
            if event.kind == EventKind::Execution {
                assert!(before >= 1, "execution from an empty book");
                inv += 1.0 / before as f64;
            }
        }
        let snap = sim.advance_to(g);
        out.n.push(snap.state.n);
        out.inverse_depth.push(inv);
        out.gamma_integral.push(snap.gamma_integral);
    }
    out
}

fn check_grid(grid: &[f64], horizon: f64) -> Result<()> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::HorizonNonPositive(horizon));
    }
    let mut prev = 0.0;
    for &g in grid {
        if !(g >= prev && g <= horizon) {
            return Err(Error::GridOutOfRange { point: g, horizon });
        }
        prev = g;
    }
    Ok(())
}

/// Simulates a price path on `grid ⊆ [0, horizon]`. `minus` is ignored by
/// the single-sided geometric model.
pub fn simulate_price(
    plus: &ModelParams,
    minus: &ModelParams,
    model: &PriceModel,
    horizon: f64,
    grid: &[f64],
    seed: u64,
    seeding: SideSeeding,
) -> Result<PricePath> {
    model.validate()?;
    check_grid(grid, horizon)?;
    let (seed_plus, seed_minus) = side_seeds(seed, seeding);
    let up = sample_side(plus, seed_plus, grid);
    let values = match *model {
        PriceModel::Midprice { alpha } => {
            let down = sample_side(minus, seed_minus, grid);
            up.n
                .iter()
                .zip(&down.n)
                .map(|(&u, &d)| (u as f64 - d as f64) * alpha / 2.0)
                .collect()
        }
        PriceModel::InverseDepth { alpha } => {
            let down = sample_side(minus, seed_minus, grid);
            up.inverse_depth
                .iter()
                .zip(&down.inverse_depth)
                .map(|(u, d)| (u - d) * alpha / 2.0)
                .collect()
        }
        PriceModel::Geometric { s0, sigma, drift } => grid
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let exponent = up.n[i] as f64 * sigma.ln_1p() + drift * t
                    - sigma * plus.c() * up.gamma_integral[i];
                s0 * exponent.exp()
            })
            .collect(),
    };
    Ok(PricePath {
        model: *model,
        seed,
        grid: grid.to_vec(),
        values,
    })
}

/// `n_paths` independent price paths under master seed `seed`, in index order.
pub fn price_ensemble(
    plus: &ModelParams,
    minus: &ModelParams,
    model: &PriceModel,
    grid: &[f64],
    seed: u64,
    n_paths: usize,
) -> Result<Vec<PricePath>> {
    let horizon = grid.last().copied().unwrap_or(0.0);
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            simulate_price(
                plus,
                minus,
                model,
                horizon,
                grid,
                derive_seed(seed, i),
                SideSeeding::Independent,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::simulate_path;
    use crate::stats::summarize;

    fn preset() -> ModelParams {
        ModelParams::rational_example()
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("midprice".parse::<PriceKind>().unwrap(), PriceKind::Midprice);
        assert_eq!("inverse-depth".parse::<PriceKind>().unwrap(), PriceKind::InverseDepth);
        assert_eq!("GEOMETRIC".parse::<PriceKind>().unwrap(), PriceKind::Geometric);
        assert!(matches!("LAST_TRADE".parse::<PriceKind>(), Err(Error::UnsupportedKind(_))));
    }

    #[test]
    fn mirrored_midprice_is_flat() {
        let p = preset();
        let grid: Vec<f64> = (0..=20).map(|i| i as f64).collect();
        let path = simulate_price(&p, &p, &PriceModel::Midprice { alpha: 1.0 }, 20.0, &grid, 3, SideSeeding::Mirrored)
            .unwrap();
        assert!(path.values.iter().all(|&v| v == 0.0));
        let path = simulate_price(&p, &p, &PriceModel::Midprice { alpha: 1.0 }, 20.0, &grid, 3, SideSeeding::Independent)
            .unwrap();
        assert!(path.values.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn midprice_lives_on_half_ticks() {
        let p = preset();
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 3.0).collect();
        let alpha = 0.3;
        let path = simulate_price(&p, &p, &PriceModel::Midprice { alpha }, 30.0, &grid, 9, SideSeeding::Independent)
            .unwrap();
        for v in path.values {
            let k = v / (alpha / 2.0);
            assert!((k - k.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn side_sample_matches_logged_path() {
        let p = preset();
        let grid = [0.0, 1.5, 7.0, 12.0];
        let side = sample_side(&p, 21, &grid);
        let log = simulate_path(&p, 12.0, 21, None).unwrap();
        let mut inv = 0.0;
        let mut prev = log.init;
        let mut k = 0;
        for e in &log.events {
            while k < grid.len() && grid[k] < e.time() {
                assert_eq!(side.n[k], prev.n);
                assert!((side.inverse_depth[k] - inv).abs() < 1e-12);
                k += 1;
            }
            if e.kind == EventKind::Execution {
                inv += 1.0 / prev.gamma as f64;
            }
            prev = e.state;
        }
        for (i, &g) in grid.iter().enumerate() {
            assert!((side.gamma_integral[i] - log.gamma_integral(g)).abs() < 1e-9);
        }
    }

    #[test]
    fn geometric_is_positive_and_discounted_mean_is_s0() {
        let p = preset();
        let model = PriceModel::Geometric { s0: 100.0, sigma: 0.05, drift: 0.02 };
        let grid = [0.0, 2.5, 5.0];
        let paths = price_ensemble(&p, &p, &model, &grid, 77, 4000).unwrap();
        assert!(paths.iter().all(|x| x.values.iter().all(|&v| v > 0.0)));
        assert!(paths.iter().all(|x| x.values[0] == 100.0));
        let disc: Vec<f64> = paths.iter().map(|x| x.values[2] * (-0.02f64 * 5.0).exp()).collect();
        let s = summarize(&disc);
        assert!((s.mean - 100.0).abs() < 3.0 * s.se, "{s:?}");
    }

    #[test]
    fn invalid_models_rejected() {
        let p = preset();
        for m in [
            PriceModel::Midprice { alpha: 0.0 },
            PriceModel::Geometric { s0: 1.0, sigma: -1.0, drift: 0.0 },
            PriceModel::Geometric { s0: -1.0, sigma: 0.1, drift: 0.0 },
        ] {
            assert!(simulate_price(&p, &p, &m, 1.0, &[1.0], 0, SideSeeding::Independent).is_err());
        }
        let m = PriceModel::Midprice { alpha: 1.0 };
        assert!(matches!(
            simulate_price(&p, &p, &m, 1.0, &[2.0], 0, SideSeeding::Independent),
            Err(Error::GridOutOfRange { .. })
        ));
    }
}
