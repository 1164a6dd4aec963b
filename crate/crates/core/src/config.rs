//! Experiment manifests in TOML.
//!
//! ```toml
//! seed = 42
//! out_dir = "runs/a"
//!
//! [params]
//! lambda0 = 2.0
//! a = 1.0
//! b = 2.0
//! c = 1.0
//! d = 1.0
//!
//! [grid]
//! t_max = 50.0
//! n_points = 501
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::price::PriceModel;

/// Uniform grid of `n_points` times on `[0, t_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub t_max: f64,
    pub n_points: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid.t_max must be > 0, got {}", self.t_max)));
        }
        if self.n_points < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid.n_points must be >= 2, got {}",
                self.n_points
            )));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let last = self.n_points - 1;
        (0..self.n_points)
            .map(|i| if i == last { self.t_max } else { self.t_max * i as f64 / last as f64 })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub horizon: f64,
    /// Burn-in before the clock restarts; absent means an empty book at 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub horizon: f64,
    #[serde(default)]
    pub lookback: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    pub scales: Vec<u32>,
    pub n_paths: usize,
    pub t_grid: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceConfig {
    pub model: PriceModel,
    pub horizon: f64,
    pub n_points: usize,
    /// Parameters of the down side; the up-side parameters when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minus: Option<ModelParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub horizon: f64,
    /// Bin width for the VMR; `50/q₋` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub params: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<ClusterConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<PriceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateConfig>,
}

impl ExperimentConfig {
    pub fn new(params: ModelParams, seed: u64) -> Self {
        ExperimentConfig {
            seed,
            out_dir: None,
            params,
            grid: None,
            simulate: None,
            cluster: None,
            scaling: None,
            price: None,
            estimate: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(g) = &self.grid {
            g.validate()?;
        }
        if let Some(s) = &self.scaling {
            let mut prev = 0.0;
            for &t in &s.t_grid {
                if !(t > prev) {
                    return Err(Error::InvalidArgument(format!(
                        "scaling.t_grid must be positive and increasing, got {t} after {prev}"
                    )));
                }
                prev = t;
            }
        }
        if let Some(p) = &self.price {
            p.model.validate()?;
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            // the bare message; toml's own rendering repeats the source line
            let msg = inner.message();
            if path == "." {
                Error::InvalidArgument(format!("config: {msg}"))
            } else {
                Error::InvalidArgument(format!("config: {path}: {msg}"))
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::validate_params;
    use proptest::prelude::*;

    #[test]
    fn parses_minimal_manifest() {
        let cfg = ExperimentConfig::from_toml(
            "seed = 7\n[params]\nlambda0 = 2.0\na = 1.0\nb = 2.0\nc = 1.0\nd = 1.0\n[grid]\nt_max = 5.0\nn_points = 6\n",
        )
        .unwrap();
        assert_eq!(cfg.params, ModelParams::rational_example());
        assert_eq!(cfg.grid.unwrap().points(), vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn errors_name_the_field() {
        let err = ExperimentConfig::from_toml("seed = 7\n[params]\nlambda0 = 2.0\na = \"x\"\nb = 2.0\nc = 1.0\nd = 1.0\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("params") || err.contains('a'), "{err}");
        let err = ExperimentConfig::from_toml("seed = 7\n[params]\nlambda0 = 1.0\na = 4.0\nb = 1.0\nc = 1.0\nd = 1.0\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("a*c"), "{err}");
        assert!(ExperimentConfig::from_toml("seed = 7\nbogus = 1\n").is_err());
        let bad_grid = "seed = 7\n[params]\nlambda0 = 2.0\na = 1.0\nb = 2.0\nc = 1.0\nd = 1.0\n[grid]\nt_max = -1.0\nn_points = 3\n";
        assert!(ExperimentConfig::from_toml(bad_grid).is_err());
    }

    fn arb_params() -> impl Strategy<Value = ModelParams> {
        (0.01f64..10.0, 0.0f64..0.999, 0.01f64..10.0, 0.01f64..10.0, 0.0f64..10.0).prop_map(
            |(l, frac, b, c, d)| validate_params(l, frac * b * (c + d) / c, b, c, d).unwrap(),
        )
    }

    fn arb_model() -> impl Strategy<Value = PriceModel> {
        prop_oneof![
            (1e-3f64..10.0).prop_map(|alpha| PriceModel::Midprice { alpha }),
            (1e-3f64..10.0).prop_map(|alpha| PriceModel::InverseDepth { alpha }),
            (1e-3f64..1e3, -0.99f64..5.0, -1.0f64..1.0)
                .prop_map(|(s0, sigma, drift)| PriceModel::Geometric { s0, sigma, drift }),
        ]
    }

    fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
        (
            any::<u64>(),
            arb_params(),
            proptest::option::of((1e-3f64..1e4, 2usize..10_000)),
            proptest::option::of((1e-3f64..1e5, proptest::option::of(0.0f64..100.0))),
            proptest::option::of((proptest::collection::vec(1u32..1000, 1..4), 100usize..100_000)),
            proptest::option::of((arb_model(), 1e-3f64..1e3, 2usize..1000, proptest::option::of(arb_params()))),
            proptest::option::of((1.0f64..1e5, proptest::option::of(1e-3f64..100.0))),
            proptest::option::of("[a-z]{1,8}(/[a-z0-9_]{1,8}){0,2}"),
            proptest::option::of((1e-3f64..1e4, 0.0f64..100.0)),
        )
            .prop_map(|(seed, params, grid, sim, scaling, price, est, dir, cluster)| ExperimentConfig {
                seed,
                out_dir: dir.map(PathBuf::from),
                params,
                grid: grid.map(|(t_max, n_points)| GridSpec { t_max, n_points }),
                simulate: sim.map(|(horizon, burn_in)| SimulateConfig { horizon, burn_in }),
                cluster: cluster.map(|(horizon, lookback)| ClusterConfig { horizon, lookback }),
                scaling: scaling.map(|(scales, n_paths)| ScalingConfig {
                    scales,
                    n_paths,
                    t_grid: vec![0.5, 1.0, 2.0],
                    burn_in: None,
                }),
                price: price.map(|(model, horizon, n_points, minus)| PriceConfig {
                    model,
                    horizon,
                    n_points,
                    minus,
                }),
                estimate: est.map(|(horizon, bin_width)| EstimateConfig { horizon, bin_width }),
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn toml_round_trip(cfg in arb_config()) {
            let text = cfg.to_toml().unwrap();
            let back = ExperimentConfig::from_toml(&text).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}
