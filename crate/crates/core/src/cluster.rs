//! Market orders generated through the branching (cluster) representation.
//!
//! Limit orders arrive as immigrants at rate `λ₀`; each rests for an
//! `Exp(c+d)` time and is executed with probability `c/(c+d)`. Every executed
//! order triggers a shot-noise burst of limit orders whose executed members
//! are its children: `Poisson(ν)` of them, each born after an `Exp(b)` arrival
//! delay plus an `Exp(c+d)` resting time. This shares no sampling code with
//! [`crate::exact`], which makes the two simulators mutual oracles.

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::rng::path_rng;

/// Hard cap on the size of a single cascade.
pub const MAX_CLUSTER_NODES: usize = 10_000_000;

/// Draws children of one executed order.
#[derive(Debug, Clone)]
pub struct OffspringSampler {
    count: Option<Poisson<f64>>,
    arrival_delay: Exp<f64>,
    resting_time: Exp<f64>,
}

impl OffspringSampler {
    pub fn new(params: &ModelParams) -> Self {
        let nu = params.nu();
        OffspringSampler {
            count: (nu > 0.0).then(|| Poisson::new(nu).expect("0 < nu < 1")),
            arrival_delay: Exp::new(params.b()).expect("b > 0"),
            resting_time: Exp::new(params.departure_rate()).expect("c + d > 0"),
        }
    }

    /// Appends the birth times `≤ horizon` of the children of an order born at
    /// `parent_time`. Later births are dropped: their own descendants are
    /// necessarily later still.
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        parent_time: f64,
        horizon: f64,
        rng: &mut R,
        out: &mut Vec<f64>,
    ) {
        let Some(count) = &self.count else { return };
        let k = count.sample(rng) as u64;
        for _ in 0..k {
            let s = self.arrival_delay.sample(rng);
            let u = self.resting_time.sample(rng);
            let t = parent_time + s + u;
            if t <= horizon {
                out.push(t);
            }
        }
    }
}

/// Birth times of the children of an order executed at `parent_time`.
pub fn sample_offspring<R: Rng + ?Sized>(
    params: &ModelParams,
    parent_time: f64,
    horizon: f64,
    rng: &mut R,
) -> Vec<f64> {
    let mut out = Vec::new();
    OffspringSampler::new(params).sample_into(parent_time, horizon, rng, &mut out);
    out
}

/// Explores the cascade rooted at `root_time` depth-first with an explicit
/// stack. `visit(time, parent)` is called for each node, root first, and
/// returns the id that children will refer to.
fn grow_cascade<R, F>(
    sampler: &OffspringSampler,
    root_time: f64,
    horizon: f64,
    rng: &mut R,
    stack: &mut Vec<(f64, usize)>,
    scratch: &mut Vec<f64>,
    visit: &mut F,
) -> Result<usize>
where
    R: Rng + ?Sized,
    F: FnMut(f64, Option<usize>) -> usize,
{
    stack.clear();
    let root = visit(root_time, None);
    stack.push((root_time, root));
    let mut size = 1usize;
    while let Some((t, id)) = stack.pop() {
        scratch.clear();
        sampler.sample_into(t, horizon, rng, scratch);
        for &child in scratch.iter() {
            size += 1;
            if size > MAX_CLUSTER_NODES {
                return Err(Error::ClusterOverflow {
                    limit: MAX_CLUSTER_NODES,
                });
            }
            let cid = visit(child, Some(id));
            stack.push((child, cid));
        }
    }
    Ok(size)
}

/// Step path `Z_t = 1 + #{descendants born ≤ t}` of a single cascade rooted at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZPath {
    pub horizon: f64,
    /// Sorted birth times of all descendants (the root is excluded).
    pub births: Vec<f64>,
}

impl ZPath {
    pub fn z_at(&self, t: f64) -> u64 {
        if t < 0.0 {
            return 0;
        }
        1 + self.births.partition_point(|&b| b <= t) as u64
    }

    /// Value at the horizon; the total progeny when the horizon is infinite.
    pub fn total(&self) -> u64 {
        1 + self.births.len() as u64
    }
}

/// Simulates `Z` on `[0, horizon]`. An infinite horizon follows the cascade
/// to extinction.
pub fn simulate_z(params: &ModelParams, horizon: f64, seed: u64) -> Result<ZPath> {
    if horizon.is_nan() || horizon < 0.0 {
        return Err(Error::HorizonNonPositive(horizon));
    }
    let sampler = OffspringSampler::new(params);
    let mut rng = path_rng(seed);
    let mut births = Vec::new();
    let mut visit = |t: f64, parent: Option<usize>| {
        if parent.is_some() {
            births.push(t);
        }
        0
    };
    grow_cascade(
        &sampler,
        0.0,
        horizon,
        &mut rng,
        &mut Vec::new(),
        &mut Vec::new(),
        &mut visit,
    )?;
    births.sort_by(f64::total_cmp);
    Ok(ZPath { horizon, births })
}

/// Size `Z∞` of a complete cascade.
pub fn sample_total_progeny(params: &ModelParams, seed: u64) -> Result<u64> {
    let sampler = OffspringSampler::new(params);
    let mut rng = path_rng(seed);
    let size = grow_cascade(
        &sampler,
        0.0,
        f64::INFINITY,
        &mut rng,
        &mut Vec::new(),
        &mut Vec::new(),
        &mut |_, _| 0,
    )?;
    Ok(size as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterNode {
    /// Execution time of this market order.
    pub birth_time: f64,
    /// Index of the parent in [`ClusterSample::nodes`]; `None` for roots.
    pub parent: Option<usize>,
}

/// One realization of the cluster construction on `[-lookback, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSample {
    pub params: ModelParams,
    pub horizon: f64,
    pub seed: u64,
    pub lookback: f64,
    /// Limit orders arriving at base rate on `[-lookback, horizon]`.
    pub immigrant_count: u64,
    /// Immigrants that end up executed (at any time).
    pub root_count: u64,
    /// All executed orders born no later than `horizon`, parents before children.
    pub nodes: Vec<ClusterNode>,
    /// Sorted execution times inside `[0, horizon]`.
    pub order_times: Vec<f64>,
}

impl ClusterSample {
    pub fn roots(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.parent.is_none())
            .map(|(i, _)| i)
    }

    pub fn children(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.parent == Some(idx))
            .map(|(i, _)| i)
    }
}

struct Immigration {
    lookback: f64,
    horizon: f64,
}

/// Runs every cascade on `[-lookback, horizon]`, reporting nodes to `visit`.
/// Returns `(immigrants, roots)`.
fn run_clusters<F>(
    params: &ModelParams,
    window: Immigration,
    seed: u64,
    visit: &mut F,
) -> Result<(u64, u64)>
where
    F: FnMut(f64, Option<usize>) -> usize,
{
    let mut rng = path_rng(seed);
    let sampler = OffspringSampler::new(params);
    let gap = Exp::new(params.lambda0()).expect("lambda0 > 0");
    let resting = Exp::new(params.departure_rate()).expect("c + d > 0");
    let exec_prob = params.c() / params.departure_rate();
    let (mut stack, mut scratch) = (Vec::new(), Vec::new());
    let (mut immigrants, mut roots) = (0u64, 0u64);
    let mut s = -window.lookback;
    loop {
        s += gap.sample(&mut rng);
        if s > window.horizon {
            break;
        }
        immigrants += 1;
        if rng.random::<f64>() >= exec_prob {
            continue;
        }
        roots += 1;
        let t = s + resting.sample(&mut rng);
        if t <= window.horizon {
            grow_cascade(&sampler, t, window.horizon, &mut rng, &mut stack, &mut scratch, visit)?;
        }
    }
    Ok((immigrants, roots))
}

fn check_window(horizon: f64, lookback: f64) -> Result<()> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::HorizonNonPositive(horizon));
    }
    if !(lookback >= 0.0 && lookback.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lookback must be finite and >= 0, got {lookback}"
        )));
    }
    Ok(())
}

/// Builds the full cluster forest. With `lookback > 0` cascades rooted before
/// time zero contribute only their executions inside `[0, horizon]`.
pub fn simulate_market_orders(
    params: &ModelParams,
    horizon: f64,
    seed: u64,
    lookback: f64,
) -> Result<ClusterSample> {
    check_window(horizon, lookback)?;
    let mut nodes: Vec<ClusterNode> = Vec::new();
    let mut visit = |t: f64, parent: Option<usize>| {
        nodes.push(ClusterNode {
            birth_time: t,
            parent,
        });
        nodes.len() - 1
    };
    let (immigrant_count, root_count) =
        run_clusters(params, Immigration { lookback, horizon }, seed, &mut visit)?;
    let mut order_times: Vec<f64> = nodes
        .iter()
        .map(|n| n.birth_time)
        .filter(|&t| t >= 0.0)
        .collect();
    order_times.sort_by(f64::total_cmp);
    Ok(ClusterSample {
        params: *params,
        horizon,
        seed,
        lookback,
        immigrant_count,
        root_count,
        nodes,
        order_times,
    })
}

/// `N` on a grid, normalised so that the count at time zero is zero.
pub fn n_counts_at(sample: &ClusterSample, grid: &[f64]) -> Vec<u64> {
    counts_on_grid(&sample.order_times, grid)
}

fn counts_on_grid(sorted_times: &[f64], grid: &[f64]) -> Vec<u64> {
    let at_zero = sorted_times.partition_point(|&t| t <= 0.0);
    grid.iter()
        .map(|&g| (sorted_times.partition_point(|&t| t <= g) - at_zero) as u64)
        .collect()
}

/// Same law as [`n_counts_at`] after [`simulate_market_orders`] but without
/// materialising the forest.
pub fn sample_counts(
    params: &ModelParams,
    seed: u64,
    lookback: f64,
    grid: &[f64],
) -> Result<Vec<u64>> {
    let horizon = grid.iter().copied().fold(0.0, f64::max);
    check_window(horizon, lookback)?;
    let mut times = Vec::new();
    let mut visit = |t: f64, _: Option<usize>| {
        if t >= 0.0 {
            times.push(t);
        }
        0
    };
    run_clusters(params, Immigration { lookback, horizon }, seed, &mut visit)?;
    times.sort_by(f64::total_cmp);
    Ok(counts_on_grid(&times, grid))
}

/// Default lookback `40/q₋` for stationary sampling.
pub fn default_lookback(params: &ModelParams) -> f64 {
    40.0 / params.derived().q_minus
}
