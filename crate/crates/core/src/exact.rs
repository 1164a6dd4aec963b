//! Event-driven simulation of `X = (Λ, Γ, N)` straight from its generator.
//!
//! Between events `Λ` relaxes toward `λ₀` at rate `b`, so the total jump rate
//! `Λ_t + (c+d)Γ_t` is non-increasing and its value at the last event bounds
//! it until the next one. Event times are drawn by thinning against that
//! bound, which is exact. An accepted event is a limit arrival, a cancellation
//! or an execution in proportion to `Λ`, `dΓ` and `cΓ` at the accepted instant.

use rand::Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::rng::{path_rng, PathRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    LimitArrival,
    Cancellation,
    Execution,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::LimitArrival => "LIMIT_ARRIVAL",
            EventKind::Cancellation => "CANCELLATION",
            EventKind::Execution => "EXECUTION",
        }
    }
}

impl std::str::FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "LIMIT_ARRIVAL" => Ok(EventKind::LimitArrival),
            "CANCELLATION" => Ok(EventKind::Cancellation),
            "EXECUTION" => Ok(EventKind::Execution),
            other => Err(Error::InvalidArgument(format!("unknown event kind `{other}`"))),
        }
    }
}

/// State of the process together with the cumulative counters needed to
/// audit the book balance `gamma = l - k_cancelled - n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub t: f64,
    pub lambda: f64,
    pub gamma: u64,
    pub n: u64,
    pub l: u64,
    pub k_cancelled: u64,
}

impl SimState {
    /// Empty book at time zero with `Λ = λ₀`.
    pub fn empty(params: &ModelParams) -> Self {
        SimState {
            t: 0.0,
            lambda: params.lambda0(),
            gamma: 0,
            n: 0,
            l: 0,
            k_cancelled: 0,
        }
    }

    /// The same state observed at a later time `t` with no event in between.
    pub fn at(&self, params: &ModelParams, t: f64) -> SimState {
        SimState {
            t,
            lambda: evolve_lambda(self.lambda, params.lambda0(), params.b(), t - self.t),
            ..*self
        }
    }

    pub fn is_balanced(&self) -> bool {
        self.l.checked_sub(self.k_cancelled + self.n) == Some(self.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    /// State right after the event; `state.t` is the event time.
    pub state: SimState,
}

impl Event {
    pub fn time(&self) -> f64 {
        self.state.t
    }
}

/// Complete record of one simulated path on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub params: ModelParams,
    pub seed: u64,
    pub horizon: f64,
    pub init: SimState,
    pub events: Vec<Event>,
}

impl EventLog {
    /// Càdlàg state at time `t ∈ [init.t, horizon]`.
    pub fn state_at(&self, t: f64) -> SimState {
        let idx = self.events.partition_point(|e| e.state.t <= t);
        let last = if idx == 0 {
            &self.init
        } else {
            &self.events[idx - 1].state
        };
        last.at(&self.params, t)
    }

    pub fn final_state(&self) -> SimState {
        self.state_at(self.horizon)
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// `∫ Γ_s ds` over `[init.t, t]`.
    pub fn gamma_integral(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        let mut prev = &self.init;
        for e in &self.events {
            if e.state.t > t {
                break;
            }
            acc += prev.gamma as f64 * (e.state.t - prev.t);
            prev = &e.state;
        }
        acc + prev.gamma as f64 * (t - prev.t)
    }
}

/// `λ₀ + (λ - λ₀) e^{-b dt}`: the limit-order intensity `dt` after an event.
pub fn evolve_lambda(lambda_at_event: f64, lambda0: f64, b: f64, dt: f64) -> f64 {
    lambda0 + (lambda_at_event - lambda0) * (-b * dt).exp()
}

/// An accepted event relative to the state it was drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NextEvent {
    pub dt: f64,
    pub kind: EventKind,
    /// `Λ` at the event instant, before any jump.
    pub lambda: f64,
}

/// Picks the event type for a point `v ∈ [0, Λ + (c+d)Γ)` of the stacked
/// rates `[Λ | dΓ | cΓ]`.
pub fn classify(v: f64, lambda: f64, gamma: u64, params: &ModelParams) -> EventKind {
    let g = gamma as f64;
    if v < lambda {
        EventKind::LimitArrival
    } else if v < lambda + params.d() * g {
        EventKind::Cancellation
    } else {
        EventKind::Execution
    }
}

/// Draws the waiting time and type of the next event from `state`.
pub fn next_event<R: Rng + ?Sized>(state: &SimState, params: &ModelParams, rng: &mut R) -> NextEvent {
    let departures = params.departure_rate() * state.gamma as f64;
    let mut lambda = state.lambda;
    let mut elapsed = 0.0;
    loop {
        let bound = lambda + departures;
        let u: f64 = rng.sample(Open01);
        let dt = -u.ln() / bound;
        elapsed += dt;
        let lambda_now = evolve_lambda(lambda, params.lambda0(), params.b(), dt);
        let v = rng.random::<f64>() * bound;
        if v < lambda_now + departures {
            return NextEvent {
                dt: elapsed,
                kind: classify(v, lambda_now, state.gamma, params),
                lambda: lambda_now,
            };
        }
        lambda = lambda_now;
    }
}

fn apply(state: &SimState, next: &NextEvent, a: f64) -> SimState {
    let mut t = state.t + next.dt;
    if t <= state.t {
        t = state.t.next_up();
    }
    let mut s = SimState {
        t,
        lambda: next.lambda,
        ..*state
    };
    match next.kind {
        EventKind::LimitArrival => {
            s.gamma += 1;
            s.l += 1;
        }
        EventKind::Cancellation => {
            s.gamma -= 1;
            s.k_cancelled += 1;
        }
        EventKind::Execution => {
            s.gamma -= 1;
            s.n += 1;
            s.lambda += a;
        }
    }
    s
}

/// Snapshot of a path at a fixed time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    pub state: SimState,
    /// `∫ Γ_s ds` from the start of the path.
    pub gamma_integral: f64,
}

/// Streaming simulator: iterate it for events, or call [`advance_to`] to
/// read the path on a grid without storing events.
///
/// [`advance_to`]: PathSimulator::advance_to
pub struct PathSimulator<R = PathRng> {
    params: ModelParams,
    horizon: f64,
    state: SimState,
    rng: R,
    pending: Option<Event>,
    exhausted: bool,
    gamma_integral: f64,
}

impl PathSimulator<PathRng> {
    pub fn from_seed(params: ModelParams, horizon: f64, seed: u64, init: Option<SimState>) -> Self {
        let init = init.unwrap_or_else(|| SimState::empty(&params));
        PathSimulator::new(params, horizon, init, path_rng(seed))
    }
}

impl<R: Rng> PathSimulator<R> {
    pub fn new(params: ModelParams, horizon: f64, init: SimState, rng: R) -> Self {
        PathSimulator {
            params,
            horizon,
            state: init,
            rng,
            pending: None,
            exhausted: false,
            gamma_integral: 0.0,
        }
    }

    /// State right after the most recent event.
    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn into_rng(self) -> R {
        self.rng
    }

    fn fill(&mut self) {
        if self.pending.is_some() || self.exhausted {
            return;
        }
        let next = next_event(&self.state, &self.params, &mut self.rng);
        if self.state.t + next.dt > self.horizon {
            self.exhausted = true;
        } else {
            self.pending = Some(Event {
                kind: next.kind,
                state: apply(&self.state, &next, self.params.a()),
            });
        }
    }

    pub fn peek(&mut self) -> Option<&Event> {
        self.fill();
        self.pending.as_ref()
    }

    /// Consumes all events up to and including `t` and returns the state at `t`.
    pub fn advance_to(&mut self, t: f64) -> Snapshot {
        while self.peek().is_some_and(|e| e.state.t <= t) {
            self.next();
        }
        let dt = t - self.state.t;
        Snapshot {
            state: self.state.at(&self.params, t),
            gamma_integral: self.gamma_integral + self.state.gamma as f64 * dt,
        }
    }
}

impl<R: Rng> Iterator for PathSimulator<R> {
    type Item = Event;

    fn next(&mut self) -> Option<Event> {
        self.fill();
        let event = self.pending.take()?;
        self.gamma_integral += self.state.gamma as f64 * (event.state.t - self.state.t);
        self.state = event.state;
        Some(event)
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if horizon >= 0.0 && horizon.is_finite() {
        Ok(())
    } else {
        Err(Error::HorizonNonPositive(horizon))
    }
}

/// Simulates one path on `[init.t, horizon]`; defaults to an empty book at
/// time zero. A zero horizon yields an empty event list.
pub fn simulate_path(
    params: &ModelParams,
    horizon: f64,
    seed: u64,
    init: Option<SimState>,
) -> Result<EventLog> {
    check_horizon(horizon)?;
    let init = init.unwrap_or_else(|| SimState::empty(params));
    let events = if horizon > init.t {
        PathSimulator::new(*params, horizon, init, path_rng(seed)).collect()
    } else {
        Vec::new()
    };
    Ok(EventLog {
        params: *params,
        seed,
        horizon,
        init,
        events,
    })
}

/// Path values sampled on a time grid.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GridPath {
    pub t: Vec<f64>,
    pub lambda: Vec<f64>,
    pub gamma: Vec<u64>,
    pub n: Vec<u64>,
}

fn check_grid(grid: &[f64], start: f64, horizon: f64) -> Result<()> {
    let mut prev = start;
    for &g in grid {
        if !(g >= prev && g <= horizon) {
            return Err(Error::GridOutOfRange { point: g, horizon });
        }
        prev = g;
    }
    Ok(())
}

/// Evaluates a logged path on a non-decreasing grid inside `[init.t, horizon]`.
pub fn path_to_grid(log: &EventLog, grid: &[f64]) -> Result<GridPath> {
    check_grid(grid, log.init.t, log.horizon)?;
    let mut out = GridPath::default();
    for &g in grid {
        let s = log.state_at(g);
        out.t.push(g);
        out.lambda.push(s.lambda);
        out.gamma.push(s.gamma);
        out.n.push(s.n);
    }
    Ok(out)
}

/// Simulates a path and records snapshots on `grid` without keeping events.
pub fn sample_on_grid(
    params: &ModelParams,
    seed: u64,
    init: Option<SimState>,
    grid: &[f64],
) -> Result<Vec<Snapshot>> {
    let init = init.unwrap_or_else(|| SimState::empty(params));
    let horizon = grid.last().copied().unwrap_or(init.t);
    check_horizon(horizon)?;
    check_grid(grid, init.t, horizon)?;
    let mut sim = PathSimulator::new(*params, horizon, init, path_rng(seed));
    Ok(grid.iter().map(|&g| sim.advance_to(g)).collect())
}

/// Default burn-in `10/q₋`.
pub fn default_burn_in(params: &ModelParams) -> f64 {
    10.0 / params.derived().q_minus
}

/// Runs the process from an empty book for `burn_in` time units, then restarts
/// the clock and all counters at zero. Resting orders carried over are booked
/// as arrivals at time zero so that the balance identity still holds.
pub fn stationary_start<R: Rng>(params: &ModelParams, burn_in: f64, rng: &mut R) -> SimState {
    let empty = SimState::empty(params);
    if burn_in <= 0.0 {
        return empty;
    }
    let mut warm = PathSimulator::new(*params, burn_in, empty, &mut *rng);
    let s = warm.advance_to(burn_in).state;
    SimState {
        t: 0.0,
        lambda: s.lambda,
        gamma: s.gamma,
        n: 0,
        l: s.gamma,
        k_cancelled: 0,
    }
}

/// Approximation of the stationary-increments version: burn in from an empty
/// book and keep `[0, horizon]` of what follows.
pub fn simulate_stationary_path(
    params: &ModelParams,
    horizon: f64,
    burn_in: f64,
    seed: u64,
) -> Result<EventLog> {
    check_horizon(horizon)?;
    if !(burn_in >= 0.0 && burn_in.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "burn-in must be finite and >= 0, got {burn_in}"
        )));
    }
    let mut rng = path_rng(seed);
    let init = stationary_start(params, burn_in, &mut rng);
    let events = if horizon > 0.0 {
        PathSimulator::new(*params, horizon, init, &mut rng).collect()
    } else {
        Vec::new()
    };
    Ok(EventLog {
        params: *params,
        seed,
        horizon,
        init,
        events,
    })
}
