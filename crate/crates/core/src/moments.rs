//! Moments of the buffer-Hawkes process: closed-form means, the centred
//! second-moment ODE, cluster mean/variance, the cumulant ODE and the
//! stationary-increment statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{self, OdeOptions};
use crate::params::{DerivedConstants, ModelParams};
use crate::quad::{self, QuadOptions};

/// Below this `Q/(b+c+d)` the two roots are treated as a double root.
const DEGENERATE_Q: f64 = 1e-6;

/// Window (in units of the slowest decay time) that carries all but
/// `e^{-40}` of an exponentially decaying kernel.
const DECAY_WINDOWS: f64 = 40.0;

fn inner_quad() -> QuadOptions {
    QuadOptions {
        rtol: 1e-11,
        atol: 1e-15,
        ..Default::default()
    }
}

fn outer_quad() -> QuadOptions {
    QuadOptions {
        rtol: 1e-10,
        atol: 1e-13,
        ..Default::default()
    }
}

/// `(1 - e^{-x})/x`, continuous at 0.
fn phi1(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - 0.5 * x
    } else {
        -(-x).exp_m1() / x
    }
}

/// `(x - 1 + e^{-x})/x²`, continuous at 0.
fn phi2(x: f64) -> f64 {
    if x.abs() < 0.1 {
        // alternating series Σ (-x)^k / (k+2)!
        let mut term = 0.5;
        let mut sum = 0.5;
        for k in 1..12 {
            term *= -x / (k as f64 + 2.0);
            sum += term;
        }
        sum
    } else {
        (x + (-x).exp_m1()) / (x * x)
    }
}

/// The impulse response `h(s) = (e^{-q₋s} - e^{-q₊s})/(q₊ - q₋)` of the
/// linear first-moment system and its first two antiderivatives from 0.
#[derive(Debug, Clone, Copy)]
struct Kernel {
    q_minus: f64,
    q_plus: f64,
    q: f64,
    mid: f64,
    degenerate: bool,
}

impl Kernel {
    fn new(k: &DerivedConstants) -> Self {
        let mid = 0.5 * (k.q_minus + k.q_plus);
        Kernel {
            q_minus: k.q_minus,
            q_plus: k.q_plus,
            q: k.q,
            mid,
            degenerate: k.q < DEGENERATE_Q * 2.0 * mid,
        }
    }

    fn h(&self, t: f64) -> f64 {
        if self.degenerate {
            let half = 0.5 * self.q * t;
            let sinhc = if half == 0.0 { 1.0 } else { half.sinh() / half };
            (-self.mid * t).exp() * t * sinhc
        } else {
            ((-self.q_minus * t).exp() - (-self.q_plus * t).exp()) / self.q
        }
    }

    /// `∫₀ᵗ h`.
    fn h1(&self, t: f64) -> f64 {
        let e1 = |q: f64| t * phi1(q * t);
        if self.degenerate {
            let m = self.mid;
            (e1(m) - t * (-m * t).exp()) / m
        } else {
            (e1(self.q_minus) - e1(self.q_plus)) / self.q
        }
    }

    /// `∫₀ᵗ ∫₀ˢ h`.
    fn h2(&self, t: f64) -> f64 {
        let e2 = |q: f64| t * t * phi2(q * t);
        if self.degenerate {
            let m = self.mid;
            let de1 = (t * (-m * t).exp() - t * phi1(m * t)) / m;
            (de1 + e2(m)) / m
        } else {
            (e2(self.q_minus) - e2(self.q_plus)) / self.q
        }
    }
}

/// `(E Λ_t, E Γ_t, E N_t)` from an empty book.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstMoments {
    pub ell: f64,
    pub g: f64,
    pub m: f64,
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("time must be finite and >= 0, got {t}")))
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    let mut prev = 0.0;
    for &t in grid {
        check_time(t)?;
        if t < prev {
            return Err(Error::InvalidArgument(format!(
                "grid must be non-decreasing, {t} follows {prev}"
            )));
        }
        prev = t;
    }
    Ok(())
}

pub fn first_moments(p: &ModelParams, t: f64) -> Result<FirstMoments> {
    check_time(t)?;
    Ok(first_moments_unchecked(p, &Kernel::new(&p.derived()), t))
}

fn first_moments_unchecked(p: &ModelParams, k: &Kernel, t: f64) -> FirstMoments {
    let h1 = k.h1(t);
    FirstMoments {
        ell: p.lambda0() * (1.0 + p.a() * p.c() * h1),
        g: p.lambda0() * (k.h(t) + p.b() * h1),
        m: p.c() * p.lambda0() * (h1 + p.b() * k.h2(t)),
    }
}

/// `x_t = E Z_t`, the mean size by time `t` of a cluster rooted at 0.
pub fn cluster_mean(p: &ModelParams, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(1.0 + p.a() * p.c() * Kernel::new(&p.derived()).h1(t))
}

/// `y_t = Var Z_t = ac ∫₀ᵗ x_s² h(t-s) ds`.
pub fn cluster_var(p: &ModelParams, t: f64) -> Result<f64> {
    check_time(t)?;
    ClusterMoments::new(p).y(t)
}

/// Vectorised `x` and `y` sharing one kernel.
struct ClusterMoments {
    ac: f64,
    kernel: Kernel,
}

impl ClusterMoments {
    fn new(p: &ModelParams) -> Self {
        ClusterMoments {
            ac: p.a() * p.c(),
            kernel: Kernel::new(&p.derived()),
        }
    }

    fn x(&self, t: f64) -> f64 {
        1.0 + self.ac * self.kernel.h1(t)
    }

    fn y(&self, t: f64) -> Result<f64> {
        if self.ac == 0.0 || t == 0.0 {
            return Ok(0.0);
        }
        let f = |s: f64| {
            let x = self.x(s);
            x * x * self.kernel.h(t - s)
        };
        let window = DECAY_WINDOWS / self.kernel.q_minus;
        let split = (t - window).max(0.0);
        let o = inner_quad();
        let head = quad::integrate(f, 0.0, split, &o)?;
        let tail = quad::integrate(f, split, t, &o)?;
        Ok(self.ac * (head + tail))
    }

    fn second(&self, t: f64) -> Result<f64> {
        let x = self.x(t);
        Ok(x * x + self.y(t)?)
    }
}

/// `∫₀ᵗ f(u) k(t-u) du` for a kernel `k` that decays on the time scale
/// `1/rate`: the integral is split so the boundary layer near `u = t` gets
/// its own adaptive pass.
fn convolve_decaying<F>(f: F, t: f64, rate: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let split = (t - DECAY_WINDOWS / rate).max(0.0);
    let mut failure = None;
    let mut g = |u: f64| match f(u) {
        Ok(v) => v,
        Err(e) => {
            failure.get_or_insert(e);
            f64::NAN
        }
    };
    let o = outer_quad();
    let head = quad::integrate(&mut g, 0.0, split, &o);
    let tail = quad::integrate(&mut g, split, t, &o);
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(head? + tail?)
}

/// `Var N_t = (λ₀c/(c+d)) ∫₀ᵗ (y_u + x_u²)(1 - e^{-(c+d)(t-u)}) du`.
pub fn var_n_cluster(p: &ModelParams, t: f64) -> Result<f64> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let cm = ClusterMoments::new(p);
    let e = p.departure_rate();
    let integral = convolve_decaying(
        |u| Ok(cm.second(u)? * -(-e * (t - u)).exp_m1()),
        t,
        e,
    )?;
    Ok(p.root_rate() * integral)
}

/// Large-time limits of the moment curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentAsymptotes {
    pub ell: f64,
    pub g: f64,
    /// `lim m_t / t`.
    pub m_slope: f64,
    pub pbar: f64,
    pub qbar: f64,
    pub rbar: f64,
    pub ubar: f64,
    pub vbar: f64,
    /// `lim w̄_t / t = σ²`.
    pub wbar_slope: f64,
    pub x: f64,
    pub y: f64,
}

fn solve3(mut m: [[f64; 4]; 3]) -> [f64; 3] {
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            let top = m[col];
            for (x, y) in m[row][col..].iter_mut().zip(&top[col..]) {
                *x -= f * y;
            }
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (m[row][3] - s) / m[row][row];
    }
    x
}

pub fn moment_asymptotes(p: &ModelParams) -> MomentAsymptotes {
    let k = p.derived();
    let (a, b, c) = (p.a(), p.b(), p.c());
    let e = p.departure_rate();
    let ac = a * c;
    let (ell, g) = (k.ell_inf, k.g_inf);
    let [pbar, qbar, rbar] = solve3([
        [-(b + e), 1.0, ac, ac * g],
        [2.0 * ac, -2.0 * b, 0.0, -c * a * a * g],
        [2.0, 0.0, -2.0 * e, -(ell + e * g)],
    ]);
    // -b u + ac v = -(ac g + c p);  u - e v = -c (r - g)
    let r1 = -(ac * g + c * pbar);
    let r2 = -c * (rbar - g);
    let det = b * e - ac;
    let ubar = (r1 * -e - ac * r2) / det;
    let vbar = (-b * r2 - r1) / det;
    MomentAsymptotes {
        ell,
        g,
        m_slope: k.mean_rate,
        pbar,
        qbar,
        rbar,
        ubar,
        vbar,
        wbar_slope: 2.0 * c * vbar + c * g,
        x: k.x_inf,
        y: k.y_inf,
    }
}

/// First and centred second moments on a time grid, from an empty book.
///
/// `pbar = Cov(Λ,Γ)`, `qbar = Var Λ`, `rbar = Var Γ`, `ubar = Cov(Λ,N)`,
/// `vbar = Cov(Γ,N)`, `wbar = Var N`; `x`, `y` are the cluster mean and
/// variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCurves {
    pub params: ModelParams,
    pub grid: Vec<f64>,
    pub ell: Vec<f64>,
    pub g: Vec<f64>,
    pub m: Vec<f64>,
    pub pbar: Vec<f64>,
    pub qbar: Vec<f64>,
    pub rbar: Vec<f64>,
    pub ubar: Vec<f64>,
    pub vbar: Vec<f64>,
    pub wbar: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub asymptotes: MomentAsymptotes,
}

impl MomentCurves {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

pub fn second_moments(p: &ModelParams, grid: &[f64]) -> Result<MomentCurves> {
    second_moments_with(p, grid, &OdeOptions::default())
}

/// Right-hand side of the centred second-moment system
/// `(p̄, q̄, r̄, ū, v̄, w̄)` given the means `ℓ`, `g` at the same instant.
fn centred_rhs(p: &ModelParams, ell: f64, g: f64, y: &[f64; 6]) -> [f64; 6] {
    let (a, b, c) = (p.a(), p.b(), p.c());
    let e = p.departure_rate();
    let ac = a * c;
    let [pb, qb, rb, ub, vb, _] = *y;
    [
        -(b + e) * pb + qb + ac * rb - ac * g,
        2.0 * ac * pb - 2.0 * b * qb + c * a * a * g,
        2.0 * pb - 2.0 * e * rb + ell + e * g,
        -b * ub + ac * vb + ac * g + c * pb,
        ub - e * vb + c * rb - c * g,
        2.0 * c * vb + c * g,
    ]
}

pub fn second_moments_with(
    p: &ModelParams,
    grid: &[f64],
    opts: &OdeOptions,
) -> Result<MomentCurves> {
    check_grid(grid)?;
    let kernel = Kernel::new(&p.derived());
    let sol = ode::integrate(
        |t, y| {
            let fm = first_moments_unchecked(p, &kernel, t);
            centred_rhs(p, fm.ell, fm.g, y)
        },
        0.0,
        [0.0; 6],
        grid,
        opts,
    )?;
    let cm = ClusterMoments::new(p);
    let n = grid.len();
    let mut curves = MomentCurves {
        params: *p,
        grid: grid.to_vec(),
        ell: Vec::with_capacity(n),
        g: Vec::with_capacity(n),
        m: Vec::with_capacity(n),
        pbar: Vec::with_capacity(n),
        qbar: Vec::with_capacity(n),
        rbar: Vec::with_capacity(n),
        ubar: Vec::with_capacity(n),
        vbar: Vec::with_capacity(n),
        wbar: Vec::with_capacity(n),
        x: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        asymptotes: moment_asymptotes(p),
    };
    for (&t, s) in grid.iter().zip(&sol) {
        let fm = first_moments_unchecked(p, &kernel, t);
        curves.ell.push(fm.ell);
        curves.g.push(fm.g);
        curves.m.push(fm.m);
        curves.pbar.push(s[0]);
        curves.qbar.push(s[1]);
        curves.rbar.push(s[2]);
        curves.ubar.push(s[3]);
        curves.vbar.push(s[4]);
        curves.wbar.push(s[5]);
        curves.x.push(cm.x(t));
        curves.y.push(cm.y(t)?);
    }
    Ok(curves)
}

fn check_theta(p: &ModelParams, theta: f64, function: &'static str) -> Result<f64> {
    let theta0 = p.derived().theta0;
    if !(theta < theta0) || theta.is_nan() {
        return Err(Error::Domain {
            function,
            value: theta,
            reason: format!("requires theta < theta0 = {theta0}"),
        });
    }
    Ok(theta0)
}

fn cumulant_opts(theta: f64) -> OdeOptions {
    // V and everything built from it scale with θ near 0
    OdeOptions::with_tolerances(1e-11, 1e-14 * theta.abs().max(1e-300))
}

/// Right-hand side of `V'' + (b+c+d)V' + b(c+d)V = b(c+d)θ + ac(e^V - 1)`
/// as a first-order system.
fn cumulant_rhs(p: &ModelParams, theta: f64, v: f64, dv: f64) -> [f64; 2] {
    let e = p.departure_rate();
    let bcd = p.b() * e;
    [
        dv,
        bcd * theta + p.a() * p.c() * v.exp_m1() - (p.b() + e) * dv - bcd * v,
    ]
}

/// `V_t(θ) = ln E[e^{θ Z_t}]` on `grid`.
pub fn cumulant_v(p: &ModelParams, theta: f64, grid: &[f64]) -> Result<Vec<f64>> {
    check_theta(p, theta, "cumulant_v")?;
    check_grid(grid)?;
    if theta == 0.0 {
        return Ok(vec![0.0; grid.len()]);
    }
    let sol = ode::integrate(
        |_, y: &[f64; 2]| cumulant_rhs(p, theta, y[0], y[1]),
        0.0,
        [theta, 0.0],
        grid,
        &cumulant_opts(theta),
    )?;
    Ok(sol.into_iter().map(|s| s[0]).collect())
}

/// `ln E[e^{θ N_t}]` for each `t` in `grid`.
///
/// The convolution `∫₀ᵗ (e^{V_u} - 1)(1 - e^{-(c+d)(t-u)}) du` is carried as
/// two extra ODE states, `A' = e^V - 1` and `B' = e^V - 1 - (c+d)B`, so the
/// whole grid costs one integration.
pub fn log_mgf_n_on_grid(p: &ModelParams, theta: f64, grid: &[f64]) -> Result<Vec<f64>> {
    check_theta(p, theta, "log_mgf_n")?;
    check_grid(grid)?;
    if theta == 0.0 {
        return Ok(vec![0.0; grid.len()]);
    }
    let e = p.departure_rate();
    let sol = ode::integrate(
        |_, y: &[f64; 4]| {
            let [dv, ddv] = cumulant_rhs(p, theta, y[0], y[1]);
            let f = y[0].exp_m1();
            [dv, ddv, f, f - e * y[3]]
        },
        0.0,
        [theta, 0.0, 0.0, 0.0],
        grid,
        &cumulant_opts(theta),
    )?;
    let kappa = p.root_rate();
    Ok(sol.into_iter().map(|s| kappa * (s[2] - s[3])).collect())
}

pub fn log_mgf_n(p: &ModelParams, theta: f64, t: f64) -> Result<f64> {
    Ok(log_mgf_n_on_grid(p, theta, &[t])?[0])
}

/// Mean and covariance structure of the stationary-increments version `Ñ`
/// of the execution counter, i.e. limit orders initiated on the whole line.
#[derive(Debug, Clone, Copy)]
pub struct StationaryStats {
    params: ModelParams,
    constants: DerivedConstants,
    kernel: Kernel,
}

pub fn stationary_stats(p: &ModelParams) -> StationaryStats {
    let constants = p.derived();
    StationaryStats {
        params: *p,
        constants,
        kernel: Kernel::new(&constants),
    }
}

impl StationaryStats {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// `E Ñ_t / t = λ₀cb/(b(c+d) - ac)`.
    pub fn mean_slope(&self) -> f64 {
        let p = &self.params;
        p.lambda0() * p.c() * p.b() / (p.b() * p.departure_rate() - p.a() * p.c())
    }

    pub fn mean(&self, t: f64) -> f64 {
        self.mean_slope() * t
    }

    /// `Var Ñ_t = (λ₀c/(c+d)) [∫₀ᵗ (x_s² + y_s) ds + ∫₀^∞ w_r(t) dr]`.
    pub fn var(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let cm = ClusterMoments::new(&self.params);
        let mut failure = None;
        let second = quad::integrate(
            |s| match cm.second(s) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            0.0,
            t,
            &outer_quad(),
        );
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(self.params.root_rate() * (second? + self.w_integral(t)?))
    }

    /// `Cov(Ñ_s, Ñ_t - Ñ_s)` for `0 ≤ s ≤ t`.
    pub fn increment_cov(&self, s: f64, t: f64) -> Result<f64> {
        check_time(s)?;
        check_time(t)?;
        if s > t {
            return Err(Error::InvalidArgument(format!("cov needs s <= t, got s={s} t={t}")));
        }
        Ok(0.5 * (self.var(t)? - self.var(s)? - self.var(t - s)?))
    }

    /// `∫₀^∞ E[(Z_{r+t} - Z_r)²] dr`, which stays bounded in `t`.
    pub fn w_integral(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let nu = self.constants.nu;
        let mean_part = self.squared_mean_increment_integral(t)?;
        if nu == 0.0 {
            return Ok(mean_part);
        }
        let p = &self.params;
        let b = p.b();
        let delta = p.departure_rate() - b;
        // P(S + U > z) for S ~ Exp(b), U ~ Exp(c+d), stable through b = c+d
        let tail = move |z: f64| (-b * z).exp() * (1.0 + b * z * phi1(delta * z));
        let cm = ClusterMoments::new(p);
        let conv = convolve_decaying(
            |u| Ok(tail(t - u) * cm.second(u)?),
            t,
            b.min(p.departure_rate()),
        )?;
        Ok(mean_part / (1.0 - nu) + nu / (1.0 - nu) * conv)
    }

    /// `∫₀^∞ (x_{r+t} - x_r)² dr`.
    fn squared_mean_increment_integral(&self, t: f64) -> Result<f64> {
        let p = &self.params;
        let ac = p.a() * p.c();
        if ac == 0.0 {
            return Ok(0.0);
        }
        let k = &self.kernel;
        if !k.degenerate {
            // x_{r+t} - x_r = A e^{-q₋r} - B e^{-q₊r}
            let (qm, qp) = (k.q_minus, k.q_plus);
            let amp_a = ac / (k.q * qm) * -(-qm * t).exp_m1();
            let amp_b = ac / (k.q * qp) * -(-qp * t).exp_m1();
            return Ok(amp_a * amp_a / (2.0 * qm) - 2.0 * amp_a * amp_b / (qm + qp)
                + amp_b * amp_b / (2.0 * qp));
        }
        quad::integrate_to_infinity(
            |r| {
                let d = ac * (k.h1(r + t) - k.h1(r));
                d * d
            },
            0.0,
            &outer_quad(),
        )
    }
}

#[cfg(test)]
mod tests {
    use crate::special;
    use super::*;
    use crate::params::validate_params;

    fn preset() -> ModelParams {
        ModelParams::rational_example()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn first_moments_at_zero() {
        let fm = first_moments(&preset(), 0.0).unwrap();
        assert_eq!(fm, FirstMoments { ell: 2.0, g: 0.0, m: 0.0 });
        assert!(first_moments(&preset(), -1.0).is_err());
    }

    #[test]
    fn first_moments_limits() {
        let p = preset();
        let fm = first_moments(&p, 60.0).unwrap();
        assert!((fm.ell - 8.0 / 3.0).abs() < 1e-12);
        assert!((fm.g - 4.0 / 3.0).abs() < 1e-12);
        let slope = (first_moments(&p, 60.0).unwrap().m - first_moments(&p, 50.0).unwrap().m) / 10.0;
        assert!((slope - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn feedback_free_buffer() {
        let p = validate_params(2.0, 0.0, 2.0, 1.0, 1.0).unwrap();
        let fm = first_moments(&p, 1.0).unwrap();
        assert_eq!(fm.ell, 2.0);
        assert!((fm.g - (1.0 - (-2f64).exp())).abs() < 1e-12);
        assert!((fm.g - 0.864_665).abs() < 1e-6);
        // m_t = c ∫ g = t - (1 - e^{-2t})/2
        assert!((fm.m - (1.0 - 0.5 * (1.0 - (-2f64).exp()))).abs() < 1e-12);
    }

    #[test]
    fn first_moments_solve_their_ode() {
        // ℓ' = -b(ℓ - λ₀) + a c g, g' = ℓ - (c+d) g, m' = c g
        for p in [
            preset(),
            validate_params(1.3, 0.7, 0.9, 2.0, 0.4).unwrap(),
            validate_params(1.0, 0.0, 2.0, 1.5, 0.5).unwrap(),
        ] {
            let sol = ode::integrate(
                |_, y: &[f64; 3]| {
                    [
                        -p.b() * (y[0] - p.lambda0()) + p.a() * p.c() * y[1],
                        y[0] - p.departure_rate() * y[1],
                        p.c() * y[1],
                    ]
                },
                0.0,
                [p.lambda0(), 0.0, 0.0],
                &[0.5, 3.0, 17.0],
                &OdeOptions::with_tolerances(1e-12, 1e-14),
            )
            .unwrap();
            for (t, y) in [0.5, 3.0, 17.0].iter().zip(sol) {
                let fm = first_moments(&p, *t).unwrap();
                assert!(rel(fm.ell, y[0]) < 1e-9, "{p} t={t}");
                assert!(rel(fm.g, y[1]) < 1e-9, "{p} t={t}");
                assert!(rel(fm.m, y[2]) < 1e-9, "{p} t={t}");
            }
        }
    }

    #[test]
    fn double_root_matches_nearby_simple_roots() {
        // a = 0 and b = c + d gives Q = 0
        let p0 = validate_params(2.0, 0.0, 2.0, 1.0, 1.0).unwrap();
        assert_eq!(p0.derived().q, 0.0);
        let p1 = validate_params(2.0, 0.0, 2.0 + 1e-4, 1.0, 1.0).unwrap();
        let p2 = validate_params(2.0, 1e-12, 2.0, 1.0, 1.0).unwrap();
        for t in [0.1, 1.0, 5.0] {
            let a = first_moments(&p0, t).unwrap();
            let b = first_moments(&p1, t).unwrap();
            let c = first_moments(&p2, t).unwrap();
            assert!(rel(a.g, b.g) < 1e-4 && rel(a.m, b.m) < 1e-4, "t={t}");
            assert!(rel(a.g, c.g) < 1e-9 && rel(a.m, c.m) < 1e-9, "t={t}");
        }
    }

    #[test]
    fn cluster_mean_closed_form() {
        let p = preset();
        for t in [0.0f64, 0.3, 1.0, 4.0, 30.0] {
            let expect = 1.0 + 0.5 * ((1.0 - (-t).exp()) - (1.0 - (-3.0 * t).exp()) / 3.0);
            assert!((cluster_mean(&p, t).unwrap() - expect).abs() < 1e-14);
        }
        assert!((cluster_mean(&p, 80.0).unwrap() - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn cluster_var_limits_and_ode() {
        let p = preset();
        assert_eq!(cluster_var(&p, 0.0).unwrap(), 0.0);
        assert!((cluster_var(&p, 80.0).unwrap() - 16.0 / 27.0).abs() < 1e-9);
        // y'' + (q₋+q₊) y' + q₋q₊ y = ac x²
        let sol = ode::integrate(
            |t, y: &[f64; 2]| {
                let x = cluster_mean(&p, t).unwrap();
                [y[1], x * x - 4.0 * y[1] - 3.0 * y[0]]
            },
            0.0,
            [0.0, 0.0],
            &[0.5, 2.0, 7.0],
            &OdeOptions::with_tolerances(1e-12, 1e-14),
        )
        .unwrap();
        for (t, y) in [0.5, 2.0, 7.0].iter().zip(sol) {
            assert!(rel(cluster_var(&p, *t).unwrap(), y[0]) < 1e-9, "t={t}");
        }
    }

    #[test]
    fn preset_asymptotes() {
        let a = moment_asymptotes(&preset());
        assert!((a.pbar - 1.0 / 9.0).abs() < 1e-14);
        assert!((a.qbar - 7.0 / 18.0).abs() < 1e-14);
        assert!((a.rbar - 25.0 / 18.0).abs() < 1e-14);
        assert!((a.ubar - 53.0 / 54.0).abs() < 1e-14);
        assert!((a.vbar - 14.0 / 27.0).abs() < 1e-14);
        assert!((a.wbar_slope - 64.0 / 27.0).abs() < 1e-14);
    }

    #[test]
    fn printed_covariance_limit_general() {
        // p̄∞ = c a² (c+d) g∞ / (2 (b+c+d)(b(c+d) - ac))
        let p = validate_params(1.3, 0.7, 0.9, 2.0, 0.4).unwrap();
        let k = p.derived();
        let (a, b, c, e) = (p.a(), p.b(), p.c(), p.departure_rate());
        let expect = c * a * a * e * k.g_inf / (2.0 * (b + e) * (b * e - a * c));
        assert!(rel(moment_asymptotes(&p).pbar, expect) < 1e-12);
        assert!(rel(moment_asymptotes(&p).wbar_slope, k.sigma2) < 1e-12);
    }

    #[test]
    fn second_moments_reach_steady_state() {
        let p = preset();
        let c = second_moments(&p, &[0.0, 1.0, 50.0, 60.0]).unwrap();
        for arr in [&c.pbar, &c.qbar, &c.rbar, &c.ubar, &c.vbar, &c.wbar] {
            assert_eq!(arr[0], 0.0);
        }
        assert_eq!((c.ell[0], c.g[0], c.m[0], c.x[0], c.y[0]), (2.0, 0.0, 0.0, 1.0, 0.0));
        let a = c.asymptotes;
        for i in [2, 3] {
            assert!((c.pbar[i] - a.pbar).abs() < 1e-6);
            assert!((c.qbar[i] - a.qbar).abs() < 1e-6);
            assert!((c.rbar[i] - a.rbar).abs() < 1e-6);
            assert!((c.ubar[i] - a.ubar).abs() < 1e-6);
            assert!((c.vbar[i] - a.vbar).abs() < 1e-6);
        }
        let slope = (c.wbar[3] - c.wbar[2]) / 10.0;
        assert!(rel(slope, 64.0 / 27.0) < 1e-3, "{slope}");
    }

    #[test]
    fn m_mm_infinity_buffer_at_a_zero() {
        // Γ is an M/M/∞ queue: Poisson with mean g_t, so Var Γ_t = g_t
        let p = validate_params(2.0, 0.0, 3.0, 1.0, 0.5).unwrap();
        let c = second_moments(&p, &[0.5, 2.0, 40.0]).unwrap();
        for i in 0..3 {
            assert!((c.rbar[i] - c.g[i]).abs() < 1e-8);
            assert!(c.qbar[i].abs() < 1e-12 && c.pbar[i].abs() < 1e-12);
        }
        assert!((c.rbar[2] - 2.0 / 1.5).abs() < 1e-8);
    }

    #[test]
    fn halving_the_step_is_invisible() {
        let p = preset();
        let grid: Vec<f64> = (0..=20).map(|i| i as f64).collect();
        let coarse = OdeOptions { h_max: 0.02, ..OdeOptions::with_tolerances(1e-12, 1e-14) };
        let fine = OdeOptions { h_max: 0.01, ..coarse };
        let a = second_moments_with(&p, &grid, &coarse).unwrap();
        let b = second_moments_with(&p, &grid, &fine).unwrap();
        for i in 1..grid.len() {
            for (x, y) in [(&a.pbar, &b.pbar), (&a.rbar, &b.rbar), (&a.vbar, &b.vbar), (&a.wbar, &b.wbar)] {
                assert!(rel(x[i], y[i]) < 1e-8, "t={}", grid[i]);
            }
        }
    }

    #[test]
    fn var_n_cluster_agrees_with_ode() {
        let p = preset();
        let grid = [1.0, 5.0, 20.0];
        let c = second_moments(&p, &grid).unwrap();
        assert_eq!(var_n_cluster(&p, 0.0).unwrap(), 0.0);
        for (i, &t) in grid.iter().enumerate() {
            let v = var_n_cluster(&p, t).unwrap();
            assert!(rel(v, c.wbar[i]) < 1e-6, "t={t}: {v} vs {}", c.wbar[i]);
        }
    }

    #[test]
    fn var_n_cluster_slope() {
        let p = preset();
        let slope = (var_n_cluster(&p, 200.0).unwrap() - var_n_cluster(&p, 100.0).unwrap()) / 100.0;
        assert!(rel(slope, 64.0 / 27.0) < 1e-6);
    }

    #[test]
    fn cumulant_trivial_cases() {
        let p = preset();
        assert_eq!(cumulant_v(&p, 0.0, &[0.0, 5.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(log_mgf_n(&p, 0.0, 3.0).unwrap(), 0.0);
        let theta0 = p.derived().theta0;
        assert!(matches!(cumulant_v(&p, theta0, &[1.0]), Err(Error::Domain { .. })));
        let free = validate_params(2.0, 0.0, 2.0, 1.0, 1.0).unwrap();
        let v = cumulant_v(&free, 0.7, &[0.0, 1.0, 9.0]).unwrap();
        assert!(v.iter().all(|x| (x - 0.7).abs() < 1e-12));
    }

    #[test]
    fn cumulant_converges_to_lambert_limit() {
        let p = preset();
        let k = p.derived();
        for theta in [-1.0, -0.2, 0.3] {
            let v = cumulant_v(&p, theta, &[1.0, 5.0, 60.0 / k.q_minus]).unwrap();
            let vinf = special::v_infinity(theta, k.nu).unwrap();
            assert!((v[2] - vinf).abs() < 1e-6, "theta={theta}");
            // Z_t <= Z∞ pathwise, so the ordering flips with the sign of θ
            if theta >= 0.0 {
                assert!(v.iter().all(|&x| x <= vinf + 1e-12 && x <= -k.nu.ln()));
            } else {
                assert!(v.iter().all(|&x| x >= vinf - 1e-12 && x <= 0.0));
            }
        }
    }

    #[test]
    fn log_mgf_derivatives_give_mean_and_variance() {
        let p = preset();
        let grid = [1.0, 5.0, 20.0];
        let h = 1e-5;
        let up = log_mgf_n_on_grid(&p, h, &grid).unwrap();
        let dn = log_mgf_n_on_grid(&p, -h, &grid).unwrap();
        let h2 = 1e-3;
        let up2 = log_mgf_n_on_grid(&p, h2, &grid).unwrap();
        let dn2 = log_mgf_n_on_grid(&p, -h2, &grid).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            let mean = (up[i] - dn[i]) / (2.0 * h);
            let m = first_moments(&p, t).unwrap().m;
            assert!(rel(mean, m) < 1e-4, "t={t}: {mean} vs {m}");
            let var = (up2[i] + dn2[i]) / (h2 * h2);
            let v = var_n_cluster(&p, t).unwrap();
            assert!(rel(var, v) < 1e-3, "t={t}: {var} vs {v}");
        }
    }

    #[test]
    fn stationary_mean_and_variance() {
        let s = stationary_stats(&preset());
        assert!((s.mean_slope() - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.var(0.0).unwrap(), 0.0);
        let v = s.var(200.0).unwrap();
        assert!(rel(v / 200.0, 64.0 / 27.0) < 0.01, "{}", v / 200.0);
    }

    #[test]
    fn stationary_variance_matches_moment_ode_from_equilibrium() {
        // Started from the stationary law, the centred system has constant
        // forcing ℓ∞, g∞ and initial covariances p̄∞, q̄∞, r̄∞.
        for p in [preset(), validate_params(1.3, 0.7, 0.9, 2.0, 0.4).unwrap()] {
            let a = moment_asymptotes(&p);
            let grid = [0.5, 2.0, 10.0];
            let sol = ode::integrate(
                |_, y| centred_rhs(&p, a.ell, a.g, y),
                0.0,
                [a.pbar, a.qbar, a.rbar, 0.0, 0.0, 0.0],
                &grid,
                &OdeOptions::with_tolerances(1e-11, 1e-13),
            )
            .unwrap();
            let s = stationary_stats(&p);
            for (t, y) in grid.iter().zip(sol) {
                let v = s.var(*t).unwrap();
                assert!(rel(v, y[5]) < 1e-7, "{p} t={t}: {v} vs {}", y[5]);
            }
        }
    }

    #[test]
    fn w_integral_is_bounded() {
        let s = stationary_stats(&preset());
        let w: Vec<f64> = [1.0, 10.0, 100.0, 1000.0].iter().map(|&t| s.w_integral(t).unwrap()).collect();
        assert!(w.windows(2).all(|p| p[1] >= p[0] - 1e-9));
        assert!((w[3] - w[2]).abs() < 1e-6, "{w:?}");
    }

    #[test]
    fn w_integral_through_b_equal_departure_rate() {
        let at = |b: f64| stationary_stats(&validate_params(2.0, 1.0, b, 1.0, 1.0).unwrap()).w_integral(3.0).unwrap();
        let (lo, mid, hi) = (at(2.0 - 1e-7), at(2.0), at(2.0 + 1e-7));
        assert!(rel(mid, 0.5 * (lo + hi)) < 1e-6);
    }

    #[test]
    fn increment_covariance_is_sublinear() {
        let s = stationary_stats(&preset());
        let c: Vec<f64> = [10.0, 100.0, 1000.0]
            .iter()
            .map(|&m| s.increment_cov(m, 2.0 * m).unwrap().abs() / m)
            .collect();
        assert!(c[1] < c[0] && c[2] < c[1], "{c:?}");
        assert!(s.increment_cov(2.0, 1.0).is_err());
    }
}
