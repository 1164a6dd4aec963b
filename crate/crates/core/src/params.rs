//! Model parameters and the constants derived from them.
//!
//! The buffer-Hawkes process is driven by five rates:
//!
//! * `lambda0` – base arrival rate of limit orders,
//! * `a`, `b` – height and decay rate of the shot-noise pulse that each
//!   executed market order adds to the limit-order intensity,
//! * `c`, `d` – per-order execution and cancellation rates of resting orders.
//!
//! A [`ModelParams`] can only be obtained through validation, so every
//! downstream routine may assume `a*c < b*(c+d)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unvalidated parameter record, as read from configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    pub lambda0: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl RawParams {
    pub fn validate(self) -> Result<ModelParams> {
        validate_params(self.lambda0, self.a, self.b, self.c, self.d)
    }
}

/// Validated parameters of a buffer-Hawkes process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    lambda0: f64,
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        raw.validate()
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams {
            lambda0: p.lambda0,
            a: p.a,
            b: p.b,
            c: p.c,
            d: p.d,
        }
    }
}

/// Checks sign constraints and the stability condition `a*c < b*(c+d)`.
pub fn validate_params(lambda0: f64, a: f64, b: f64, c: f64, d: f64) -> Result<ModelParams> {
    let positive = [("lambda0", lambda0), ("b", b), ("c", c)];
    for (name, value) in positive {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::NonPositiveParameter {
                name,
                requirement: "finite and > 0",
                value,
            });
        }
    }
    for (name, value) in [("a", a), ("d", d)] {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(Error::NonPositiveParameter {
                name,
                requirement: "finite and >= 0",
                value,
            });
        }
    }
    let ac = a * c;
    let bcd = b * (c + d);
    if ac >= bcd {
        return Err(Error::StabilityViolation { ac, bcd });
    }
    Ok(ModelParams {
        lambda0,
        a,
        b,
        c,
        d,
    })
}

impl ModelParams {
    /// The `(λ₀, a, b, c, d) = (2, 1, 2, 1, 1)` preset. Its derived constants
    /// are all rational: ν = 1/4, q₋ = 1, q₊ = 3, σ² = 64/27.
    pub fn rational_example() -> Self {
        ModelParams {
            lambda0: 2.0,
            a: 1.0,
            b: 2.0,
            c: 1.0,
            d: 1.0,
        }
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn d(&self) -> f64 {
        self.d
    }

    /// Total departure rate `c + d` of a resting order.
    pub fn departure_rate(&self) -> f64 {
        self.c + self.d
    }

    /// Mean offspring `ν = ac / (b(c+d))` of the embedded branching process.
    pub fn nu(&self) -> f64 {
        self.a * self.c / (self.b * (self.c + self.d))
    }

    /// Rate of executed immigrant orders, `λ₀c/(c+d)`.
    pub fn root_rate(&self) -> f64 {
        self.lambda0 * self.c / (self.c + self.d)
    }

    pub fn raw(&self) -> RawParams {
        (*self).into()
    }

    pub fn derived(&self) -> DerivedConstants {
        derived_constants(self)
    }
}

impl std::fmt::Display for ModelParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "lambda0={} a={} b={} c={} d={}",
            self.lambda0, self.a, self.b, self.c, self.d
        )
    }
}

/// Constants that appear throughout the first/second moment formulas and the
/// diffusion limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub nu: f64,
    /// `Q = sqrt((b - c - d)^2 + 4ac)`.
    pub q: f64,
    pub q_minus: f64,
    pub q_plus: f64,
    /// Radius `-ln ν + ν - 1` of the cumulant domain; infinite when ν = 0.
    pub theta0: f64,
    pub ell_inf: f64,
    pub g_inf: f64,
    /// `E Z∞ = 1/(1-ν)`.
    pub x_inf: f64,
    /// `Var Z∞ = ν/(1-ν)^3`.
    pub y_inf: f64,
    /// Long-run execution rate `c g∞`.
    pub mean_rate: f64,
    /// Diffusion coefficient `λ₀c/(c+d) · x∞³`.
    pub sigma2: f64,
}

impl DerivedConstants {
    /// Asymptotic volatility `α²σ²/2` of the two-sided midprice with tick `alpha`.
    pub fn beta(&self, alpha: f64) -> f64 {
        alpha * alpha * self.sigma2 / 2.0
    }
}

pub fn derived_constants(p: &ModelParams) -> DerivedConstants {
    let e = p.c + p.d;
    let ac = p.a * p.c;
    let bcd = p.b * e;
    let q = ((p.b - e).powi(2) + 4.0 * ac).sqrt();
    let sum = p.b + e;
    // q₋ via the product keeps full relative precision when ac is small.
    let q_plus = (sum + q) / 2.0;
    let q_minus = (bcd - ac) / q_plus;
    let nu = p.nu();
    let theta0 = if nu == 0.0 {
        f64::INFINITY
    } else {
        -nu.ln() + nu - 1.0
    };
    let ell_inf = bcd * p.lambda0 / (bcd - ac);
    let g_inf = ell_inf / e;
    let x_inf = 1.0 / (1.0 - nu);
    let y_inf = nu / (1.0 - nu).powi(3);
    DerivedConstants {
        nu,
        q,
        q_minus,
        q_plus,
        theta0,
        ell_inf,
        g_inf,
        x_inf,
        y_inf,
        mean_rate: p.c * g_inf,
        sigma2: p.root_rate() * x_inf.powi(3),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn preset_is_valid() {
        assert!(validate_params(2.0, 1.0, 2.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn a_zero_is_valid_with_zero_nu() {
        let p = validate_params(2.0, 0.0, 2.0, 1.0, 1.0).unwrap();
        assert_eq!(p.nu(), 0.0);
    }

    #[test]
    fn unstable_parameters_are_rejected() {
        let err = validate_params(1.0, 4.0, 1.0, 1.0, 1.0).unwrap_err();
        assert_eq!(err, Error::StabilityViolation { ac: 4.0, bcd: 2.0 });
        // boundary case ac == b(c+d) is also unstable
        assert!(matches!(
            validate_params(1.0, 2.0, 1.0, 1.0, 1.0),
            Err(Error::StabilityViolation { .. })
        ));
    }

    #[test]
    fn sign_errors_name_the_field() {
        for (raw, field) in [
            ((0.0, 1.0, 2.0, 1.0, 1.0), "lambda0"),
            ((1.0, -1.0, 2.0, 1.0, 1.0), "a"),
            ((1.0, 1.0, 0.0, 1.0, 1.0), "b"),
            ((1.0, 1.0, 2.0, -0.5, 1.0), "c"),
            ((1.0, 1.0, 2.0, 1.0, -1.0), "d"),
            ((f64::NAN, 1.0, 2.0, 1.0, 1.0), "lambda0"),
        ] {
            match validate_params(raw.0, raw.1, raw.2, raw.3, raw.4) {
                Err(Error::NonPositiveParameter { name, .. }) => assert_eq!(name, field),
                other => panic!("expected sign error for {field}, got {other:?}"),
            }
        }
    }

    #[test]
    fn zero_cancellation_rate_allowed() {
        // d = 0 only needs a < b
        assert!(validate_params(1.0, 0.9, 1.0, 3.0, 0.0).is_ok());
        assert!(validate_params(1.0, 1.0, 1.0, 3.0, 0.0).is_err());
    }

    #[test]
    fn preset_constants() {
        let k = ModelParams::rational_example().derived();
        assert!(close(k.nu, 0.25, 1e-15));
        assert!(close(k.q, 2.0, 1e-15));
        assert!(close(k.q_minus, 1.0, 1e-15));
        assert!(close(k.q_plus, 3.0, 1e-15));
        assert!(close(k.x_inf, 4.0 / 3.0, 1e-15));
        assert!(close(k.y_inf, 16.0 / 27.0, 1e-15));
        assert!(close(k.sigma2, 64.0 / 27.0, 1e-15));
        assert!(close(k.ell_inf, 8.0 / 3.0, 1e-15));
        assert!(close(k.g_inf, 4.0 / 3.0, 1e-15));
        assert!(close(k.beta(1.0), 32.0 / 27.0, 1e-15));
    }

    #[test]
    fn feedback_free_constants() {
        let k = validate_params(2.0, 0.0, 2.0, 1.0, 1.0).unwrap().derived();
        assert_eq!(k.nu, 0.0);
        assert_eq!(k.x_inf, 1.0);
        assert_eq!(k.y_inf, 0.0);
        assert_eq!(k.sigma2, 1.0);
        assert!(k.theta0.is_infinite());
    }

    #[test]
    fn cumulant_radius() {
        let k = validate_params(1.0, 1.0, 3.0, 1.0, 1.0).unwrap().derived();
        assert!(close(k.nu, 1.0 / 6.0, 1e-15));
        assert!(close(k.theta0, 6f64.ln() + 1.0 / 6.0 - 1.0, 1e-14));
        assert!((k.theta0 - 0.95843).abs() < 1e-5);
    }

    #[test]
    fn root_identities_hold_for_random_params() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let b: f64 = rng.random_range(0.01..10.0);
            let c: f64 = rng.random_range(0.01..10.0);
            let d: f64 = rng.random_range(0.0..10.0);
            let a = rng.random_range(0.0..0.999) * b * (c + d) / c;
            let p = validate_params(1.0, a, b, c, d).unwrap();
            let k = p.derived();
            assert!(k.q_plus >= k.q_minus && k.q_minus > 0.0);
            let prod = b * (c + d) - a * c;
            assert!((k.q_minus * k.q_plus - prod).abs() <= 1e-12 * prod.max(1.0));
            assert!((k.q_minus + k.q_plus - (b + c + d)).abs() <= 1e-12 * (b + c + d));
            assert!((0.0..1.0).contains(&k.nu));
            assert!(k.x_inf >= 1.0 && k.sigma2 > 0.0);
        }
    }

    #[test]
    fn serde_rejects_unstable_input() {
        let ok: ModelParams =
            toml::from_str("lambda0 = 2.0\na = 1.0\nb = 2.0\nc = 1.0\nd = 1.0").unwrap();
        assert_eq!(ok, ModelParams::rational_example());
        let bad = toml::from_str::<ModelParams>("lambda0 = 1.0\na = 4.0\nb = 1.0\nc = 1.0\nd = 1.0");
        assert!(bad.is_err());
    }
}
