//! Lambert-W (principal branch), the Borel distribution and the log-MGF of
//! the total progeny `Z∞`.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

// 1/e split into a double-double so the distance to the branch point can be
// formed without cancellation.
const INV_E_HI: f64 = 0.367_879_441_171_442_33;
const INV_E_LO: f64 = -1.242_875_367_278_836_3e-17;

const MAX_ITER: usize = 64;

/// Principal branch `W₀` of the Lambert-W function on `[-1/e, ∞)`.
///
/// Returns `w ≥ -1` with `w·e^w = x`. Inputs that fall below `-1/e` by no
/// more than rounding of the constant itself are mapped to `-1`.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::Domain {
            function: "lambert_w0",
            value: x,
            reason: "NaN input".into(),
        });
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let z = (x + INV_E_HI) + INV_E_LO;
    if z < -4.0 * f64::EPSILON * INV_E_HI {
        return Err(Error::Domain {
            function: "lambert_w0",
            value: x,
            reason: "below the branch point -1/e".into(),
        });
    }
    if z <= 0.0 {
        return Ok(-1.0);
    }

    let p = (2.0 * std::f64::consts::E * z).sqrt();
    if p < 1e-3 {
        // Truncation error of the branch-point series is O(p^8).
        return Ok(branch_point_series(p));
    }

    if x > std::f64::consts::E {
        return Ok(halley_log_form(x));
    }
    let guess = if x < -0.25 {
        branch_point_series(p)
    } else {
        x.ln_1p()
    };
    Ok(halley(x, guess))
}

/// Expansion of `W₀` in `p = sqrt(2(ex + 1))` about the branch point.
fn branch_point_series(p: f64) -> f64 {
    const C: [f64; 8] = [
        -1.0,
        1.0,
        -1.0 / 3.0,
        11.0 / 72.0,
        -43.0 / 540.0,
        769.0 / 17280.0,
        -221.0 / 8505.0,
        680_863.0 / 43_545_600.0,
    ];
    C.iter().rev().fold(0.0, |acc, &c| acc * p + c)
}

fn halley(x: f64, mut w: f64) -> f64 {
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let fp = ew * wp1;
        let step = f / (fp - (w + 2.0) * f / (2.0 * wp1));
        let next = (w - step).max(-1.0);
        if (next - w).abs() <= 4.0 * f64::EPSILON * (1.0 + next.abs()) {
            return next;
        }
        w = next;
    }
    w
}

/// Halley's method on `w + ln w - ln x = 0`, which avoids `e^w` overflow.
fn halley_log_form(x: f64) -> f64 {
    let lx = x.ln();
    let l2 = lx.ln();
    let mut w = if lx > 1.0 { lx - l2 + l2 / lx } else { 1.0 };
    for _ in 0..MAX_ITER {
        let g = w + w.ln() - lx;
        let gp = 1.0 + 1.0 / w;
        let gpp = -1.0 / (w * w);
        let step = g / (gp - g * gpp / (2.0 * gp));
        let next = w - step;
        if (next - w).abs() <= 4.0 * f64::EPSILON * next.abs() {
            return next;
        }
        w = next;
    }
    w
}

/// Borel probability `P(Z∞ = k) = (kν)^{k-1} e^{-νk} / k!`.
///
/// `nu = 0` is the point mass at `k = 1`. Underflow returns 0.
pub fn borel_pmf(k: u64, nu: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if nu == 0.0 {
        return if k == 1 { 1.0 } else { 0.0 };
    }
    let kf = k as f64;
    let log_p = (kf - 1.0) * (kf * nu).ln() - nu * kf - ln_gamma(kf + 1.0);
    log_p.exp()
}

/// Upper end `-ln ν + ν - 1` of the cumulant domain of `Z∞`.
pub fn cumulant_radius(nu: f64) -> f64 {
    if nu == 0.0 {
        f64::INFINITY
    } else {
        -nu.ln() + nu - 1.0
    }
}

/// `V∞(θ) = ln E[e^{θ Z∞}] = θ - ν - W₀(-ν e^{θ-ν})` for `θ < θ₀`.
pub fn v_infinity(theta: f64, nu: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&nu) {
        return Err(Error::Domain {
            function: "v_infinity",
            value: nu,
            reason: "mean offspring must lie in [0, 1)".into(),
        });
    }
    if nu == 0.0 {
        return Ok(theta);
    }
    let theta0 = cumulant_radius(nu);
    if !(theta < theta0) {
        return Err(Error::Domain {
            function: "v_infinity",
            value: theta,
            reason: format!("requires theta < theta0 = {theta0}"),
        });
    }
    let arg = -nu * (theta - nu).exp();
    let w = lambert_w0(arg.max(-INV_E_HI))?;
    Ok(theta - nu - w)
}
