//! Quadrature kit: Gauss-Legendre panels for smooth integrands and tanh-sinh
//! (double exponential) for integrable endpoint singularities.
//!
//! Truncated-moment oracles integrate densities with algebraic endpoint
//! behavior, the characteristic functional needs z-integrals with a z^{1-gamma}
//! singularity at 0, and stable densities need oscillatory cosine transforms
//! (assembled from per-half-period Gauss panels elsewhere). Everything here is
//! deterministic with explicit tolerances; failures surface as numerical
//! errors, never silent truncation.

use crate::error::{Error, Result};
use std::sync::OnceLock;

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence. Accurate to machine precision for the n used here.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2, "need at least two nodes");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// (P_n(x), P_n'(x)) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn gl32() -> &'static (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    CACHE.get_or_init(|| gauss_legendre(32))
}

/// Fixed 32-point Gauss-Legendre on [a, b]. Exact for degree <= 63.
pub fn gl_panel(mut f: impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    let (nodes, weights) = gl32();
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = 0.0;
    for (&x, &w) in nodes.iter().zip(weights) {
        acc += w * f(c + h * x);
    }
    acc * h
}

/// Adaptive Gauss-Legendre by panel bisection. The error estimate per panel is
/// the difference between one 32-point pass and two half-panels.
pub fn adaptive_gl(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn recurse(
        f: &mut impl FnMut(f64) -> f64,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let left = gl_panel(&mut *f, a, m);
        let right = gl_panel(&mut *f, m, b);
        let err = (left + right - whole).abs();
        if err < tol || b - a < 1e-14 * (b.abs() + a.abs() + 1.0) {
            return Ok(left + right);
        }
        if depth == 0 {
            return Err(Error::numerical(format!(
                "adaptive quadrature stalled on [{a}, {b}], residual {err:.3e}"
            )));
        }
        let half_tol = 0.5 * tol;
        Ok(recurse(f, a, m, left, half_tol, depth - 1)?
            + recurse(f, m, b, right, half_tol, depth - 1)?)
    }
    let whole = gl_panel(&mut f, a, b);
    recurse(&mut f, a, b, whole, tol, 40)
}

/// Tanh-sinh quadrature on (a, b). Handles integrable algebraic singularities
/// at either endpoint; the integrand is never evaluated at a or b themselves.
///
/// Levels halve the step until successive estimates agree to `tol` (relative
/// to the magnitude of the estimate, plus absolute floor).
///
/// Abscissas near an endpoint are exact offsets only when that endpoint is 0;
/// a blowing-up integrand at a nonzero endpoint sees the offset through one
/// rounding of the abscissa and plateaus around 1e-8 relative. Put such
/// singularities at 0 (shift or split the interval) when full precision
/// matters.
pub fn tanh_sinh(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    assert!(b > a, "empty interval");
    let half = 0.5 * (b - a);
    // Abscissa x(t) = midpoint + half*tanh(pi/2 sinh t); weight half * w(t).
    // Evaluate the offset from the nearer endpoint to keep precision near the
    // singularity: 1 - tanh(u) = 2 e^{-2u} / (1 + e^{-2u}).
    let eval = |f: &mut dyn FnMut(f64) -> f64, t: f64| -> f64 {
        let u = std::f64::consts::FRAC_PI_2 * t.sinh();
        let w = std::f64::consts::FRAC_PI_2 * t.cosh() / u.cosh().powi(2);
        if !w.is_finite() || w == 0.0 {
            return 0.0;
        }
        let e = (-2.0 * u.abs()).exp();
        let offset = half * 2.0 * e / (1.0 + e);
        let x = if t >= 0.0 { b - offset } else { a + offset };
        if x <= a || x >= b {
            return 0.0;
        }
        let fx = f(x);
        if fx.is_finite() {
            w * fx
        } else {
            0.0
        }
    };

    // t_max 6 keeps slowly-decaying transformed tails (exponents near -1)
    // inside the window; beyond it the weights underflow harmlessly.
    let t_max = 6.0;
    let mut h = 1.0;
    // Level 0: coarse trapezoid over t in [-t_max, t_max].
    let mut sum = eval(&mut f, 0.0);
    let mut k = 1;
    while (k as f64) * h <= t_max {
        let t = k as f64 * h;
        sum += eval(&mut f, t) + eval(&mut f, -t);
        k += 1;
    }
    let mut estimate = sum * h * half;

    for _level in 0..13 {
        // Refine: add midpoints at odd multiples of h/2.
        let h2 = 0.5 * h;
        let mut add = 0.0;
        let mut j = 1;
        while (j as f64) * h2 <= t_max {
            let t = j as f64 * h2;
            add += eval(&mut f, t) + eval(&mut f, -t);
            j += 2;
        }
        let new_estimate = 0.5 * estimate + add * h2 * half;
        let err = (new_estimate - estimate).abs();
        estimate = new_estimate;
        h = h2;
        if err <= tol * (estimate.abs() + 1e-300) + 1e-305 {
            return Ok(estimate);
        }
    }
    Err(Error::numerical(format!(
        "tanh-sinh did not reach tolerance {tol:.1e} on [{a}, {b}]"
    )))
}
