//! Centered heavy-tailed disorder laws and the noise scales.
//!
//! A law has tail index gamma in (1, 2): finite mean, infinite variance,
//! P[|omega| > t] ~ C0 t^{-gamma}. Two concrete constructions are shipped,
//! both with closed-form CDFs so samplers, quantiles, and truncated moments
//! all have exact oracles:
//!
//! * one-sided: omega = X - E[X] with X Pareto(shape gamma, scale gamma - 1).
//!   Support (-1, infinity), mean 0, tail constant C0 = (gamma - 1)^gamma.
//!   Every sample exceeds -1, so Gibbs weights 1 + beta omega stay positive
//!   for beta <= 1.
//! * two-sided: sign +1 with probability c_plus, magnitude Pareto(gamma, 1),
//!   centered by the analytic mean (gamma/(gamma-1))(c_plus - c_minus).
//!   Tail balance P[omega > t] / P[|omega| > t] -> c_plus, C0 = 1.
//!
//! The scales tie a lattice to its continuum limit: the cell volume v, the
//! quantile scale V solving P[|omega| > V] = v exactly, a model-supplied
//! correlation normalizer J, and the effective coupling beta_hat = beta V / J.

use crate::error::{Error, Result};
use crate::quad::tanh_sinh;
use crate::rng::Stream;
use crate::stats::{tail_adjusted_p_norm, SampleSet};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportMode {
    /// omega > -1 always; safe inside Gibbs weights 1 + beta omega.
    OneSidedGibbs,
    TwoSided,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TailLaw {
    pub gamma: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    pub support_mode: SupportMode,
}

impl TailLaw {
    pub fn one_sided(gamma: f64) -> Result<Self> {
        Self::build(gamma, 1.0, 0.0, SupportMode::OneSidedGibbs)
    }

    pub fn two_sided(gamma: f64, c_plus: f64) -> Result<Self> {
        Self::build(gamma, c_plus, 1.0 - c_plus, SupportMode::TwoSided)
    }

    pub fn build(gamma: f64, c_plus: f64, c_minus: f64, support_mode: SupportMode) -> Result<Self> {
        if !(gamma > 1.0 && gamma < 2.0) {
            return Err(Error::parameter(format!("tail index must lie in (1,2), got {gamma}")));
        }
        if !(0.0..=1.0).contains(&c_plus) || (c_plus + c_minus - 1.0).abs() > 1e-12 {
            return Err(Error::parameter(format!(
                "tail balance needs c_plus in [0,1] and c_plus + c_minus = 1, got {c_plus} + {c_minus}"
            )));
        }
        if support_mode == SupportMode::OneSidedGibbs && c_minus != 0.0 {
            return Err(Error::parameter(
                "one-sided law has no left tail; c_minus must be 0".to_string(),
            ));
        }
        Ok(TailLaw { gamma, c_plus, c_minus, support_mode })
    }

    /// Pareto scale of the magnitude variable.
    fn scale(&self) -> f64 {
        match self.support_mode {
            SupportMode::OneSidedGibbs => self.gamma - 1.0,
            SupportMode::TwoSided => 1.0,
        }
    }

    /// Centering shift: omega = raw - mean_shift.
    pub fn mean_shift(&self) -> f64 {
        match self.support_mode {
            // E of Pareto(gamma, gamma - 1) is gamma.
            SupportMode::OneSidedGibbs => self.gamma,
            SupportMode::TwoSided => {
                self.gamma / (self.gamma - 1.0) * (self.c_plus - self.c_minus)
            }
        }
    }

    /// C0 in P[|omega| > t] ~ C0 t^{-gamma}.
    pub fn tail_constant(&self) -> f64 {
        match self.support_mode {
            SupportMode::OneSidedGibbs => (self.gamma - 1.0).powf(self.gamma),
            SupportMode::TwoSided => 1.0,
        }
    }

    /// One draw. Inverse transform on the exact CDF.
    #[inline]
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let gamma = self.gamma;
        match self.support_mode {
            SupportMode::OneSidedGibbs => {
                // 1 - u in (0, 1] avoids the u = 0 pole.
                let u = 1.0 - rng.gen::<f64>();
                self.scale() * u.powf(-1.0 / gamma) - self.mean_shift()
            }
            SupportMode::TwoSided => {
                let u = 1.0 - rng.gen::<f64>();
                let x = u.powf(-1.0 / gamma);
                let sign = if rng.gen::<f64>() < self.c_plus { 1.0 } else { -1.0 };
                sign * x - self.mean_shift()
            }
        }
    }

    /// Exact CDF of omega.
    pub fn cdf(&self, x: f64) -> f64 {
        let gamma = self.gamma;
        let y = x + self.mean_shift();
        match self.support_mode {
            SupportMode::OneSidedGibbs => {
                let s = self.scale();
                if y <= s {
                    0.0
                } else {
                    1.0 - (s / y).powf(gamma)
                }
            }
            SupportMode::TwoSided => {
                if y <= -1.0 {
                    self.c_minus * (-y).powf(-gamma)
                } else if y < 1.0 {
                    self.c_minus
                } else {
                    1.0 - self.c_plus * y.powf(-gamma)
                }
            }
        }
    }

    /// P[omega > x], evaluated in tail form so deep-tail values keep full
    /// relative precision (1 - cdf would cancel).
    pub fn tail_right(&self, x: f64) -> f64 {
        let gamma = self.gamma;
        let y = x + self.mean_shift();
        match self.support_mode {
            SupportMode::OneSidedGibbs => {
                let s = self.scale();
                if y <= s {
                    1.0
                } else {
                    (s / y).powf(gamma)
                }
            }
            SupportMode::TwoSided => {
                if y >= 1.0 {
                    self.c_plus * y.powf(-gamma)
                } else if y >= -1.0 {
                    self.c_plus
                } else {
                    1.0 - self.c_minus * (-y).powf(-gamma)
                }
            }
        }
    }

    /// P[|omega| > v], exact.
    pub fn tail_abs(&self, v: f64) -> f64 {
        assert!(v >= 0.0, "absolute tail wants v >= 0");
        self.tail_right(v) + self.cdf(-v)
    }

    /// Analytic inverse of the right tail: the x with P[omega > x] = v.
    pub fn right_tail_quantile(&self, v: f64) -> f64 {
        assert!(v > 0.0 && v < 1.0);
        match self.support_mode {
            SupportMode::OneSidedGibbs => {
                self.scale() * v.powf(-1.0 / self.gamma) - self.mean_shift()
            }
            SupportMode::TwoSided => {
                assert!(v <= self.c_plus, "right tail of the two-sided law caps at c_plus");
                (v / self.c_plus).powf(-1.0 / self.gamma) - self.mean_shift()
            }
        }
    }
}

/// i.i.d. draws from a keyed stream.
pub fn sample_disorder(law: &TailLaw, n_sites: usize, stream: Stream) -> Vec<f64> {
    assert!(n_sites >= 1, "need at least one site");
    let mut rng = stream.rng();
    (0..n_sites).map(|_| law.sample(&mut rng)).collect()
}

/// Exact quantile V with P[|omega| > V] = v_delta, by bisection on the exact
/// absolute-tail function. Monotone, so the root is unique.
pub fn solve_noise_scale(law: &TailLaw, v_delta: f64) -> Result<f64> {
    if !(v_delta > 0.0 && v_delta < 1.0) {
        return Err(Error::parameter(format!("cell volume must lie in (0,1), got {v_delta}")));
    }
    let mut hi = 1.0;
    while law.tail_abs(hi) > v_delta {
        hi *= 2.0;
        if hi > 1e200 {
            return Err(Error::numerical("noise scale bracket ran away".to_string()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if law.tail_abs(mid) > v_delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// All the scales a discretized model hands to the chaos machinery.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseScales {
    /// Cell volume v of the tesselation.
    pub cell_volume: f64,
    /// Quantile scale V: P[|omega| > V] = cell_volume, exactly.
    pub quantile_scale: f64,
    /// Model correlation normalizer J.
    pub correlation_norm: f64,
    /// Raw coupling beta.
    pub beta: f64,
    /// Effective coupling beta V / J.
    pub beta_hat: f64,
}

impl NoiseScales {
    pub fn from_beta(law: &TailLaw, cell_volume: f64, correlation_norm: f64, beta: f64) -> Result<Self> {
        let v = solve_noise_scale(law, cell_volume)?;
        Ok(NoiseScales {
            cell_volume,
            quantile_scale: v,
            correlation_norm,
            beta,
            beta_hat: beta * v / correlation_norm,
        })
    }

    /// Pick beta so that beta V / J hits the requested continuum coupling.
    pub fn from_beta_hat(
        law: &TailLaw,
        cell_volume: f64,
        correlation_norm: f64,
        beta_hat: f64,
    ) -> Result<Self> {
        let v = solve_noise_scale(law, cell_volume)?;
        Ok(NoiseScales {
            cell_volume,
            quantile_scale: v,
            correlation_norm,
            beta: beta_hat * correlation_norm / v,
            beta_hat,
        })
    }
}

// ---------------------------------------------------------------------------
// Truncated moments: exact oracles by quadrature, Monte Carlo estimates, and
// the asymptotic formulas they are compared against.
// ---------------------------------------------------------------------------

/// Asymptotic truncated moment: for p < gamma the big-jump moment
/// E[|omega|^p; |omega| > a V] ~ gamma/(gamma-p) a^{p-gamma} V^p v, for
/// q > gamma the small-jump moment E[|omega|^q; |omega| <= a V] ~
/// gamma/(q-gamma) a^{q-gamma} V^q v.
pub fn truncated_moment_asymptotic(
    law: &TailLaw,
    exponent: f64,
    a: f64,
    v_delta: f64,
    v_scale: f64,
) -> Result<f64> {
    let gamma = law.gamma;
    if exponent == gamma {
        return Err(Error::parameter("truncated moment formulas are singular at the tail index".to_string()));
    }
    let value = if exponent < gamma {
        gamma / (gamma - exponent) * a.powf(exponent - gamma) * v_scale.powf(exponent) * v_delta
    } else {
        gamma / (exponent - gamma) * a.powf(exponent - gamma) * v_scale.powf(exponent) * v_delta
    };
    Ok(value)
}

/// Two-term truncated-moment asymptotic. For exponent q > gamma the
/// small-jump moment is gamma/(q-gamma) t^{q-gamma} C + D + o(1) with
/// C the absolute tail constant and D a law-dependent constant (the
/// mean shift and the sub-scale cutoff both feed it). Relative to the
/// main term D decays only like t^{gamma-q}, which at reachable
/// thresholds is far from negligible, so the leading term alone is not
/// comparable to simulation. D is extracted as exact-minus-leading at a
/// reference threshold far above the shift scale and checked for
/// stability against a second reference before use. For exponent p <
/// gamma the corrections decay absolutely, O(shift/t), and the leading
/// big-jump term is returned unchanged.
pub fn truncated_moment_two_term(
    law: &TailLaw,
    exponent: f64,
    a: f64,
    v_delta: f64,
    v_scale: f64,
) -> Result<f64> {
    let gamma = law.gamma;
    if exponent < gamma {
        return truncated_moment_asymptotic(law, exponent, a, v_delta, v_scale);
    }
    // Branch weights sum to one, so the absolute tail constant is scale^gamma.
    let tail_c = law.scale().powf(gamma);
    let raw_leading =
        |t: f64| gamma / (exponent - gamma) * tail_c * t.powf(exponent - gamma);
    let base = 16.0 * (law.scale() + law.mean_shift().abs());
    let d_at = |t: f64| -> Result<f64> {
        Ok(small_jump_moment_exact(law, exponent, t)? - raw_leading(t))
    };
    let d_near = d_at(base * 16.0)?;
    let d_far = d_at(base * 64.0)?;
    let spread = (d_near - d_far).abs();
    if spread > 0.02 * d_far.abs().max(1e-12) && spread > 1e-10 {
        return Err(Error::numerical(format!(
            "constant term of the truncated-moment expansion has not settled: \
             {d_near} vs {d_far} at reference thresholds"
        )));
    }
    Ok(raw_leading(a * v_scale) + d_far)
}

/// Exact E[|omega|^e; |omega| > t] by quadrature on the closed-form density.
/// Needs e < gamma or the moment diverges.
pub fn big_jump_moment_exact(law: &TailLaw, e: f64, t: f64) -> Result<f64> {
    assert!(t > 0.0);
    if e >= law.gamma {
        return Err(Error::parameter(format!(
            "big-jump moment diverges for exponent {e} >= gamma {}",
            law.gamma
        )));
    }
    moment_over_regions(law, e, t, true)
}

/// Exact E[|omega|^e; |omega| <= t] by quadrature.
pub fn small_jump_moment_exact(law: &TailLaw, e: f64, t: f64) -> Result<f64> {
    assert!(t > 0.0);
    moment_over_regions(law, e, t, false)
}

/// Exact E[omega; |omega| > t]; the centering constant of the big-jump part of
/// the noise. Converges for every t > 0 since gamma > 1.
pub fn big_jump_mean_exact(law: &TailLaw, t: f64) -> Result<f64> {
    // Signed version of the region integrals: same pieces, signed integrand.
    let mean_right = signed_region_mean(law, t)?;
    Ok(mean_right)
}

/// Shared region walker. Magnitude branches: the law is a mixture over
/// sign branches sigma with magnitude density gamma s^gamma x^{-1-gamma} on
/// [s, infinity); omega = sigma x - mean_shift on each branch.
fn branches(law: &TailLaw) -> Vec<(f64, f64)> {
    // (weight, sigma)
    match law.support_mode {
        SupportMode::OneSidedGibbs => vec![(1.0, 1.0)],
        SupportMode::TwoSided => vec![(law.c_plus, 1.0), (law.c_minus, -1.0)],
    }
}

fn moment_over_regions(law: &TailLaw, e: f64, t: f64, big: bool) -> Result<f64> {
    let gamma = law.gamma;
    let s = law.scale();
    let m = law.mean_shift();
    let mut total = 0.0;
    for (weight, sigma) in branches(law) {
        if weight == 0.0 {
            continue;
        }
        // omega(x) = sigma x - m, x >= s. |omega| > t splits into
        // omega > t (x > sigma(t + m) on sigma = +1, x < -(t + m) on -1)
        // and omega < -t, mirrored. Each region is sign-definite so the
        // integrand has no interior kink.
        let mut pieces: Vec<(f64, Option<f64>)> = Vec::new(); // (lo, hi), hi None = infinity
        if big {
            if sigma > 0.0 {
                // omega < -t: x in [s, m - t); omega > t: x in (m + t, inf).
                if m - t > s {
                    pieces.push((s, Some(m - t)));
                }
                pieces.push(((m + t).max(s), None));
            } else {
                // omega = -x - m; omega > t: x < -m - t; omega < -t: x > t - m.
                if -m - t > s {
                    pieces.push((s, Some(-m - t)));
                }
                pieces.push(((t - m).max(s), None));
            }
        } else {
            // |omega| <= t: one interval in x, with a kink where omega = 0.
            let (lo, hi) = if sigma > 0.0 { (m - t, m + t) } else { (-m - t, t - m) };
            let lo = lo.max(s);
            if hi > lo {
                let kink = if sigma > 0.0 { m } else { -m };
                if kink > lo && kink < hi {
                    pieces.push((lo, Some(kink)));
                    pieces.push((kink, Some(hi)));
                } else {
                    pieces.push((lo, Some(hi)));
                }
            }
        }
        for (lo, hi) in pieces {
            total += weight * piece_integral(gamma, s, m, sigma, e, lo, hi)?;
        }
    }
    Ok(total)
}

/// int |sigma x - m|^e gamma s^gamma x^{-1-gamma} dx over [lo, hi or inf).
fn piece_integral(gamma: f64, s: f64, m: f64, sigma: f64, e: f64, lo: f64, hi: Option<f64>) -> Result<f64> {
    let norm = gamma * s.powf(gamma);
    match hi {
        Some(hi) => {
            if hi <= lo {
                return Ok(0.0);
            }
            let mut f = |x: f64| (sigma * x - m).abs().powf(e) * norm * x.powf(-1.0 - gamma);
            tanh_sinh(&mut f, lo, hi, 1e-12)
        }
        None => {
            // Map to (0, 1] with x = lo / u.
            let mut f = |u: f64| {
                let x = lo / u;
                (sigma * x - m).abs().powf(e) * norm * x.powf(-1.0 - gamma) * lo / (u * u)
            };
            tanh_sinh(&mut f, 0.0, 1.0, 1e-12)
        }
    }
}

fn signed_region_mean(law: &TailLaw, t: f64) -> Result<f64> {
    let gamma = law.gamma;
    let s = law.scale();
    let m = law.mean_shift();
    let mut total = 0.0;
    for (weight, sigma) in branches(law) {
        if weight == 0.0 {
            continue;
        }
        let mut pieces: Vec<(f64, Option<f64>)> = Vec::new();
        if sigma > 0.0 {
            if m - t > s {
                pieces.push((s, Some(m - t)));
            }
            pieces.push(((m + t).max(s), None));
        } else {
            if -m - t > s {
                pieces.push((s, Some(-m - t)));
            }
            pieces.push(((t - m).max(s), None));
        }
        let norm = gamma * s.powf(gamma);
        for (lo, hi) in pieces {
            let val = match hi {
                Some(hi) if hi <= lo => 0.0,
                Some(hi) => {
                    let mut f = |x: f64| (sigma * x - m) * norm * x.powf(-1.0 - gamma);
                    tanh_sinh(&mut f, lo, hi, 1e-12)?
                }
                None => {
                    let mut f = |u: f64| {
                        let x = lo / u;
                        (sigma * x - m) * norm * x.powf(-1.0 - gamma) * lo / (u * u)
                    };
                    tanh_sinh(&mut f, 0.0, 1.0, 1e-12)?
                }
            };
            total += weight * val;
        }
    }
    Ok(total)
}

/// Monte Carlo truncated moment: mean and standard error of
/// |omega|^e 1_{|omega| > t} (big = true) or the complement indicator.
pub fn truncated_moment_mc(
    law: &TailLaw,
    e: f64,
    t: f64,
    big: bool,
    n_samples: u64,
    stream: Stream,
) -> (f64, f64) {
    let mut rng = stream.rng();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_samples {
        let w = law.sample(&mut rng).abs();
        let hit = if big { w > t } else { w <= t };
        if hit {
            let x = w.powf(e);
            sum += x;
            sum_sq += x * x;
        }
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt())
}

/// Ratio of the Monte Carlo truncated moment to the two-term asymptotic.
/// Exponent below gamma selects the big-jump variant, above selects the
/// small-jump variant; at gamma both formulas are singular.
///
/// The small-jump summand is bounded by t^q, so its mean is estimated
/// directly. The big-jump summand |omega|^p 1_{|omega| > t} has tail
/// index gamma/p < 2, hence infinite variance; its mean comes from the
/// anchored-tail estimator on the exceedance sample instead, otherwise
/// single draws swing the ratio by more than any useful tolerance.
pub fn truncated_moment_ratio(
    law: &TailLaw,
    exponent: f64,
    a: f64,
    v_delta: f64,
    n_samples: u64,
    stream: Stream,
) -> Result<f64> {
    if exponent == law.gamma {
        return Err(Error::parameter("exponent equals the tail index".to_string()));
    }
    let v_scale = solve_noise_scale(law, v_delta)?;
    let threshold = a * v_scale;
    let asym = truncated_moment_two_term(law, exponent, a, v_delta, v_scale)?;
    if exponent > law.gamma {
        let (mc, _se) =
            truncated_moment_mc(law, exponent, threshold, false, n_samples, stream);
        return Ok(mc / asym);
    }
    let mut rng = stream.rng();
    let mut exceed = Vec::new();
    for _ in 0..n_samples {
        let w = law.sample(&mut rng).abs();
        if w > threshold {
            exceed.push(w);
        }
    }
    if exceed.len() < 2_500 {
        return Err(Error::parameter(format!(
            "only {} exceedances above {threshold:.3e}; raise the sample count \
             or the truncation probability",
            exceed.len()
        )));
    }
    let hit_rate = exceed.len() as f64 / n_samples as f64;
    let anchor_fraction = (1_000.0 / exceed.len() as f64).min(0.25);
    let sample = SampleSet::new("exceedances", exceed)?;
    let (norm, _se) = tail_adjusted_p_norm(&sample, exponent, law.gamma, anchor_fraction)?;
    Ok(hit_rate * norm.powf(exponent) / asym)
}
