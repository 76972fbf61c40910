//! Disordered pinning on a heavy-tailed renewal.
//!
//! A recurrent renewal with polynomial gap law K(n) = c0 n^{-(1+alpha)},
//! alpha in (0,1), earns e^h per contact and a site tilt 1 + beta omega_n.
//! Everything downstream of the gap law is exact dynamic programming: the
//! renewal mass function u, homogeneous and disordered partition functions,
//! contact correlations, and backward Gibbs sampling all come out of the same
//! O(N^2) convolution tables. The continuum limits are modified
//! Mittag-Leffler series, and the two sides cross-check each other in the
//! tests: the DP converges to the series, the series kernels feed the chaos
//! module, and at small N the chaos expansion reproduces the DP exactly.

use rand::Rng;

use std::sync::Arc;

use crate::chaos::ProductKernel;
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::special::{hurwitz_zeta, ln_gamma};
use crate::tail::{solve_noise_scale, TailLaw};

/// Gap law K, its tail Kbar, and the renewal mass function u for the pure
/// power kernel K(n) = c0 n^{-(1+alpha)} on n >= 1, c0 = 1/zeta(1+alpha).
#[derive(Debug, Clone)]
pub struct RenewalKernel {
    alpha: f64,
    n_max: usize,
    k: Vec<f64>,    // k[n] for n in 1..=n_max; k[0] = 0
    kbar: Vec<f64>, // kbar[n] = P[tau_1 > n] for n in 0..=n_max
    u: Vec<f64>,    // u[n] = P[n in tau] for n in 0..=n_max
    tail_constant: f64,
}

/// Build the kernel tables up to horizon `n_max`.
///
/// Kbar comes from the analytic tail c0 * zeta(1+alpha, n+1) rather than
/// 1 - cumulative, so free partition functions carry no truncation bias and
/// no cancellation for deep tails. u is the h = 0 constrained partition
/// function, computed by the direct O(N^2) recursion.
pub fn make_kernel(alpha: f64, n_max: usize) -> Result<RenewalKernel> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::parameter(format!(
            "renewal exponent alpha must lie in (0,1), got {alpha}"
        )));
    }
    if n_max < 2 {
        return Err(Error::parameter(format!("kernel horizon must be at least 2, got {n_max}")));
    }
    let s = 1.0 + alpha;
    let c0 = 1.0 / hurwitz_zeta(s, 1.0);
    let mut k = vec![0.0; n_max + 1];
    for (n, kn) in k.iter_mut().enumerate().skip(1) {
        *kn = c0 * (n as f64).powf(-s);
    }
    let mut kbar = vec![0.0; n_max + 1];
    for (n, kb) in kbar.iter_mut().enumerate() {
        *kb = c0 * hurwitz_zeta(s, (n + 1) as f64);
    }
    let u = constrained_dp(&k, n_max, |_| 1.0).0;
    Ok(RenewalKernel { alpha, n_max, k, kbar, u, tail_constant: c0 })
}

impl RenewalKernel {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// c0 = 1/zeta(1+alpha).
    pub fn tail_constant(&self) -> f64 {
        self.tail_constant
    }

    /// Gap probability K(n), n in 1..=n_max.
    pub fn k(&self, n: usize) -> f64 {
        self.k[n]
    }

    /// Tail probability P[tau_1 > n], n in 0..=n_max.
    pub fn kbar(&self, n: usize) -> f64 {
        self.kbar[n]
    }

    /// Renewal mass u(n) = P[n in tau], n in 0..=n_max.
    pub fn u(&self, n: usize) -> f64 {
        self.u[n]
    }
}

// Constrained partition function zc(0)=1, zc(n) = w(n) sum_{j=1..n} K(j)
// zc(n-j), plus the pre-weight sums zpre(n) = zc(n)/w(n) which the backward
// sampler reuses as exact normalizers.
fn constrained_dp(k: &[f64], n: usize, w: impl Fn(usize) -> f64) -> (Vec<f64>, Vec<f64>) {
    let mut zc = vec![0.0; n + 1];
    let mut zpre = vec![0.0; n + 1];
    zc[0] = 1.0;
    zpre[0] = 1.0;
    for m in 1..=n {
        let mut acc = 0.0;
        for j in 1..=m {
            acc += k[j] * zc[m - j];
        }
        zpre[m] = acc;
        zc[m] = w(m) * acc;
    }
    (zc, zpre)
}

// Free partition function at horizon j from a constrained table:
// sum_{m=0..j} zc(m) Kbar(j-m).
fn free_value(zc: &[f64], kbar: &[f64], j: usize) -> f64 {
    (0..=j).map(|m| zc[m] * kbar[j - m]).sum()
}

fn check_horizon(kernel: &RenewalKernel, n: usize) -> Result<()> {
    if n < 1 || n > kernel.n_max {
        return Err(Error::parameter(format!(
            "horizon {n} outside kernel range 1..={}",
            kernel.n_max
        )));
    }
    Ok(())
}

/// Homogeneous pinning partition functions at horizon N: the free value
/// Z = sum_m Zc(m) Kbar(N-m) and the constrained array Zc(0..=N) with
/// Zc(n) = e^h sum_{m<n} Zc(m) K(n-m). At h = 0 the free value is the total
/// renewal probability, 1.
pub fn homogeneous_z(kernel: &RenewalKernel, h: f64, n: usize) -> Result<(f64, Vec<f64>)> {
    check_horizon(kernel, n)?;
    if !h.is_finite() {
        return Err(Error::parameter(format!("pinning reward h must be finite, got {h}")));
    }
    let eh = h.exp();
    let zc = constrained_dp(&kernel.k, n, |_| eh).0;
    let zf = free_value(&zc, &kernel.kbar, n);
    Ok((zf, zc))
}

const ML_TERM_BUDGET: usize = 10_000;
const ML_ARG_BUDGET: f64 = 1.0e3;

/// Modified Mittag-Leffler function
/// E_alpha(z) = sum_k Gamma(alpha)^k z^k / Gamma(alpha k + 1).
///
/// Terms are formed in log space so no intermediate gamma overflows, and the
/// sum stops once a term falls below 1e-15 of the running value. At alpha = 1
/// the gammas collapse and E_1(z) = e^z.
pub fn mittag_leffler(alpha: f64, z: f64) -> Result<f64> {
    ml_checked(alpha, z, false)
}

/// Term-wise z-derivative of `mittag_leffler`. E'_alpha(0) = 1/alpha.
pub fn ml_derivative(alpha: f64, z: f64) -> Result<f64> {
    ml_checked(alpha, z, true)
}

fn ml_checked(alpha: f64, z: f64, derivative: bool) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::parameter(format!(
            "Mittag-Leffler index must lie in (0,1], got {alpha}"
        )));
    }
    if !z.is_finite() || z.abs() > ML_ARG_BUDGET {
        return Err(Error::parameter(format!(
            "series argument budget is |z| <= {ML_ARG_BUDGET}, got {z}"
        )));
    }
    ml_series(alpha, z, derivative).ok_or_else(|| {
        Error::numerical(format!(
            "Mittag-Leffler series at alpha={alpha}, z={z} exceeded {ML_TERM_BUDGET} terms \
             or the f64 range before settling"
        ))
    })
}

// Infallible core, used from kernel closures whose arguments were range
// checked at construction. None means the term budget ran out or the value
// left the f64 range.
fn ml_series(alpha: f64, z: f64, derivative: bool) -> Option<f64> {
    if z == 0.0 {
        return Some(if derivative { 1.0 / alpha } else { 1.0 });
    }
    let lga = ln_gamma(alpha);
    let lz = z.abs().ln();
    let neg = z < 0.0;
    let mut partial = if derivative { 0.0 } else { 1.0 }; // k = 0 term
    for k in 1..=ML_TERM_BUDGET {
        let kf = k as f64;
        let lt = if derivative {
            kf.ln() + kf * lga + (kf - 1.0) * lz - ln_gamma(alpha * kf + 1.0)
        } else {
            kf * (lga + lz) - ln_gamma(alpha * kf + 1.0)
        };
        let mut term = lt.exp();
        let z_power_odd = if derivative { k % 2 == 0 } else { k % 2 == 1 };
        if neg && z_power_odd {
            term = -term;
        }
        partial += term;
        if term.abs() < 1e-15 * partial.abs() {
            return if partial.is_finite() { Some(partial) } else { None };
        }
    }
    None
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::parameter(format!(
            "pinning exponent alpha must lie in (0,1), got {alpha}"
        )));
    }
    Ok(())
}

/// Continuum pinning partition functions (Z_t, Zc_t) at horizon t:
/// Z = E_alpha(hhat t^alpha) and Zc = alpha t^{alpha-1} E'_alpha(hhat t^alpha).
///
/// At hhat = 0 the pair collapses to (1, t^{alpha-1}) exactly, because
/// E'_alpha(0) = Gamma(alpha)/Gamma(alpha+1) = 1/alpha; this is what pins the
/// conditioned normalization to the pure power kernel.
pub fn continuum_pinning(alpha: f64, h_hat: f64, t: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::parameter(format!(
            "continuum horizon must be positive and finite, got {t}; \
             t^(alpha-1) has no point value at 0"
        )));
    }
    if h_hat == 0.0 {
        return Ok((1.0, t.powf(alpha - 1.0)));
    }
    let z = h_hat * t.powf(alpha);
    Ok((mittag_leffler(alpha, z)?, alpha * t.powf(alpha - 1.0) * ml_derivative(alpha, z)?))
}

// Closure-safe variants of the continuum pair; NaN on a blown series budget,
// which the chaos plan rejects as a numerical error at build time.
fn continuum_z(alpha: f64, h_hat: f64, t: f64) -> f64 {
    if h_hat == 0.0 || t == 0.0 {
        return 1.0;
    }
    ml_series(alpha, h_hat * t.powf(alpha), false).unwrap_or(f64::NAN)
}

fn continuum_zc(alpha: f64, h_hat: f64, t: f64) -> f64 {
    if h_hat == 0.0 {
        return t.powf(alpha - 1.0);
    }
    match ml_series(alpha, h_hat * t.powf(alpha), true) {
        Some(d) => alpha * t.powf(alpha - 1.0) * d,
        None => f64::NAN,
    }
}

/// Contact correlation of the continuum pinning model as a Markov product
/// kernel on [0,1]:
/// psi^(k)(t) = Z_{1,hhat}^{-1} prod_j Zc_{t_j - t_{j-1}} * Z_{1 - t_k}.
/// Outside 0 < t_1 < ... < t_k <= 1 the kernel vanishes.
pub fn continuum_pinning_kernel(alpha: f64, h_hat: f64) -> Result<ProductKernel> {
    check_alpha(alpha)?;
    if !h_hat.is_finite() || h_hat.abs() > ML_ARG_BUDGET {
        return Err(Error::parameter(format!(
            "continuum reward budget is |hhat| <= {ML_ARG_BUDGET}, got {h_hat}"
        )));
    }
    let norm = mittag_leffler(alpha, h_hat)?;
    let step = Box::new(move |d: &[f64]| {
        let dt = d[0];
        if dt <= 0.0 {
            return 0.0;
        }
        continuum_zc(alpha, h_hat, dt)
    });
    let terminal = Box::new(move |x: &[f64]| {
        let rem = 1.0 - x[0];
        if rem < 0.0 {
            return 0.0;
        }
        continuum_z(alpha, h_hat, rem)
    });
    ProductKernel::new(1, 0, norm, step, terminal)
}

/// Continuum correlation at explicit times; coincident times give 0.
pub fn pinning_correlation(alpha: f64, h_hat: f64, times: &[f64]) -> Result<f64> {
    let kernel = continuum_pinning_kernel(alpha, h_hat)?;
    let pts: Vec<[f64; 1]> = times.iter().map(|&t| [t]).collect();
    let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
    Ok(kernel.eval(&refs))
}

/// Operational pinning parameters at horizon N, optionally remembering the
/// continuum targets they came from:
/// h = hhat / (N u(N)), beta = bhat / (u(N) V_N), with V_N the |omega|
/// quantile at cell volume 1/N.
#[derive(Debug, Clone, Copy)]
pub struct PinningParams {
    pub n: usize,
    pub h: f64,
    pub beta: f64,
    /// Continuum targets; NaN when the params were given raw.
    pub h_hat: f64,
    pub beta_hat: f64,
}

impl PinningParams {
    /// Scale continuum targets down to horizon N.
    ///
    /// Refuses scalings with 1 - alpha >= 1/gamma, where the step kernel
    /// t^{alpha-1} is not q-integrable for any q < gamma and the chaos series
    /// has no summable limit; `allow_supercritical` overrides the gate.
    pub fn from_targets(
        kernel: &RenewalKernel,
        law: &TailLaw,
        n: usize,
        h_hat: f64,
        beta_hat: f64,
        allow_supercritical: bool,
    ) -> Result<Self> {
        check_horizon(kernel, n)?;
        if !h_hat.is_finite() || !(beta_hat >= 0.0) || !beta_hat.is_finite() {
            return Err(Error::parameter(format!(
                "continuum targets must be finite with beta_hat >= 0, got \
                 hhat={h_hat}, bhat={beta_hat}"
            )));
        }
        let alpha = kernel.alpha;
        let gamma = law.gamma;
        if !allow_supercritical && 1.0 - alpha >= 1.0 / gamma {
            return Err(Error::gate(format!(
                "pinning scaling needs 1 - alpha < 1/gamma for a summable chaos limit; \
                 alpha={alpha}, gamma={gamma} give {} >= {}; set the supercritical \
                 override to proceed anyway",
                1.0 - alpha,
                1.0 / gamma
            )));
        }
        let un = kernel.u[n];
        let v_n = solve_noise_scale(law, 1.0 / n as f64)?;
        let beta = beta_hat / (un * v_n);
        if beta > 1.0 {
            return Err(Error::parameter(format!(
                "beta = beta_hat/(u(N) V_N) = {beta:.4} exceeds 1 at N={n}; the site \
                 density 1 + beta omega could go negative"
            )));
        }
        Ok(PinningParams { n, h: h_hat / (n as f64 * un), beta, h_hat, beta_hat })
    }

    /// Raw (h, beta) with no continuum target attached.
    pub fn from_raw(n: usize, h: f64, beta: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::parameter("horizon must be at least 1".to_string()));
        }
        if !h.is_finite() || !(0.0..=1.0).contains(&beta) {
            return Err(Error::parameter(format!(
                "need finite h and beta in [0,1], got h={h}, beta={beta}"
            )));
        }
        Ok(PinningParams { n, h, beta, h_hat: f64::NAN, beta_hat: f64::NAN })
    }
}

/// Immutable DP context for one (kernel, h, N): the homogeneous tables that
/// correlation evaluation, disordered replicas, and Gibbs sampling all share.
/// Build once, then fan out over disorder in parallel.
pub struct PinningModel {
    alpha: f64,
    n: usize,
    h: f64,
    eh: f64,
    k: Vec<f64>,
    kbar: Vec<f64>,
    u: Vec<f64>,
    zc: Vec<f64>,
    // Free partition function at every horizon j <= N; zfree[n - m] is the
    // weight of the segment after a contact at m.
    zfree: Vec<f64>,
}

impl PinningModel {
    pub fn new(kernel: &RenewalKernel, h: f64, n: usize) -> Result<Self> {
        check_horizon(kernel, n)?;
        if !h.is_finite() {
            return Err(Error::parameter(format!("pinning reward h must be finite, got {h}")));
        }
        let eh = h.exp();
        let k = kernel.k[..=n].to_vec();
        let kbar = kernel.kbar[..=n].to_vec();
        let u = kernel.u[..=n].to_vec();
        let zc = constrained_dp(&k, n, |_| eh).0;
        let zfree: Vec<f64> = (0..=n).map(|j| free_value(&zc, &kbar, j)).collect();
        Ok(PinningModel { alpha: kernel.alpha, n, h, eh, k, kbar, u, zc, zfree })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Homogeneous free partition function Z_{N,h}.
    pub fn z_free(&self) -> f64 {
        self.zfree[self.n]
    }

    /// Homogeneous constrained array Zc(0..=N).
    pub fn zc(&self) -> &[f64] {
        &self.zc
    }

    pub fn u_n(&self) -> f64 {
        self.u[self.n]
    }

    /// psi_N^(k)(sites) = u(N)^{-k} P_{N,h}[sites in tau]: the contact
    /// correlation in the scaling that feeds the chaos expansion. Empty site
    /// list gives 1.
    pub fn correlation(&self, sites: &[usize]) -> Result<f64> {
        if sites.is_empty() {
            return Ok(1.0);
        }
        let un = self.u[self.n];
        let mut prev = 0usize;
        let mut val = 1.0;
        for &s in sites {
            if s <= prev || s > self.n {
                return Err(Error::parameter(format!(
                    "correlation sites must be strictly increasing within 1..={}, got {sites:?}",
                    self.n
                )));
            }
            val *= self.zc[s - prev] / un;
            prev = s;
        }
        Ok(val * self.zfree[self.n - prev] / self.zfree[self.n])
    }

    /// The same correlation packaged as a product kernel on the time lattice
    /// j/N, for the chaos module. Step weights read the DP tables; the
    /// constant term is 1 by construction.
    pub fn product_kernel(&self) -> Result<ProductKernel> {
        let nf = self.n as f64;
        let un = self.u[self.n];
        let zc = Arc::new(self.zc.clone());
        let zfree = Arc::new(self.zfree.clone());
        let norm = self.zfree[self.n];
        let step = Box::new(move |d: &[f64]| {
            let dn = (d[0] * nf).round();
            if dn < 1.0 || dn > nf {
                return 0.0;
            }
            zc[dn as usize] / un
        });
        let terminal = Box::new(move |x: &[f64]| {
            let j = nf - (x[0] * nf).round();
            if j < 0.0 || j > nf {
                return 0.0;
            }
            zfree[j as usize]
        });
        ProductKernel::new(1, 0, norm, step, terminal)
    }

    /// Disorder tables for one replica: site weights w(n) = e^h (1 + beta
    /// omega_n), the tilted constrained array, and the free value.
    pub fn disordered(&self, beta: f64, disorder: &[f64]) -> Result<GibbsTable<'_>> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::parameter(format!(
                "disorder coupling beta must lie in [0,1] to keep the Gibbs density \
                 nonnegative, got {beta}"
            )));
        }
        if disorder.len() != self.n {
            return Err(Error::parameter(format!(
                "disorder length {} != horizon {}",
                disorder.len(),
                self.n
            )));
        }
        let mut w = vec![1.0; self.n + 1];
        for (m, om) in disorder.iter().enumerate() {
            let wm = self.eh * (1.0 + beta * om);
            if !(wm >= 0.0) {
                return Err(Error::parameter(format!(
                    "site weight 1 + beta omega is negative at site {}; the disorder \
                     law must be bounded below by -1",
                    m + 1
                )));
            }
            w[m + 1] = wm;
        }
        let (zcw, zpre) = constrained_dp(&self.k, self.n, |m| w[m]);
        let zw_free = free_value(&zcw, &self.kbar, self.n);
        Ok(GibbsTable { model: self, w, zcw, zpre, zw_free })
    }

    /// Scaled contact count |sites| / (N u(N)); the order-one observable of
    /// the localization transition.
    pub fn contact_fraction(&self, sites: &[usize]) -> f64 {
        sites.len() as f64 / (self.n as f64 * self.u[self.n])
    }
}

/// Disordered DP tables for one replica, borrowed from the shared model.
pub struct GibbsTable<'a> {
    model: &'a PinningModel,
    w: Vec<f64>,
    zcw: Vec<f64>,
    zpre: Vec<f64>,
    zw_free: f64,
}

impl GibbsTable<'_> {
    /// Z^omega / Z: the mean-one normalized partition function.
    pub fn normalized_z(&self) -> f64 {
        self.zw_free / self.model.zfree[self.model.n]
    }

    /// One exact trajectory by backward sampling from the DP table; returns
    /// the sorted contact sites in 1..=N (possibly empty).
    ///
    /// The last contact has weight zcw(m) Kbar(N-m); earlier gaps have weight
    /// zcw(m-j) K(j). Both scans accumulate in the same order as the forward
    /// DP, so the normalizers match the tables exactly.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<usize> {
        let n = self.model.n;
        let mut sites = Vec::new();
        let mut cur = {
            let r = rng.gen::<f64>() * self.zw_free;
            let mut acc = 0.0;
            let mut pick = n;
            for m in 0..=n {
                acc += self.zcw[m] * self.model.kbar[n - m];
                if r < acc {
                    pick = m;
                    break;
                }
            }
            pick
        };
        while cur > 0 {
            sites.push(cur);
            let r = rng.gen::<f64>() * self.zpre[cur];
            let mut acc = 0.0;
            let mut gap = cur;
            for j in 1..=cur {
                acc += self.model.k[j] * self.zcw[cur - j];
                if r < acc {
                    gap = j;
                    break;
                }
            }
            cur -= gap;
        }
        sites.reverse();
        sites
    }

    /// Contact probabilities P[m in tau] for m = 1..=N, by a backward sweep
    /// B(m) = Kbar(N-m) + sum_j K(j) w(m+j) B(m+j); then P = zcw B / Z^omega.
    /// B(0) recovers the free value, which `self` asserts as a consistency
    /// check of the two sweeps.
    pub fn contact_marginals(&self) -> Vec<f64> {
        let n = self.model.n;
        let mut b = vec![0.0; n + 1];
        b[n] = 1.0;
        for m in (0..n).rev() {
            let mut acc = self.model.kbar[n - m];
            for j in 1..=(n - m) {
                acc += self.model.k[j] * self.w[m + j] * b[m + j];
            }
            b[m] = acc;
        }
        debug_assert!((b[0] / self.zw_free - 1.0).abs() < 1e-9);
        (1..=n).map(|m| self.zcw[m] * b[m] / self.zw_free).collect()
    }
}

/// Correlation by a one-shot DP build; see `PinningModel::correlation`.
pub fn discrete_pinning_correlation(
    kernel: &RenewalKernel,
    h: f64,
    n: usize,
    sites: &[usize],
) -> Result<f64> {
    PinningModel::new(kernel, h, n)?.correlation(sites)
}

/// Normalized disordered partition function Z^{omega,beta}_{N,h} / Z_{N,h};
/// mean one over the disorder by construction.
pub fn disordered_pinning_z(
    kernel: &RenewalKernel,
    params: &PinningParams,
    disorder: &[f64],
) -> Result<f64> {
    let model = PinningModel::new(kernel, params.h, params.n)?;
    Ok(model.disordered(params.beta, disorder)?.normalized_z())
}

/// One exact Gibbs sample of the contact set under the disordered measure.
pub fn sample_pinning_gibbs(
    kernel: &RenewalKernel,
    params: &PinningParams,
    disorder: &[f64],
    stream: Stream,
) -> Result<Vec<usize>> {
    let model = PinningModel::new(kernel, params.h, params.n)?;
    let table = model.disordered(params.beta, disorder)?;
    Ok(table.sample(&mut stream.rng()))
}
