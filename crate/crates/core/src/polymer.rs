//! Long-range directed polymer pieces: alpha-stable lattice walks, stable
//! transition densities, exact walk pmfs, windowed partition-function DP,
//! and correlation kernels packaged for the chaos module.
//!
//! Three layers cross-check each other. The increment sampler draws the
//! exact continuous stable law and rounds; the pmf machinery integrates
//! the same continuous density over unit cells (so the sampler and the
//! pmf describe the same walk by construction); the density evaluator is
//! an independent cosine-transform quadrature with a power-tail switch.
//! The partition-function DP is validated against exhaustive windowed
//! path enumeration at tiny sizes.
//!
//! Everything is d = 1. The characteristic-function convention is
//! e^{-|t|^alpha} throughout; the Gaussian and Cauchy closed forms in the
//! tests are stated under it.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::chaos::ProductKernel;
use crate::error::{Error, Result};
use crate::fftconv::{next_pow2, FixedKernel};
use crate::noise::{compensator_rate, sample_cloud, DomainBox};
use crate::quad::{gl_panel, tanh_sinh};
use crate::rng::Stream;
use crate::special::{gamma_fn, ln_gamma};
use crate::tail::{sample_disorder, solve_noise_scale, TailLaw};

/// Exact convolution is limited to this many steps.
pub const MAX_PMF_STEPS: usize = 1 << 12;
/// Mass a pmf window is allowed to miss.
pub const PMF_MASS_BUDGET: f64 = 1e-8;
/// Boundary mass a free-window DP is allowed to lose.
pub const FREE_DEFECT_BUDGET: f64 = 1e-3;
/// Largest in-memory transform for pmf inversion (about 1 GB of spectrum).
const MAX_TRANSFORM: usize = 1 << 26;
/// Per-cell wraparound target for the transform inversion.
const ALIAS_TARGET: f64 = 1e-13;

/// Symmetric alpha-stable lattice walk: increments are exact continuous
/// stable variates rounded to the nearest integer, which keeps the domain
/// of attraction (norming a_n = n^{1/alpha}) and makes the walk aperiodic
/// since P[X = 0] > 0.
#[derive(Debug, Clone, Copy)]
pub struct StableWalk {
    alpha: f64,
    d: usize,
}

impl StableWalk {
    pub fn new(alpha: f64) -> Result<Self> {
        Self::with_dimension(alpha, 1)
    }

    pub fn with_dimension(alpha: f64, d: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::parameter(format!(
                "stability index must lie in (0, 2], got {alpha}"
            )));
        }
        if d == 0 {
            return Err(Error::parameter("dimension must be positive".to_string()));
        }
        if d >= 2 {
            // Radial-quadrature densities for d >= 2 are an experimental
            // path that is not built in this configuration.
            return Err(Error::parameter(format!(
                "d = {d} is experimental; only d = 1 is supported"
            )));
        }
        Ok(StableWalk { alpha, d })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Norming sequence a_n = n^{1/alpha}.
    pub fn scale(&self, n: usize) -> f64 {
        (n as f64).powf(1.0 / self.alpha)
    }

    /// One draw of the continuous symmetric stable law, Chambers-Mallows-
    /// Stuck form. At alpha = 2 this reduces to 2 sin(U) sqrt(W), a
    /// Gaussian of variance 2; at alpha = 1 to tan(U), a standard Cauchy.
    pub fn sample_continuous(&self, rng: &mut impl Rng) -> f64 {
        let u = PI * (rng.gen::<f64>() - 0.5);
        if self.alpha == 1.0 {
            return u.tan();
        }
        let w = loop {
            let e = -(1.0 - rng.gen::<f64>()).ln();
            if e > 0.0 {
                break e;
            }
        };
        let a = self.alpha;
        let s = (a * u).sin() / u.cos().powf(1.0 / a);
        s * (((1.0 - a) * u).cos() / w).powf((1.0 - a) / a)
    }

    /// Lattice increment: the rounded continuous draw.
    pub fn sample_increment(&self, rng: &mut impl Rng) -> i64 {
        self.sample_continuous(rng).round() as i64
    }
}

/// Positions S_1, ..., S_n of one walk started at the origin.
pub fn sample_walk(walk: &StableWalk, n: usize, stream: Stream) -> Result<Vec<i64>> {
    if n == 0 {
        return Err(Error::parameter("walk length must be positive".to_string()));
    }
    let mut rng = stream.rng();
    let mut out = Vec::with_capacity(n);
    let mut pos = 0i64;
    for _ in 0..n {
        pos += walk.sample_increment(&mut rng);
        out.push(pos);
    }
    Ok(out)
}

/// MC estimate of P[max_{m <= n} |S_m| >= threshold] with its standard
/// error. Used as the oracle for window-truncation bounds.
pub fn mc_max_excursion(
    walk: &StableWalk,
    n: usize,
    threshold: i64,
    reps: usize,
    stream: Stream,
) -> (f64, f64) {
    let mut hits = 0usize;
    for r in 0..reps {
        let mut rng = stream.lane(r as u64).rng();
        let mut pos = 0i64;
        for _ in 0..n {
            pos += walk.sample_increment(&mut rng);
            if pos.abs() >= threshold {
                hits += 1;
                break;
            }
        }
    }
    let p = hits as f64 / reps as f64;
    (p, (p * (1.0 - p) / reps as f64).sqrt())
}

/// (2/pi) Gamma(alpha) sin(pi alpha / 2): the constant in the two-sided
/// tail P[|Y| > w] ~ C w^{-alpha} of the standard stable law. Vanishes at
/// alpha = 2, where the tail is Gaussian instead.
fn two_sided_tail_constant(alpha: f64) -> f64 {
    2.0 / PI * gamma_fn(alpha) * (0.5 * PI * alpha).sin()
}

/// Characteristic function of the rounded variable with continuous CF
/// e^{-c|t|^alpha}, folded to the lattice: the 2 pi alias sum of
/// e^{-c|t|^alpha} * 2 sin(t/2)/t. The sinc factor is the unit rounding
/// cell; this is Poisson summation for cell-integrated masses.
fn aliased_cell_cf(alpha: f64, c: f64, theta: f64) -> f64 {
    let term = |t: f64| -> f64 {
        if t == 0.0 {
            return 1.0;
        }
        (-c * t.abs().powf(alpha)).exp() * 2.0 * (0.5 * t).sin() / t
    };
    let tau = 2.0 * PI;
    // e^{-41.5} ~ 1e-18 ends the alias sum.
    let t_max = (41.5 / c).powf(1.0 / alpha);
    let m_max = ((t_max + PI) / tau).ceil().max(1.0) as i64;
    let mut total = term(theta);
    for m in 1..=m_max {
        let shift = m as f64 * tau;
        total += term(theta + shift) + term(theta - shift);
    }
    total
}

/// Cell masses of the `power`-fold convolution of the rounded law with
/// base CF e^{-c|t|^alpha}, for offsets -radius..=radius. Exact lattice
/// Fourier inversion; the transform is padded so periodization wraps less
/// than ~1e-13 into any cell.
fn invert_cell_cf(alpha: f64, c: f64, power: u32, radius: usize) -> Result<Vec<f64>> {
    let eff = c * power as f64;
    let slack = if alpha < 2.0 {
        let tc = two_sided_tail_constant(alpha);
        (eff * alpha * tc / ALIAS_TARGET).powf(1.0 / (1.0 + alpha)).max(4096.0)
    } else {
        4096.0
    };
    let m = next_pow2(2 * radius + 1 + slack.ceil() as usize);
    if m > MAX_TRANSFORM {
        return Err(Error::capacity(format!(
            "pmf inversion needs a transform of {m} points for radius {radius} at alpha {alpha}; \
             the in-memory budget is {MAX_TRANSFORM}"
        )));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    let half = m / 2;
    for (k, slot) in buf.iter_mut().enumerate().take(half + 1) {
        let theta = 2.0 * PI * k as f64 / m as f64;
        let v = aliased_cell_cf(alpha, c, theta);
        slot.re = v.powi(power as i32);
    }
    for k in half + 1..m {
        buf[k] = buf[m - k];
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(m).process(&mut buf);
    let scale = 1.0 / m as f64;
    let mut out = Vec::with_capacity(2 * radius + 1);
    for j in -(radius as i64)..=radius as i64 {
        let idx = if j >= 0 { j as usize } else { (m as i64 + j) as usize };
        let v = buf[idx].re * scale;
        if v < -1e-10 {
            return Err(Error::numerical(format!(
                "pmf inversion produced mass {v} at offset {j}"
            )));
        }
        out.push(v.max(0.0));
    }
    Ok(out)
}

/// Exact masses P[S_n = j], |j| <= radius, with no window certification.
/// Internal building block for DP kernels and the discrete product kernel.
fn walk_cell_masses(alpha: f64, n: usize, radius: usize) -> Result<Vec<f64>> {
    invert_cell_cf(alpha, 1.0, n as u32, radius)
}

/// Probability mass of S_n on a symmetric window.
#[derive(Debug, Clone)]
pub struct WalkPmf {
    radius: i64,
    mass: Vec<f64>,
}

impl WalkPmf {
    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn prob(&self, x: i64) -> f64 {
        if x.abs() > self.radius {
            0.0
        } else {
            self.mass[(x + self.radius) as usize]
        }
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let r = self.radius;
        self.mass.iter().enumerate().map(move |(i, &p)| (i as i64 - r, p))
    }
}

/// Smallest window radius whose complement holds at most 1e-8 of the mass
/// of S_n. First-order tail inversion with a 1.3 safety factor (Gaussian
/// bound at alpha = 2); may exceed what `walk_pmf` can execute when the
/// tail is heavy, which is the honest answer for e.g. alpha near 1.
pub fn suggested_window(walk: &StableWalk, n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::parameter("walk length must be positive".to_string()));
    }
    let nf = n as f64;
    let w = if walk.alpha == 2.0 {
        // Rounded-step variance is 2 + 1/12; 5.8 sd leaves under 1e-8.
        5.8 * (2.084 * nf).sqrt()
    } else {
        let c = two_sided_tail_constant(walk.alpha);
        (1.3 * nf * c / PMF_MASS_BUDGET).powf(1.0 / walk.alpha)
    };
    Ok(w.ceil() as usize)
}

/// Distribution of S_n on [-window, window] by exact convolution (the
/// single-step pmf is the continuous density integrated over unit cells,
/// matching the rounding sampler). The window must capture at least
/// 1 - 1e-8 of the mass or a capacity error names the window that would.
pub fn walk_pmf(walk: &StableWalk, n: usize, window: usize) -> Result<WalkPmf> {
    if n == 0 || window == 0 {
        return Err(Error::parameter("pmf needs n >= 1 and window >= 1".to_string()));
    }
    if n > MAX_PMF_STEPS {
        return Err(Error::parameter(format!(
            "exact convolution is limited to n <= {MAX_PMF_STEPS}, got {n}"
        )));
    }
    let need = suggested_window(walk, n)?;
    if window < need {
        return Err(Error::capacity(format!(
            "window {window} misses more than {PMF_MASS_BUDGET:.0e} of the mass of S_{n}; \
             suggested window {need}"
        )));
    }
    let mass = walk_cell_masses(walk.alpha, n, window)?;
    Ok(WalkPmf { radius: window as i64, mass })
}

/// sup_x |a_n P(S_n = x) - g_1(x / a_n)| over the certified window.
pub fn llt_sup_error(walk: &StableWalk, n: usize) -> Result<f64> {
    let window = suggested_window(walk, n)?;
    let pmf = walk_pmf(walk, n, window)?;
    let density = StableDensity::new(walk.alpha)?;
    let table = RadialTable::build(walk.alpha, density.crossover)?;
    let a_n = walk.scale(n);
    let mut sup = 0.0f64;
    // The pmf is symmetric by construction, scan one side.
    for x in 0..=window as i64 {
        let g = table.eval(x as f64 / a_n);
        let diff = (a_n * pmf.prob(x) - g).abs();
        if diff > sup {
            sup = diff;
        }
    }
    Ok(sup)
}

/// Density g_1 of the standard symmetric alpha-stable law, d = 1:
/// (1/pi) integral of cos(xt) e^{-t^alpha}, with the power-tail expansion
/// beyond a crossover radius. g_t follows by exact scaling.
#[derive(Debug)]
pub struct StableDensity {
    alpha: f64,
    d: usize,
    crossover: f64,
}

impl StableDensity {
    pub fn new(alpha: f64) -> Result<Self> {
        Self::with_dimension(alpha, 1)
    }

    pub fn with_dimension(alpha: f64, d: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::parameter(format!(
                "stability index must lie in (0, 2], got {alpha}"
            )));
        }
        if d != 1 {
            return Err(Error::parameter(format!(
                "d = {d} is experimental; only d = 1 is supported"
            )));
        }
        Ok(StableDensity { alpha, d, crossover: density_crossover(alpha) })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Radius beyond which the tail expansion replaces quadrature.
    pub fn crossover(&self) -> f64 {
        self.crossover
    }

    pub fn g1(&self, x: f64) -> Result<f64> {
        let ax = x.abs();
        if ax >= self.crossover {
            Ok(g1_tail_series(self.alpha, ax))
        } else {
            g1_quadrature(self.alpha, ax)
        }
    }

    /// g_t(x) = t^{-1/alpha} g_1(x t^{-1/alpha}), exact by construction.
    pub fn g_scaled(&self, t: f64, x: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::parameter(format!("time must be positive, got {t}")));
        }
        let s = t.powf(-1.0 / self.alpha);
        Ok(s * self.g1(x * s)?)
    }

    /// One-sided tail mass P[Y > x] for x past the crossover, from the
    /// integrated tail expansion. Used by the normalization check.
    pub fn tail_mass(&self, x: f64) -> Result<f64> {
        if self.alpha == 2.0 {
            // No power tail; the Gaussian remainder beyond any reasonable
            // crossover is below every tolerance used here.
            return Ok(0.0);
        }
        if x < self.crossover {
            return Err(Error::parameter(format!(
                "tail mass is only tabulated past the crossover {}, got {x}",
                self.crossover
            )));
        }
        let lx = x.ln();
        let mut total = 0.0;
        let mut last = f64::INFINITY;
        let mut sign = 1.0;
        for k in 1..=24 {
            let kf = k as f64;
            let ang = (0.5 * PI * self.alpha * kf).sin();
            let mag = (ln_gamma(1.0 + kf * self.alpha)
                - ln_gamma(kf + 1.0)
                - kf * self.alpha * lx)
                .exp()
                / (kf * self.alpha);
            // The growth and convergence checks run on the magnitude
            // envelope alone: rational alpha makes sin(k pi alpha / 2)
            // vanish to roundoff on some harmonics, which must not be
            // mistaken for the envelope turning or the series settling.
            if mag >= last {
                break;
            }
            last = mag;
            total += sign * ang * mag;
            if mag < 1e-17 * total.abs().max(1e-300) {
                break;
            }
            sign = -sign;
        }
        Ok((total / PI).max(0.0))
    }
}

fn density_crossover(alpha: f64) -> f64 {
    if alpha == 2.0 {
        // Gaussian case has no power tail; quadrature everywhere.
        f64::INFINITY
    } else {
        // The expansion needs more room as the tail constant sin(pi
        // alpha/2) fades toward alpha = 2.
        8.0 * (0.25 / (2.0 - alpha)).sqrt().max(1.0)
    }
}

fn g1_quadrature(alpha: f64, ax: f64) -> Result<f64> {
    // [0, 1] by tanh-sinh: e^{-t^alpha} has a derivative cusp at 0 for
    // alpha < 1. Beyond, half-period Gauss panels until the envelope dies.
    let head = tanh_sinh(|t| (ax * t).cos() * (-t.powf(alpha)).exp(), 0.0, 1.0, 1e-13)?;
    let t_max = (41.5f64).powf(1.0 / alpha).max(1.5);
    let h = (PI / ax.max(1.0)).min(1.0);
    let mut tail = 0.0;
    let mut t = 1.0;
    while t < t_max {
        let hi = (t + h).min(t_max);
        tail += gl_panel(|s| (ax * s).cos() * (-s.powf(alpha)).exp(), t, hi);
        t = hi;
    }
    let v = (head + tail) / PI;
    if !v.is_finite() {
        return Err(Error::numerical(format!(
            "density quadrature failed at alpha {alpha}, x {ax}"
        )));
    }
    Ok(v.max(0.0))
}

/// Asymptotic tail expansion of g_1, summed to its smallest term:
/// (1/pi) sum_k (-1)^{k+1} Gamma(1 + k alpha)/k! sin(k pi alpha/2)
/// x^{-1-k alpha}. Convergent for alpha < 1, asymptotic above.
fn g1_tail_series(alpha: f64, ax: f64) -> f64 {
    let lx = ax.ln();
    let mut total = 0.0;
    let mut last = f64::INFINITY;
    let mut sign = 1.0;
    for k in 1..=24 {
        let kf = k as f64;
        let ang = (0.5 * PI * alpha * kf).sin();
        let mag =
            (ln_gamma(1.0 + kf * alpha) - ln_gamma(kf + 1.0) - (1.0 + kf * alpha) * lx).exp();
        // Envelope-only checks: rational alpha makes sin(k pi alpha / 2)
        // vanish to roundoff on some harmonics, which must not be mistaken
        // for the envelope turning or the series settling.
        if mag >= last {
            break;
        }
        last = mag;
        total += sign * ang * mag;
        if mag < 1e-17 * total.abs().max(1e-300) {
            break;
        }
        sign = -sign;
    }
    (total / PI).max(0.0)
}

/// Uniform table of g_1 on [0, min(crossover, 64)] with 4-point Lagrange
/// interpolation (even reflection at 0) and the tail expansion beyond.
/// Interpolation error is around 1e-10, well under every consumer's
/// tolerance. Immutable once built; share behind an Arc.
struct RadialTable {
    alpha: f64,
    step: f64,
    max_x: f64,
    vals: Vec<f64>,
}

impl RadialTable {
    fn build(alpha: f64, crossover: f64) -> Result<Self> {
        let max_x = crossover.min(64.0);
        let step = 1.0 / 256.0;
        let count = (max_x / step).ceil() as usize + 4;
        let mut vals = Vec::with_capacity(count);
        for i in 0..count {
            vals.push(g1_quadrature(alpha, i as f64 * step)?);
        }
        Ok(RadialTable { alpha, step, max_x, vals })
    }

    fn eval(&self, x: f64) -> f64 {
        let ax = x.abs();
        if ax >= self.max_x {
            return g1_tail_series(self.alpha, ax);
        }
        let u = ax / self.step;
        let i = (u.floor() as i64).clamp(0, self.vals.len() as i64 - 2);
        let frac = u - i as f64;
        // Even reflection below 0 keeps the stencil symmetric at the
        // origin; the top end is guarded by the +4 build margin.
        let grab = |j: i64| -> f64 { self.vals[j.unsigned_abs() as usize] };
        let (p0, p1, p2, p3) = (grab(i - 1), grab(i), grab(i + 1), grab(i + 2));
        // Catmull-Rom form of the cubic through the 4 stencil points.
        let a = -0.5 * p0 + 1.5 * p1 - 1.5 * p2 + 0.5 * p3;
        let b = p0 - 2.5 * p1 + 2.0 * p2 - 0.5 * p3;
        let c = -0.5 * p0 + 0.5 * p2;
        ((a * frac + b) * frac + c) * frac + p1
    }
}

/// How the correlation kernels are indexed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelLevel {
    /// Lattice coordinates (n, x); step weight a_N^d P(S_dn = dx).
    Discrete(usize),
    /// Diffusive coordinates (t, x); step weight g_dt(dx).
    Continuum,
}

/// Package the polymer correlation kernels for the chaos module. Points
/// are (time, space) pairs; zero time gaps evaluate to 0 and there is no
/// terminal factor (free endpoint).
pub fn polymer_kernel(walk: &StableWalk, level: KernelLevel) -> Result<ProductKernel> {
    match level {
        KernelLevel::Continuum => {
            let alpha = walk.alpha;
            let table = Arc::new(RadialTable::build(alpha, density_crossover(alpha))?);
            let step = Box::new(move |delta: &[f64]| -> f64 {
                let dt = delta[0];
                if dt <= 0.0 {
                    return 0.0;
                }
                let s = dt.powf(-1.0 / alpha);
                s * table.eval(delta[1] * s)
            });
            ProductKernel::new(2, 0, 1.0, step, Box::new(|_: &[f64]| 1.0))
        }
        KernelLevel::Discrete(n) => {
            if n == 0 {
                return Err(Error::parameter("kernel horizon must be positive".to_string()));
            }
            let alpha = walk.alpha;
            let a_n = walk.scale(n);
            let memo: Mutex<HashMap<usize, (usize, Vec<f64>)>> = Mutex::new(HashMap::new());
            let step = Box::new(move |delta: &[f64]| -> f64 {
                let dn = delta[0].round();
                if dn < 0.5 {
                    return 0.0;
                }
                let dn = dn as usize;
                let dx = delta[1].round() as i64;
                let need = (2 * dx.unsigned_abs() as usize)
                    .max((48.0 * (dn as f64).powf(1.0 / alpha)).ceil() as usize)
                    .max(256);
                let mut guard = memo.lock().unwrap();
                let entry = guard.get(&dn);
                if entry.is_none() || entry.unwrap().0 < need {
                    match walk_cell_masses(alpha, dn, need) {
                        Ok(mass) => {
                            guard.insert(dn, (need, mass));
                        }
                        // Offsets past the transform budget carry less
                        // than 1e-12 of mass; evaluate them as 0.
                        Err(_) => return 0.0,
                    }
                }
                let (radius, mass) = guard.get(&dn).unwrap();
                let idx = dx + *radius as i64;
                if idx < 0 || idx >= mass.len() as i64 {
                    return 0.0;
                }
                a_n * mass[idx as usize]
            });
            ProductKernel::new(2, 0, 1.0, step, Box::new(|_: &[f64]| 1.0))
        }
    }
}

/// Model parameters. `beta` is the lattice coupling actually run; the
/// continuum target `beta_hat` is recorded when built from one, NaN when
/// raw. `a` is the truncation radius multiplier (window 2 a A_N in lattice
/// units, A_N = a_N here).
#[derive(Debug, Clone, Copy)]
pub struct PolymerParams {
    pub n: usize,
    pub beta: f64,
    pub a: f64,
    pub beta_hat: f64,
    pub law: TailLaw,
}

impl PolymerParams {
    /// Intermediate-disorder scaling beta = beta_hat a_N^d / V_N with
    /// V_N the matched quantile scale at v_N = 1/(N a_N^d). Requires the
    /// subcritical gate gamma < 1 + alpha/d unless overridden.
    pub fn from_targets(
        walk: &StableWalk,
        law: &TailLaw,
        n: usize,
        beta_hat: f64,
        a: f64,
        allow_supercritical: bool,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::parameter("horizon must be positive".to_string()));
        }
        if !(beta_hat >= 0.0) || !(a > 0.0) {
            return Err(Error::parameter(format!(
                "need beta_hat >= 0 and truncation multiplier > 0, got {beta_hat}, {a}"
            )));
        }
        let threshold = 1.0 + walk.alpha / walk.d as f64;
        if law.gamma >= threshold && !allow_supercritical {
            return Err(Error::gate(format!(
                "disorder tail gamma {} is not below 1 + alpha/d = {threshold}; \
                 the intermediate-disorder scaling degenerates",
                law.gamma
            )));
        }
        let a_n = walk.scale(n);
        let v_n = 1.0 / (n as f64 * a_n);
        let big_v = solve_noise_scale(law, v_n)?;
        let beta = beta_hat * a_n / big_v;
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::parameter(format!(
                "scaled coupling beta = {beta} leaves [0, 1]; lower beta_hat or raise N"
            )));
        }
        Ok(PolymerParams { n, beta, a, beta_hat, law: *law })
    }

    pub fn from_raw(n: usize, beta: f64, a: f64, law: &TailLaw) -> Result<Self> {
        if n == 0 {
            return Err(Error::parameter("horizon must be positive".to_string()));
        }
        if !(0.0..=1.0).contains(&beta) || !(a > 0.0) {
            return Err(Error::parameter(format!(
                "need beta in [0, 1] and truncation multiplier > 0, got {beta}, {a}"
            )));
        }
        Ok(PolymerParams { n, beta, a, beta_hat: f64::NAN, law: *law })
    }

    /// Hard window radius ceil(2 a A_N).
    pub fn window(&self, walk: &StableWalk) -> usize {
        (2.0 * self.a * walk.scale(self.n)).ceil() as usize
    }
}

/// Space-time disorder on [1..n] x [-radius..radius], row-major by time.
#[derive(Debug, Clone)]
pub struct DisorderField {
    n: usize,
    radius: i64,
    values: Vec<f64>,
}

impl DisorderField {
    pub fn from_values(n: usize, radius: i64, values: Vec<f64>) -> Result<Self> {
        let width = 2 * radius + 1;
        if n == 0 || radius < 0 || values.len() != n * width as usize {
            return Err(Error::parameter(format!(
                "field shape mismatch: n {n}, radius {radius}, {} values",
                values.len()
            )));
        }
        Ok(DisorderField { n, radius, values })
    }

    /// Stream a fresh field from the centered heavy-tailed law.
    pub fn sample(law: &TailLaw, n: usize, radius: i64, stream: Stream) -> Result<Self> {
        if n == 0 || radius < 0 {
            return Err(Error::parameter(format!(
                "field needs n >= 1 and radius >= 0, got {n}, {radius}"
            )));
        }
        let width = (2 * radius + 1) as usize;
        Self::from_values(n, radius, sample_disorder(law, n * width, stream))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn value(&self, t: usize, x: i64) -> f64 {
        assert!(t >= 1 && t <= self.n && x.abs() <= self.radius, "field index out of range");
        let width = 2 * self.radius + 1;
        self.values[(t - 1) * width as usize + (x + self.radius) as usize]
    }

    fn row(&self, t: usize) -> &[f64] {
        let width = (2 * self.radius + 1) as usize;
        &self.values[(t - 1) * width..t * width]
    }

    /// Binary grid format: header {n, radius, gamma, seed} as little-
    /// endian 64-bit words, then the row-major values.
    pub fn write_grid(&self, path: &Path, gamma: f64, seed: u64) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&(self.radius as u64).to_le_bytes())?;
        w.write_all(&gamma.to_le_bytes())?;
        w.write_all(&seed.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_grid(path: &Path) -> Result<(Self, f64, u64)> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut word = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let n = u64::from_le_bytes(next(&mut r)?) as usize;
        let radius = u64::from_le_bytes(next(&mut r)?) as i64;
        let gamma = f64::from_le_bytes(next(&mut r)?);
        let seed = u64::from_le_bytes(next(&mut r)?);
        if n == 0 || radius < 0 || n.checked_mul((2 * radius + 1) as usize).is_none() {
            return Err(Error::parameter(format!(
                "grid header out of range: n {n}, radius {radius}"
            )));
        }
        let count = n * (2 * radius + 1) as usize;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(f64::from_le_bytes(next(&mut r)?));
        }
        Ok((DisorderField { n, radius, values }, gamma, seed))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowMode {
    /// Mass leaving |x| <= ceil(2 a A_N) is killed.
    HardWindow,
    /// The full field width is the window; the homogeneous boundary loss
    /// must stay under 1e-3 and is reported.
    FreeWindow,
}

/// One partition-function evaluation: the disordered value, its exact
/// disorder mean (the homogeneous window mass, at most 1), and in free
/// mode the homogeneous boundary defect.
#[derive(Debug, Clone, Copy)]
pub struct PolymerZ {
    pub z: f64,
    pub expected_mass: f64,
    pub defect: Option<f64>,
}

/// Windowed DP plan: Z(n, x) = [sum_y Z(n-1, y) p(x - y)] (1 + beta
/// omega_{n,x}) over the window. The step kernel holds every offset the
/// window can use, so the hard-window recursion is exact. Build once,
/// run per disorder replica.
pub struct PolymerDp {
    n: usize,
    beta: f64,
    window: i64,
    mode: WindowMode,
    plan: FixedKernel,
    kernel_half: usize,
    hom_mass: f64,
    defect: Option<f64>,
}

impl PolymerDp {
    pub fn hard(walk: &StableWalk, params: &PolymerParams) -> Result<Self> {
        let window = params.window(walk);
        Self::build(walk, params, window, WindowMode::HardWindow)
    }

    /// Free-endpoint surrogate on a window of `radius` sites; errors with
    /// a suggested radius when the homogeneous boundary loss exceeds the
    /// 1e-3 budget.
    pub fn free(walk: &StableWalk, params: &PolymerParams, radius: usize) -> Result<Self> {
        let hard = params.window(walk);
        if radius < hard {
            return Err(Error::parameter(format!(
                "free window {radius} is smaller than the truncation window {hard}"
            )));
        }
        Self::build(walk, params, radius, WindowMode::FreeWindow)
    }

    fn build(
        walk: &StableWalk,
        params: &PolymerParams,
        window: usize,
        mode: WindowMode,
    ) -> Result<Self> {
        let kernel = walk_cell_masses(walk.alpha, 1, 2 * window)?;
        let plan = FixedKernel::new(&kernel, 2 * window + 1);
        let mut dp = PolymerDp {
            n: params.n,
            beta: params.beta,
            window: window as i64,
            mode,
            plan,
            kernel_half: 2 * window,
            hom_mass: f64::NAN,
            defect: None,
        };
        dp.hom_mass = dp.run_inner(None)?;
        if mode == WindowMode::FreeWindow {
            let defect = 1.0 - dp.hom_mass;
            if defect > FREE_DEFECT_BUDGET {
                let suggest = suggest_free_window(walk, params.n);
                return Err(Error::capacity(format!(
                    "free window {window} loses {defect:.3e} of the homogeneous mass \
                     (budget {FREE_DEFECT_BUDGET:.0e}); suggested radius {suggest}"
                )));
            }
            dp.defect = Some(defect);
        }
        Ok(dp)
    }

    pub fn window(&self) -> i64 {
        self.window
    }

    pub fn mode(&self) -> WindowMode {
        self.mode
    }

    /// E_omega[Z]: the homogeneous window mass.
    pub fn expected_mass(&self) -> f64 {
        self.hom_mass
    }

    pub fn defect(&self) -> Option<f64> {
        self.defect
    }

    fn run_inner(&self, field: Option<&DisorderField>) -> Result<f64> {
        let width = (2 * self.window + 1) as usize;
        let mut z = vec![0.0f64; width];
        z[self.window as usize] = 1.0;
        for t in 1..=self.n {
            let out = self.plan.apply(&z);
            z.copy_from_slice(&out[self.kernel_half..self.kernel_half + width]);
            if let Some(field) = field {
                // beta = 0 takes the fieldless path, so the disordered
                // and homogeneous runs agree bitwise there.
                let offset = (field.radius() - self.window) as usize;
                let row = &field.row(t)[offset..offset + width];
                for (zv, om) in z.iter_mut().zip(row) {
                    let w = 1.0 + self.beta * om;
                    if w < 0.0 {
                        return Err(Error::parameter(format!(
                            "negative weight 1 + beta omega = {w} at time {t}"
                        )));
                    }
                    *zv *= w;
                }
            }
        }
        Ok(z.iter().sum())
    }

    pub fn run(&self, field: &DisorderField) -> Result<PolymerZ> {
        if field.n() < self.n || field.radius() < self.window {
            return Err(Error::parameter(format!(
                "field covers [1..{}] x [-{}..{}], the DP needs [1..{}] x [-{}..{}]",
                field.n(),
                field.radius(),
                field.radius(),
                self.n,
                self.window,
                self.window
            )));
        }
        let z = if self.beta == 0.0 { self.hom_mass } else { self.run_inner(Some(field))? };
        Ok(PolymerZ { z, expected_mass: self.hom_mass, defect: self.defect })
    }

    /// Z / E[Z]; exactly 1 at beta = 0.
    pub fn normalized(&self, field: &DisorderField) -> Result<f64> {
        Ok(self.run(field)?.z / self.hom_mass)
    }
}

/// First-order window suggestion for a 1e-3 homogeneous boundary loss.
pub fn suggest_free_window(walk: &StableWalk, n: usize) -> usize {
    let nf = n as f64;
    let w = if walk.alpha == 2.0 {
        4.5 * (2.084 * nf).sqrt()
    } else {
        let c = two_sided_tail_constant(walk.alpha);
        (4.0 * nf * c / FREE_DEFECT_BUDGET).powf(1.0 / walk.alpha)
    };
    w.ceil() as usize
}

/// One-call wrapper: build the plan for this mode and run the field. In
/// free mode the window is the field's own radius.
pub fn disordered_polymer_z(
    walk: &StableWalk,
    params: &PolymerParams,
    field: &DisorderField,
    mode: WindowMode,
) -> Result<PolymerZ> {
    let dp = match mode {
        WindowMode::HardWindow => PolymerDp::hard(walk, params)?,
        WindowMode::FreeWindow => PolymerDp::free(walk, params, field.radius() as usize)?,
    };
    dp.run(field)
}

/// Windowed partition function by exhaustive path enumeration, organized
/// as a meet-in-the-middle join over the midpoint position so the depth
/// is halved. Exponential cost; an oracle for tiny instances only.
pub fn enumerate_polymer_z(
    walk: &StableWalk,
    n: usize,
    window: usize,
    beta: f64,
    field: &DisorderField,
) -> Result<f64> {
    if n == 0 || n > 10 || window > 12 {
        return Err(Error::parameter(format!(
            "enumeration oracle is for n <= 10, window <= 12, got n {n}, window {window}"
        )));
    }
    if field.n() < n || field.radius() < window as i64 {
        return Err(Error::parameter("field does not cover the enumeration window".to_string()));
    }
    let l = window as i64;
    let kernel = walk_cell_masses(walk.alpha, 1, 2 * window)?;
    let p = |d: i64| -> f64 { kernel[(d + 2 * l) as usize] };
    let half = n / 2;

    // Forward half: weights for arrival times 1..=half, bucketed by the
    // midpoint position.
    let mut fwd = vec![0.0f64; 2 * window + 1];
    fn forward(
        depth: usize,
        half: usize,
        pos: i64,
        weight: f64,
        l: i64,
        beta: f64,
        field: &DisorderField,
        p: &dyn Fn(i64) -> f64,
        fwd: &mut [f64],
    ) {
        if depth == half {
            fwd[(pos + l) as usize] += weight;
            return;
        }
        for x in -l..=l {
            let w = weight * p(x - pos) * (1.0 + beta * field.value(depth + 1, x));
            forward(depth + 1, half, x, w, l, beta, field, p, fwd);
        }
    }
    forward(0, half, 0, 1.0, l, beta, field, &p, &mut fwd);

    // Backward half: free-endpoint sums from each midpoint position.
    fn backward(
        depth: usize,
        n: usize,
        pos: i64,
        l: i64,
        beta: f64,
        field: &DisorderField,
        p: &dyn Fn(i64) -> f64,
    ) -> f64 {
        if depth == n {
            return 1.0;
        }
        let mut acc = 0.0;
        for x in -l..=l {
            acc += p(x - pos)
                * (1.0 + beta * field.value(depth + 1, x))
                * backward(depth + 1, n, x, l, beta, field, p);
        }
        acc
    }
    let mut z = 0.0;
    for s in -l..=l {
        let f = fwd[(s + l) as usize];
        if f != 0.0 {
            z += f * backward(half, n, s, l, beta, field, &p);
        }
    }
    Ok(z)
}

/// Samples the continuum polymer limit: truncated-noise chaos on a
/// space-time mesh over [0,1] x [-2A, 2A]. The per-level product DP with
/// diagonal weights 1 + (beta_hat/dx) field equals the order-by-order
/// chaos sum with killed transition compositions (expanding the diagonal
/// factors selects at most one cell per level, which are exactly the
/// time-distinct multilinear terms), so no order cap is needed.
pub struct ContinuumPolymerProxy {
    law: TailLaw,
    beta_hat: f64,
    cutoff: f64,
    t_levels: usize,
    half_cells: i64,
    dx: f64,
    plan: FixedKernel,
    kernel_half: usize,
    hom_mass: f64,
    domain: DomainBox,
}

impl ContinuumPolymerProxy {
    pub fn new(
        alpha: f64,
        law: &TailLaw,
        beta_hat: f64,
        big_a: f64,
        cutoff: f64,
        t_levels: usize,
        dx: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) || !(beta_hat >= 0.0) || !(big_a > 0.0) {
            return Err(Error::parameter(format!(
                "need alpha in (0,2], beta_hat >= 0, A > 0; got {alpha}, {beta_hat}, {big_a}"
            )));
        }
        if t_levels < 2 || !(dx > 0.0) {
            return Err(Error::parameter(format!(
                "need at least 2 time levels and dx > 0, got {t_levels}, {dx}"
            )));
        }
        let dt = 1.0 / t_levels as f64;
        let step_scale = dt.powf(1.0 / alpha);
        if dx > step_scale {
            return Err(Error::parameter(format!(
                "cell width {dx} exceeds the per-level displacement scale {step_scale:.4}; \
                 refine the space mesh"
            )));
        }
        let half_cells = (2.0 * big_a / dx).ceil() as i64;
        let width = (2 * half_cells + 1) as usize;
        // Transition masses of the continuous step binned to dx cells:
        // the rescaled variable has CF e^{-(dt/dx^alpha)|t|^alpha}.
        let kernel = invert_cell_cf(alpha, dt / dx.powf(alpha), 1, 2 * half_cells as usize)?;
        let plan = FixedKernel::new(&kernel, width);
        let domain = DomainBox::new(vec![0.0, -2.0 * big_a], vec![1.0, 2.0 * big_a])?;
        let mut proxy = ContinuumPolymerProxy {
            law: *law,
            beta_hat,
            cutoff,
            t_levels,
            half_cells,
            dx,
            plan,
            kernel_half: 2 * half_cells as usize,
            hom_mass: f64::NAN,
            domain,
        };
        proxy.hom_mass = proxy.run(None);
        Ok(proxy)
    }

    /// Homogeneous (absorbed) window mass; the proxy normalizer.
    pub fn expected_mass(&self) -> f64 {
        self.hom_mass
    }

    fn run(&self, field: Option<&[f64]>) -> f64 {
        let width = (2 * self.half_cells + 1) as usize;
        let mut z = vec![0.0f64; width];
        z[self.half_cells as usize] = 1.0;
        let scale = self.beta_hat / self.dx;
        for t in 0..self.t_levels {
            let out = self.plan.apply(&z);
            z.copy_from_slice(&out[self.kernel_half..self.kernel_half + width]);
            if let Some(field) = field {
                for (zv, f) in z.iter_mut().zip(&field[t * width..(t + 1) * width]) {
                    *zv *= 1.0 + scale * f;
                }
            }
        }
        z.iter().sum()
    }

    /// One draw of the normalized continuum partition function.
    pub fn sample(&self, stream: Stream) -> Result<f64> {
        let cloud = sample_cloud(
            &self.domain,
            self.law.gamma,
            self.law.c_plus,
            self.law.c_minus,
            self.cutoff,
            stream,
        )?;
        let width = (2 * self.half_cells + 1) as usize;
        let dt = 1.0 / self.t_levels as f64;
        let kappa = compensator_rate(self.law.gamma, self.law.c_plus, self.law.c_minus, self.cutoff);
        let mut field = vec![-kappa * dt * self.dx; self.t_levels * width];
        for (pos, mark) in cloud.atoms() {
            let level = ((pos[0] * self.t_levels as f64).ceil() as usize)
                .clamp(1, self.t_levels);
            let cell = ((pos[1] / self.dx).round() as i64)
                .clamp(-self.half_cells, self.half_cells);
            field[(level - 1) * width + (cell + self.half_cells) as usize] += mark;
        }
        Ok(self.run(Some(&field)) / self.hom_mass)
    }
}
