//! Statistical verification layer: KS distances, bootstrap moments,
//! empirical characteristic functions, convergence reports, and the single
//! table of acceptance tolerances.

use crate::error::{Error, Result};
use crate::rng::Stream;
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;
use std::fmt;

/// A batch of scalar observations with provenance.
#[derive(Debug, Clone, Serialize)]
pub struct SampleSet {
    pub label: String,
    pub values: Vec<f64>,
}

impl SampleSet {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::parameter("empty sample set".to_string()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::numerical(format!("non-finite sample {bad}")));
        }
        Ok(SampleSet { label: label.into(), values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// Sample standard deviation (n-1 denominator).
    pub fn sd(&self) -> f64 {
        let m = self.mean();
        let n = self.len() as f64;
        if n < 2.0 {
            return 0.0;
        }
        (self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt()
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        self.sd() / (self.len() as f64).sqrt()
    }

    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    /// Empirical quantile by linear interpolation of the order statistics.
    pub fn quantile(&self, q: f64) -> f64 {
        assert!((0.0..=1.0).contains(&q));
        let v = self.sorted();
        let pos = q * (v.len() - 1) as f64;
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        if i + 1 < v.len() {
            v[i] * (1.0 - frac) + v[i + 1] * frac
        } else {
            v[i]
        }
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    /// Empirical L^p norm (E|X|^p)^{1/p}.
    pub fn p_norm(&self, p: f64) -> f64 {
        assert!(p > 0.0);
        (self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>() / self.len() as f64).powf(1.0 / p)
    }
}

/// Two-sample Kolmogorov-Smirnov distance by sorted merge.
pub fn ks_distance(s1: &SampleSet, s2: &SampleSet) -> Result<f64> {
    if s1.is_empty() || s2.is_empty() {
        return Err(Error::parameter("KS needs nonempty samples".to_string()));
    }
    let a = s1.sorted();
    let b = s2.sorted();
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() || j < b.len() {
        // Advance past ties together so the CDFs are compared between jumps.
        let x = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// One-sample KS distance against an analytic CDF.
pub fn ks_one_sample(sample: &SampleSet, cdf: impl Fn(f64) -> f64) -> f64 {
    let v = sample.sorted();
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max((f - (i + 1) as f64 / n).abs());
    }
    d
}

/// 99% two-sample KS acceptance band.
pub fn ks_band_99(n: usize, m: usize) -> f64 {
    1.63 * (((n + m) as f64) / ((n * m) as f64)).sqrt()
}

/// Percentile-bootstrap estimate of the p-th absolute moment to the 1/p,
/// with a 95% CI. Resamples are keyed by lane so the call is deterministic.
pub fn bootstrap_moment(
    s: &SampleSet,
    p: f64,
    n_resamples: usize,
    stream: Stream,
) -> Result<(f64, (f64, f64))> {
    if !(p > 0.0 && p <= 2.0) {
        return Err(Error::parameter(format!("moment order must lie in (0,2], got {p}")));
    }
    if n_resamples < 200 {
        return Err(Error::parameter("need at least 200 bootstrap resamples".to_string()));
    }
    let estimate = s.p_norm(p);
    let n = s.len();
    let mut rng = stream.rng();
    let mut stats: Vec<f64> = Vec::with_capacity(n_resamples);
    for _ in 0..n_resamples {
        let mut acc = 0.0;
        for _ in 0..n {
            let idx = rng.gen_range(0..n);
            acc += s.values[idx].abs().powf(p);
        }
        stats.push((acc / n as f64).powf(1.0 / p));
    }
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = stats[((n_resamples as f64 * 0.025).floor() as usize).min(n_resamples - 1)];
    let hi = stats[((n_resamples as f64 * 0.975).ceil() as usize).min(n_resamples - 1)];
    Ok((estimate, (lo, hi)))
}

/// p-th absolute moment, to the 1/p, for samples with a power tail of
/// known index g > p. Once g < 2p the plain mean of |x|^p has infinite
/// variance and a single draw can dominate the estimate at any feasible
/// sample size, so instead: average the bounded part |x|^p 1{|x| <= u}
/// directly, anchor the tail at the empirical (1 - tail_fraction)
/// quantile u of |x|, and integrate the power continuation in closed
/// form, E[|X|^p; |X| > u] = tail_fraction u^p g/(g - p). Returns the
/// norm and its standard error; the tail term's error comes from the
/// quantile (sd(log u) ~ 1/(g sqrt(k)) with k exceedances), the bulk's
/// from the summand variance.
pub fn tail_adjusted_p_norm(
    s: &SampleSet,
    p: f64,
    tail_index: f64,
    tail_fraction: f64,
) -> Result<(f64, f64)> {
    if !(p > 0.0) || !(tail_index > p) {
        return Err(Error::parameter(format!(
            "need 0 < p < tail index, got p={p}, index={tail_index}"
        )));
    }
    if !(tail_fraction > 0.0 && tail_fraction < 0.5) {
        return Err(Error::parameter(format!(
            "tail fraction must lie in (0, 0.5), got {tail_fraction}"
        )));
    }
    let m = s.len();
    let k = (m as f64 * tail_fraction).round();
    if k < 25.0 {
        return Err(Error::parameter(format!(
            "only {k} tail exceedances at fraction {tail_fraction} of {m} samples; \
             need at least 25"
        )));
    }
    let mut abs: Vec<f64> = s.values.iter().map(|v| v.abs()).collect();
    abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = (1.0 - tail_fraction) * (m - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    let u = if i + 1 < m { abs[i] * (1.0 - frac) + abs[i + 1] * frac } else { abs[i] };
    if !(u > 0.0) {
        return Err(Error::parameter(
            "tail anchor quantile is zero; sample has no tail to adjust".to_string(),
        ));
    }
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for &x in &abs {
        let y = if x <= u { x.powf(p) } else { 0.0 };
        sum += y;
        sum_sq += y * y;
    }
    let bulk = sum / m as f64;
    let bulk_var = (sum_sq / m as f64 - bulk * bulk).max(0.0) / m as f64;
    let tail = tail_fraction * u.powf(p) * tail_index / (tail_index - p);
    let tail_sd = tail * p / (tail_index * k.sqrt());
    let moment = bulk + tail;
    let moment_se = (bulk_var + tail_sd * tail_sd).sqrt();
    let norm = moment.powf(1.0 / p);
    let norm_se = moment_se * norm / (p * moment);
    Ok((norm, norm_se))
}

/// Empirical characteristic function (1/n) sum exp(i theta x) on a grid.
pub fn empirical_cf(s: &SampleSet, theta_grid: &[f64]) -> Vec<Complex64> {
    theta_grid
        .iter()
        .map(|&t| {
            let mut acc = Complex64::new(0.0, 0.0);
            for &x in &s.values {
                let (s_, c_) = (t * x).sin_cos();
                acc += Complex64::new(c_, s_);
            }
            acc / s.len() as f64
        })
        .collect()
}

/// Least-squares line through (x, y) with the coefficient of determination.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert!(xs.len() == ys.len() && xs.len() >= 2);
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

/// Pearson chi-square statistic of observed counts against Poisson(lambda),
/// pooling bins so every expected count is >= 5. Returns (statistic, dof).
pub fn poisson_gof(observed_counts: &[u64], lambda: f64) -> (f64, usize) {
    let n: u64 = observed_counts.iter().sum::<u64>();
    assert!(n > 0);
    let max_k = observed_counts.len();
    // Expected Poisson masses, final bin absorbs the upper tail.
    let mut expected: Vec<f64> = Vec::with_capacity(max_k);
    let mut mass = (-lambda).exp();
    let mut cum = 0.0;
    for k in 0..max_k {
        if k > 0 {
            mass *= lambda / k as f64;
        }
        expected.push(mass);
        cum += mass;
    }
    if let Some(last) = expected.last_mut() {
        *last += 1.0 - cum;
    }
    // Pool adjacent bins until each expected count reaches 5.
    let mut pooled: Vec<(f64, f64)> = Vec::new(); // (observed, expected)
    let mut acc_o = 0.0;
    let mut acc_e = 0.0;
    for (o, e) in observed_counts.iter().zip(&expected) {
        acc_o += *o as f64;
        acc_e += e * n as f64;
        if acc_e >= 5.0 {
            pooled.push((acc_o, acc_e));
            acc_o = 0.0;
            acc_e = 0.0;
        }
    }
    if acc_e > 0.0 {
        if let Some(last) = pooled.last_mut() {
            last.0 += acc_o;
            last.1 += acc_e;
        } else {
            pooled.push((acc_o, acc_e));
        }
    }
    let stat: f64 = pooled.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    // dof: bins - 1 (lambda is specified, not fitted).
    (stat, pooled.len().saturating_sub(1))
}

/// Upper quantile of chi-square with `dof` degrees of freedom.
pub fn chi_square_critical(dof: usize, upper_prob: f64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let d = ChiSquared::new(dof as f64).expect("positive dof");
    d.inverse_cdf(1.0 - upper_prob)
}

// ---------------------------------------------------------------------------
// Convergence reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub resolution: String,
    pub ks_to_reference: f64,
    pub mean: f64,
    pub p_norm: f64,
    pub extra: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct ConvergenceReport {
    pub title: String,
    pub rows: Vec<ReportRow>,
    pub verdicts: Vec<(String, bool)>,
}

impl ConvergenceReport {
    pub fn new(title: impl Into<String>) -> Self {
        ConvergenceReport { title: title.into(), rows: Vec::new(), verdicts: Vec::new() }
    }

    pub fn push_row(&mut self, row: ReportRow) {
        assert!((0.0..=1.0).contains(&row.ks_to_reference), "KS outside [0,1]");
        self.rows.push(row);
    }

    pub fn verdict(&mut self, name: impl Into<String>, pass: bool) {
        self.verdicts.push((name.into(), pass));
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|(_, p)| *p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for ConvergenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# {}", self.title)?;
        for r in &self.rows {
            write!(f, "  {:>10}  KS={:.4}  mean={:.6}  pnorm={:.6}", r.resolution, r.ks_to_reference, r.mean, r.p_norm)?;
            for (k, v) in &r.extra {
                write!(f, "  {k}={v:.6}")?;
            }
            writeln!(f)?;
        }
        for (name, pass) in &self.verdicts {
            writeln!(f, "  [{}] {}", if *pass { "pass" } else { "FAIL" }, name)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Acceptance tolerances, centralized. Every acceptance check reads its
// thresholds from this table and nowhere else.
// ---------------------------------------------------------------------------

pub struct ToleranceTable {
    /// 1. Pinning chaos-vs-DP identity: relative error budget.
    pub exact_identity_rel: f64,
    /// 3. Renewal-constant check: relative budget on u(N) normalization.
    pub renewal_constant_rel: f64,
    /// 4. Homogeneous limit: relative budget on Z and Zc at large N.
    pub ml_limit_rel_z: f64,
    pub ml_limit_rel_zc: f64,
    /// 4. Series vs exp on alpha = 1.
    pub ml_exp_abs: f64,
    /// 5. Simplex MC agreement in standard errors.
    pub simplex_se_factor: f64,
    /// 6. Characteristic functional sup-distance over the theta grid.
    pub cf_sup_abs: f64,
    /// 7. Martingale mean/covariance budgets in standard errors; norm ratio cap.
    pub martingale_se_factor: f64,
    pub martingale_norm_ratio_max: f64,
    /// 8. Pinning ladder: final KS cap, allowed KS backslide, p-norm budget.
    pub pinning_ks_final: f64,
    pub ks_noise_band: f64,
    pub pinning_pnorm_rel: f64,
    /// 9. Polymer ladder final KS cap.
    pub polymer_ks_final: f64,
    /// 10. Truncation bound slack in standard errors.
    pub truncation_se_factor: f64,
    /// 11. Relevance dichotomy: weak-disorder mean window, strong-disorder median cap.
    pub weak_mean_lo: f64,
    pub weak_mean_hi: f64,
    pub strong_median_max: f64,
    /// 12. Truncated-moment ratio budget.
    pub truncated_moment_rel: f64,
    /// 13. LLT sup-distance cap at the largest n.
    pub llt_sup_abs: f64,
    /// 14. Moment-bound shape: fit quality floor and cross-resolution spread cap.
    pub moment_shape_r2_min: f64,
    pub moment_shape_spread_max: f64,
}

/// The single source of truth for acceptance thresholds.
pub const ACCEPTANCE: ToleranceTable = ToleranceTable {
    exact_identity_rel: 1e-9,
    renewal_constant_rel: 0.10,
    ml_limit_rel_z: 0.03,
    ml_limit_rel_zc: 0.05,
    ml_exp_abs: 1e-12,
    simplex_se_factor: 3.0,
    cf_sup_abs: 0.02,
    martingale_se_factor: 5.0,
    martingale_norm_ratio_max: 2.0,
    pinning_ks_final: 0.05,
    ks_noise_band: 0.01,
    pinning_pnorm_rel: 0.10,
    polymer_ks_final: 0.07,
    truncation_se_factor: 3.0,
    weak_mean_lo: 0.9,
    weak_mean_hi: 1.1,
    strong_median_max: 0.2,
    truncated_moment_rel: 0.05,
    llt_sup_abs: 0.05,
    moment_shape_r2_min: 0.9,
    moment_shape_spread_max: 2.0,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::purpose;
    use approx::assert_relative_eq;

    fn stream(i: u64) -> Stream {
        Stream::new(0xC0FFEE, purpose::BOOTSTRAP, i)
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let a = SampleSet::new("a", vec![1.0, 2.0, 3.0]).unwrap();
        let b = SampleSet::new("b", vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(ks_distance(&a, &b).unwrap(), 0.0);
        let c = SampleSet::new("c", vec![10.0, 11.0]).unwrap();
        assert_eq!(ks_distance(&a, &c).unwrap(), 1.0);
    }

    #[test]
    fn ks_matches_brute_force() {
        let mut rng = stream(0).rng();
        for _ in 0..20 {
            let a: Vec<f64> = (0..37).map(|_| rng.gen::<f64>()).collect();
            let b: Vec<f64> = (0..53).map(|_| rng.gen::<f64>() * 1.2).collect();
            let sa = SampleSet::new("a", a.clone()).unwrap();
            let sb = SampleSet::new("b", b.clone()).unwrap();
            let fast = ks_distance(&sa, &sb).unwrap();
            // Brute force over all jump points.
            let mut slow: f64 = 0.0;
            for &x in a.iter().chain(&b) {
                let fa = a.iter().filter(|&&v| v <= x).count() as f64 / a.len() as f64;
                let fb = b.iter().filter(|&&v| v <= x).count() as f64 / b.len() as f64;
                slow = slow.max((fa - fb).abs());
            }
            assert_relative_eq!(fast, slow, epsilon = 1e-12);
        }
    }

    #[test]
    fn ks_band_holds_for_same_law() {
        // 100 repetitions of two 1e4-draws from one law; >= 95 below the band.
        let mut hits = 0;
        for rep in 0..100 {
            let mut rng = stream(100 + rep).rng();
            let a: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>()).collect();
            let b: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>()).collect();
            let d = ks_distance(
                &SampleSet::new("a", a).unwrap(),
                &SampleSet::new("b", b).unwrap(),
            )
            .unwrap();
            if d < ks_band_99(10_000, 10_000) {
                hits += 1;
            }
        }
        assert!(hits >= 95, "only {hits} of 100 under the 99% band");
    }

    #[test]
    fn ks_invariant_under_monotone_maps() {
        let mut rng = stream(1).rng();
        let a: Vec<f64> = (0..500).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = (0..700).map(|_| rng.gen::<f64>().powi(2)).collect();
        let d1 = ks_distance(
            &SampleSet::new("a", a.clone()).unwrap(),
            &SampleSet::new("b", b.clone()).unwrap(),
        )
        .unwrap();
        let f = |x: f64| (3.0 * x + 1.0).exp();
        let d2 = ks_distance(
            &SampleSet::new("a", a.iter().map(|&x| f(x)).collect()).unwrap(),
            &SampleSet::new("b", b.iter().map(|&x| f(x)).collect()).unwrap(),
        )
        .unwrap();
        assert_relative_eq!(d1, d2, epsilon = 1e-12);
    }

    #[test]
    fn bootstrap_trivial_cases() {
        let c = SampleSet::new("const", vec![-2.5; 50]).unwrap();
        let (est, (lo, hi)) = bootstrap_moment(&c, 1.3, 300, stream(2)).unwrap();
        assert_relative_eq!(est, 2.5, epsilon = 1e-12);
        assert_relative_eq!(lo, hi, epsilon = 1e-12);
        let pm = SampleSet::new("pm", vec![1.0, -1.0].repeat(25)).unwrap();
        let (est, _) = bootstrap_moment(&pm, 1.0, 300, stream(3)).unwrap();
        assert_relative_eq!(est, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bootstrap_covers_uniform_moment() {
        // X Uniform(0,1): E[X^p] = 1/(1+p), finite variance, so the
        // percentile CI attains near-nominal coverage.
        let p = 1.2;
        let analytic = (1.0f64 / (1.0 + p)).powf(1.0 / p);
        let mut covered = 0;
        for rep in 0..100 {
            let mut rng = stream(200 + rep).rng();
            let xs: Vec<f64> = (0..2000).map(|_| rng.gen::<f64>()).collect();
            let s = SampleSet::new("uniform", xs).unwrap();
            let (_, (lo, hi)) = bootstrap_moment(&s, p, 250, stream(300 + rep)).unwrap();
            if lo <= analytic && analytic <= hi {
                covered += 1;
            }
        }
        // Nominal 95%; the floor is 90 of 100.
        assert!(covered >= 90, "coverage {covered}/100");
    }

    #[test]
    fn bootstrap_pareto_moment_undercovers_but_contains() {
        // X Pareto(1.5, 1): E[X^p] = gamma/(gamma - p) for p < gamma.
        // Here 2p > gamma, so |X|^p has infinite variance and the
        // percentile bootstrap is inconsistent: coverage sits near 55%,
        // not 95%. Assert the CI is still informative (a clear majority
        // of a too-narrow interval would fail the floor below).
        let p = 1.2;
        let analytic = (1.5f64 / (1.5 - p)).powf(1.0 / p);
        let mut covered = 0;
        for rep in 0..100 {
            let mut rng = stream(200 + rep).rng();
            let xs: Vec<f64> =
                (0..4000).map(|_| (1.0 - rng.gen::<f64>()).powf(-1.0 / 1.5)).collect();
            let s = SampleSet::new("pareto", xs).unwrap();
            let (_, (lo, hi)) = bootstrap_moment(&s, p, 250, stream(300 + rep)).unwrap();
            if lo <= analytic && analytic <= hi {
                covered += 1;
            }
        }
        assert!(covered >= 40, "coverage {covered}/100");
        assert!(covered <= 85, "coverage {covered}/100 suspiciously nominal");
    }

    #[test]
    fn tail_adjusted_norm_recovers_pareto_moment() {
        // Same law as above: the anchored-tail estimator is consistent
        // where the plain mean is not, and its se is honest.
        let p = 1.2f64;
        let g = 1.5f64;
        let analytic = (g / (g - p)).powf(1.0 / p);
        let mut within_2se = 0;
        let mut mean_est = 0.0;
        let reps = 20;
        for rep in 0..reps {
            let mut rng = stream(500 + rep).rng();
            let xs: Vec<f64> =
                (0..20_000).map(|_| (1.0 - rng.gen::<f64>()).powf(-1.0 / g)).collect();
            let s = SampleSet::new("pareto", xs).unwrap();
            let (est, se) = tail_adjusted_p_norm(&s, p, g, 0.02).unwrap();
            assert!(se / est < 0.04, "rep {rep}: relative se {:.4}", se / est);
            assert!(
                (est - analytic).abs() <= 5.0 * se,
                "rep {rep}: est {est:.4} se {se:.4} vs {analytic:.4}"
            );
            if (est - analytic).abs() <= 2.0 * se {
                within_2se += 1;
            }
            mean_est += est / reps as f64;
        }
        assert!(within_2se >= 14, "only {within_2se}/{reps} reps within 2 se");
        assert_relative_eq!(mean_est, analytic, max_relative = 0.02);
    }

    #[test]
    fn tail_adjusted_norm_tracks_direct_norm_for_thin_tails() {
        // Uniform(0,1): the plain norm works here, and the anchored tail
        // term under a deliberately large assumed index barely moves it.
        let mut rng = stream(550).rng();
        let xs: Vec<f64> = (0..20_000).map(|_| rng.gen::<f64>()).collect();
        let s = SampleSet::new("u", xs).unwrap();
        let direct = s.p_norm(1.2);
        let (est, _) = tail_adjusted_p_norm(&s, 1.2, 8.0, 0.02).unwrap();
        assert!((est / direct - 1.0).abs() < 0.02, "est {est:.4} direct {direct:.4}");
    }

    #[test]
    fn empirical_cf_basics() {
        let mut rng = stream(4).rng();
        let xs: Vec<f64> = (0..20_000).map(|_| rng.gen::<f64>() - 0.5).collect();
        let s = SampleSet::new("sym", xs).unwrap();
        let cf = empirical_cf(&s, &[0.0, 1.7]);
        assert_relative_eq!(cf[0].re, 1.0, epsilon = 1e-12);
        assert_relative_eq!(cf[0].im, 0.0, epsilon = 1e-12);
        let se = 1.0 / (s.len() as f64).sqrt();
        assert!(cf[1].im.abs() < 4.0 * se, "imag {} vs se {}", cf[1].im, se);
        // Uniform(-1/2,1/2) CF is sin(t/2)/(t/2).
        let t: f64 = 1.7;
        let analytic = (t / 2.0).sin() / (t / 2.0);
        assert!((cf[1].re - analytic).abs() < 5.0 * se);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 2.0).collect();
        let (a, b, r2) = linear_fit(&xs, &ys);
        assert_relative_eq!(a, 3.0, epsilon = 1e-12);
        assert_relative_eq!(b, -2.0, epsilon = 1e-12);
        assert_relative_eq!(r2, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn poisson_gof_accepts_poisson_counts() {
        let lambda = 31.62;
        let mut rng = stream(5).rng();
        let mut counts = vec![0u64; 80];
        for _ in 0..10_000 {
            // Inverse-transform Poisson draw, adequate at this lambda.
            let mut k = 0usize;
            let mut acc = (-lambda as f64).exp();
            let mut mass = acc;
            let u = rng.gen::<f64>();
            while acc < u && k < 79 {
                k += 1;
                mass *= lambda / k as f64;
                acc += mass;
            }
            counts[k] += 1;
        }
        let (stat, dof) = poisson_gof(&counts, lambda);
        let crit = chi_square_critical(dof, 0.01);
        assert!(stat < crit, "chi2 {stat} >= critical {crit} at dof {dof}");
    }

    #[test]
    fn quantiles_and_norms() {
        let s = SampleSet::new("q", (1..=100).map(|i| i as f64).collect()).unwrap();
        assert_relative_eq!(s.median(), 50.5, epsilon = 1e-12);
        assert_relative_eq!(s.quantile(0.0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.quantile(1.0), 100.0, epsilon = 1e-12);
        let pm = SampleSet::new("pm", vec![2.0, -2.0]).unwrap();
        assert_relative_eq!(pm.p_norm(1.2), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(SampleSet::new("nan", vec![f64::NAN]).is_err());
        assert!(SampleSet::new("empty", vec![]).is_err());
        let s = SampleSet::new("ok", vec![1.0, 2.0]).unwrap();
        assert!(bootstrap_moment(&s, 2.5, 300, stream(6)).is_err());
        assert!(bootstrap_moment(&s, 1.0, 100, stream(7)).is_err());
        assert!(tail_adjusted_p_norm(&s, 1.2, 1.1, 0.02).is_err());
        assert!(tail_adjusted_p_norm(&s, 1.2, 1.5, 0.6).is_err());
        assert!(tail_adjusted_p_norm(&s, 1.2, 1.5, 0.02).is_err());
        let z = SampleSet::new("zeros", vec![0.0; 2000]).unwrap();
        assert!(tail_adjusted_p_norm(&z, 1.2, 1.5, 0.02).is_err());
    }
}
