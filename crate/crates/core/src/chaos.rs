//! Polynomial chaos over disorder fields and truncated noise clouds.
//!
//! A chaos expansion is driven by a family of symmetric kernels psi^(k),
//! one per order, each vanishing on diagonals. The discrete form sums
//! psi^(k) against products of normalized site variables omega/V; the
//! continuum form integrates against products of the truncated noise
//! zeta^(a). Two evaluation strategies coexist on purpose:
//!
//! * a direct tuple enumeration, viable only on tiny instances, kept as
//!   the oracle every fast path is checked against;
//! * a sequential DP for product-form kernels (renewal and polymer
//!   correlation functions are of this shape), O(M n^2) after an O(n^2)
//!   precomputation that is reused across disorder replicas.
//!
//! Continuum evaluations default to a mesh surrogate (atoms binned to
//! cells, compensator spread uniformly) that reuses the discrete DP; an
//! exact multilinear expansion is available for orders <= 2 as the court
//! of appeal.

use std::cmp::Ordering;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{integrate_over_box, DomainBox, PointCloud};
use crate::quad::adaptive_gl;
use crate::rng::Stream;
use crate::special::ln_gamma;
use crate::stats::{linear_fit, SampleSet};
use crate::tail::{sample_disorder, TailLaw};

/// Finite index set the discrete chaos sums over: n sites in R^dim plus
/// the two noise scales attached to the discretization (cell volume
/// v_delta and quantile scale V_delta).
#[derive(Debug, Clone)]
pub struct Lattice {
    dim: usize,
    sites: Vec<f64>,
    pub cell_volume: f64,
    pub quantile_scale: f64,
}

impl Lattice {
    pub fn new(
        dim: usize,
        sites: Vec<f64>,
        cell_volume: f64,
        quantile_scale: f64,
    ) -> Result<Self> {
        if dim == 0 || sites.is_empty() || sites.len() % dim != 0 {
            return Err(Error::parameter(format!(
                "site buffer length {} does not tile dimension {dim}",
                sites.len()
            )));
        }
        if !(cell_volume > 0.0) || !(quantile_scale > 0.0) {
            return Err(Error::parameter(format!(
                "noise scales must be positive, got v={cell_volume}, V={quantile_scale}"
            )));
        }
        if sites.iter().any(|x| !x.is_finite()) {
            return Err(Error::parameter("non-finite site coordinate".to_string()));
        }
        Ok(Lattice { dim, sites, cell_volume, quantile_scale })
    }

    /// Cell centers of a uniform mesh over the box, `mesh` cells per axis;
    /// v = cell volume, V = 1 (continuum fields are already normalized).
    pub fn mesh_cells(domain: &DomainBox, mesh: usize) -> Result<Self> {
        let d = domain.dim();
        if d > 2 {
            return Err(Error::capacity(format!("mesh lattice supports dim <= 2, got {d}")));
        }
        if mesh < 2 {
            return Err(Error::parameter(format!("mesh must be at least 2, got {mesh}")));
        }
        let widths: Vec<f64> =
            (0..d).map(|ax| (domain.upper[ax] - domain.lower[ax]) / mesh as f64).collect();
        let cells = mesh.pow(d as u32);
        let mut sites = Vec::with_capacity(cells * d);
        for c in 0..cells {
            let mut rem = c;
            // Row-major: the last axis varies fastest.
            let mut idx = vec![0usize; d];
            for ax in (0..d).rev() {
                idx[ax] = rem % mesh;
                rem /= mesh;
            }
            for ax in 0..d {
                sites.push(domain.lower[ax] + (idx[ax] as f64 + 0.5) * widths[ax]);
            }
        }
        let cell_volume = widths.iter().product();
        Lattice::new(d, sites, cell_volume, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.sites.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn site(&self, i: usize) -> &[f64] {
        &self.sites[i * self.dim..(i + 1) * self.dim]
    }
}

/// Markov product-form kernel: on the time-ordered sector
/// psi^(k)(x_1 < ... < x_k) = normalizer^-1 * prod_j step(x_j - x_{j-1})
/// * terminal(x_k), with x_0 the coordinate origin; elsewhere by symmetry.
/// Zero time-gaps must map to step = 0 (diagonal vanishing), which also
/// makes tie order among equal-time sites immaterial.
pub struct ProductKernel {
    pub step_weight: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub terminal_weight: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub normalizer: f64,
    pub time_axis: usize,
    dim: usize,
}

impl ProductKernel {
    pub fn new(
        dim: usize,
        time_axis: usize,
        normalizer: f64,
        step_weight: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
        terminal_weight: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    ) -> Result<Self> {
        if dim == 0 || time_axis >= dim {
            return Err(Error::parameter(format!(
                "time axis {time_axis} out of range for dimension {dim}"
            )));
        }
        if !(normalizer > 0.0) || !normalizer.is_finite() {
            return Err(Error::parameter(format!("normalizer must be positive, got {normalizer}")));
        }
        Ok(ProductKernel { step_weight, terminal_weight, normalizer, time_axis, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Constant term psi^(0).
    pub fn constant_term(&self) -> f64 {
        let origin = vec![0.0; self.dim];
        (self.terminal_weight)(&origin) / self.normalizer
    }

    /// Symmetric evaluation at k arbitrary points: sort by time (ties by
    /// the remaining coordinates), zero on coincident points.
    pub fn eval(&self, points: &[&[f64]]) -> f64 {
        if points.is_empty() {
            return self.constant_term();
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        let ax = self.time_axis;
        order.sort_by(|&a, &b| {
            match points[a][ax].partial_cmp(&points[b][ax]).unwrap_or(Ordering::Equal) {
                Ordering::Equal => points[a]
                    .iter()
                    .zip(points[b])
                    .map(|(u, v)| u.partial_cmp(v).unwrap_or(Ordering::Equal))
                    .find(|c| *c != Ordering::Equal)
                    .unwrap_or(Ordering::Equal),
                c => c,
            }
        });
        let mut prev = vec![0.0; self.dim];
        let mut diff = vec![0.0; self.dim];
        let mut val = 1.0;
        for &i in &order {
            let p = points[i];
            let mut coincident = true;
            for d in 0..self.dim {
                diff[d] = p[d] - prev[d];
                coincident &= diff[d] == 0.0;
            }
            if coincident {
                return 0.0;
            }
            val *= (self.step_weight)(&diff);
            prev.copy_from_slice(p);
        }
        val * (self.terminal_weight)(&prev) / self.normalizer
    }

    /// Kernel family psi^(0..=order_max) as symmetric specs sharing self.
    pub fn family(self: &Arc<Self>, order_max: usize) -> Vec<SymmetricKernelSpec> {
        (0..=order_max)
            .map(|k| {
                let pk = Arc::clone(self);
                let ev = Arc::clone(self);
                SymmetricKernelSpec {
                    order: k,
                    evaluator: Box::new(move |pts: &[&[f64]]| ev.eval(pts)),
                    product: Some(pk),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelForm {
    Generic,
    MarkovProduct,
}

/// Order-k kernel: symmetric under argument permutation, zero whenever two
/// arguments coincide. Product-form kernels carry their structure so chaos
/// evaluation can use the DP; everything else goes through enumeration.
pub struct SymmetricKernelSpec {
    order: usize,
    evaluator: Box<dyn Fn(&[&[f64]]) -> f64 + Send + Sync>,
    product: Option<Arc<ProductKernel>>,
}

impl SymmetricKernelSpec {
    pub fn generic(order: usize, evaluator: Box<dyn Fn(&[&[f64]]) -> f64 + Send + Sync>) -> Self {
        SymmetricKernelSpec { order, evaluator, product: None }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn form(&self) -> KernelForm {
        if self.product.is_some() {
            KernelForm::MarkovProduct
        } else {
            KernelForm::Generic
        }
    }

    pub fn eval(&self, points: &[&[f64]]) -> f64 {
        assert_eq!(points.len(), self.order, "kernel arity mismatch");
        (self.evaluator)(points)
    }
}

/// Chaos evaluation: per_order[k] is the k-th term including its
/// beta_hat^k / k! weight, so total is a plain sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosResult {
    pub per_order: Vec<f64>,
    pub total: f64,
    pub truncation: usize,
}

impl ChaosResult {
    fn from_orders(per_order: Vec<f64>) -> Self {
        let total = per_order.iter().sum();
        let truncation = per_order.len() - 1;
        ChaosResult { per_order, total, truncation }
    }
}

// Enumeration budget for the generic path: k <= MAX_ENUM_ORDER and at most
// MAX_ENUM_SITES^k tuples.
const MAX_ENUM_ORDER: usize = 3;
const MAX_ENUM_SITES: usize = 40;

fn validate_family(kernels: &[SymmetricKernelSpec]) -> Result<usize> {
    if kernels.is_empty() {
        return Err(Error::parameter("need at least the order-0 kernel".to_string()));
    }
    for (k, spec) in kernels.iter().enumerate() {
        if spec.order != k {
            return Err(Error::parameter(format!(
                "kernel list must be ordered 0..=M, found order {} at slot {k}",
                spec.order
            )));
        }
    }
    Ok(kernels.len() - 1)
}

/// Shared product kernel behind a family, if every positive order has one
/// and they are the same object.
fn shared_product(kernels: &[SymmetricKernelSpec]) -> Option<&Arc<ProductKernel>> {
    let first = kernels.iter().find(|s| s.order >= 1)?.product.as_ref()?;
    for spec in kernels.iter().filter(|s| s.order >= 1) {
        match &spec.product {
            Some(p) if Arc::ptr_eq(p, first) => {}
            _ => return None,
        }
    }
    Some(first)
}

/// Discrete chaos sum_k (beta_hat^k / k!) sum_{x in Omega_delta^k}
/// psi^(k)(x) prod_j omega_{x_j} / V_delta.
pub fn discrete_chaos(
    kernels: &[SymmetricKernelSpec],
    lattice: &Lattice,
    disorder: &[f64],
    beta_hat: f64,
) -> Result<ChaosResult> {
    let m = validate_family(kernels)?;
    if disorder.len() != lattice.len() {
        return Err(Error::parameter(format!(
            "disorder length {} != lattice site count {}",
            disorder.len(),
            lattice.len()
        )));
    }
    if !(beta_hat >= 0.0) || !beta_hat.is_finite() {
        return Err(Error::parameter(format!("beta_hat must be finite >= 0, got {beta_hat}")));
    }
    if let Some(pk) = shared_product(kernels) {
        let plan = ProductChaosPlan::new(pk, lattice, m)?;
        return plan.evaluate(disorder, lattice.quantile_scale, beta_hat);
    }
    let n = lattice.len();
    let mut per_order = Vec::with_capacity(m + 1);
    per_order.push(kernels[0].eval(&[]));
    let eta: Vec<f64> = disorder.iter().map(|w| w / lattice.quantile_scale).collect();
    for k in 1..=m {
        if k > MAX_ENUM_ORDER || n > MAX_ENUM_SITES {
            return Err(Error::capacity(format!(
                "generic chaos enumeration capped at order {MAX_ENUM_ORDER} and \
                 {MAX_ENUM_SITES} sites; got order {k} on {n} sites"
            )));
        }
        let mut acc = 0.0;
        match k {
            1 => {
                for i in 0..n {
                    acc += eta[i] * kernels[1].eval(&[lattice.site(i)]);
                }
            }
            2 => {
                for i in 0..n {
                    for j in 0..n {
                        acc += eta[i]
                            * eta[j]
                            * kernels[2].eval(&[lattice.site(i), lattice.site(j)]);
                    }
                }
            }
            _ => {
                for i in 0..n {
                    for j in 0..n {
                        for l in 0..n {
                            acc += eta[i]
                                * eta[j]
                                * eta[l]
                                * kernels[3].eval(&[
                                    lattice.site(i),
                                    lattice.site(j),
                                    lattice.site(l),
                                ]);
                        }
                    }
                }
            }
        }
        let mut weight = 1.0;
        for j in 1..=k {
            weight *= beta_hat / j as f64;
        }
        per_order.push(weight * acc);
    }
    Ok(ChaosResult::from_orders(per_order))
}

// Step tables above this site count would not fit the memory budget.
const MAX_PLAN_SITES: usize = 4096;

/// Precomputed DP for a product kernel on a fixed lattice. Building the
/// plan costs O(n^2) kernel evaluations; each disorder replica then costs
/// O(M n^2) flops with no closure calls in the inner loop.
pub struct ProductChaosPlan {
    n: usize,
    order_max: usize,
    sorted: Vec<usize>,
    step0: Vec<f64>,
    steps: Vec<f64>,
    terminal: Vec<f64>,
    normalizer: f64,
    psi0: f64,
}

fn tri(i: usize) -> usize {
    i * i.saturating_sub(1) / 2
}

impl ProductChaosPlan {
    pub fn new(kernel: &ProductKernel, lattice: &Lattice, order_max: usize) -> Result<Self> {
        if lattice.dim() != kernel.dim() {
            return Err(Error::parameter(format!(
                "kernel dimension {} != lattice dimension {}",
                kernel.dim(),
                lattice.dim()
            )));
        }
        let n = lattice.len();
        if n > MAX_PLAN_SITES {
            return Err(Error::capacity(format!(
                "product chaos plan capped at {MAX_PLAN_SITES} sites, got {n}"
            )));
        }
        let ax = kernel.time_axis;
        let mut sorted: Vec<usize> = (0..n).collect();
        sorted.sort_by(|&a, &b| {
            let (pa, pb) = (lattice.site(a), lattice.site(b));
            match pa[ax].partial_cmp(&pb[ax]).unwrap_or(Ordering::Equal) {
                Ordering::Equal => pa
                    .iter()
                    .zip(pb)
                    .map(|(u, v)| u.partial_cmp(v).unwrap_or(Ordering::Equal))
                    .find(|c| *c != Ordering::Equal)
                    .unwrap_or(Ordering::Equal),
                c => c,
            }
        });
        let d = lattice.dim();
        let mut diff = vec![0.0; d];
        let weigh = |from: &[f64], to: &[f64], diff: &mut [f64]| -> Result<f64> {
            let mut coincident = true;
            for t in 0..d {
                diff[t] = to[t] - from[t];
                coincident &= diff[t] == 0.0;
            }
            if coincident {
                return Ok(0.0);
            }
            let w = (kernel.step_weight)(diff);
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::numerical(format!("step weight {w} at displacement {diff:?}")));
            }
            Ok(w)
        };
        let origin = vec![0.0; d];
        let mut step0 = Vec::with_capacity(n);
        for &i in &sorted {
            step0.push(weigh(&origin, lattice.site(i), &mut diff)?);
        }
        let mut steps = vec![0.0; tri(n) + if n > 0 { n - 1 } else { 0 }];
        // tri(n-1) + (n-1) entries, i.e. tri(n); sized via tri(i)+j indexing.
        steps.truncate(tri(n));
        for i in 1..n {
            let to = lattice.site(sorted[i]);
            for j in 0..i {
                steps[tri(i) + j] = weigh(lattice.site(sorted[j]), to, &mut diff)?;
            }
        }
        let mut terminal = Vec::with_capacity(n);
        for &i in &sorted {
            let w = (kernel.terminal_weight)(lattice.site(i));
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::numerical(format!("terminal weight {w}")));
            }
            terminal.push(w);
        }
        Ok(ProductChaosPlan {
            n,
            order_max,
            sorted,
            step0,
            steps,
            terminal,
            normalizer: kernel.normalizer,
            psi0: kernel.constant_term(),
        })
    }

    pub fn order_max(&self) -> usize {
        self.order_max
    }

    /// One disorder replica. Equals the tuple enumeration exactly: the DP
    /// walks the time-ordered sector and symmetry supplies the k!.
    pub fn evaluate(
        &self,
        disorder: &[f64],
        quantile_scale: f64,
        beta_hat: f64,
    ) -> Result<ChaosResult> {
        if disorder.len() != self.n {
            return Err(Error::parameter(format!(
                "disorder length {} != plan size {}",
                disorder.len(),
                self.n
            )));
        }
        if !(quantile_scale > 0.0) {
            return Err(Error::parameter(format!("quantile scale must be positive")));
        }
        let eta: Vec<f64> =
            self.sorted.iter().map(|&i| beta_hat * disorder[i] / quantile_scale).collect();
        let mut per_order = Vec::with_capacity(self.order_max + 1);
        per_order.push(self.psi0);
        let mut b: Vec<f64> = (0..self.n).map(|i| self.step0[i] * eta[i]).collect();
        let mut next = vec![0.0; self.n];
        for k in 1..=self.order_max {
            if k > 1 {
                for i in 0..self.n {
                    let row = &self.steps[tri(i)..tri(i) + i];
                    let mut acc = 0.0;
                    for (j, s) in row.iter().enumerate() {
                        acc += s * b[j];
                    }
                    next[i] = acc * eta[i];
                }
                std::mem::swap(&mut b, &mut next);
            }
            let contracted: f64 = b.iter().zip(&self.terminal).map(|(x, t)| x * t).sum();
            per_order.push(contracted / self.normalizer);
        }
        Ok(ChaosResult::from_orders(per_order))
    }

    /// The whole series in one O(n^2) sweep: accumulate the order-summed
    /// chain weight per endpoint instead of stacking per-order totals.
    /// Equals evaluate(..).total at order_max = n (strictly time-ordered
    /// chains cannot revisit a site, so orders beyond n vanish), but skips
    /// the giant cancelling intermediates that per-order partial sums
    /// produce when sum |eta| is large.
    pub fn evaluate_full(
        &self,
        disorder: &[f64],
        quantile_scale: f64,
        beta_hat: f64,
    ) -> Result<f64> {
        if disorder.len() != self.n {
            return Err(Error::parameter(format!(
                "disorder length {} != plan size {}",
                disorder.len(),
                self.n
            )));
        }
        if !(quantile_scale > 0.0) {
            return Err(Error::parameter(format!("quantile scale must be positive")));
        }
        let mut a = vec![0.0; self.n];
        for i in 0..self.n {
            let eta = beta_hat * disorder[self.sorted[i]] / quantile_scale;
            let row = &self.steps[tri(i)..tri(i) + i];
            let mut acc = self.step0[i];
            for (j, s) in row.iter().enumerate() {
                acc += s * a[j];
            }
            a[i] = acc * eta;
        }
        let contracted: f64 = a.iter().zip(&self.terminal).map(|(x, t)| x * t).sum();
        Ok(self.psi0 + contracted / self.normalizer)
    }

    /// Symmetric L^q norms of the piecewise-constant kernel extensions,
    /// ((v^k / k!) sum |psi|^q)^{1/q}, all orders in one sweep.
    pub fn norms(&self, q: f64, cell_volume: f64) -> Result<Vec<SymNorm>> {
        check_q(q)?;
        if !(cell_volume > 0.0) {
            return Err(Error::parameter(format!("cell volume must be positive")));
        }
        let sq0: Vec<f64> = self.step0.iter().map(|s| s.powf(q)).collect();
        let sq: Vec<f64> = self.steps.iter().map(|s| s.powf(q)).collect();
        let tq: Vec<f64> = self.terminal.iter().map(|t| t.powf(q)).collect();
        let nq = self.normalizer.powf(q);
        let mut out = Vec::with_capacity(self.order_max + 1);
        out.push(SymNorm { q, value: self.psi0.abs() });
        let mut c = sq0.clone();
        let mut next = vec![0.0; self.n];
        let mut vol_pow = cell_volume;
        for k in 1..=self.order_max {
            if k > 1 {
                for i in 0..self.n {
                    let row = &sq[tri(i)..tri(i) + i];
                    let mut acc = 0.0;
                    for (j, s) in row.iter().enumerate() {
                        acc += s * c[j];
                    }
                    next[i] = acc * 1.0;
                }
                std::mem::swap(&mut c, &mut next);
            }
            let contracted: f64 = c.iter().zip(&tq).map(|(x, t)| x * t).sum();
            out.push(SymNorm { q, value: (vol_pow * contracted / nq).powf(1.0 / q) });
            vol_pow *= cell_volume;
        }
        Ok(out)
    }
}

/// Bin a cloud onto a mesh: per-cell atom mass minus kappa(a) * cell
/// volume (the compensator is absolutely continuous, so it spreads
/// uniformly). Returns the mesh lattice (V = 1) and the cell field.
pub fn project_cloud(cloud: &PointCloud, mesh: usize) -> Result<(Lattice, Vec<f64>)> {
    let lattice = Lattice::mesh_cells(&cloud.domain, mesh)?;
    let d = cloud.domain.dim();
    let mut field = vec![-cloud.kappa * lattice.cell_volume; lattice.len()];
    for (x, z) in cloud.atoms() {
        let mut flat = 0usize;
        for ax in 0..d {
            let w = cloud.domain.upper[ax] - cloud.domain.lower[ax];
            let rel = (x[ax] - cloud.domain.lower[ax]) / w;
            let idx = ((rel * mesh as f64) as usize).min(mesh - 1);
            flat = flat * mesh + idx;
        }
        field[flat] += z;
    }
    Ok((lattice, field))
}

/// Truncated continuum chaos via the mesh surrogate. Requires mesh >= 64
/// per axis; finer meshes trade time for projection error.
pub fn continuum_chaos(
    kernels: &[SymmetricKernelSpec],
    cloud: &PointCloud,
    beta_hat: f64,
    mesh: usize,
) -> Result<ChaosResult> {
    if mesh < 64 {
        return Err(Error::parameter(format!("surrogate mesh must be >= 64 per axis, got {mesh}")));
    }
    let (lattice, field) = project_cloud(cloud, mesh)?;
    discrete_chaos(kernels, &lattice, &field, beta_hat)
}

/// Exact continuum chaos by multilinearity over zeta^(a) = atoms - kappa
/// Lebesgue, orders <= 2 (and 1-d domains for the order-2 double
/// integral). Repeated-atom tuples drop out because psi vanishes on
/// diagonals.
pub fn continuum_chaos_exact(
    kernels: &[SymmetricKernelSpec],
    cloud: &PointCloud,
    beta_hat: f64,
) -> Result<ChaosResult> {
    let m = validate_family(kernels)?;
    let kappa = cloud.kappa;
    let quad_tol = 1e-10;
    let mut per_order = Vec::with_capacity(m + 1);
    per_order.push(kernels[0].eval(&[]));
    for k in 1..=m {
        if k > 2 {
            return Err(Error::capacity(format!(
                "exact continuum chaos supports order <= 2, got {k}"
            )));
        }
        let spec = &kernels[k];
        let value = if k == 1 {
            let atom_sum: f64 = cloud.atoms().map(|(x, z)| z * spec.eval(&[x])).sum();
            let lebesgue = match cloud.domain.dim() {
                1 => {
                    let (lo, hi) = (cloud.domain.lower[0], cloud.domain.upper[0]);
                    adaptive_gl(|x| spec.eval(&[&[x]]), lo, hi, quad_tol)?
                }
                _ => integrate_over_box(&cloud.domain, |x| spec.eval(&[x]), 64)?,
            };
            atom_sum - kappa * lebesgue
        } else {
            if cloud.domain.dim() != 1 {
                return Err(Error::capacity(
                    "exact order-2 chaos supports 1-d domains only".to_string(),
                ));
            }
            let (lo, hi) = (cloud.domain.lower[0], cloud.domain.upper[0]);
            let atoms: Vec<(f64, f64)> = cloud.atoms().map(|(x, z)| (x[0], z)).collect();
            let mut pair_sum = 0.0;
            for (i, &(xi, zi)) in atoms.iter().enumerate() {
                for &(xj, zj) in atoms.iter().skip(i + 1) {
                    pair_sum += 2.0 * zi * zj * spec.eval(&[&[xi], &[xj]]);
                }
            }
            // Cross terms: psi is symmetric, so the two single-atom slots
            // contribute equally.
            let mut cross = 0.0;
            for &(xi, zi) in &atoms {
                let left = adaptive_gl(|y| spec.eval(&[&[y], &[xi]]), lo, xi, quad_tol)?;
                let right = adaptive_gl(|y| spec.eval(&[&[xi], &[y]]), xi, hi, quad_tol)?;
                cross += zi * (left + right);
            }
            // Double Lebesgue integral over the ordered sector, times 2.
            let double = 2.0
                * adaptive_gl(
                    |t| adaptive_gl(|s| spec.eval(&[&[s], &[t]]), lo, t, quad_tol).unwrap_or(0.0),
                    lo,
                    hi,
                    1e-8,
                )?;
            pair_sum - 2.0 * kappa * cross + kappa * kappa * double
        };
        let mut weight = 1.0;
        for j in 1..=k {
            weight *= beta_hat / j as f64;
        }
        per_order.push(weight * value);
    }
    Ok(ChaosResult::from_orders(per_order))
}

/// Symmetric L^q norm value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymNorm {
    pub q: f64,
    pub value: f64,
}

fn check_q(q: f64) -> Result<()> {
    if !(q > 1.0 && q <= 2.0) {
        return Err(Error::parameter(format!("norm exponent must lie in (1,2], got {q}")));
    }
    Ok(())
}

/// ((v_delta^k / k!) sum over tuples |psi|^q)^{1/q} for one kernel.
pub fn symmetric_norm_discrete(
    kernel: &SymmetricKernelSpec,
    lattice: &Lattice,
    q: f64,
) -> Result<SymNorm> {
    check_q(q)?;
    let k = kernel.order;
    if k == 0 {
        return Ok(SymNorm { q, value: kernel.eval(&[]).abs() });
    }
    if let Some(pk) = &kernel.product {
        let plan = ProductChaosPlan::new(pk, lattice, k)?;
        return Ok(plan.norms(q, lattice.cell_volume)?[k]);
    }
    let n = lattice.len();
    if k > MAX_ENUM_ORDER || n > MAX_ENUM_SITES {
        return Err(Error::capacity(format!(
            "generic norm enumeration capped at order {MAX_ENUM_ORDER} and \
             {MAX_ENUM_SITES} sites; got order {k} on {n} sites"
        )));
    }
    let mut acc = 0.0;
    let mut idx = vec![0usize; k];
    loop {
        let points: Vec<&[f64]> = idx.iter().map(|&i| lattice.site(i)).collect();
        acc += kernel.eval(&points).abs().powf(q);
        // Odometer over n^k tuples.
        let mut pos = k;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < n {
                break;
            }
            idx[pos] = 0;
        }
        if idx.iter().all(|&i| i == 0) {
            break;
        }
    }
    let mut fact = 1.0;
    for j in 1..=k {
        fact *= j as f64;
    }
    let value = (lattice.cell_volume.powi(k as i32) / fact * acc).powf(1.0 / q);
    Ok(SymNorm { q, value })
}

/// int_{0 < t_1 < ... < t_k < t} prod_{j=1}^{k} (t_j - t_{j-1})^{a-1}
/// * (t - t_k)^{b-1} dt = t^{ka+b-1} Gamma(a)^k Gamma(b) / Gamma(ka+b).
fn dirichlet_simplex(a: f64, k: usize, b: f64, t: f64) -> f64 {
    let ka_b = k as f64 * a + b;
    let log = (ka_b - 1.0) * t.ln() + k as f64 * ln_gamma(a) + ln_gamma(b) - ln_gamma(ka_b);
    log.exp()
}

/// Gamma-simplex identity with the terminal gap included: all k+1 gaps
/// carry the exponent xi - 1.
pub fn simplex_integral(xi: f64, k: usize, t: f64) -> Result<f64> {
    if !(xi > 0.0) {
        return Err(Error::parameter(format!("simplex exponent must be positive, got {xi}")));
    }
    if k == 0 || !(t > 0.0) {
        return Err(Error::parameter(format!("need k >= 1 and t > 0, got k={k}, t={t}")));
    }
    Ok(dirichlet_simplex(xi, k, xi, t))
}

/// Free-endpoint variant: only the k inner gaps are weighted,
/// int = t^{k xi} Gamma(xi)^k / Gamma(k xi + 1).
pub fn simplex_integral_free(xi: f64, k: usize, t: f64) -> Result<f64> {
    if !(xi > 0.0) {
        return Err(Error::parameter(format!("simplex exponent must be positive, got {xi}")));
    }
    if k == 0 || !(t > 0.0) {
        return Err(Error::parameter(format!("need k >= 1 and t > 0, got k={k}, t={t}")));
    }
    Ok(dirichlet_simplex(xi, k, 1.0, t))
}

/// Monte Carlo oracle for the simplex integrals. Uniform sampling has
/// infinite variance for xi <= 1/2, so the estimator first flattens the k
/// free gaps with g = h^{1/xi} and, for the terminal variant, symmetrizes
/// over which gap is largest; the integrand is then bounded. Returns
/// (estimate, standard error).
pub fn simplex_mc(
    xi: f64,
    k: usize,
    t: f64,
    include_terminal: bool,
    points: usize,
    stream: Stream,
) -> Result<(f64, f64)> {
    if !(xi > 0.0) || k == 0 || !(t > 0.0) {
        return Err(Error::parameter(format!("bad simplex MC inputs xi={xi}, k={k}, t={t}")));
    }
    if points < 1000 {
        return Err(Error::parameter("need at least 1000 MC points".to_string()));
    }
    use rand::Rng;
    let mut rng = stream.rng();
    let inv_xi = 1.0 / xi;
    let base = xi.powi(-(k as i32));
    let scale = if include_terminal {
        t.powf((k as f64 + 1.0) * xi - 1.0)
    } else {
        t.powf(k as f64 * xi)
    };
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..points {
        let mut s = 0.0;
        let mut gmax = 0.0f64;
        for _ in 0..k {
            let g = rng.gen::<f64>().powf(inv_xi);
            s += g;
            gmax = gmax.max(g);
        }
        let val = if include_terminal {
            let last = 1.0 - s;
            if last > gmax {
                (k as f64 + 1.0) * base * last.powf(xi - 1.0)
            } else {
                0.0
            }
        } else if s < 1.0 {
            base
        } else {
            0.0
        };
        sum += val;
        sum_sq += val * val;
    }
    let n = points as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) / (n - 1.0);
    Ok((scale * mean, scale * var.sqrt()))
}

/// C_0 = C_1/(p-1) max{(gamma-p)^{-1/p}, (q-gamma)^{-1/q}}
/// (|Omega| v 1)^{1/p - 1/q}.
pub fn moment_bound_constant(
    p: f64,
    q: f64,
    gamma: f64,
    domain_volume: f64,
    c1: f64,
) -> Result<f64> {
    if !(1.0 < p && p < gamma && gamma < q && q <= 2.0) {
        return Err(Error::parameter(format!(
            "need 1 < p < gamma < q <= 2, got p={p}, gamma={gamma}, q={q}"
        )));
    }
    if !(domain_volume > 0.0) || !(c1 > 0.0) {
        return Err(Error::parameter(format!(
            "volume and C1 must be positive, got {domain_volume}, {c1}"
        )));
    }
    let tail_factor = (gamma - p).powf(-1.0 / p).max((q - gamma).powf(-1.0 / q));
    Ok(c1 / (p - 1.0) * tail_factor * domain_volume.max(1.0).powf(1.0 / p - 1.0 / q))
}

/// Shape report for the per-order moment bound ||X_k||_p <= C^k ||psi^(k)||_q.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentBoundReport {
    pub orders: Vec<usize>,
    pub chaos_p_norms: Vec<f64>,
    pub kernel_q_norms: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Fitted geometric rate exp(slope of log ratios vs order).
    pub rate: f64,
    pub r2: f64,
    pub warning: Option<String>,
}

/// Monte Carlo check of the moment bound's shape: estimates ||X_k||_p over
/// disorder replicas at beta_hat and reports r_k = ||X_k||_p / ||psi^(k)||_q
/// per order together with a geometric fit. Only geometry is meaningful
/// here (the universal constant in the bound is not quantified), so
/// callers assert on rate stability and fit quality, not absolute values.
pub fn empirical_moment_bound_check(
    kernel: &ProductKernel,
    order_max: usize,
    law: &TailLaw,
    lattice: &Lattice,
    beta_hat: f64,
    p: f64,
    q: f64,
    replicas: usize,
    stream: Stream,
) -> Result<MomentBoundReport> {
    let gamma = law.gamma;
    if !(1.0 < p && p < gamma && gamma < q && q <= 2.0) {
        return Err(Error::parameter(format!(
            "need 1 < p < gamma < q <= 2, got p={p}, gamma={gamma}, q={q}"
        )));
    }
    if order_max == 0 {
        return Err(Error::parameter("need at least order 1".to_string()));
    }
    if replicas < 50 {
        return Err(Error::parameter(format!("need >= 50 replicas, got {replicas}")));
    }
    let plan = ProductChaosPlan::new(kernel, lattice, order_max)?;
    let norms = plan.norms(q, lattice.cell_volume)?;
    let n = lattice.len();
    let scale = lattice.quantile_scale;
    let rows: Result<Vec<Vec<f64>>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let omega = sample_disorder(law, n, stream.lane(r as u64));
            Ok(plan.evaluate(&omega, scale, beta_hat)?.per_order)
        })
        .collect();
    let rows = rows?;
    let mut orders = Vec::new();
    let mut chaos_p_norms = Vec::new();
    let mut kernel_q_norms = Vec::new();
    let mut ratios = Vec::new();
    for k in 1..=order_max {
        let col: Vec<f64> = rows.iter().map(|row| row[k]).collect();
        let pnorm = SampleSet::new(format!("order {k}"), col)?.p_norm(p);
        orders.push(k);
        chaos_p_norms.push(pnorm);
        kernel_q_norms.push(norms[k].value);
        ratios.push(pnorm / norms[k].value);
    }
    let degenerate = ratios.iter().all(|r| *r < 1e-300);
    let (rate, r2) = if degenerate {
        (0.0, 1.0)
    } else if ratios.len() == 1 {
        (ratios[0], 1.0)
    } else {
        let xs: Vec<f64> = orders.iter().map(|&k| k as f64).collect();
        let ys: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
        let (slope, _, r2) = linear_fit(&xs, &ys);
        (slope.exp(), r2)
    };
    let warning = (replicas < 500)
        .then(|| format!("{replicas} replicas may be too few for stable p-norms"));
    Ok(MomentBoundReport {
        orders,
        chaos_p_norms,
        kernel_q_norms,
        ratios,
        rate,
        r2,
        warning,
    })
}
