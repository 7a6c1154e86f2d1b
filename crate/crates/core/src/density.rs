//! Analytic density families g with respect to the standard Gaussian measure
//! γ, with derivative access, the information functionals I_γ g and Ent_γ g,
//! conditional expectations E^n_γ g, and Ornstein–Uhlenbeck smoothing T_t g.
//!
//! All implemented families are strictly positive with closed-form value,
//! gradient and Hessian; conditional and smoothed densities differentiate
//! under the integral sign, so their derivatives are quadrature images of the
//! base family's closed forms.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mehler;
use crate::operators::SymMatrix;
use crate::quad::{default_order, hermite_rule, pairwise_sum, tensor_rule, QuadratureRule};

/// Floor applied to g inside logarithms. In-window families are strictly
/// positive, so a floored evaluation indicates a configuration bug; the count
/// is surfaced in reports.
pub const LOG_FLOOR: f64 = 1e-300;

static FLOOR_COUNT: AtomicU64 = AtomicU64::new(0);

/// Number of log evaluations that hit the 1e-300 floor since the last reset.
pub fn floored_log_evaluations() -> u64 {
    FLOOR_COUNT.load(Ordering::Relaxed)
}

pub fn reset_floor_counter() {
    FLOOR_COUNT.store(0, Ordering::Relaxed);
}

/// Which route produced the derivatives of a density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeSource {
    /// Closed-form value/gradient/Hessian.
    Closed,
    /// Derivatives are quadrature integrals of closed forms (conditional and
    /// smoothed densities).
    Quadrature,
}

#[derive(Debug, Clone)]
enum Kind {
    Shift { a: Vec<f64> },
    Scaling { sigmas: Vec<f64> },
    GaussianCov { q: SymMatrix, log_det_sigma: f64, sigma: SymMatrix },
    Mixture1d { w: Vec<f64>, m: Vec<f64>, s: Vec<f64> },
    Product { factors: Vec<Density> },
    Conditional { base: Arc<Density>, keep: usize, rule: QuadratureRule },
    Smoothed { base: Arc<Density>, t: f64, rule: QuadratureRule },
}

/// A probability density with respect to γ on R^d.
#[derive(Debug, Clone)]
pub struct Density {
    dim: usize,
    kind: Kind,
}

/// g(x) = exp(⟨a,x⟩ − |a|²/2), the density of γ translated by a.
pub fn make_shift(a: &[f64]) -> Result<Density> {
    if a.is_empty() || a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("shift vector must be nonempty and finite".to_string()));
    }
    Ok(Density { dim: a.len(), kind: Kind::Shift { a: a.to_vec() } })
}

/// Density of N(0, diag(σᵢ²)) with respect to γ.
pub fn make_scaling(sigmas: &[f64]) -> Result<Density> {
    if sigmas.is_empty() {
        return Err(Error::invalid("scaling requires at least one sigma".to_string()));
    }
    for &s in sigmas {
        if !(0.2..=5.0).contains(&s) {
            return Err(Error::invalid(format!(
                "sigma {s} outside the quadrature reliability window [0.2, 5]"
            )));
        }
    }
    Ok(Density { dim: sigmas.len(), kind: Kind::Scaling { sigmas: sigmas.to_vec() } })
}

/// Density of N(0, Σ) with respect to γ for symmetric positive definite Σ.
pub fn make_gaussian_cov(sigma: &SymMatrix) -> Result<Density> {
    let eig = sigma.eigen();
    for &l in &eig.values {
        if !(0.04..=25.0).contains(&l) {
            return Err(Error::invalid(format!(
                "covariance eigenvalue {l} outside [0.04, 25] (must be positive definite)"
            )));
        }
    }
    let log_det_sigma: f64 = eig.values.iter().map(|l| l.ln()).sum();
    let prec = eig.assemble(|l| 1.0 / l);
    let q = prec.sub(&SymMatrix::identity(sigma.dim()));
    Ok(Density {
        dim: sigma.dim(),
        kind: Kind::GaussianCov { q, log_det_sigma, sigma: sigma.clone() },
    })
}

/// 1D Gaussian mixture relative to γ: g = (Σ wᵢ N(mᵢ, sᵢ²) density)/(N(0,1) density).
pub fn make_mixture_1d(weights: &[f64], means: &[f64], sds: &[f64]) -> Result<Density> {
    if weights.is_empty() || weights.len() != means.len() || weights.len() != sds.len() {
        return Err(Error::invalid("mixture parameter lists must be nonempty and equal-length".to_string()));
    }
    if weights.iter().any(|&w| w <= 0.0) {
        return Err(Error::invalid("degenerate mixture weights (all must be positive)".to_string()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("mixture weights sum to {total}, expected 1")));
    }
    for &m in means {
        if !(-3.0..=3.0).contains(&m) {
            return Err(Error::invalid(format!("mixture mean {m} outside [-3, 3]")));
        }
    }
    for &s in sds {
        if !(0.3..=3.0).contains(&s) {
            return Err(Error::invalid(format!("mixture sd {s} outside [0.3, 3]")));
        }
    }
    Ok(Density {
        dim: 1,
        kind: Kind::Mixture1d { w: weights.to_vec(), m: means.to_vec(), s: sds.to_vec() },
    })
}

/// Product of independent lower-dimensional densities on consecutive blocks.
pub fn make_product(factors: Vec<Density>) -> Result<Density> {
    if factors.is_empty() {
        return Err(Error::invalid("product requires at least one factor".to_string()));
    }
    if factors.len() == 1 {
        return Ok(factors.into_iter().next().unwrap());
    }
    let dim = factors.iter().map(|f| f.dim()).sum();
    Ok(Density { dim, kind: Kind::Product { factors } })
}

/// E^n_γ g: integrates out coordinates n+1..dim against their Gaussian
/// factors. Exact short-circuit along product structure; quadrature (order 32
/// per integrated coordinate) otherwise.
pub fn conditional_expectation(g: &Density, n: usize) -> Result<Density> {
    if n == 0 || n > g.dim {
        return Err(Error::invalid(format!(
            "conditioning level {n} outside [1, {}]",
            g.dim
        )));
    }
    if n == g.dim {
        return Ok(g.clone());
    }
    if let Some(factors) = g.block_factors() {
        let mut kept = Vec::new();
        let mut offset = 0usize;
        for f in factors {
            let fd = f.dim();
            if offset + fd <= n {
                kept.push(f);
            } else if offset >= n {
                break;
            } else {
                // cut falls inside this block
                kept.push(conditional_quadrature(&f, n - offset)?);
                break;
            }
            offset += fd;
        }
        return make_product(kept);
    }
    conditional_quadrature(g, n)
}

fn conditional_quadrature(g: &Density, keep: usize) -> Result<Density> {
    let integrated = g.dim - keep;
    let rule = tensor_rule(&hermite_rule(32)?, integrated)?;
    Ok(Density {
        dim: keep,
        kind: Kind::Conditional { base: Arc::new(g.clone()), keep, rule },
    })
}

/// T_t g via the Mehler integral, with derivatives pushed through the
/// semigroup: ∂g_t = e^{−t} T_t(∂g), ∂²g_t = e^{−2t} T_t(∂²g). Products
/// smooth factorwise.
pub fn ou_smooth(g: &Density, t: f64) -> Result<Density> {
    if !(t > 0.0) {
        return Err(Error::invalid(format!("smoothing time must be positive, got {t}")));
    }
    if let Some(factors) = g.block_factors() {
        if factors.len() > 1 {
            let smoothed: Result<Vec<Density>> = factors.iter().map(|f| ou_smooth(f, t)).collect();
            return make_product(smoothed?);
        }
    }
    let rule = tensor_rule(&hermite_rule(default_order(g.dim))?, g.dim)?;
    Ok(Density { dim: g.dim, kind: Kind::Smoothed { base: Arc::new(g.clone()), t, rule } })
}

impl Density {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.kind {
            Kind::Shift { a } => {
                let mut u = 0.0;
                for i in 0..a.len() {
                    u += a[i] * x[i] - 0.5 * a[i] * a[i];
                }
                u.exp()
            }
            Kind::Scaling { sigmas } => {
                let mut u = 0.0;
                let mut pref = 1.0;
                for (xi, s) in x.iter().zip(sigmas) {
                    u += 0.5 * (1.0 - 1.0 / (s * s)) * xi * xi;
                    pref /= s;
                }
                pref * u.exp()
            }
            Kind::GaussianCov { q, log_det_sigma, .. } => {
                (-0.5 * q.quad_form(x) - 0.5 * log_det_sigma).exp()
            }
            Kind::Mixture1d { w, m, s } => {
                mixture_terms(w, m, s, x[0]).iter().map(|t| t.e).sum()
            }
            Kind::Product { factors } => {
                let mut v = 1.0;
                let mut off = 0;
                for f in factors {
                    v *= f.value(&x[off..off + f.dim]);
                    off += f.dim;
                }
                v
            }
            Kind::Conditional { base, keep, rule } => {
                let mut point = vec![0.0; base.dim];
                point[..*keep].copy_from_slice(x);
                rule.expectation(|y| {
                    point[*keep..].copy_from_slice(y);
                    base.value(&point)
                })
                .unwrap_or_else(|e| panic!("conditional density evaluation: {e}"))
            }
            Kind::Smoothed { base, t, rule } => {
                mehler::ou_apply_with_rule(|y| base.value(y), *t, x, rule)
                    .unwrap_or_else(|e| panic!("smoothed density evaluation: {e}"))
            }
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::Shift { a } => {
                let v = self.value(x);
                a.iter().map(|ai| ai * v).collect()
            }
            Kind::Scaling { sigmas } => {
                let v = self.value(x);
                x.iter()
                    .zip(sigmas)
                    .map(|(xi, s)| (1.0 - 1.0 / (s * s)) * xi * v)
                    .collect()
            }
            Kind::GaussianCov { q, .. } => {
                let v = self.value(x);
                q.matvec(x).iter().map(|qi| -qi * v).collect()
            }
            Kind::Mixture1d { w, m, s } => {
                let terms = mixture_terms(w, m, s, x[0]);
                vec![terms.iter().map(|t| t.dq * t.e).sum()]
            }
            Kind::Product { factors } => {
                let mut grad = vec![0.0; self.dim];
                let vals: Vec<f64> = factors
                    .iter()
                    .scan(0usize, |off, f| {
                        let v = f.value(&x[*off..*off + f.dim]);
                        *off += f.dim;
                        Some(v)
                    })
                    .collect();
                let total: f64 = vals.iter().product();
                let mut off = 0;
                for (f, &v) in factors.iter().zip(&vals) {
                    let rest = if v != 0.0 { total / v } else { 0.0 };
                    for (k, gk) in f.grad(&x[off..off + f.dim]).iter().enumerate() {
                        grad[off + k] = rest * gk;
                    }
                    off += f.dim;
                }
                grad
            }
            Kind::Conditional { base, keep, rule } => {
                let mut point = vec![0.0; base.dim];
                point[..*keep].copy_from_slice(x);
                let mut out = Vec::with_capacity(*keep);
                for i in 0..*keep {
                    let v = rule
                        .expectation(|y| {
                            point[*keep..].copy_from_slice(y);
                            base.grad(&point)[i]
                        })
                        .unwrap_or_else(|e| panic!("conditional gradient evaluation: {e}"));
                    out.push(v);
                }
                out
            }
            Kind::Smoothed { base, t, rule } => {
                let damp = (-t).exp();
                (0..self.dim)
                    .map(|i| {
                        damp * mehler::ou_apply_with_rule(|y| base.grad(y)[i], *t, x, rule)
                            .unwrap_or_else(|e| panic!("smoothed gradient evaluation: {e}"))
                    })
                    .collect()
            }
        }
    }

    pub fn hess(&self, x: &[f64]) -> SymMatrix {
        match &self.kind {
            Kind::Shift { a } => {
                let v = self.value(x);
                SymMatrix::from_fn(self.dim, |i, j| a[i] * a[j] * v)
            }
            Kind::Scaling { sigmas } => {
                let v = self.value(x);
                let c: Vec<f64> = sigmas.iter().map(|s| 1.0 - 1.0 / (s * s)).collect();
                SymMatrix::from_fn(self.dim, |i, j| {
                    let cross = c[i] * x[i] * c[j] * x[j];
                    if i == j { (cross + c[i]) * v } else { cross * v }
                })
            }
            Kind::GaussianCov { q, .. } => {
                let v = self.value(x);
                let qx = q.matvec(x);
                SymMatrix::from_fn(self.dim, |i, j| (qx[i] * qx[j] - q.get(i, j)) * v)
            }
            Kind::Mixture1d { w, m, s } => {
                let terms = mixture_terms(w, m, s, x[0]);
                let d2: f64 = terms.iter().map(|t| (t.ddq + t.dq * t.dq) * t.e).sum();
                SymMatrix::from_diag(&[d2])
            }
            Kind::Product { factors } => {
                let vals: Vec<f64> = factors
                    .iter()
                    .scan(0usize, |off, f| {
                        let v = f.value(&x[*off..*off + f.dim]);
                        *off += f.dim;
                        Some(v)
                    })
                    .collect();
                let total: f64 = vals.iter().product();
                let grads: Vec<Vec<f64>> = factors
                    .iter()
                    .scan(0usize, |off, f| {
                        let g = f.grad(&x[*off..*off + f.dim]);
                        *off += f.dim;
                        Some(g)
                    })
                    .collect();
                let hesses: Vec<SymMatrix> = factors
                    .iter()
                    .scan(0usize, |off, f| {
                        let h = f.hess(&x[*off..*off + f.dim]);
                        *off += f.dim;
                        Some(h)
                    })
                    .collect();
                let offsets: Vec<usize> = factors
                    .iter()
                    .scan(0usize, |off, f| {
                        let o = *off;
                        *off += f.dim;
                        Some(o)
                    })
                    .collect();
                let block_of = |k: usize| -> (usize, usize) {
                    let b = offsets.iter().rposition(|&o| o <= k).unwrap();
                    (b, k - offsets[b])
                };
                SymMatrix::from_fn(self.dim, |i, j| {
                    let (bi, li) = block_of(i);
                    let (bj, lj) = block_of(j);
                    if bi == bj {
                        let rest = if vals[bi] != 0.0 { total / vals[bi] } else { 0.0 };
                        rest * hesses[bi].get(li, lj)
                    } else {
                        let denom = vals[bi] * vals[bj];
                        let rest = if denom != 0.0 { total / denom } else { 0.0 };
                        rest * grads[bi][li] * grads[bj][lj]
                    }
                })
            }
            Kind::Conditional { base, keep, rule } => {
                let mut point = vec![0.0; base.dim];
                point[..*keep].copy_from_slice(x);
                SymMatrix::from_fn(*keep, |i, j| {
                    rule.expectation(|y| {
                        point[*keep..].copy_from_slice(y);
                        base.hess(&point).get(i, j)
                    })
                    .unwrap_or_else(|e| panic!("conditional Hessian evaluation: {e}"))
                })
            }
            Kind::Smoothed { base, t, rule } => {
                let damp = (-2.0 * t).exp();
                SymMatrix::from_fn(self.dim, |i, j| {
                    damp * mehler::ou_apply_with_rule(|y| base.hess(y).get(i, j), *t, x, rule)
                        .unwrap_or_else(|e| panic!("smoothed Hessian evaluation: {e}"))
                })
            }
        }
    }

    /// The log-density view v = −log g with its derivative formulas.
    pub fn log_density(&self) -> LogDensity<'_> {
        LogDensity { g: self }
    }

    /// Immediate factorization into independent blocks, if this density is a
    /// product (shifts and scalings factor coordinatewise).
    pub fn block_factors(&self) -> Option<Vec<Density>> {
        match &self.kind {
            Kind::Shift { a } if self.dim > 1 => {
                Some(a.iter().map(|&ai| make_shift(&[ai]).unwrap()).collect())
            }
            Kind::Scaling { sigmas } if self.dim > 1 => {
                Some(sigmas.iter().map(|&s| make_scaling(&[s]).unwrap()).collect())
            }
            Kind::Product { factors } => Some(factors.clone()),
            _ => None,
        }
    }

    /// Full 1D factorization (the `product_structure` of the density), when
    /// every block splits down to one coordinate.
    pub fn factors_1d(&self) -> Option<Vec<Density>> {
        if self.dim == 1 {
            return Some(vec![self.clone()]);
        }
        let blocks = self.block_factors()?;
        let mut out = Vec::with_capacity(self.dim);
        for b in blocks {
            out.extend(b.factors_1d()?);
        }
        Some(out)
    }

    /// True for families whose optimal transport to γ is linear (shifts,
    /// scalings, Gaussian covariances, and products of those); those admit
    /// tighter tolerances than quadrature-backed families.
    pub fn is_linear_family(&self) -> bool {
        match &self.kind {
            Kind::Shift { .. } | Kind::Scaling { .. } | Kind::GaussianCov { .. } => true,
            Kind::Product { factors } => factors.iter().all(|f| f.is_linear_family()),
            _ => false,
        }
    }

    pub fn derivative_source(&self) -> DerivativeSource {
        match &self.kind {
            Kind::Conditional { .. } | Kind::Smoothed { .. } => DerivativeSource::Quadrature,
            Kind::Product { factors } => {
                if factors.iter().any(|f| f.derivative_source() == DerivativeSource::Quadrature) {
                    DerivativeSource::Quadrature
                } else {
                    DerivativeSource::Closed
                }
            }
            _ => DerivativeSource::Closed,
        }
    }

    /// Covariance matrix for the Gaussian-covariance family.
    pub fn covariance(&self) -> Option<&SymMatrix> {
        match &self.kind {
            Kind::GaussianCov { sigma, .. } => Some(sigma),
            _ => None,
        }
    }
}

struct MixTerm {
    e: f64,
    dq: f64,
    ddq: f64,
}

fn mixture_terms(w: &[f64], m: &[f64], s: &[f64], x: f64) -> Vec<MixTerm> {
    w.iter()
        .zip(m)
        .zip(s)
        .map(|((&wi, &mi), &si)| {
            let z = (x - mi) / si;
            let q = 0.5 * x * x - 0.5 * z * z;
            MixTerm {
                e: wi / si * q.exp(),
                dq: x - z / si,
                ddq: 1.0 - 1.0 / (si * si),
            }
        })
        .collect()
}

/// v = −log g and its derivatives, with
/// v_{x_i x_j} = −g_{x_i x_j}/g + g_{x_i} g_{x_j}/g².
pub struct LogDensity<'a> {
    g: &'a Density,
}

impl LogDensity<'_> {
    pub fn v(&self, x: &[f64]) -> f64 {
        let mut gv = self.g.value(x);
        if gv < LOG_FLOOR {
            FLOOR_COUNT.fetch_add(1, Ordering::Relaxed);
            gv = LOG_FLOOR;
        }
        -gv.ln()
    }

    pub fn grad_v(&self, x: &[f64]) -> Vec<f64> {
        let gv = self.g.value(x).max(LOG_FLOOR);
        self.g.grad(x).iter().map(|gi| -gi / gv).collect()
    }

    pub fn hess_v(&self, x: &[f64]) -> SymMatrix {
        let gv = self.g.value(x).max(LOG_FLOOR);
        let grad = self.g.grad(x);
        let hess = self.g.hess(x);
        SymMatrix::from_fn(self.g.dim, |i, j| {
            -hess.get(i, j) / gv + grad[i] * grad[j] / (gv * gv)
        })
    }
}

/// Fisher information I_γ g = ∫ |∇g|²/g dγ.
pub fn fisher_info(g: &Density, rule: &QuadratureRule) -> Result<f64> {
    let mut terms = Vec::with_capacity(rule.len());
    for (node, &w) in rule.nodes().iter().zip(rule.weights()) {
        let gv = g.value(node);
        if gv <= 0.0 {
            return Err(Error::eval(format!("density {gv} not positive at node {node:?}")));
        }
        let sq: f64 = g.grad(node).iter().map(|gi| gi * gi).sum();
        terms.push(w * sq / gv);
    }
    Ok(pairwise_sum(&terms))
}

/// Entropy Ent_γ g = ∫ g log g dγ, with 0·log 0 := 0.
pub fn entropy(g: &Density, rule: &QuadratureRule) -> Result<f64> {
    let mut terms = Vec::with_capacity(rule.len());
    for (node, &w) in rule.nodes().iter().zip(rule.weights()) {
        let gv = g.value(node);
        if gv < 0.0 {
            return Err(Error::eval(format!("density {gv} negative at node {node:?}")));
        }
        terms.push(if gv == 0.0 { 0.0 } else { w * gv * gv.ln() });
    }
    Ok(pairwise_sum(&terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::default_rule;
    use approx::assert_abs_diff_eq;

    #[test]
    fn shift_values() {
        let g0 = make_shift(&[0.0]).unwrap();
        for &x in &[-2.0, 0.0, 1.5] {
            assert_eq!(g0.value(&[x]), 1.0);
        }
        let g = make_shift(&[1.0]).unwrap();
        assert_abs_diff_eq!(g.value(&[1.0]), 0.5f64.exp(), epsilon = 1e-12);
        let r = default_rule(1).unwrap();
        assert_abs_diff_eq!(r.expectation(|x| g.value(x)).unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn scaling_values_and_window() {
        let g1 = make_scaling(&[1.0, 1.0]).unwrap();
        assert_eq!(g1.value(&[0.3, -0.7]), 1.0);
        let g = make_scaling(&[2.0]).unwrap();
        assert_abs_diff_eq!(g.value(&[0.0]), 0.5, epsilon = 1e-15);
        assert!(make_scaling(&[0.1]).is_err());
        assert!(make_scaling(&[6.0]).is_err());
    }

    #[test]
    fn scaling_fisher_and_entropy() {
        let g = make_scaling(&[2.0]).unwrap();
        let r = default_rule(1).unwrap();
        let fi = fisher_info(&g, &r).unwrap();
        assert_abs_diff_eq!(fi, 2.25, epsilon = 1e-9);
        let ent = entropy(&g, &r).unwrap();
        assert_abs_diff_eq!(ent, 1.5 - 2f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn shift_fisher_and_entropy() {
        let g = make_shift(&[1.0]).unwrap();
        let r = default_rule(1).unwrap();
        assert_abs_diff_eq!(fisher_info(&g, &r).unwrap(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(entropy(&g, &r).unwrap(), 0.5, epsilon = 1e-10);
        let ones = make_shift(&[0.0]).unwrap();
        assert_abs_diff_eq!(fisher_info(&ones, &r).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(entropy(&ones, &r).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn gaussian_cov_matches_scaling() {
        let sig = SymMatrix::from_diag(&[4.0, 1.0]);
        let g = make_gaussian_cov(&sig).unwrap();
        let s = make_scaling(&[2.0, 1.0]).unwrap();
        for &p in &[[0.0, 0.0], [1.0, -1.0], [2.5, 0.5], [-3.0, 2.0]] {
            assert_abs_diff_eq!(g.value(&p), s.value(&p), epsilon = 1e-14);
        }
        let id = make_gaussian_cov(&SymMatrix::identity(2)).unwrap();
        assert_eq!(id.value(&[0.4, -1.1]), 1.0);
    }

    #[test]
    fn gaussian_cov_normalization() {
        let sig = SymMatrix::from_rows(2, &[2.0, 0.5, 0.5, 1.0]).unwrap();
        let g = make_gaussian_cov(&sig).unwrap();
        let r = default_rule(2).unwrap();
        assert_abs_diff_eq!(r.expectation(|x| g.value(x)).unwrap(), 1.0, epsilon = 1e-8);
        assert!(make_gaussian_cov(&SymMatrix::from_diag(&[1.0, -0.5])).is_err());
    }

    #[test]
    fn mixture_values() {
        let single = make_mixture_1d(&[1.0], &[0.0], &[1.0]).unwrap();
        for &x in &[-1.0, 0.0, 2.0] {
            assert_abs_diff_eq!(single.value(&[x]), 1.0, epsilon = 1e-14);
        }
        let g = make_mixture_1d(&[0.5, 0.5], &[-1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(g.value(&[0.0]), (-0.5f64).exp(), epsilon = 1e-14);
        let r = default_rule(1).unwrap();
        assert_abs_diff_eq!(r.expectation(|x| g.value(x)).unwrap(), 1.0, epsilon = 1e-10);
        assert!(make_mixture_1d(&[0.5, 0.6], &[0.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(make_mixture_1d(&[1.0, 0.0], &[0.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn log_density_formulas() {
        let g = make_mixture_1d(&[0.5, 0.5], &[-1.0, 1.0], &[1.0, 1.0]).unwrap();
        let ld = g.log_density();
        for &x in &[-1.3, 0.0, 0.9, 2.4] {
            let gv = g.value(&[x]);
            assert_abs_diff_eq!(ld.grad_v(&[x])[0], -g.grad(&[x])[0] / gv, epsilon = 1e-12);
            let want = -g.hess(&[x]).get(0, 0) / gv + (g.grad(&[x])[0] / gv).powi(2);
            assert_abs_diff_eq!(ld.hess_v(&[x]).get(0, 0), want, epsilon = 1e-12);
        }
    }

    #[test]
    fn conditional_short_circuit_on_products() {
        let g = make_product(vec![
            make_mixture_1d(&[0.5, 0.5], &[-1.0, 1.0], &[1.0, 1.0]).unwrap(),
            make_scaling(&[2.0]).unwrap(),
        ])
        .unwrap();
        let g1 = conditional_expectation(&g, 1).unwrap();
        let m = make_mixture_1d(&[0.5, 0.5], &[-1.0, 1.0], &[1.0, 1.0]).unwrap();
        for &x in &[-2.0, 0.0, 1.0] {
            assert_abs_diff_eq!(g1.value(&[x]), m.value(&[x]), epsilon = 1e-14);
        }
        let g2 = conditional_expectation(&g, 2).unwrap();
        assert_abs_diff_eq!(g2.value(&[0.5, 0.5]), g.value(&[0.5, 0.5]), epsilon = 1e-15);
        assert!(conditional_expectation(&g, 0).is_err());
        assert!(conditional_expectation(&g, 3).is_err());
    }

    #[test]
    fn conditional_gaussian_marginal() {
        let sig = SymMatrix::from_rows(2, &[2.0, 0.5, 0.5, 1.0]).unwrap();
        let g = make_gaussian_cov(&sig).unwrap();
        let g1 = conditional_expectation(&g, 1).unwrap();
        // marginal of N(0, Σ) on the first coordinate is N(0, 2)
        let oracle = make_scaling(&[2f64.sqrt()]).unwrap();
        for &x in &[-2.0, -0.5, 0.0, 1.0, 2.0] {
            assert_abs_diff_eq!(g1.value(&[x]), oracle.value(&[x]), epsilon = 1e-8);
        }
    }

    #[test]
    fn smoothing_shift_closed_form() {
        let g = make_shift(&[1.0]).unwrap();
        let gt = ou_smooth(&g, 0.5).unwrap();
        let oracle = make_shift(&[(-0.5f64).exp()]).unwrap();
        for &x in &[-1.0, 0.0, 0.5, 2.0] {
            assert_abs_diff_eq!(gt.value(&[x]), oracle.value(&[x]), epsilon = 1e-9);
        }
    }

    #[test]
    fn smoothing_scaling_mass_and_closed_form() {
        let g = make_scaling(&[2.0]).unwrap();
        let gt = ou_smooth(&g, 0.3).unwrap();
        let r = default_rule(1).unwrap();
        assert_abs_diff_eq!(r.expectation(|x| gt.value(x)).unwrap(), 1.0, epsilon = 1e-9);
        // T_t maps N(0,σ²)/γ to N(0, 1 + e^{−2t}(σ²−1))/γ
        let st = (1.0 + (-0.6f64).exp() * 3.0).sqrt();
        let oracle = make_scaling(&[st]).unwrap();
        for &x in &[-1.0, 0.4, 1.8] {
            assert_abs_diff_eq!(gt.value(&[x]), oracle.value(&[x]), epsilon = 1e-9);
        }
        let ones = make_shift(&[0.0]).unwrap();
        let ones_t = ou_smooth(&ones, 0.7).unwrap();
        assert_abs_diff_eq!(ones_t.value(&[1.3]), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn product_derivatives_match_fd() {
        let g = make_product(vec![
            make_mixture_1d(&[0.3, 0.7], &[-1.0, 0.5], &[0.8, 1.2]).unwrap(),
            make_shift(&[0.5]).unwrap(),
        ])
        .unwrap();
        let st = crate::stencil::FDStencil::default_4th();
        let x = [0.3, -0.6];
        let grad = g.grad(&x);
        for i in 0..2 {
            let fd = st.d1(|p| g.value(p), &x, i);
            assert_abs_diff_eq!(grad[i], fd, epsilon = 1e-9);
        }
        let hess = g.hess(&x);
        for i in 0..2 {
            for j in 0..2 {
                let fd = st.d2_cross(|p| g.value(p), &x, i, j);
                assert_abs_diff_eq!(hess.get(i, j), fd, epsilon = 1e-7);
            }
        }
    }
}
