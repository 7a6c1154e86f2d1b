//! Gauss–Hermite quadrature against the standard Gaussian measure γ.
//!
//! Probabilists' convention throughout: the weight is e^{−x²/2}/√(2π) and the
//! weights of every rule sum to 1, so `expectation` computes ∫ f dγ directly.
//! Nodes come from the Golub–Welsch eigen-decomposition of the symmetric
//! tridiagonal Jacobi matrix of the He recurrence, which stays stable up to
//! order 512.

use nalgebra::{DMatrix, SymmetricEigen};
use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 512;
pub const MAX_TENSOR_NODES: usize = 10_000_000;

/// Nodes and weights integrating against γ on R^dim.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    dim: usize,
    order_1d: usize,
    nodes: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Per-axis order of the underlying 1D rule.
    pub fn order(&self) -> usize {
        self.order_1d
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// 1D node coordinates; panics unless dim == 1.
    pub fn nodes_1d(&self) -> Vec<f64> {
        assert_eq!(self.dim, 1);
        self.nodes.iter().map(|p| p[0]).collect()
    }

    /// Σ wᵢ f(xᵢ) with a pairwise tree reduction, so the result does not
    /// depend on evaluation chunking. Errors if f is non-finite at a node.
    pub fn expectation(&self, mut f: impl FnMut(&[f64]) -> f64) -> Result<f64> {
        let mut terms = Vec::with_capacity(self.len());
        for (node, &w) in self.nodes.iter().zip(&self.weights) {
            let v = f(node);
            if !v.is_finite() {
                return Err(Error::eval(format!("non-finite integrand value {v} at node {node:?}")));
            }
            terms.push(w * v);
        }
        Ok(pairwise_sum(&terms))
    }
}

/// 1D probabilists' Gauss–Hermite rule of the given order. Exact for
/// polynomials of degree ≤ 2·order − 1 against γ.
///
/// Nodes come from the eigenvalues of the symmetric tridiagonal Jacobi matrix
/// (Golub–Welsch), polished by Newton on the orthonormal recurrence. Weights
/// use the Christoffel sums 1/Σₖ p̃ₖ(xᵢ)², which keeps their *relative*
/// accuracy in the far tail where eigenvector first components lose it.
pub fn hermite_rule(order: usize) -> Result<QuadratureRule> {
    if order < 1 || order > MAX_ORDER {
        return Err(Error::invalid(format!("quadrature order {order} outside [1, {MAX_ORDER}]")));
    }
    // Jacobi matrix of He_n: zero diagonal, off-diagonal sqrt(i).
    let mut j = DMatrix::zeros(order, order);
    for i in 1..order {
        let b = (i as f64).sqrt();
        j[(i, i - 1)] = b;
        j[(i - 1, i)] = b;
    }
    let se = SymmetricEigen::new(j);
    let mut nodes: Vec<f64> = (0..order).map(|k| se.eigenvalues[k]).collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());

    for x in nodes.iter_mut() {
        for _ in 0..4 {
            let (pn, pn1, _, _) = orthonormal_pair(order, *x);
            let deriv = (order as f64).sqrt() * pn1;
            if deriv == 0.0 {
                break;
            }
            let step = pn / deriv;
            *x -= step;
            if step.abs() < 1e-15 * (1.0 + x.abs()) {
                break;
            }
        }
    }
    // enforce exact symmetry about the origin
    for i in 0..order / 2 {
        let k = order - 1 - i;
        let x = 0.5 * (nodes[k] - nodes[i]);
        nodes[i] = -x;
        nodes[k] = x;
    }
    if order % 2 == 1 {
        nodes[order / 2] = 0.0;
    }

    let mut weights: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            let (_, _, christoffel, log_scale) = orthonormal_pair(order, x);
            // w = 1/Σ p̃ₖ² with the sum scaled by e^{-2·log_scale}
            let log_w = -(christoffel.ln() + 2.0 * log_scale);
            // far-tail weights below f64 range floor at the least subnormal
            log_w.exp().max(5e-324)
        })
        .collect();
    for i in 0..order / 2 {
        let k = order - 1 - i;
        let w = 0.5 * (weights[i] + weights[k]);
        weights[i] = w;
        weights[k] = w;
    }
    let total: f64 = pairwise_sum(&weights);
    for w in &mut weights {
        *w /= total;
    }
    Ok(QuadratureRule {
        dim: 1,
        order_1d: order,
        nodes: nodes.into_iter().map(|x| vec![x]).collect(),
        weights,
    })
}

/// Evaluates the orthonormal probabilists' Hermite recurrence at x, returning
/// (p̃_n, p̃_{n−1}, Σ_{k<n} p̃ₖ², log rescale) with periodic rescaling so the
/// running values stay inside f64 range. The p̃ values share the same scale;
/// ratios of the two are scale-free.
fn orthonormal_pair(n: usize, x: f64) -> (f64, f64, f64, f64) {
    let mut prev = 0.0f64; // p̃_{k-1}
    let mut cur = 1.0f64; // p̃_0
    let mut sum = 0.0f64;
    let mut log_scale = 0.0f64;
    for k in 0..n {
        sum += cur * cur;
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
        if cur.abs() > 1e120 || sum > 1e240 {
            let s = cur.abs().max(sum.sqrt());
            cur /= s;
            prev /= s;
            sum /= s * s;
            log_scale += s.ln();
        }
    }
    (cur, prev, sum, log_scale)
}

/// Full tensor product of a 1D rule on R^dim.
pub fn tensor_rule(rule1d: &QuadratureRule, dim: usize) -> Result<QuadratureRule> {
    if rule1d.dim != 1 {
        return Err(Error::invalid("tensor_rule expects a 1D base rule".to_string()));
    }
    if dim == 0 {
        return Err(Error::invalid("tensor_rule dimension must be positive".to_string()));
    }
    if dim == 1 {
        return Ok(rule1d.clone());
    }
    let order = rule1d.len();
    let mut count: usize = 1;
    for _ in 0..dim {
        count = count
            .checked_mul(order)
            .filter(|&c| c <= MAX_TENSOR_NODES)
            .ok_or_else(|| {
                Error::ResourceLimit(format!(
                    "tensor rule {order}^{dim} exceeds {MAX_TENSOR_NODES} nodes"
                ))
            })?;
    }
    let base: Vec<f64> = rule1d.nodes_1d();
    let mut nodes = Vec::with_capacity(count);
    let mut weights = Vec::with_capacity(count);
    for flat in 0..count {
        let mut point = Vec::with_capacity(dim);
        let mut w = 1.0;
        let mut rem = flat;
        for _ in 0..dim {
            let idx = rem % order;
            rem /= order;
            point.push(base[idx]);
            w *= rule1d.weights[idx];
        }
        nodes.push(point);
        weights.push(w);
    }
    Ok(QuadratureRule { dim, order_1d: rule1d.order_1d, nodes, weights })
}

/// Default tensor rule for a given dimension: order 64 in 1D, 32 per axis in
/// 2D, decreasing so node counts stay at desk scale.
pub fn default_rule(dim: usize) -> Result<QuadratureRule> {
    let order = default_order(dim);
    tensor_rule(&hermite_rule(order)?, dim)
}

pub fn default_order(dim: usize) -> usize {
    match dim {
        0 | 1 => 64,
        2 => 32,
        3 => 20,
        4 => 12,
        5 => 10,
        _ => 8,
    }
}

/// Deterministic pairwise (tree) summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        2 => v[0] + v[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
        }
    }
}

/// E[x^k] for x ~ N(0,1): 0 for odd k, (k−1)!! for even k.
pub fn gaussian_moment(k: usize) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let mut m = 1.0;
    let mut i = k as i64 - 1;
    while i > 1 {
        m *= i as f64;
        i -= 2;
    }
    m
}
