//! Dense symmetric operators with spectral utilities: the regularized
//! determinant det₂, Hilbert–Schmidt and operator norms, the top-of-spectrum
//! functional M(·) with its nonnegative part, and the Ornstein–Uhlenbeck
//! operator L f = Δf − ⟨x, ∇f⟩ together with the weighted integration-by-parts
//! residual used to validate Sobolev derivatives.

use nalgebra::{DMatrix, SymmetricEigen};
use crate::error::{Error, Result};
use crate::density::Density;
use crate::quad::QuadratureRule;

/// Largest matrix dimension handled by the dense spectral routines.
pub const MAX_DIM: usize = 64;

/// Dense symmetric matrix. Symmetry holds by construction: all mutators write
/// both (i,j) and (j,i).
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    // row-major, full storage
    entries: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1 && dim <= MAX_DIM, "SymMatrix dim {dim} out of range");
        SymMatrix { dim, entries: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.entries[i * d.len() + i] = v;
        }
        m
    }

    /// Builds from a symmetric generator; f is evaluated for i <= j and mirrored.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                m.entries[i * dim + j] = v;
                m.entries[j * dim + i] = v;
            }
        }
        m
    }

    /// Builds from full row-major entries, rejecting asymmetric input.
    pub fn from_rows(dim: usize, rows: &[f64]) -> Result<Self> {
        if rows.len() != dim * dim {
            return Err(Error::invalid(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                rows.len()
            )));
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                if rows[i * dim + j] != rows[j * dim + i] {
                    return Err(Error::invalid(format!(
                        "asymmetric input at ({i},{j}): {} vs {}",
                        rows[i * dim + j],
                        rows[j * dim + i]
                    )));
                }
            }
        }
        Ok(SymMatrix { dim, entries: rows.to_vec() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.dim + j] = v;
        self.entries[j * self.dim + i] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.dim, other.dim);
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a + b)
            .collect();
        SymMatrix { dim: self.dim, entries }
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.dim, other.dim);
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a - b)
            .collect();
        SymMatrix { dim: self.dim, entries }
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix { dim: self.dim, entries: self.entries.iter().map(|a| a * s).collect() }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    /// Quadratic form ⟨Ax, x⟩.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Eigenvalues in descending order with matching orthonormal eigenvectors
    /// (columns of the returned matrix).
    pub fn eigen(&self) -> Eigen {
        let m = DMatrix::from_row_slice(self.dim, self.dim, &self.entries);
        let se = SymmetricEigen::new(m);
        let mut idx: Vec<usize> = (0..self.dim).collect();
        idx.sort_by(|&a, &b| se.eigenvalues[b].partial_cmp(&se.eigenvalues[a]).unwrap());
        let values: Vec<f64> = idx.iter().map(|&k| se.eigenvalues[k]).collect();
        let mut vectors = vec![0.0; self.dim * self.dim];
        for (col, &k) in idx.iter().enumerate() {
            for row in 0..self.dim {
                vectors[row * self.dim + col] = se.eigenvectors[(row, k)];
            }
        }
        Eigen { dim: self.dim, values, vectors }
    }

    /// Symmetric square root of a positive definite matrix.
    pub fn sqrt_pd(&self) -> Result<SymMatrix> {
        self.spectral_map("sqrt", |l| {
            if l <= 0.0 { None } else { Some(l.sqrt()) }
        })
    }

    /// Inverse symmetric square root of a positive definite matrix.
    pub fn inv_sqrt_pd(&self) -> Result<SymMatrix> {
        self.spectral_map("inverse sqrt", |l| {
            if l <= 0.0 { None } else { Some(1.0 / l.sqrt()) }
        })
    }

    /// Spectral inverse with a condition-number guard of 1e12.
    pub fn inv_pd(&self) -> Result<SymMatrix> {
        let eig = self.eigen();
        let lmax = eig.values[0];
        let lmin = *eig.values.last().unwrap();
        if lmin <= 0.0 || lmax / lmin > 1e12 {
            return Err(Error::eval(format!(
                "matrix not safely invertible: spectrum [{lmin:e}, {lmax:e}]"
            )));
        }
        Ok(eig.assemble(|l| 1.0 / l))
    }

    pub fn det(&self) -> f64 {
        self.eigen().values.iter().product()
    }

    fn spectral_map(&self, what: &str, f: impl Fn(f64) -> Option<f64>) -> Result<SymMatrix> {
        let eig = self.eigen();
        for &l in &eig.values {
            if f(l).is_none() {
                return Err(Error::invalid(format!(
                    "{what} requires positive definite matrix; eigenvalue {l:e}"
                )));
            }
        }
        Ok(eig.assemble(|l| f(l).unwrap()))
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues descending.
pub struct Eigen {
    dim: usize,
    pub values: Vec<f64>,
    // column-major eigenvectors flattened row-major: vectors[row*dim + col]
    vectors: Vec<f64>,
}

impl Eigen {
    pub fn vector(&self, col: usize) -> Vec<f64> {
        (0..self.dim).map(|row| self.vectors[row * self.dim + col]).collect()
    }

    /// Reassembles V f(Λ) Vᵀ.
    pub fn assemble(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let d = self.dim;
        SymMatrix::from_fn(d, |i, j| {
            (0..d)
                .map(|k| self.vectors[i * d + k] * f(self.values[k]) * self.vectors[j * d + k])
                .sum()
        })
    }
}

/// Fredholm–Carleman determinant det₂(I + K) = ∏(1+kᵢ)e^{−kᵢ} over the
/// eigenvalues kᵢ of the symmetric perturbation K. Returns 0 when some
/// kᵢ ≤ −1. Accumulated in log space to avoid underflow.
pub fn det2(k: &SymMatrix) -> f64 {
    match log_det2(k) {
        Some(l) => l.exp(),
        None => 0.0,
    }
}

/// log det₂(I + K) = Σ [log(1+kᵢ) − kᵢ]; None encodes −∞ (some kᵢ ≤ −1).
pub fn log_det2(k: &SymMatrix) -> Option<f64> {
    let mut acc = 0.0;
    for &ki in &k.eigen().values {
        if ki <= -1.0 {
            return None;
        }
        acc += ki.ln_1p() - ki;
    }
    Some(acc)
}

/// log det₂ of a matrix B viewed as I + (B − I): Σ [log λᵢ − (λᵢ − 1)] over
/// the eigenvalues of B; None when B has an eigenvalue ≤ 0.
pub fn log_det2_of(b: &SymMatrix) -> Option<f64> {
    let mut acc = 0.0;
    for &l in &b.eigen().values {
        if l <= 0.0 {
            return None;
        }
        acc += l.ln() - (l - 1.0);
    }
    Some(acc)
}

/// Hilbert–Schmidt (Frobenius) norm √Tr(AA*).
pub fn hs_norm(a: &SymMatrix) -> f64 {
    a.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Operator norm: largest |eigenvalue|.
pub fn op_norm(a: &SymMatrix) -> f64 {
    a.eigen().values.iter().fold(0.0, |m, &l| m.max(l.abs()))
}

/// M(A) = sup{ ⟨Ah,h⟩ : |h| ≤ 1 } — the largest (signed) eigenvalue.
pub fn m_functional(a: &SymMatrix) -> f64 {
    a.eigen().values[0]
}

/// The nonnegative part A⁺: projection of A onto its nonnegative spectrum.
pub fn nonneg_part(a: &SymMatrix) -> SymMatrix {
    a.eigen().assemble(|l| l.max(0.0))
}

/// A twice differentiable scalar potential with gradient and Hessian access.
pub trait PotentialField {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn grad(&self, x: &[f64]) -> Vec<f64>;
    fn hess(&self, x: &[f64]) -> SymMatrix;
}

/// Ornstein–Uhlenbeck operator L f(x) = Δf(x) − ⟨x, ∇f(x)⟩ = div_γ(∇f)(x).
pub fn ou_operator(f: &dyn PotentialField, x: &[f64]) -> f64 {
    let grad = f.grad(x);
    let lap = f.hess(x).trace();
    lap - dot(x, &grad)
}

/// A differentiable test function (cylindrical in the identities suite).
pub trait TestFunction {
    fn value(&self, x: &[f64]) -> f64;
    fn grad(&self, x: &[f64]) -> Vec<f64>;
}

/// Residual of the weighted integration-by-parts identity
/// ∫ ξ_{x_i} f g dγ = −∫ ξ f_{x_i} g dγ + ∫ ξ f (x_i − g_{x_i}/g) g dγ,
/// evaluated by quadrature. Near zero iff the claimed derivative of f is the
/// Sobolev derivative with respect to g·γ.
pub fn ibp_residual(
    f: &dyn TestFunction,
    i: usize,
    g: &Density,
    xi: &dyn TestFunction,
    rule: &QuadratureRule,
) -> Result<f64> {
    if i >= g.dim() {
        return Err(Error::invalid(format!("coordinate {i} out of range for dim {}", g.dim())));
    }
    let lhs = rule.expectation(|x| xi.grad(x)[i] * f.value(x) * g.value(x))?;
    let rhs = rule.expectation(|x| {
        let gv = g.value(x);
        let pull = x[i] - g.grad(x)[i] / gv;
        -xi.value(x) * f.grad(x)[i] * gv + xi.value(x) * f.value(x) * pull * gv
    })?;
    Ok(lhs - rhs)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
