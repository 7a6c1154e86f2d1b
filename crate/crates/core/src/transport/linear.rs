//! Optimal map from N(0, Σ) to γ: the linear map A = Σ^{-1/2} with potential
//! Φ(x) = ½⟨Ax, x⟩, so D²φ = A − I is constant and third derivatives vanish.

use crate::error::Result;
use crate::operators::SymMatrix;

#[derive(Debug, Clone)]
pub struct LinearMap {
    a: SymMatrix,
}

impl LinearMap {
    pub fn from_covariance(sigma: &SymMatrix) -> Result<LinearMap> {
        Ok(LinearMap { a: sigma.inv_sqrt_pd()? })
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn inverted(&self) -> Result<LinearMap> {
        Ok(LinearMap { a: self.a.inv_pd()? })
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        let sq: f64 = x.iter().map(|v| v * v).sum();
        0.5 * (self.a.quad_form(x) - sq)
    }

    pub fn grad_phi(&self, x: &[f64]) -> Vec<f64> {
        self.a.matvec(x).iter().zip(x).map(|(ax, xi)| ax - xi).collect()
    }

    pub fn hess_phi(&self) -> SymMatrix {
        self.a.sub(&SymMatrix::identity(self.a.dim()))
    }
}
