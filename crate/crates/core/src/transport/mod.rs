//! Transport maps T = ∇Φ = I + ∇φ sending g·γ to γ, with derivative access up
//! to third order where the solver supports it.

mod cdf1d;
mod entropic;
mod linear;

pub use entropic::{solve_entropic_2d, sup_map_error, EntropicConfig, EntropicMap, GridSpec};

use crate::density::Density;
use crate::error::{Error, Result};
use crate::operators::{PotentialField, SymMatrix};
use crate::stencil::FDStencil;
use cdf1d::Map1d;
use linear::LinearMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverTag {
    ClosedForm1d,
    Product,
    LinearGaussian,
    Entropic2d,
}

impl SolverTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverTag::ClosedForm1d => "closed-form-1d",
            SolverTag::Product => "product",
            SolverTag::LinearGaussian => "linear-gaussian",
            SolverTag::Entropic2d => "entropic-2d",
        }
    }
}

#[derive(Debug, Clone)]
enum MapKind {
    Scalar(Map1d),
    Blocks(Vec<TransportMap>),
    Linear(LinearMap),
    Entropic(EntropicMap),
}

/// A transport map with the potential convention Φ(x) = φ(x) + |x|²/2,
/// normalized by φ(0) = 0.
#[derive(Debug, Clone)]
pub struct TransportMap {
    dim: usize,
    kind: MapKind,
    tag: SolverTag,
    accuracy_class: f64,
}

/// Declared residual tolerance of the CDF-composition solver.
pub const CDF1D_ACCURACY: f64 = 1e-9;
/// Declared residual tolerance of the spectral linear solver.
pub const LINEAR_ACCURACY: f64 = 1e-11;

/// Monotone rearrangement for a strictly positive 1D density.
pub fn solve_1d(g: &Density) -> Result<TransportMap> {
    let map = Map1d::new(g.clone())?;
    Ok(TransportMap { dim: 1, kind: MapKind::Scalar(map), tag: SolverTag::ClosedForm1d, accuracy_class: CDF1D_ACCURACY })
}

/// Coordinatewise transport for a density with product structure; each block
/// is solved by the solver appropriate for the block family.
pub fn solve_product(g: &Density) -> Result<TransportMap> {
    let factors = g
        .block_factors()
        .ok_or_else(|| Error::invalid("product solver requires product structure".to_string()))?;
    let blocks: Result<Vec<TransportMap>> = factors.iter().map(solve_auto).collect();
    let blocks = blocks?;
    let accuracy_class =
        blocks.iter().map(|b| b.accuracy_class).fold(0.0f64, f64::max);
    Ok(TransportMap { dim: g.dim(), kind: MapKind::Blocks(blocks), tag: SolverTag::Product, accuracy_class })
}

/// Closed-form map for N(0, Σ): T(x) = Σ^{-1/2} x.
pub fn solve_gaussian_linear(sigma: &SymMatrix) -> Result<TransportMap> {
    let map = LinearMap::from_covariance(sigma)?;
    Ok(TransportMap {
        dim: sigma.dim(),
        kind: MapKind::Linear(map),
        tag: SolverTag::LinearGaussian,
        accuracy_class: LINEAR_ACCURACY,
    })
}

/// Dispatches on the density structure: 1D densities through the CDF solver,
/// Gaussian covariances through the linear solver, products blockwise.
pub fn solve_auto(g: &Density) -> Result<TransportMap> {
    if let Some(sigma) = g.covariance() {
        return solve_gaussian_linear(sigma);
    }
    if g.dim() == 1 {
        return solve_1d(g);
    }
    if g.block_factors().is_some() {
        return solve_product(g);
    }
    Err(Error::invalid(format!(
        "no direct solver for a coupled {}-dimensional density; use the entropic solver",
        g.dim()
    )))
}

/// Inverse transport S with S(T(x)) = x; S sends γ to g·γ and has the form
/// S = I + ∇ψ. Closed form for linear blocks, monotone root-finding in 1D.
pub fn invert(map: &TransportMap, g: &Density) -> Result<TransportMap> {
    if g.dim() != map.dim {
        return Err(Error::invalid(format!(
            "density dim {} does not match map dim {}",
            g.dim(),
            map.dim
        )));
    }
    let kind = match &map.kind {
        MapKind::Scalar(m) => MapKind::Scalar(m.inverted()),
        MapKind::Linear(l) => MapKind::Linear(l.inverted()?),
        MapKind::Blocks(blocks) => {
            let factors = g.block_factors().ok_or_else(|| {
                Error::invalid("inverting a block map requires the product density".to_string())
            })?;
            let inv: Result<Vec<TransportMap>> =
                blocks.iter().zip(&factors).map(|(b, f)| invert(b, f)).collect();
            MapKind::Blocks(inv?)
        }
        MapKind::Entropic(_) => {
            return Err(Error::invalid(
                "entropic maps are not invertible in closed form".to_string(),
            ))
        }
    };
    Ok(TransportMap { dim: map.dim, kind, tag: map.tag, accuracy_class: map.accuracy_class })
}

impl TransportMap {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solver_tag(&self) -> SolverTag {
        self.tag
    }

    pub fn accuracy_class(&self) -> f64 {
        self.accuracy_class
    }

    /// Whether analytic third derivatives are exposed (false for entropic
    /// maps, whose Hessians are already finite-difference data).
    pub fn has_third(&self) -> bool {
        match &self.kind {
            MapKind::Entropic(_) => false,
            MapKind::Blocks(blocks) => blocks.iter().all(|b| b.has_third()),
            _ => true,
        }
    }

    /// φ(x), normalized by φ(0) = 0.
    pub fn phi(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        match &self.kind {
            MapKind::Scalar(m) => m.phi(x[0]),
            MapKind::Linear(l) => Ok(l.phi(x)),
            MapKind::Entropic(e) => Ok(e.phi(x)),
            MapKind::Blocks(blocks) => {
                let mut total = 0.0;
                let mut off = 0;
                for b in blocks {
                    total += b.phi(&x[off..off + b.dim])?;
                    off += b.dim;
                }
                Ok(total)
            }
        }
    }

    pub fn grad_phi(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        match &self.kind {
            MapKind::Scalar(m) => Ok(vec![m.t(x[0])? - x[0]]),
            MapKind::Linear(l) => Ok(l.grad_phi(x)),
            MapKind::Entropic(e) => Ok(e.grad_phi(x)),
            MapKind::Blocks(blocks) => {
                let mut out = Vec::with_capacity(self.dim);
                let mut off = 0;
                for b in blocks {
                    out.extend(b.grad_phi(&x[off..off + b.dim])?);
                    off += b.dim;
                }
                Ok(out)
            }
        }
    }

    pub fn hess_phi(&self, x: &[f64]) -> Result<SymMatrix> {
        self.check_dim(x)?;
        match &self.kind {
            MapKind::Scalar(m) => Ok(SymMatrix::from_diag(&[m.dt(x[0])? - 1.0])),
            MapKind::Linear(l) => Ok(l.hess_phi()),
            MapKind::Entropic(e) => Ok(e.hess_phi(x)),
            MapKind::Blocks(blocks) => {
                let mut out = SymMatrix::zeros(self.dim);
                let mut off = 0;
                for b in blocks {
                    let h = b.hess_phi(&x[off..off + b.dim])?;
                    for i in 0..b.dim {
                        for j in i..b.dim {
                            out.set(off + i, off + j, h.get(i, j));
                        }
                    }
                    off += b.dim;
                }
                Ok(out)
            }
        }
    }

    /// ∂_{x_i}(D²φ)(x); identical to ∂_{x_i}(D²Φ) since the two Hessians
    /// differ by the constant identity.
    pub fn third(&self, x: &[f64], i: usize) -> Result<SymMatrix> {
        self.check_dim(x)?;
        if i >= self.dim {
            return Err(Error::invalid(format!("direction {i} out of range for dim {}", self.dim)));
        }
        match &self.kind {
            MapKind::Scalar(m) => Ok(SymMatrix::from_diag(&[m.d2t(x[0])?])),
            MapKind::Linear(l) => Ok(SymMatrix::zeros(l.dim())),
            MapKind::Entropic(_) => Err(Error::invalid(
                "entropic maps do not expose third derivatives".to_string(),
            )),
            MapKind::Blocks(blocks) => {
                let mut out = SymMatrix::zeros(self.dim);
                let mut off = 0;
                for b in blocks {
                    if i >= off && i < off + b.dim {
                        let t = b.third(&x[off..off + b.dim], i - off)?;
                        for r in 0..b.dim {
                            for c in r..b.dim {
                                out.set(off + r, off + c, t.get(r, c));
                            }
                        }
                        break;
                    }
                    off += b.dim;
                }
                Ok(out)
            }
        }
    }

    /// Finite-difference fallback for ∂_{x_i}(D²φ), differencing the Hessian.
    pub fn third_fd(&self, x: &[f64], i: usize, stencil: &FDStencil) -> Result<SymMatrix> {
        self.check_dim(x)?;
        let mut failure: Option<Error> = None;
        let mut p = x.to_vec();
        let mut entry = |r: usize, c: usize, this: &TransportMap| -> f64 {
            let v = stencil.d1_scalar(
                |xi| {
                    p[i] = xi;
                    match this.hess_phi(&p) {
                        Ok(h) => h.get(r, c),
                        Err(e) => {
                            failure.get_or_insert(e);
                            0.0
                        }
                    }
                },
                x[i],
            );
            p[i] = x[i];
            v
        };
        let mut out = SymMatrix::zeros(self.dim);
        for r in 0..self.dim {
            for c in r..self.dim {
                let v = entry(r, c, self);
                out.set(r, c, v);
            }
        }
        match failure {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }

    /// T(x) = x + ∇φ(x).
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.grad_phi(x)?.iter().zip(x).map(|(g, xi)| g + xi).collect())
    }

    /// D²Φ = I + D²φ.
    pub fn hess_potential(&self, x: &[f64]) -> Result<SymMatrix> {
        Ok(self.hess_phi(x)?.add(&SymMatrix::identity(self.dim)))
    }

    /// μ-quantile access for pushforward diagnostics (1D maps only).
    pub fn mu_quantile_1d(&self, p: f64) -> Result<f64> {
        match &self.kind {
            MapKind::Scalar(m) if !m.is_inverse() => m.mu_quantile(p),
            _ => Err(Error::invalid("quantiles only available on forward 1D maps".to_string())),
        }
    }

    /// The 1D blocks of a separable map, in coordinate order; None when the
    /// map has a coupled block.
    pub fn scalar_blocks(&self) -> Option<Vec<&TransportMap>> {
        match &self.kind {
            MapKind::Scalar(_) => Some(vec![self]),
            MapKind::Blocks(blocks) => {
                let mut out = Vec::new();
                for b in blocks {
                    out.extend(b.scalar_blocks()?);
                }
                Some(out)
            }
            _ => None,
        }
    }

    /// Serializes map values on a uniform grid to a versioned CSV for
    /// inspection: one row per grid point with the point, T(x) and φ(x).
    pub fn to_grid_csv(&self, half_width: f64, per_axis: usize) -> Result<String> {
        if self.dim > 3 {
            return Err(Error::invalid(format!(
                "grid serialization supports dim ≤ 3, got {}",
                self.dim
            )));
        }
        if per_axis < 2 || !(half_width > 0.0) {
            return Err(Error::invalid("grid needs half_width > 0 and at least 2 points per axis".to_string()));
        }
        let mut out = format!(
            "# gma-map v1 solver={} dim={} half_width={:e} per_axis={}\n",
            self.tag.as_str(),
            self.dim,
            half_width,
            per_axis
        );
        for i in 0..self.dim {
            out.push_str(&format!("x{},", i + 1));
        }
        for i in 0..self.dim {
            out.push_str(&format!("t{},", i + 1));
        }
        out.push_str("phi\n");
        let count = per_axis.pow(self.dim as u32);
        let h = 2.0 * half_width / (per_axis - 1) as f64;
        let mut x = vec![0.0; self.dim];
        for flat in 0..count {
            let mut rem = flat;
            for k in (0..self.dim).rev() {
                x[k] = -half_width + h * (rem % per_axis) as f64;
                rem /= per_axis;
            }
            let t = self.apply(&x)?;
            let phi = self.phi(&x)?;
            for v in &x {
                out.push_str(&format!("{v:e},"));
            }
            for v in &t {
                out.push_str(&format!("{v:e},"));
            }
            out.push_str(&format!("{phi:e}\n"));
        }
        Ok(out)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!(
                "point dimension {} does not match map dimension {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }
}

/// The potential Φ(x) = φ(x) + |x|²/2 as a scalar field, for the
/// Ornstein–Uhlenbeck operator plumbing.
pub struct PhiField<'a>(pub &'a TransportMap);

impl PotentialField for PhiField<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.0.phi(x).expect("potential evaluation")
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        self.0.grad_phi(x).expect("potential gradient evaluation")
    }

    fn hess(&self, x: &[f64]) -> SymMatrix {
        self.0.hess_phi(x).expect("potential Hessian evaluation")
    }
}

/// Lφ(x) = Δφ(x) − ⟨x, ∇φ(x)⟩ for the map's potential φ.
pub fn ou_of_map(map: &TransportMap, x: &[f64]) -> Result<f64> {
    let grad = map.grad_phi(x)?;
    let lap = map.hess_phi(x)?.trace();
    Ok(lap - grad.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
}
