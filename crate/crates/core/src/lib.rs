//! Numerical laboratory for optimal transport to the standard Gaussian
//! measure γ: transport maps T = I + ∇φ sending g·γ to γ for analytic density
//! families, verification of the associated change-of-variables formula and
//! entropy/Fisher-information identities, and a finite truncation cascade that
//! emulates the construction through conditional expectations.

pub mod density;
pub mod error;
pub mod gauss;
pub mod identities;
pub mod mehler;
pub mod operators;
pub mod panel;
pub mod quad;
pub mod stencil;
pub mod transport;
pub mod truncation;

pub use density::{
    conditional_expectation, entropy, fisher_info, make_gaussian_cov, make_mixture_1d,
    make_product, make_scaling, make_shift, ou_smooth, Density, LogDensity,
};
pub use error::{Error, Result};
pub use operators::{
    det2, hs_norm, ibp_residual, log_det2, m_functional, nonneg_part, op_norm, ou_operator,
    SymMatrix,
};
pub use quad::{default_rule, hermite_rule, tensor_rule, QuadratureRule};
pub use transport::{
    invert, solve_1d, solve_auto, solve_entropic_2d, solve_gaussian_linear, solve_product,
    EntropicConfig, GridSpec, SolverTag, TransportMap,
};
