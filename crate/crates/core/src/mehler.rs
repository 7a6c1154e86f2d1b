//! Ornstein–Uhlenbeck semigroup through the Mehler integral
//! T_t f(x) = ∫ f(e^{−t} x + √(1 − e^{−2t}) y) γ(dy),
//! evaluated by tensor Gauss–Hermite quadrature in y.

use crate::error::{Error, Result};
use crate::quad::{tensor_rule, QuadratureRule};

/// Applies T_t to a scalar function on R^dim at the point x. The t = 0 case
/// returns f(x) exactly, bypassing quadrature.
pub fn ou_apply(
    f: impl Fn(&[f64]) -> f64,
    t: f64,
    x: &[f64],
    rule1d: &QuadratureRule,
) -> Result<f64> {
    let tensor = tensor_rule(rule1d, x.len().max(1))?;
    ou_apply_with_rule(f, t, x, &tensor)
}

/// Same as `ou_apply` but with a pre-built tensor rule of dimension x.len();
/// used where many evaluations share one rule.
pub fn ou_apply_with_rule(
    f: impl Fn(&[f64]) -> f64,
    t: f64,
    x: &[f64],
    rule: &QuadratureRule,
) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::invalid(format!("semigroup time must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(f(x));
    }
    if rule.dim() != x.len() {
        return Err(Error::invalid(format!(
            "rule dimension {} does not match point dimension {}",
            rule.dim(),
            x.len()
        )));
    }
    let alpha = (-t).exp();
    // sqrt(1 - e^{-2t}) computed via expm1 for accuracy at small t
    let beta = (-(-2.0 * t).exp_m1()).sqrt();
    let mut arg = vec![0.0; x.len()];
    rule.expectation(|y| {
        for i in 0..x.len() {
            arg[i] = alpha * x[i] + beta * y[i];
        }
        f(&arg)
    })
}
