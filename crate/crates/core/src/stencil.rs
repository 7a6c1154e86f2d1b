//! Central finite-difference stencils for derivative checks and fallbacks.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Error O(h²).
    Central2,
    /// Error O(h⁴).
    Central4,
}

#[derive(Debug, Clone, Copy)]
pub struct FDStencil {
    pub step: f64,
    pub scheme: Scheme,
}

impl FDStencil {
    pub fn new(step: f64, scheme: Scheme) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::invalid(format!("stencil step must be positive, got {step}")));
        }
        Ok(FDStencil { step, scheme })
    }

    /// Default for O(1) scales: 4th order with step 1e-3 balances truncation
    /// against roundoff.
    pub fn default_4th() -> Self {
        FDStencil { step: 1e-3, scheme: Scheme::Central4 }
    }

    pub fn d1_scalar(&self, mut f: impl FnMut(f64) -> f64, x: f64) -> f64 {
        let h = self.step;
        match self.scheme {
            Scheme::Central2 => (f(x + h) - f(x - h)) / (2.0 * h),
            Scheme::Central4 => {
                (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
            }
        }
    }

    pub fn d2_scalar(&self, mut f: impl FnMut(f64) -> f64, x: f64) -> f64 {
        let h = self.step;
        match self.scheme {
            Scheme::Central2 => (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h),
            Scheme::Central4 => {
                (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h)
                    - f(x - 2.0 * h))
                    / (12.0 * h * h)
            }
        }
    }

    /// ∂_i f at x.
    pub fn d1(&self, mut f: impl FnMut(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
        let mut p = x.to_vec();
        self.d1_scalar(
            |xi| {
                p[i] = xi;
                f(&p)
            },
            x[i],
        )
    }

    /// ∂²_i f at x.
    pub fn d2(&self, mut f: impl FnMut(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
        let mut p = x.to_vec();
        self.d2_scalar(
            |xi| {
                p[i] = xi;
                f(&p)
            },
            x[i],
        )
    }

    /// ∂_i ∂_j f at x (nested first differences for i ≠ j).
    pub fn d2_cross(&self, mut f: impl FnMut(&[f64]) -> f64, x: &[f64], i: usize, j: usize) -> f64 {
        if i == j {
            return self.d2(f, x, i);
        }
        let mut p = x.to_vec();
        self.d1_scalar(
            |xi| {
                p[i] = xi;
                self.d1(&mut f, &p, j)
            },
            x[i],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rejects_nonpositive_step() {
        assert!(FDStencil::new(0.0, Scheme::Central2).is_err());
        assert!(FDStencil::new(-1e-3, Scheme::Central4).is_err());
    }

    #[test]
    fn fourth_order_on_exp() {
        let st = FDStencil::default_4th();
        let d = st.d1_scalar(|x| x.exp(), 0.7);
        assert_abs_diff_eq!(d, 0.7f64.exp(), epsilon = 1e-11);
        let d2 = st.d2_scalar(|x| x.exp(), 0.7);
        assert_abs_diff_eq!(d2, 0.7f64.exp(), epsilon = 1e-7);
    }

    #[test]
    fn second_order_error_scales_with_h2() {
        let st = FDStencil::new(1e-4, Scheme::Central2).unwrap();
        let d = st.d1_scalar(|x| (2.0 * x).sin(), 0.3);
        assert_abs_diff_eq!(d, 2.0 * (0.6f64).cos(), epsilon = 1e-7);
    }

    #[test]
    fn cross_derivative() {
        let st = FDStencil::default_4th();
        let f = |x: &[f64]| x[0] * x[0] * x[1] + x[1] * x[1];
        let v = st.d2_cross(f, &[1.5, -0.5], 0, 1);
        assert_abs_diff_eq!(v, 3.0, epsilon = 1e-8);
    }
}
