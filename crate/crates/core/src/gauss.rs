//! Standard normal density, CDF and quantile helpers shared by the 1D
//! transport solver and the tests. The CDF goes through `libm::erfc`
//! (double-precision accurate in both tails); the quantile seeds with the
//! Acklam rational approximation and Newton-polishes against the CDF.

pub const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Standard normal Lebesgue density.
#[inline]
pub fn std_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Standard normal CDF, accurate in both tails.
#[inline]
pub fn std_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail 1 − Φ(x) without cancellation.
#[inline]
pub fn std_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

// Acklam's rational approximation to the normal quantile (relative error
// below 1.2e-9 on (0,1)); two Newton steps against std_cdf finish the job.
fn acklam_seed(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -acklam_seed(1.0 - p)
    }
}

/// Quantile of the standard normal. Callers in the upper tail should prefer
/// `std_quantile_upper` with the survival value to keep tail accuracy.
pub fn std_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile domain: {p}");
    let mut x = acklam_seed(p);
    for _ in 0..3 {
        // Newton on the lower tail: both cdf and pdf are accurate there
        let err = std_cdf(x) - p;
        let d = std_pdf(x);
        if d <= f64::MIN_POSITIVE {
            break;
        }
        let step = err / d;
        x -= step;
        if step.abs() < 1e-15 * (1.0 + x.abs()) {
            break;
        }
    }
    x
}

/// Quantile expressed through the upper tail: returns x with 1 − Φ(x) = q.
pub fn std_quantile_upper(q: f64) -> f64 {
    -std_quantile(q)
}
