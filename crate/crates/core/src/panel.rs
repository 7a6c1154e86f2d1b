//! Adaptive panel integration with the embedded 7/15 Gauss–Kronrod pair.
//! Used for the 1D transport CDFs and potentials, where Hermite rules do not
//! apply (finite, moving integration limits).

use crate::error::{Error, Result};

// QK15 abscissae/weights on [-1, 1]; the Gauss-7 nodes are the odd-indexed
// Kronrod abscissae plus the centre.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn panel(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let fsum = f(c - x) + f(c + x);
        kron += WGK[i] * fsum;
        if i % 2 == 1 {
            gauss += WG[i / 2] * fsum;
        }
    }
    (kron * h, (kron - gauss).abs() * h)
}

/// ∫_a^b f, refined until the summed Kronrod error estimate drops below
/// atol + rtol·|result|. `seeds` are interior breakpoints worth starting
/// from (density peaks, anchor points).
pub fn integrate(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    atol: f64,
    rtol: f64,
    seeds: &[f64],
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };

    let mut cuts: Vec<f64> = seeds.iter().copied().filter(|&s| s > lo && s < hi).collect();
    cuts.push(lo);
    cuts.push(hi);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();

    // (lo, hi, value, error)
    let mut panels: Vec<(f64, f64, f64, f64)> = Vec::new();
    for w in cuts.windows(2) {
        let (v, e) = panel(&mut f, w[0], w[1]);
        panels.push((w[0], w[1], v, e));
    }

    const MAX_PANELS: usize = 4000;
    loop {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if err <= atol + rtol * total.abs() {
            return Ok(sign * total);
        }
        if panels.len() >= MAX_PANELS {
            return Err(Error::eval(format!(
                "panel integration on [{lo}, {hi}] did not converge: error {err:e} with {} panels",
                panels.len()
            )));
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let (pa, pb, _, _) = panels.swap_remove(worst);
        let mid = 0.5 * (pa + pb);
        if mid <= pa || mid >= pb {
            return Err(Error::eval(format!(
                "panel integration stalled at [{pa}, {pb}]"
            )));
        }
        let (v1, e1) = panel(&mut f, pa, mid);
        let (v2, e2) = panel(&mut f, mid, pb);
        panels.push((pa, mid, v1, e1));
        panels.push((mid, pb, v2, e2));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| x * x * x - 2.0 * x + 1.0, -1.0, 3.0, 1e-14, 1e-14, &[]).unwrap();
        // antiderivative x^4/4 - x^2 + x
        let exact = (81.0 / 4.0 - 9.0 + 3.0) - (0.25 - 1.0 - 1.0);
        assert_abs_diff_eq!(v, exact, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_mass() {
        let inv = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let v = integrate(|x| inv * (-0.5 * x * x).exp(), -10.0, 10.0, 1e-14, 1e-13, &[0.0]).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn oriented_interval() {
        let fwd = integrate(|x| x.exp(), 0.0, 1.0, 1e-13, 1e-13, &[]).unwrap();
        let bwd = integrate(|x| x.exp(), 1.0, 0.0, 1e-13, 1e-13, &[]).unwrap();
        assert_abs_diff_eq!(fwd, -bwd, epsilon = 1e-13);
        assert_abs_diff_eq!(fwd, std::f64::consts::E - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sharp_peak_resolved() {
        // N(3, 0.09) Lebesgue density integrates to ~1 over a wide interval.
        let s: f64 = 0.3;
        let norm = 1.0 / (s * (2.0 * std::f64::consts::PI).sqrt());
        let f = |x: f64| norm * (-0.5 * ((x - 3.0) / s).powi(2)).exp();
        let v = integrate(f, -25.0, 25.0, 1e-14, 1e-13, &[3.0]).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
    }
}
