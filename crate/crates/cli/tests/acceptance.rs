//! Acceptance suite: every criterion runs at its pinned tolerance and prints
//! one pass/fail line. Oracles are the closed forms of the shift, scaling and
//! Gaussian-covariance families, quadrature values for the mixture family,
//! and cross-solver agreement for the entropic map.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use gma_core::identities::{
    check_cov_formula, check_entropy_transport, check_identity_2_2, check_inverse_cov_formula,
    check_l_duality, check_l_weighted_bound, check_moment_bounds, check_second_deriv_bounds,
    check_shift_inequality, check_talagrand, check_third_deriv_bound, report_grid,
    standard_test_functions, CheckResult,
};
use gma_core::operators::SymMatrix;
use gma_core::stencil::FDStencil;
use gma_core::transport::{
    solve_entropic_2d, sup_map_error, EntropicConfig, GridSpec, TransportMap,
};
use gma_core::truncation::{check_contraction, check_monotone, run_study};
use gma_core::{
    default_rule, hermite_rule, invert, make_gaussian_cov, make_mixture_1d, make_scaling,
    make_shift, solve_1d, solve_gaussian_linear, solve_product, Density,
};

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

fn conclude(name: &str, outcome: Result<(), String>) {
    match outcome {
        Ok(()) => println!("criterion {name}: PASS"),
        Err(e) => {
            println!("criterion {name}: FAIL — {e}");
            panic!("criterion {name} failed: {e}");
        }
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn shift1() -> Density {
    make_shift(&[1.0]).unwrap()
}

fn scaling2() -> Density {
    make_scaling(&[2.0]).unwrap()
}

fn gauss2d_sigma() -> SymMatrix {
    SymMatrix::from_rows(2, &[2.0, 0.5, 0.5, 1.0]).unwrap()
}

fn mixture() -> Density {
    make_mixture_1d(&[0.5, 0.5], &[-1.0, 1.0], &[1.0, 1.0]).unwrap()
}

fn term(r: &CheckResult, name: &str) -> f64 {
    r.terms
        .as_ref()
        .and_then(|ts| ts.iter().find(|t| t.name == name))
        .map(|t| t.value)
        .unwrap_or(f64::NAN)
}

fn within_time(start: Instant, budget: Duration, what: &str) -> Result<(), String> {
    let elapsed = start.elapsed();
    if elapsed > budget {
        return Err(format!("{what} took {elapsed:?}, budget {budget:?}"));
    }
    Ok(())
}

#[test]
fn criterion_01_change_of_variables() {
    conclude("01 change-of-variables", (|| {
        let start = Instant::now();
        let pts1 = report_grid(1);
        for (name, g) in [("shift", shift1()), ("scaling", scaling2())] {
            let map = solve_1d(&g).map_err(|e| e.to_string())?;
            let r = check_cov_formula(&g, &map, &pts1, 1e-8).map_err(|e| e.to_string())?;
            ensure!(r.pass, "{name}: residual {}", r.residual_or_slack);
        }
        let sigma = gauss2d_sigma();
        let g = make_gaussian_cov(&sigma).unwrap();
        let map = solve_gaussian_linear(&sigma).unwrap();
        let r = check_cov_formula(&g, &map, &report_grid(2), 1e-8).map_err(|e| e.to_string())?;
        ensure!(r.pass, "gauss2d: residual {}", r.residual_or_slack);

        let g = mixture();
        let map = solve_1d(&g).unwrap();
        let r = check_cov_formula(&g, &map, &pts1, 1e-5).map_err(|e| e.to_string())?;
        ensure!(r.pass, "mixture: residual {}", r.residual_or_slack);
        within_time(start, Duration::from_secs(5), "change-of-variables checks")
    })());
}

#[test]
fn criterion_02_inverse_formula() {
    conclude("02 inverse formula", (|| {
        let start = Instant::now();
        let pts = report_grid(1);
        for (name, g) in [("shift", shift1()), ("scaling", scaling2())] {
            let map = solve_1d(&g).unwrap();
            let s = invert(&map, &g).map_err(|e| e.to_string())?;
            let r = check_inverse_cov_formula(&g, &s, &pts, 1e-8).map_err(|e| e.to_string())?;
            ensure!(r.pass, "{name}: deviation {}", r.residual_or_slack);
        }
        within_time(start, Duration::from_secs(1), "inverse formula checks")
    })());
}

#[test]
fn criterion_03_information_decomposition() {
    conclude("03 information decomposition", (|| {
        let start = Instant::now();
        let g = scaling2();
        let map = solve_1d(&g).unwrap();
        let rule = default_rule(1).unwrap();
        let r = check_identity_2_2(&g, &map, &rule, None, 1e-8).map_err(|e| e.to_string())?;
        ensure!(r.pass, "scaling: residual {}", r.residual_or_slack);
        ensure!((r.lhs - 2.25).abs() < 1e-8, "fisher {}", r.lhs);
        let ln2 = std::f64::consts::LN_2;
        for (name, want) in [
            ("two_entropy", 3.0 - 2.0 * ln2),
            ("neg2_log_det2", 2.0 * ln2 - 1.0),
            ("hs_deviation", 0.25),
            ("third_derivative", 0.0),
        ] {
            let got = term(&r, name);
            ensure!((got - want).abs() < 1e-8, "term {name}: {got} vs {want}");
        }

        let g = mixture();
        let map = solve_1d(&g).unwrap();
        let rule128 = hermite_rule(128).unwrap();
        let st = FDStencil::default_4th();
        let r = check_identity_2_2(&g, &map, &rule128, Some(&st), 1e-4)
            .map_err(|e| e.to_string())?;
        ensure!(r.pass, "mixture: residual {}", r.residual_or_slack);
        within_time(start, Duration::from_secs(10), "decomposition checks")
    })());
}

#[test]
fn criterion_04_talagrand() {
    conclude("04 talagrand", (|| {
        let rule = default_rule(1).unwrap();
        let g = shift1();
        let map = solve_1d(&g).unwrap();
        let r = check_talagrand(&g, &map, &rule, 1e-8).map_err(|e| e.to_string())?;
        ensure!((r.lhs - 0.5).abs() < 1e-8, "shift entropy {}", r.lhs);
        ensure!((r.rhs - 0.5).abs() < 1e-8, "shift transport cost {}", r.rhs);
        ensure!(r.residual_or_slack.abs() < 1e-8, "shift slack {}", r.residual_or_slack);

        let g = scaling2();
        let map = solve_1d(&g).unwrap();
        let r = check_talagrand(&g, &map, &rule, 1e-8).map_err(|e| e.to_string())?;
        ensure!(
            (r.residual_or_slack - 0.306853).abs() < 1e-6,
            "scaling slack {}",
            r.residual_or_slack
        );
        Ok(())
    })());
}

#[test]
fn criterion_05_entropy_transport_pair() {
    conclude("05 entropy-transport inequality", (|| {
        let f = scaling2();
        let g = shift1();
        let map_f = solve_1d(&f).unwrap();
        let map_g = solve_1d(&g).unwrap();
        let rule = default_rule(1).unwrap();
        let r = check_entropy_transport(&f, &g, &map_f, &map_g, &rule, 1e-6)
            .map_err(|e| e.to_string())?;
        ensure!(r.residual_or_slack >= -1e-6, "slack {}", r.residual_or_slack);
        let min_integrand = term(&r, "min_trace_log_integrand");
        ensure!(min_integrand >= -1e-10, "trace-log integrand dips to {min_integrand}");
        Ok(())
    })());
}

#[test]
fn criterion_06_shift_inequality() {
    conclude("06 shift inequality", (|| {
        // μ = N(0, 4), e = 1: both sides equal 1/8
        let g = scaling2();
        let map = solve_1d(&g).unwrap();
        let rule = default_rule(1).unwrap();
        let r = check_shift_inequality(&g, &[1.0], &map, &rule, 1e-8)
            .map_err(|e| e.to_string())?;
        ensure!((r.lhs - 0.125).abs() < 1e-8, "lhs {}", r.lhs);
        ensure!((r.rhs - 0.125).abs() < 1e-8, "rhs {}", r.rhs);
        Ok(())
    })());
}

#[test]
fn criterion_07_second_derivative_bounds() {
    conclude("07 second-derivative bounds", (|| {
        let rule1 = default_rule(1).unwrap();
        for (name, g) in [
            ("ones", make_shift(&[0.0]).unwrap()),
            ("shift", shift1()),
            ("scaling", scaling2()),
        ] {
            let map = solve_1d(&g).unwrap();
            let r = check_second_deriv_bounds(&g, &map, &rule1, 1e-8)
                .map_err(|e| e.to_string())?;
            ensure!(r.residual_or_slack >= -1e-8, "{name}: slack {}", r.residual_or_slack);
            if name == "scaling" {
                let lhs = term(&r, "column_lhs_minus");
                let rhs = term(&r, "column_rhs");
                ensure!((lhs - 0.25).abs() < 1e-8, "coordinate lhs {lhs}");
                ensure!((rhs - 0.25).abs() < 1e-8, "coordinate rhs {rhs}");
            }
        }
        let sigma = gauss2d_sigma();
        let g = make_gaussian_cov(&sigma).unwrap();
        let map = solve_gaussian_linear(&sigma).unwrap();
        let r = check_second_deriv_bounds(&g, &map, &default_rule(2).unwrap(), 1e-8)
            .map_err(|e| e.to_string())?;
        ensure!(r.residual_or_slack >= -1e-8, "gauss2d slack {}", r.residual_or_slack);
        Ok(())
    })());
}

#[test]
fn criterion_08_moment_bounds() {
    conclude("08 moment bounds", (|| {
        let rule = default_rule(1).unwrap();
        let g = scaling2();
        let map = solve_1d(&g).unwrap();
        let r = check_moment_bounds(&g, &map, 1.0, &rule, 1e-8).map_err(|e| e.to_string())?;
        ensure!(r.pass, "scaling slack {}", r.residual_or_slack);
        for (a, b) in [("op_moment", "op_moment_bound"), ("sup_hess_norm_sq", "sup_m")] {
            let (va, vb) = (term(&r, a), term(&r, b));
            ensure!((va - 0.25).abs() < 1e-8, "{a} = {va}");
            ensure!((vb - 0.25).abs() < 1e-8, "{b} = {vb}");
        }

        let g = mixture();
        let map = solve_1d(&g).unwrap();
        let r = check_moment_bounds(&g, &map, 1.0, &rule, 1e-5).map_err(|e| e.to_string())?;
        ensure!(r.residual_or_slack >= -1e-5, "mixture slack {}", r.residual_or_slack);
        Ok(())
    })());
}

#[test]
fn criterion_09_third_derivative_bound() {
    conclude("09 third-derivative bound", (|| {
        let start = Instant::now();
        let rule = default_rule(1).unwrap();
        for (name, g) in [("shift", shift1()), ("scaling", scaling2())] {
            let map = solve_1d(&g).unwrap();
            let r = check_third_deriv_bound(&g, &map, 1.5, &rule, None, 1e-8)
                .map_err(|e| e.to_string())?;
            ensure!(r.pass, "{name}: slack {}", r.residual_or_slack);
            let lhs = term(&r, "third_integral");
            ensure!(lhs < 1e-6, "{name}: third derivatives {lhs}");
        }
        let sigma = gauss2d_sigma();
        let g = make_gaussian_cov(&sigma).unwrap();
        let map = solve_gaussian_linear(&sigma).unwrap();
        let r = check_third_deriv_bound(&g, &map, 2.0, &default_rule(2).unwrap(), None, 1e-8)
            .map_err(|e| e.to_string())?;
        ensure!(term(&r, "third_integral") < 1e-6, "gauss2d third derivatives");

        let g = mixture();
        let map = solve_1d(&g).unwrap();
        for p in [1.5, 2.0] {
            let r = check_third_deriv_bound(&g, &map, p, &rule, None, 1e-5)
                .map_err(|e| e.to_string())?;
            ensure!(r.residual_or_slack >= -1e-5, "mixture p={p}: slack {}", r.residual_or_slack);
        }
        within_time(start, Duration::from_secs(20), "third-derivative checks")
    })());
}

#[test]
fn criterion_10_duality_and_weighted_bound() {
    conclude("10 duality and weighted bound", (|| {
        let rule1 = default_rule(1).unwrap();
        let xi1 = standard_test_functions(1);
        for (name, g) in [("shift", shift1()), ("scaling", scaling2())] {
            let map = solve_1d(&g).unwrap();
            let r = check_l_duality(&g, &map, &xi1, &rule1, 1e-8).map_err(|e| e.to_string())?;
            ensure!(r.pass, "{name} duality residual {}", r.residual_or_slack);
        }
        let sigma = gauss2d_sigma();
        let gg = make_gaussian_cov(&sigma).unwrap();
        let lin = solve_gaussian_linear(&sigma).unwrap();
        let xi2 = standard_test_functions(2);
        let r = check_l_duality(&gg, &lin, &xi2, &default_rule(2).unwrap(), 1e-8)
            .map_err(|e| e.to_string())?;
        ensure!(r.pass, "gauss2d duality residual {}", r.residual_or_slack);

        let g = mixture();
        let map = solve_1d(&g).unwrap();
        let rule128 = hermite_rule(128).unwrap();
        let r = check_l_duality(&g, &map, &xi1, &rule128, 1e-6).map_err(|e| e.to_string())?;
        ensure!(r.pass, "mixture duality residual {}", r.residual_or_slack);

        // weighted bound: nonnegative slack for the identity density, strictly
        // positive for every other fixture family
        let ones = make_shift(&[0.0]).unwrap();
        let ones_map = solve_1d(&ones).unwrap();
        let r = check_l_weighted_bound(&ones, &ones_map, &rule1, 1e-9)
            .map_err(|e| e.to_string())?;
        ensure!(r.residual_or_slack >= -1e-9, "ones slack {}", r.residual_or_slack);
        for (name, g) in [("shift", shift1()), ("scaling", scaling2()), ("mixture", mixture())] {
            let map = solve_1d(&g).unwrap();
            let r = check_l_weighted_bound(&g, &map, &rule1, 1e-8)
                .map_err(|e| e.to_string())?;
            ensure!(r.residual_or_slack > 0.0, "{name}: slack {}", r.residual_or_slack);
        }
        let r = check_l_weighted_bound(&gg, &lin, &default_rule(2).unwrap(), 1e-8)
            .map_err(|e| e.to_string())?;
        ensure!(r.residual_or_slack > 0.0, "gauss2d slack {}", r.residual_or_slack);
        Ok(())
    })());
}

#[test]
fn criterion_11_truncation_study() {
    conclude("11 truncation study", (|| {
        let g = make_shift(&[1.0, 0.5, 0.25]).unwrap();
        let study = run_study(&g, &[1, 2, 3]).map_err(|e| e.to_string())?;
        let want = [0.5, 0.625, 0.65625];
        for (l, w) in study.levels.iter().zip(want) {
            ensure!((l.entropy - w).abs() < 1e-9, "level {} entropy {}", l.n, l.entropy);
        }
        let c = check_contraction(&study, 1, 2, 1e-8).map_err(|e| e.to_string())?;
        ensure!(c.residual_or_slack.abs() < 1e-8, "contraction slack {}", c.residual_or_slack);
        ensure!((c.lhs - 0.125).abs() < 1e-8, "entropy gap {}", c.lhs);
        for m in check_monotone(&study, 1e-8) {
            ensure!(m.pass, "{} violated: {}", m.name, m.residual_or_slack);
        }
        Ok(())
    })());
}

#[test]
fn criterion_12_cross_solver() {
    conclude("12 cross-solver agreement", (|| {
        // entropic against the closed-form linear map, budget from the fixture
        let text = std::fs::read_to_string(fixture("entropic_gauss.json"))
            .map_err(|e| e.to_string())?;
        let cfg: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        let solver = &cfg["solver"];
        let eps = solver["eps"].as_f64().ok_or("missing eps")?;
        let n = solver["grid"]["n"].as_u64().ok_or("missing grid.n")? as usize;
        let l = solver["grid"]["l"].as_f64().ok_or("missing grid.l")?;
        let budget = solver["budget"].as_f64().ok_or("missing budget")?;
        ensure!(eps == 0.01 && n == 128, "fixture must pin eps 0.01 on a 128² grid");

        let sigma = gauss2d_sigma();
        let g = make_gaussian_cov(&sigma).unwrap();
        let mut ecfg = EntropicConfig::new(eps, GridSpec { half_width: l, n });
        ecfg.budget = Some(budget);
        let entropic = solve_entropic_2d(&g, &ecfg).map_err(|e| e.to_string())?;
        let linear = solve_gaussian_linear(&sigma).unwrap();
        let err = sup_map_error(&entropic, &linear, 2.0, 21).map_err(|e| e.to_string())?;
        ensure!(err < budget, "entropic sup error {err} ≥ budget {budget}");

        // product solver against per-coordinate 1D solves
        let prod_density = make_scaling(&[2.0, 1.0]).unwrap();
        let prod = solve_product(&prod_density).map_err(|e| e.to_string())?;
        let d1 = solve_1d(&make_scaling(&[2.0]).unwrap()).unwrap();
        let d2 = solve_1d(&make_scaling(&[1.0]).unwrap()).unwrap();
        let per_axis: [&TransportMap; 2] = [&d1, &d2];
        for x in report_grid(2) {
            let a = prod.apply(&x).map_err(|e| e.to_string())?;
            for i in 0..2 {
                let b = per_axis[i].apply(&[x[i]]).map_err(|e| e.to_string())?[0];
                ensure!((a[i] - b).abs() <= 1e-10, "coordinate {i} at {x:?}: {} vs {b}", a[i]);
            }
        }
        Ok(())
    })());
}

#[test]
fn criterion_13_determinism() {
    conclude("13 determinism", (|| {
        let run = |dir: &Path| -> Result<Vec<u8>, String> {
            let out = std::process::Command::new(env!("CARGO_BIN_EXE_gma"))
                .args([
                    "verify",
                    "--config",
                    &fixture("scaling2.json").to_string_lossy(),
                    "--out",
                    &dir.to_string_lossy(),
                ])
                .env("GMA_DETERMINISTIC", "1")
                .output()
                .map_err(|e| e.to_string())?;
            ensure!(out.status.success(), "verify failed: {}", String::from_utf8_lossy(&out.stderr));
            std::fs::read(dir.join("verify.csv")).map_err(|e| e.to_string())
        };
        let d1 = tempfile::tempdir().map_err(|e| e.to_string())?;
        let d2 = tempfile::tempdir().map_err(|e| e.to_string())?;
        let a = run(d1.path())?;
        let b = run(d2.path())?;
        ensure!(a == b, "csv outputs differ between identical runs");
        ensure!(!a.is_empty(), "empty report");
        Ok(())
    })());
}
