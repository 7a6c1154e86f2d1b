use std::path::{Path, PathBuf};

use gma_core::density::DerivativeSource;
use gma_core::identities::{self, CheckResult};
use gma_core::quad::{default_order, hermite_rule, tensor_rule, QuadratureRule};
use gma_core::stencil::FDStencil;
use gma_core::transport::{self, EntropicConfig, GridSpec, SolverTag, TransportMap};
use gma_core::truncation;
use gma_core::{invert, solve_auto, Density};
use serde::Serialize;

use crate::config::{
    build_density, load_config, tolerance_for, CliError, DensitySpec, RunConfig,
};

/// One output row: a completed check or an explicit skip with its reason.
#[derive(Debug, Serialize)]
#[serde(untagged)]
pub enum Row {
    Check(CheckResult),
    Skipped { name: String, status: String, reason: String },
}

impl Row {
    fn name(&self) -> &str {
        match self {
            Row::Check(c) => &c.name,
            Row::Skipped { name, .. } => name,
        }
    }

    fn passed(&self) -> bool {
        match self {
            Row::Check(c) => c.pass,
            Row::Skipped { .. } => true,
        }
    }

    fn csv_row(&self) -> String {
        match self {
            Row::Check(c) => c.csv_row(),
            Row::Skipped { name, reason, .. } => {
                format!("{name},skipped,,,,,{reason}")
            }
        }
    }

    fn json_line(&self) -> String {
        match self {
            Row::Check(c) => c.to_json_line(),
            s => serde_json::to_string(s).expect("row serialization"),
        }
    }
}

fn solver_err(what: &str, e: gma_core::Error) -> CliError {
    match e {
        gma_core::Error::InvalidArgument(m) => CliError::Config(format!("{what}: {m}")),
        other => CliError::Solver(format!("{what}: {other}")),
    }
}

fn deterministic_serial(jobs: Option<usize>) -> usize {
    if std::env::var("GMA_DETERMINISTIC").map(|v| v == "1").unwrap_or(false) {
        return 1;
    }
    jobs.unwrap_or(1).max(1)
}

struct VerifyContext {
    density: Density,
    map: TransportMap,
    rule: QuadratureRule,
    points: Vec<Vec<f64>>,
    cfg: RunConfig,
    scale: f64,
}

pub fn cmd_verify(
    config_path: &Path,
    out: &Path,
    order_override: Option<usize>,
    tolerance_scale: f64,
    jobs: Option<usize>,
    dump_map: bool,
) -> Result<bool, CliError> {
    let cfg = load_config(config_path)?;
    let density = build_density(&cfg.density)?;
    let check_names = cfg.checks.resolve()?;
    let map = solve_map(&density, &cfg)?;
    let order = order_override
        .or(cfg.quadrature_order)
        .unwrap_or_else(|| default_order(density.dim()));
    let rule1d = hermite_rule(order).map_err(|e| CliError::Config(e.to_string()))?;
    let rule = tensor_rule(&rule1d, density.dim())
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut points = identities::report_grid(density.dim());
    points.extend(seeded_points(cfg.seed, density.dim(), 8));

    let ctx = VerifyContext { density, map, rule, points, cfg, scale: tolerance_scale };
    let threads = deterministic_serial(jobs);
    let mut rows: Vec<Row> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::Config(format!("cannot build thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            check_names
                .par_iter()
                .map(|name| run_check(&ctx, name))
                .collect::<Result<Vec<Row>, CliError>>()
        })?
    } else {
        let mut acc = Vec::with_capacity(check_names.len());
        for name in &check_names {
            acc.push(run_check(&ctx, name)?);
        }
        acc
    };
    rows.sort_by(|a, b| a.name().cmp(b.name()));
    write_rows(out, "verify", &rows)?;
    if dump_map {
        let csv = ctx
            .map
            .to_grid_csv(4.0, 41)
            .map_err(|e| CliError::Solver(format!("map serialization: {e}")))?;
        std::fs::write(out.join("map.csv"), csv)
            .map_err(|e| CliError::Config(format!("write map.csv failed: {e}")))?;
    }
    Ok(rows.iter().all(Row::passed))
}

fn solve_map(density: &Density, cfg: &RunConfig) -> Result<TransportMap, CliError> {
    let describe = format!("solver {:?} on {:?}", cfg.solver.kind, cfg.density);
    match cfg.solver.kind.as_str() {
        "auto" => solve_auto(density).map_err(|e| solver_err(&describe, e)),
        "cdf-1d" => transport::solve_1d(density).map_err(|e| solver_err(&describe, e)),
        "product" => transport::solve_product(density).map_err(|e| solver_err(&describe, e)),
        "linear-gaussian" => {
            let sigma = density.covariance().ok_or_else(|| {
                CliError::Config("linear-gaussian solver requires a gaussian_cov density".to_string())
            })?;
            transport::solve_gaussian_linear(sigma).map_err(|e| solver_err(&describe, e))
        }
        "entropic-2d" => {
            let grid = cfg.solver.grid.map(|g| GridSpec { half_width: g.l, n: g.n }).unwrap_or_default();
            let eps = cfg.solver.eps.unwrap_or(0.01);
            let mut ecfg = EntropicConfig::new(eps, grid);
            ecfg.budget = cfg.solver.budget;
            transport::solve_entropic_2d(density, &ecfg).map_err(|e| solver_err(&describe, e))
        }
        other => Err(CliError::Config(format!("unknown solver kind {other:?}"))),
    }
}

/// splitmix64-based standard normal points; deterministic across platforms.
fn seeded_points(seed: u64, dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut state = seed.wrapping_add(0x9E3779B97F4A7C15);
    let mut next = move || {
        state = state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    };
    let mut uniform = move || (next() >> 11) as f64 / (1u64 << 53) as f64;
    (0..count)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let u1: f64 = uniform().max(1e-12);
                    let u2: f64 = uniform();
                    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                })
                .collect()
        })
        .collect()
}

fn run_check(ctx: &VerifyContext, name: &str) -> Result<Row, CliError> {
    let g = &ctx.density;
    let map = &ctx.map;
    let rule = &ctx.rule;
    let tol = |n: &str| tolerance_for(n, &ctx.cfg.tolerances, g, map.accuracy_class(), ctx.scale);
    let fail = |e: gma_core::Error| CliError::Solver(format!("check {name}: {e}"));
    let stencil = FDStencil::default_4th();
    let third_mode = || -> Option<&FDStencil> {
        if ctx.cfg.third_fd || g.derivative_source() == DerivativeSource::Quadrature {
            Some(&stencil)
        } else {
            None
        }
    };
    let skip = |reason: &str| {
        Ok(Row::Skipped {
            name: name.to_string(),
            status: "skipped".to_string(),
            reason: reason.to_string(),
        })
    };
    let result = match name {
        "cov_formula" => {
            identities::check_cov_formula(g, map, &ctx.points, tol(name)).map_err(fail)?
        }
        "inverse_cov_formula" => {
            if map.solver_tag() == SolverTag::Entropic2d {
                return skip("entropic maps are not invertible in closed form");
            }
            let s = invert(map, g).map_err(fail)?;
            identities::check_inverse_cov_formula(g, &s, &ctx.points, tol(name)).map_err(fail)?
        }
        "identity_2_2" => {
            if !map.has_third() {
                return skip("map does not expose third derivatives");
            }
            identities::check_identity_2_2(g, map, rule, third_mode(), tol(name)).map_err(fail)?
        }
        "talagrand" => identities::check_talagrand(g, map, rule, tol(name)).map_err(fail)?,
        "entropy_transport" => {
            let partner_spec = ctx.cfg.partner.clone().unwrap_or_else(|| {
                let mut a = vec![0.0; g.dim()];
                a[0] = 1.0;
                DensitySpec::Shift { a }
            });
            let partner = build_density(&partner_spec)?;
            if partner.dim() != g.dim() {
                return Err(CliError::Config("partner density dimension mismatch".to_string()));
            }
            let partner_map = solve_auto(&partner).map_err(fail)?;
            identities::check_entropy_transport(g, &partner, map, &partner_map, rule, tol(name))
                .map_err(fail)?
        }
        "shift_inequality" => {
            let e = ctx.cfg.shift_e.clone().unwrap_or_else(|| {
                let mut e = vec![0.0; g.dim()];
                e[0] = 1.0;
                e
            });
            identities::check_shift_inequality(g, &e, map, rule, tol(name)).map_err(fail)?
        }
        "second_deriv_bounds" => {
            identities::check_second_deriv_bounds(g, map, rule, tol(name)).map_err(fail)?
        }
        "moment_bounds" => {
            let ps = ctx.cfg.moment_p.clone().unwrap_or_else(|| vec![1.0]);
            let mut worst: Option<CheckResult> = None;
            for p in ps {
                let r = identities::check_moment_bounds(g, map, p, rule, tol(name)).map_err(fail)?;
                worst = Some(match worst {
                    None => r,
                    Some(w) if r.residual_or_slack < w.residual_or_slack => r,
                    Some(w) => w,
                });
            }
            worst.unwrap()
        }
        "third_deriv_bound" => {
            if !map.has_third() {
                return skip("map does not expose third derivatives");
            }
            let ps = ctx.cfg.third_p.clone().unwrap_or_else(|| vec![1.5, 2.0]);
            let mut worst: Option<CheckResult> = None;
            for p in ps {
                let r = identities::check_third_deriv_bound(g, map, p, rule, third_mode(), tol(name))
                    .map_err(fail)?;
                worst = Some(match worst {
                    None => r,
                    Some(w) if r.residual_or_slack < w.residual_or_slack => r,
                    Some(w) => w,
                });
            }
            worst.unwrap()
        }
        "L_duality" => {
            let xi = identities::standard_test_functions(g.dim());
            identities::check_l_duality(g, map, &xi, rule, tol(name)).map_err(fail)?
        }
        "L_weighted_bound" => {
            identities::check_l_weighted_bound(g, map, rule, tol(name)).map_err(fail)?
        }
        other => return Err(CliError::Config(format!("unknown check name {other:?}"))),
    };
    Ok(Row::Check(result))
}

pub fn cmd_truncation(
    config_path: &Path,
    out: &Path,
    tolerance_scale: f64,
    _jobs: Option<usize>,
) -> Result<bool, CliError> {
    let cfg = load_config(config_path)?;
    let density = build_density(&cfg.density)?;
    if density.dim() < 2 {
        return Err(CliError::Config(
            "truncation study requires dimension ≥ 2 (at least two levels)".to_string(),
        ));
    }
    let levels = cfg.levels.clone().unwrap_or_else(|| (1..=density.dim()).collect());
    if levels.len() < 2 {
        return Err(CliError::Config("truncation study requires at least two levels".to_string()));
    }
    let study = truncation::run_study(&density, &levels)
        .map_err(|e| solver_err("truncation study", e))?;
    let fail = |e: gma_core::Error| CliError::Solver(format!("truncation check: {e}"));

    let base_tol = |name: &str| {
        tolerance_for(name, &cfg.tolerances, &density, 0.0, tolerance_scale)
    };
    let mut rows: Vec<Row> = Vec::new();
    for r in truncation::check_monotone(&study, base_tol("monotone")) {
        rows.push(Row::Check(r));
    }
    for (i, ln) in levels.iter().enumerate() {
        for lm in &levels[..i] {
            let name = format!("contraction_m{lm}_n{ln}");
            let r = truncation::check_contraction(&study, *lm, *ln, base_tol(&name))
                .map_err(fail)?;
            rows.push(Row::Check(r));
        }
    }
    rows.push(Row::Check(
        truncation::check_uniform_l_bound(&study, base_tol("uniform_L_bound")).map_err(fail)?,
    ));
    if levels.len() >= 3 {
        let pts = identities::report_grid(*levels.last().unwrap());
        let d2tol = cfg.tolerances.get("d2_convergence").copied().unwrap_or(1e-7);
        rows.push(Row::Check(
            truncation::check_d2_convergence(&study, &pts, d2tol * tolerance_scale)
                .map_err(fail)?,
        ));
    } else {
        rows.push(Row::Skipped {
            name: "d2_convergence".to_string(),
            status: "skipped".to_string(),
            reason: "requires at least 3 levels".to_string(),
        });
    }
    rows.sort_by(|a, b| a.name().cmp(b.name()));

    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))?;
    let csv = truncation::level_csv(&study, base_tol("contraction")).map_err(fail)?;
    std::fs::write(out.join("truncation_levels.csv"), csv)
        .map_err(|e| CliError::Config(format!("write failed: {e}")))?;
    write_rows(out, "truncation", &rows)?;
    Ok(rows.iter().all(Row::passed))
}

fn write_rows(out: &Path, stem: &str, rows: &[Row]) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))?;
    let mut jsonl = String::new();
    let mut csv = String::from(CheckResult::csv_header());
    csv.push('\n');
    for r in rows {
        jsonl.push_str(&r.json_line());
        jsonl.push('\n');
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    let floored = gma_core::density::floored_log_evaluations();
    if floored > 0 {
        eprintln!("warning: {floored} log evaluations hit the 1e-300 floor");
    }
    let jsonl_path: PathBuf = out.join(format!("{stem}.jsonl"));
    let csv_path: PathBuf = out.join(format!("{stem}.csv"));
    std::fs::write(&jsonl_path, jsonl)
        .map_err(|e| CliError::Config(format!("write {} failed: {e}", jsonl_path.display())))?;
    std::fs::write(&csv_path, csv)
        .map_err(|e| CliError::Config(format!("write {} failed: {e}", csv_path.display())))?;
    Ok(())
}
