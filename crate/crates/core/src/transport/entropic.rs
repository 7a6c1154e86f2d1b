//! Entropic solver for coupled 2D densities: log-domain Sinkhorn with
//! eps-scaling on a tensor grid, quadratic cost c(x,y) = ½|x−y|². The Brenier
//! potential is recovered as Φ(x) = |x|²/2 − f(x) from the source Kantorovich
//! potential f, and the map by entropic barycentric projection of the plan.
//!
//! The grid is shared between source and target, so the 1D cost matrix is
//! symmetric and both log-sum-exp contractions reuse one table. All inner
//! reductions run serially per row; rows are distributed with rayon, which
//! keeps results bit-stable across thread counts.

use rayon::prelude::*;

use crate::density::Density;
use crate::error::{Error, Result};
use crate::gauss::std_pdf;
use crate::operators::SymMatrix;

#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    /// Box half-width L; the grid covers [−L, L]².
    pub half_width: f64,
    /// Points per axis.
    pub n: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { half_width: 5.0, n: 128 }
    }
}

#[derive(Debug, Clone)]
pub struct EntropicConfig {
    pub eps: f64,
    pub grid: GridSpec,
    /// L1 stopping tolerance on the plan marginals at the target eps.
    pub marginal_tol: f64,
    pub max_iters: usize,
    /// Declared sup-error budget of the recovered map; defaults to
    /// 10·(eps + h²) when absent.
    pub budget: Option<f64>,
}

impl EntropicConfig {
    pub fn new(eps: f64, grid: GridSpec) -> Self {
        EntropicConfig { eps, grid, marginal_tol: 1e-9, max_iters: 50_000, budget: None }
    }
}

#[derive(Debug, Clone)]
pub struct EntropicMap {
    xs: Vec<f64>,
    h: f64,
    n: usize,
    // map values T(x_i) and potential φ(x_i) = −f(x_i) on the source grid
    t1: Vec<f64>,
    t2: Vec<f64>,
    phi_grid: Vec<f64>,
    phi_origin: f64,
    pub final_marginal_residual: f64,
    pub iterations: usize,
}

/// Entropic transport of a strictly positive 2D density g·γ to γ.
pub fn solve_entropic_2d(
    g: &Density,
    cfg: &EntropicConfig,
) -> Result<super::TransportMap> {
    if g.dim() != 2 {
        return Err(Error::invalid(format!("entropic solver is 2D only, got dim {}", g.dim())));
    }
    if !(1e-3..=1.0).contains(&cfg.eps) {
        return Err(Error::invalid(format!("eps {} outside [1e-3, 1]", cfg.eps)));
    }
    let n = cfg.grid.n;
    let l = cfg.grid.half_width;
    if n < 16 || n > 512 {
        return Err(Error::invalid(format!("grid size {n} outside [16, 512]")));
    }
    let h = 2.0 * l / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|i| -l + h * i as f64).collect();

    // source weights a ∝ g·γ at nodes, target weights b ∝ γ (separable)
    let mut a = vec![0.0; n * n];
    for i1 in 0..n {
        for i2 in 0..n {
            let v = g.value(&[xs[i1], xs[i2]]) * std_pdf(xs[i1]) * std_pdf(xs[i2]);
            if !(v > 0.0) {
                return Err(Error::invalid(format!(
                    "entropic solver requires g > 0 on the grid; failed at ({}, {})",
                    xs[i1], xs[i2]
                )));
            }
            a[i1 * n + i2] = v;
        }
    }
    check_truncation(&a, n, h)?;
    let asum: f64 = a.iter().sum();
    for v in &mut a {
        *v /= asum;
    }
    let la: Vec<f64> = a.iter().map(|v| v.ln()).collect();

    let w1: Vec<f64> = xs.iter().map(|&x| std_pdf(x)).collect();
    let wsum: f64 = w1.iter().sum();
    let lb1: Vec<f64> = w1.iter().map(|v| (v / wsum).ln()).collect();
    let lb: Vec<f64> = (0..n * n).map(|j| lb1[j / n] + lb1[j % n]).collect();

    // half squared distance table; symmetric because grids coincide
    let cost: Vec<f64> = (0..n * n)
        .map(|k| {
            let d = xs[k / n] - xs[k % n];
            0.5 * d * d
        })
        .collect();

    let mut f = vec![0.0; n * n];
    let mut gpot = vec![0.0; n * n];
    let mut iterations = 0usize;
    let mut residual = f64::INFINITY;

    // eps-scaling: halve from 0.5 down to the target
    let mut eps_levels = Vec::new();
    let mut e = 0.5f64.max(cfg.eps);
    while e > cfg.eps * 1.5 {
        eps_levels.push(e);
        e *= 0.5;
    }
    eps_levels.push(cfg.eps);

    let mut scratch = Scratch::new(n);
    for (li, &eps) in eps_levels.iter().enumerate() {
        let last = li + 1 == eps_levels.len();
        let tol = if last { cfg.marginal_tol } else { (cfg.marginal_tol * 3e4).max(3e-5) };
        let ca: Vec<f64> = cost.iter().map(|c| c / eps).collect();
        residual = f64::INFINITY;
        let mut iters_here = 0usize;
        // overrelaxation while far from the fixed point; plain iterations
        // near convergence so the exit residual describes the final plan
        let mut theta = 1.8f64;
        let mut prev_residual = f64::INFINITY;
        while iters_here < cfg.max_iters {
            let relax = if residual > tol * 30.0 { theta } else { 1.0 };
            // g-update from P = la + f/eps
            scratch.pack(&la, &f, eps);
            let lse_g = scratch.apply_kernel(&ca, n);
            for (gj, lj) in gpot.iter_mut().zip(&lse_g) {
                *gj = (1.0 - relax) * *gj + relax * (-eps * lj);
            }
            // f-update from Q = lb + g/eps; the gap between f and its exact
            // update is the row marginal residual of the current plan
            scratch.pack(&lb, &gpot, eps);
            let lse_f = scratch.apply_kernel(&ca, n);
            let mut terms = Vec::with_capacity(n * n);
            for k in 0..n * n {
                let fnew = -eps * lse_f[k];
                terms.push(a[k] * (((f[k] - fnew) / eps).exp() - 1.0).abs());
            }
            residual = crate::quad::pairwise_sum(&terms);
            iters_here += 1;
            iterations += 1;
            if relax == 1.0 && residual <= tol {
                // columns are exact after the plain g-update, rows within tol
                break;
            }
            if residual > prev_residual * 1.05 && theta > 1.0 {
                theta = (theta * 0.7).max(1.0);
            }
            prev_residual = residual;
            for (fk, lk) in f.iter_mut().zip(&lse_f) {
                *fk = (1.0 - relax) * *fk + relax * (-eps * lk);
            }
        }
        if residual > tol {
            return Err(Error::solver(format!(
                "sinkhorn did not reach marginal residual {tol:e} at eps {eps} within {} iterations (final residual {residual:e})",
                cfg.max_iters
            )));
        }
        if std::env::var("GMA_SINKHORN_TRACE").is_ok() {
            eprintln!("eps {eps}: {iters_here} iterations (residual {residual:e})");
        }
    }

    // barycentric projection: T(x_i) = Σ_j π_ij y_j / Σ_j π_ij, a_i-factor cancels
    let eps = cfg.eps;
    let q: Vec<f64> = (0..n * n).map(|j| lb[j] + gpot[j] / eps).collect();
    let ca: Vec<f64> = cost.iter().map(|c| c / eps).collect();
    let rows: Vec<(f64, f64)> = (0..n * n)
        .into_par_iter()
        .map(|i| {
            let (i1, i2) = (i / n, i % n);
            let ca1 = &ca[i1 * n..(i1 + 1) * n];
            let ca2 = &ca[i2 * n..(i2 + 1) * n];
            let mut m = f64::NEG_INFINITY;
            for j1 in 0..n {
                let base = q[j1 * n..(j1 + 1) * n].iter().zip(ca2);
                let c1 = ca1[j1];
                for (qv, c2) in base {
                    let e = qv - c1 - c2;
                    if e > m {
                        m = e;
                    }
                }
            }
            let floor = m - LSE_CUT;
            let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
            for j1 in 0..n {
                let c1 = ca1[j1];
                let row = &q[j1 * n..(j1 + 1) * n];
                for j2 in 0..n {
                    let e = row[j2] - c1 - ca2[j2];
                    if e <= floor {
                        continue;
                    }
                    let w = (e - m).exp();
                    s0 += w;
                    s1 += w * xs[j1];
                    s2 += w * xs[j2];
                }
            }
            (s1 / s0, s2 / s0)
        })
        .collect();
    let t1: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let t2: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let phi_grid: Vec<f64> = f.iter().map(|v| -v).collect();

    let mut map = EntropicMap {
        xs,
        h,
        n,
        t1,
        t2,
        phi_grid,
        phi_origin: 0.0,
        final_marginal_residual: residual,
        iterations,
    };
    map.phi_origin = map.interp(&map.phi_grid, &[0.0, 0.0]);
    let accuracy_class = cfg.budget.unwrap_or(10.0 * (eps + h * h));
    Ok(super::TransportMap {
        dim: 2,
        kind: super::MapKind::Entropic(map),
        tag: super::SolverTag::Entropic2d,
        accuracy_class,
    })
}

/// Geometric estimate of the γ·g mass outside the grid box from the outermost
/// rows; rejects configurations leaking more than 1e-6.
fn check_truncation(a: &[f64], n: usize, h: f64) -> Result<()> {
    let cell = h * h;
    let mut tail = 0.0;
    for side in 0..4 {
        let row = |k: usize, r: usize| -> f64 {
            match side {
                0 => a[r * n + k],
                1 => a[(n - 1 - r) * n + k],
                2 => a[k * n + r],
                _ => a[k * n + (n - 1 - r)],
            }
        };
        let outer: f64 = (0..n).map(|k| row(k, 0)).sum::<f64>() * cell;
        let inner: f64 = (0..n).map(|k| row(k, 1)).sum::<f64>() * cell;
        let decay = if inner > 0.0 { (outer / inner).min(0.95) } else { 0.5 };
        tail += outer * decay / (1.0 - decay).max(0.05) + outer;
    }
    if tail > 1e-6 {
        return Err(Error::invalid(format!(
            "grid mass truncation error ~{tail:e} exceeds 1e-6; enlarge the box"
        )));
    }
    Ok(())
}

/// Workspace for the separable log-sum-exp contraction
/// out[j1][j2] = LSE_{i1,i2}( p[i1][i2] − ca[i1][j1] − ca[i2][j2] ).
struct Scratch {
    p: Vec<f64>,
    tmp: Vec<f64>,
    tmp_t: Vec<f64>,
    out_t: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            p: vec![0.0; n * n],
            tmp: vec![0.0; n * n],
            tmp_t: vec![0.0; n * n],
            out_t: vec![0.0; n * n],
        }
    }

    fn pack(&mut self, log_w: &[f64], pot: &[f64], eps: f64) {
        for ((p, lw), f) in self.p.iter_mut().zip(log_w).zip(pot) {
            *p = lw + f / eps;
        }
    }

    fn apply_kernel(&mut self, ca: &[f64], n: usize) -> Vec<f64> {
        let p = &self.p;
        // stage 1 over the second index
        self.tmp
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(i1, out_row)| {
                let row = &p[i1 * n..(i1 + 1) * n];
                for (j2, o) in out_row.iter_mut().enumerate() {
                    *o = lse_shift(row, &ca[j2 * n..(j2 + 1) * n]);
                }
            });
        transpose(&self.tmp, &mut self.tmp_t, n);
        // stage 2 over the first index
        let tmp_t = &self.tmp_t;
        self.out_t
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(j2, out_row)| {
                let row = &tmp_t[j2 * n..(j2 + 1) * n];
                for (j1, o) in out_row.iter_mut().enumerate() {
                    *o = lse_shift(row, &ca[j1 * n..(j1 + 1) * n]);
                }
            });
        let mut out = vec![0.0; n * n];
        transpose(&self.out_t, &mut out, n);
        out
    }
}

/// Entries more than 60 below the maximum contribute < 1e-24 relatively and
/// are skipped; with a quadratic cost this confines the exp work to a band
/// around the diagonal.
const LSE_CUT: f64 = 60.0;

#[inline]
fn lse_shift(vals: &[f64], cost_row: &[f64]) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for (v, c) in vals.iter().zip(cost_row) {
        let e = v - c;
        if e > m {
            m = e;
        }
    }
    let mut s = 0.0;
    let floor = m - LSE_CUT;
    for (v, c) in vals.iter().zip(cost_row) {
        let e = v - c;
        if e > floor {
            s += (e - m).exp();
        }
    }
    m + s.ln()
}

fn transpose(src: &[f64], dst: &mut [f64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            dst[j * n + i] = src[i * n + j];
        }
    }
}

impl EntropicMap {
    fn interp(&self, grid: &[f64], x: &[f64]) -> f64 {
        let n = self.n;
        let locate = |v: f64| -> (usize, f64) {
            let clamped = v.clamp(self.xs[0], self.xs[n - 1]);
            let raw = (clamped - self.xs[0]) / self.h;
            let cell = (raw.floor() as usize).min(n - 2);
            (cell, raw - cell as f64)
        };
        let (c1, r1) = locate(x[0]);
        let (c2, r2) = locate(x[1]);
        let v00 = grid[c1 * n + c2];
        let v01 = grid[c1 * n + c2 + 1];
        let v10 = grid[(c1 + 1) * n + c2];
        let v11 = grid[(c1 + 1) * n + c2 + 1];
        v00 * (1.0 - r1) * (1.0 - r2) + v01 * (1.0 - r1) * r2 + v10 * r1 * (1.0 - r2) + v11 * r1 * r2
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        self.interp(&self.phi_grid, x) - self.phi_origin
    }

    pub fn map_value(&self, x: &[f64]) -> [f64; 2] {
        [self.interp(&self.t1, x), self.interp(&self.t2, x)]
    }

    pub fn grad_phi(&self, x: &[f64]) -> Vec<f64> {
        let t = self.map_value(x);
        vec![t[0] - x[0], t[1] - x[1]]
    }

    /// Symmetrized central difference of the interpolated map, step = grid h.
    pub fn hess_phi(&self, x: &[f64]) -> SymMatrix {
        let h = self.h;
        let d = |comp: usize, dir: usize| -> f64 {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[dir] += h;
            xm[dir] -= h;
            (self.map_value(&xp)[comp] - self.map_value(&xm)[comp]) / (2.0 * h)
        };
        let mut m = SymMatrix::zeros(2);
        m.set(0, 0, d(0, 0) - 1.0);
        m.set(1, 1, d(1, 1) - 1.0);
        m.set(0, 1, 0.5 * (d(0, 1) + d(1, 0)));
        m
    }
}

/// Sup-error of the entropic map against a reference map over a uniform grid
/// on the box [−half, half]².
pub fn sup_map_error(
    entropic: &super::TransportMap,
    reference: &super::TransportMap,
    half: f64,
    per_axis: usize,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..per_axis {
        for j in 0..per_axis {
            let x = [
                -half + 2.0 * half * i as f64 / (per_axis - 1) as f64,
                -half + 2.0 * half * j as f64 / (per_axis - 1) as f64,
            ];
            let a = entropic.apply(&x)?;
            let b = reference.apply(&x)?;
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            worst = worst.max(d);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::make_shift;

    #[test]
    fn identity_density_small_grid() {
        // coarse, fast configuration: the entropic bias at eps 0.1 dominates
        let g = crate::density::make_product(vec![
            make_shift(&[0.0]).unwrap(),
            make_shift(&[0.0]).unwrap(),
        ])
        .unwrap();
        let cfg = EntropicConfig {
            eps: 0.1,
            grid: GridSpec { half_width: 5.5, n: 48 },
            marginal_tol: 1e-9,
            max_iters: 20_000,
            budget: None,
        };
        let t = solve_entropic_2d(&g, &cfg).unwrap();
        // self-transport bias shrinks toward the origin by about eps/2
        for &p in &[[1.0, 0.0], [0.0, -1.5], [1.0, 1.0]] {
            let y = t.apply(&p).unwrap();
            let err = ((y[0] - p[0]).powi(2) + (y[1] - p[1]).powi(2)).sqrt();
            assert!(err < 0.15, "map error {err} at {p:?}");
        }
        assert_eq!(t.solver_tag().as_str(), "entropic-2d");
        assert!(!t.has_third());
        assert!(t.third(&[0.0, 0.0], 0).is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        let g = crate::density::make_product(vec![
            make_shift(&[0.0]).unwrap(),
            make_shift(&[0.0]).unwrap(),
        ])
        .unwrap();
        let bad_eps = EntropicConfig::new(5e-4, GridSpec { half_width: 5.5, n: 48 });
        assert!(solve_entropic_2d(&g, &bad_eps).is_err());
        // box too small: truncated mass above 1e-6
        let bad_box = EntropicConfig::new(0.1, GridSpec { half_width: 2.5, n: 48 });
        assert!(solve_entropic_2d(&g, &bad_box).is_err());
    }
}
