//! Conditional-expectation cascade g_n = E^n_γ g with per-level transports
//! φ_n, emulating the infinite-dimensional construction at finite dimension:
//! entropy/Fisher monotonicity along the cascade, the quantitative contraction
//! inequality between levels, the uniform weighted bound on Lφ_n, and the
//! Hessian convergence certificate (the top level is the target).
//!
//! Integrands of level n depend on the first n coordinates only, so every
//! integral against the top density equals the same integral against g_n on
//! R^n; the evaluators integrate on R^n for that reason.

use crate::density::{conditional_expectation, entropy, fisher_info, Density};
use crate::error::{Error, Result};
use crate::identities::CheckResult;
use crate::operators::{hs_norm, SymMatrix};
use crate::quad::{default_order, default_rule, hermite_rule, pairwise_sum};
use crate::transport::{solve_auto, TransportMap};

#[derive(Debug)]
pub struct LevelData {
    pub n: usize,
    pub density: Density,
    pub map: TransportMap,
    pub entropy: f64,
    pub fisher: f64,
    pub talagrand_slack: f64,
    pub p210_slack: f64,
    pub l_weighted: f64,
}

#[derive(Debug)]
pub struct TruncationStudy {
    pub base: Density,
    pub top_fisher: f64,
    pub levels: Vec<LevelData>,
}

/// Solves the cascade at the requested levels and populates the per-level
/// functionals. Levels must be strictly increasing and bounded by the base
/// dimension.
pub fn run_study(g: &Density, levels: &[usize]) -> Result<TruncationStudy> {
    if levels.is_empty() {
        return Err(Error::invalid("study requires at least one level".to_string()));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("levels must be strictly increasing".to_string()));
    }
    if *levels.last().unwrap() > g.dim() {
        return Err(Error::invalid(format!(
            "top level {} exceeds base dimension {}",
            levels.last().unwrap(),
            g.dim()
        )));
    }
    let top_fisher = fisher_auto(g)?;
    let mut data = Vec::with_capacity(levels.len());
    for &n in levels {
        let gn = conditional_expectation(g, n).map_err(|e| annotate(n, e))?;
        let mass = mass_auto(&gn).map_err(|e| annotate(n, e))?;
        if (mass - 1.0).abs() > 1e-8 {
            return Err(Error::eval(format!(
                "level {n}: conditional density integrates to {mass}, expected 1"
            )));
        }
        let ent = entropy_auto(&gn).map_err(|e| annotate(n, e))?;
        let fis = fisher_auto(&gn).map_err(|e| annotate(n, e))?;
        let map = solve_auto(&gn).map_err(|e| annotate(n, e))?;
        let (transport, p210_hs, l_weighted) =
            level_metrics(&gn, &map).map_err(|e| annotate(n, e))?;
        data.push(LevelData {
            n,
            density: gn,
            map,
            entropy: ent,
            fisher: fis,
            talagrand_slack: ent - 0.5 * transport,
            p210_slack: fis - p210_hs,
            l_weighted,
        });
    }
    Ok(TruncationStudy { base: g.clone(), top_fisher, levels: data })
}

fn annotate(level: usize, e: Error) -> Error {
    Error::solver(format!("level {level}: {e}"))
}

/// Entropy with product factorization when available (1D rules per factor),
/// tensor quadrature otherwise.
pub fn entropy_auto(g: &Density) -> Result<f64> {
    if let Some(factors) = g.factors_1d() {
        let rule = hermite_rule(64)?;
        let mut total = 0.0;
        for f in &factors {
            total += entropy(f, &rule)?;
        }
        return Ok(total);
    }
    entropy(g, &default_rule(g.dim())?)
}

pub fn fisher_auto(g: &Density) -> Result<f64> {
    if let Some(factors) = g.factors_1d() {
        let rule = hermite_rule(64)?;
        let mut total = 0.0;
        for f in &factors {
            total += fisher_info(f, &rule)?;
        }
        return Ok(total);
    }
    fisher_info(g, &default_rule(g.dim())?)
}

/// Map evaluation over a tensor grid: separable maps are tabulated per axis
/// (the expensive CDF solves happen once per node), coupled blocks evaluate
/// directly.
enum MapEval<'a> {
    Tables { t: Vec<Vec<f64>>, dt: Vec<Vec<f64>> },
    Direct(&'a TransportMap),
}

impl<'a> MapEval<'a> {
    fn build(map: &'a TransportMap, axis_nodes: &[f64]) -> Result<Self> {
        if let Some(blocks) = map.scalar_blocks() {
            let mut t = Vec::with_capacity(blocks.len());
            let mut dt = Vec::with_capacity(blocks.len());
            for b in blocks {
                let mut tv = Vec::with_capacity(axis_nodes.len());
                let mut dv = Vec::with_capacity(axis_nodes.len());
                for &u in axis_nodes {
                    tv.push(b.apply(&[u])?[0]);
                    dv.push(b.hess_phi(&[u])?.get(0, 0) + 1.0);
                }
                t.push(tv);
                dt.push(dv);
            }
            Ok(MapEval::Tables { t, dt })
        } else {
            Ok(MapEval::Direct(map))
        }
    }

    fn dim(&self) -> usize {
        match self {
            MapEval::Tables { t, .. } => t.len(),
            MapEval::Direct(m) => m.dim(),
        }
    }

    /// ∇φ at the tensor node given by coordinates x and per-axis indices idx.
    fn grad(&self, x: &[f64], idx: &[usize]) -> Result<Vec<f64>> {
        match self {
            MapEval::Tables { t, .. } => Ok((0..t.len())
                .map(|i| t[i][idx[i]] - x[i])
                .collect()),
            MapEval::Direct(m) => m.grad_phi(&x[..m.dim()]),
        }
    }

    fn laplacian(&self, x: &[f64], idx: &[usize]) -> Result<f64> {
        match self {
            MapEval::Tables { dt, .. } => {
                Ok((0..dt.len()).map(|i| dt[i][idx[i]] - 1.0).sum())
            }
            MapEval::Direct(m) => Ok(m.hess_phi(&x[..m.dim()])?.trace()),
        }
    }

    fn hess_hs_sq(&self, x: &[f64], idx: &[usize]) -> Result<f64> {
        match self {
            MapEval::Tables { dt, .. } => {
                Ok((0..dt.len()).map(|i| (dt[i][idx[i]] - 1.0).powi(2)).sum())
            }
            MapEval::Direct(m) => Ok(hs_norm(&m.hess_phi(&x[..m.dim()])?).powi(2)),
        }
    }
}

struct TensorGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    dim: usize,
}

impl TensorGrid {
    fn new(dim: usize) -> Result<Self> {
        let rule = hermite_rule(default_order(dim))?;
        Ok(TensorGrid { nodes: rule.nodes_1d(), weights: rule.weights().to_vec(), dim })
    }

    fn for_each(
        &self,
        mut f: impl FnMut(&[f64], &[usize], f64) -> Result<f64>,
    ) -> Result<f64> {
        let order = self.nodes.len();
        let count = order.pow(self.dim as u32);
        let mut idx = vec![0usize; self.dim];
        let mut x = vec![0.0; self.dim];
        let mut terms = Vec::with_capacity(count);
        for flat in 0..count {
            let mut rem = flat;
            let mut w = 1.0;
            for k in 0..self.dim {
                let i = rem % order;
                rem /= order;
                idx[k] = i;
                x[k] = self.nodes[i];
                w *= self.weights[i];
            }
            terms.push(f(&x, &idx, w)?);
        }
        Ok(pairwise_sum(&terms))
    }
}

/// (∫|∇φ|² g_n, ∫‖D²φ‖²_HS g_n, ∫(Lφ)²/(1+|∇φ|²) g_n) on R^n.
fn level_metrics(gn: &Density, map: &TransportMap) -> Result<(f64, f64, f64)> {
    let grid = TensorGrid::new(gn.dim())?;
    let eval = MapEval::build(map, &grid.nodes)?;
    let mut transport_terms = Vec::new();
    let mut hs_terms = Vec::new();
    let mut lw_terms = Vec::new();
    grid.for_each(|x, idx, w| {
        let gv = gn.value(x);
        let grad = eval.grad(x, idx)?;
        let gp2: f64 = grad.iter().map(|v| v * v).sum();
        let lap = eval.laplacian(x, idx)?;
        let lphi = lap - grad.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let hs2 = eval.hess_hs_sq(x, idx)?;
        transport_terms.push(w * gv * gp2);
        hs_terms.push(w * gv * hs2);
        lw_terms.push(w * gv * lphi * lphi / (1.0 + gp2));
        Ok(0.0)
    })?;
    Ok((
        pairwise_sum(&transport_terms),
        pairwise_sum(&hs_terms),
        pairwise_sum(&lw_terms),
    ))
}

fn level_index(study: &TruncationStudy, n: usize) -> Result<usize> {
    study
        .levels
        .iter()
        .position(|l| l.n == n)
        .ok_or_else(|| Error::invalid(format!("level {n} not part of the study")))
}

/// Quantitative contraction between levels m ≤ n:
/// Ent g_n − Ent g_m ≥ ½ ∫ |∇φ_n − ∇φ_m|² g dγ, with ∇φ_m extended by zero
/// beyond its first m coordinates.
pub fn check_contraction(
    study: &TruncationStudy,
    m: usize,
    n: usize,
    tolerance: f64,
) -> Result<CheckResult> {
    if m > n {
        return Err(Error::invalid(format!("contraction requires m ≤ n, got ({m}, {n})")));
    }
    let im = level_index(study, m)?;
    let in_ = level_index(study, n)?;
    let lm = &study.levels[im];
    let ln_ = &study.levels[in_];
    let grid = TensorGrid::new(ln_.n)?;
    let eval_n = MapEval::build(&ln_.map, &grid.nodes)?;
    let eval_m = MapEval::build(&lm.map, &grid.nodes)?;
    let dist = grid.for_each(|x, idx, w| {
        let gn = eval_n.grad(x, idx)?;
        let gm = eval_m.grad(&x[..eval_m.dim()], &idx[..eval_m.dim()])?;
        let mut d2 = 0.0;
        for i in 0..gn.len() {
            let mi = if i < gm.len() { gm[i] } else { 0.0 };
            d2 += (gn[i] - mi) * (gn[i] - mi);
        }
        Ok(w * ln_.density.value(x) * d2)
    })?;
    let name = format!("contraction_m{m}_n{n}");
    let lhs = ln_.entropy - lm.entropy;
    let rhs = 0.5 * dist;
    let mut out = CheckResult::inequality(&name, lhs, rhs, tolerance);
    out.name = name;
    Ok(out)
}

/// sup over levels of ∫(Lφ_n)²/(1+|∇φ_n|²) g dγ ≤ 16·I_γ g (top-level Fisher).
pub fn check_uniform_l_bound(study: &TruncationStudy, tolerance: f64) -> Result<CheckResult> {
    let worst = study
        .levels
        .iter()
        .map(|l| l.l_weighted)
        .fold(0.0f64, f64::max);
    let terms: Vec<(&str, f64)> =
        study.levels.iter().map(|l| ("level_weighted", l.l_weighted)).collect();
    Ok(CheckResult::inequality("uniform_L_bound", 16.0 * study.top_fisher, worst, tolerance)
        .with_terms(terms))
}

/// Pointwise Hessian convergence along the cascade: the HS distance to the
/// top-level Hessian is nonincreasing in n at every point and vanishes at the
/// top level (which is the comparison target).
pub fn check_d2_convergence(
    study: &TruncationStudy,
    points: &[Vec<f64>],
    tolerance: f64,
) -> Result<CheckResult> {
    if study.levels.len() < 3 {
        return Err(Error::invalid("d2 convergence requires at least 3 levels".to_string()));
    }
    let top = study.levels.last().unwrap();
    let dtop = top.n;
    let embed = |m: &TransportMap, x: &[f64]| -> Result<SymMatrix> {
        let h = m.hess_phi(&x[..m.dim()])?;
        let mut full = SymMatrix::zeros(dtop);
        for i in 0..m.dim() {
            for j in i..m.dim() {
                full.set(i, j, h.get(i, j));
            }
        }
        Ok(full)
    };
    let mut min_monotone_gap = f64::INFINITY;
    let mut max_final = 0.0f64;
    for p in points {
        if p.len() != dtop {
            return Err(Error::invalid(format!(
                "d2 convergence points must have dimension {dtop}"
            )));
        }
        let target = embed(&top.map, p)?;
        let dists: Vec<f64> = study
            .levels
            .iter()
            .map(|l| Ok(hs_norm(&embed(&l.map, p)?.sub(&target))))
            .collect::<Result<Vec<f64>>>()?;
        for wpair in dists.windows(2) {
            min_monotone_gap = min_monotone_gap.min(wpair[0] - wpair[1]);
        }
        max_final = max_final.max(*dists.last().unwrap());
    }
    let mut out = CheckResult::inequality("d2_convergence", min_monotone_gap, 0.0, tolerance);
    out.pass = out.pass && max_final <= tolerance.max(1e-9);
    Ok(out.with_terms(vec![("max_final_distance", max_final)]))
}

/// Entropy and Fisher monotonicity along the cascade, as slack checks.
pub fn check_monotone(study: &TruncationStudy, tolerance: f64) -> Vec<CheckResult> {
    let gap = |vals: &[f64]| -> f64 {
        vals.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    };
    let ents: Vec<f64> = study.levels.iter().map(|l| l.entropy).collect();
    let fis: Vec<f64> = study.levels.iter().map(|l| l.fisher).collect();
    let mk = |name: &str, vals: &[f64]| -> CheckResult {
        let g = if vals.len() >= 2 { gap(vals) } else { 0.0 };
        let mut r = CheckResult::inequality(name, g, 0.0, tolerance);
        r.lhs = g;
        r.rhs = 0.0;
        r
    };
    vec![mk("entropy_monotone", &ents), mk("fisher_monotone", &fis)]
}

/// Per-level CSV with all contraction slacks of each level against the levels
/// before it.
pub fn level_csv(study: &TruncationStudy, tolerance: f64) -> Result<String> {
    let mut out = String::from("n,entropy,fisher,talagrand_slack,p210_slack,L_weighted,contraction_slacks\n");
    for (k, l) in study.levels.iter().enumerate() {
        let mut slacks = Vec::new();
        for prev in &study.levels[..k] {
            let c = check_contraction(study, prev.n, l.n, tolerance)?;
            slacks.push(format!("{:e}", c.residual_or_slack));
        }
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{:e},{:e},{}\n",
            l.n,
            l.entropy,
            l.fisher,
            l.talagrand_slack,
            l.p210_slack,
            l.l_weighted,
            slacks.join(";")
        ));
    }
    Ok(out)
}
