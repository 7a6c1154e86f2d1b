//! The verification suite: one operation per identity or inequality relating
//! a density g, its transport map T = I + ∇φ to γ, and the information
//! functionals. Every operation returns a structured `CheckResult` with the
//! worst-case residual or slack against a declared tolerance.

use serde::Serialize;

use crate::density::{entropy, fisher_info, Density};
use crate::error::{Error, Result};
use crate::operators::{hs_norm, log_det2_of, m_functional, op_norm, SymMatrix, TestFunction};
use crate::quad::{pairwise_sum, QuadratureRule};
use crate::stencil::FDStencil;
use crate::transport::{ou_of_map, TransportMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    Identity,
    Inequality,
}

#[derive(Debug, Clone, Serialize)]
pub struct WorstSample {
    pub point: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Term {
    pub name: String,
    pub value: f64,
}

/// Result of a single identity/inequality check.
///
/// For identities, `residual_or_slack` is |lhs − rhs| (worst case over the
/// evaluation set) and passing means residual ≤ tolerance. For inequalities,
/// it is the slack lhs − rhs and passing means slack ≥ −tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub kind: CheckKind,
    pub lhs: f64,
    pub rhs: f64,
    pub residual_or_slack: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<WorstSample>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<Term>>,
}

impl CheckResult {
    pub fn identity(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let residual = (lhs - rhs).abs();
        CheckResult {
            name: name.to_string(),
            kind: CheckKind::Identity,
            lhs,
            rhs,
            residual_or_slack: residual,
            tolerance,
            pass: residual <= tolerance,
            samples: None,
            terms: None,
        }
    }

    pub fn inequality(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let slack = lhs - rhs;
        CheckResult {
            name: name.to_string(),
            kind: CheckKind::Inequality,
            lhs,
            rhs,
            residual_or_slack: slack,
            tolerance,
            pass: slack >= -tolerance,
            samples: None,
            terms: None,
        }
    }

    pub fn with_sample(mut self, point: &[f64], value: f64) -> Self {
        self.samples = Some(WorstSample { point: point.to_vec(), value });
        self
    }

    pub fn with_terms(mut self, terms: Vec<(&str, f64)>) -> Self {
        self.terms =
            Some(terms.into_iter().map(|(n, v)| Term { name: n.to_string(), value: v }).collect());
        self
    }

    fn and(mut self, ok: bool) -> Self {
        self.pass = self.pass && ok;
        self
    }

    pub fn csv_header() -> &'static str {
        "name,kind,lhs,rhs,residual_or_slack,tolerance,pass"
    }

    pub fn csv_row(&self) -> String {
        let kind = match self.kind {
            CheckKind::Identity => "identity",
            CheckKind::Inequality => "inequality",
        };
        format!(
            "{},{},{:e},{:e},{:e},{:e},{}",
            self.name, kind, self.lhs, self.rhs, self.residual_or_slack, self.tolerance, self.pass
        )
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("check result serialization")
    }
}

/// Quadrature sum with fallible integrands (map evaluations may fail).
fn weighted_sum(
    rule: &QuadratureRule,
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<f64> {
    let mut terms = Vec::with_capacity(rule.len());
    for (node, &w) in rule.nodes().iter().zip(rule.weights()) {
        let v = f(node)?;
        if !v.is_finite() {
            return Err(Error::eval(format!("non-finite integrand value {v} at node {node:?}")));
        }
        terms.push(w * v);
    }
    Ok(pairwise_sum(&terms))
}

/// 41 evaluation points spanning [−4, 4]: along the axis in 1D, cycling
/// through the coordinate axes and the main diagonal in higher dimension.
pub fn report_grid(dim: usize) -> Vec<Vec<f64>> {
    let count = 41;
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..dim {
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        dirs.push(e);
    }
    if dim > 1 {
        let s = 1.0 / (dim as f64).sqrt();
        dirs.push(vec![s; dim]);
    }
    (0..count)
        .map(|k| {
            let t = -4.0 + 8.0 * k as f64 / (count - 1) as f64;
            let dir = &dirs[k % dirs.len()];
            dir.iter().map(|d| d * t).collect()
        })
        .collect()
}

/// Change-of-variables residual of
/// g = det₂(I + D²φ) · exp(Lφ − ½|∇φ|²), maximized over the points.
pub fn check_cov_formula(
    g: &Density,
    map: &TransportMap,
    points: &[Vec<f64>],
    tolerance: f64,
) -> Result<CheckResult> {
    let mut worst = (0.0f64, 0usize, 0.0, 0.0);
    let mut worst_rel = 0.0f64;
    for (k, x) in points.iter().enumerate() {
        let gv = g.value(x);
        let k_phi = map.hess_phi(x)?;
        let d2 = crate::operators::det2(&k_phi);
        let grad = map.grad_phi(x)?;
        let lphi = ou_of_map(map, x)?;
        let rhs = d2 * (lphi - 0.5 * grad.iter().map(|v| v * v).sum::<f64>()).exp();
        let resid = (gv - rhs).abs();
        if resid >= worst.0 {
            worst = (resid, k, gv, rhs);
            worst_rel = resid / gv.max(1e-300);
        }
    }
    let (resid, k, lhs, rhs) = worst;
    let mut out = CheckResult::identity("cov_formula", lhs, rhs, tolerance);
    out.residual_or_slack = resid;
    out.pass = resid <= tolerance;
    Ok(out
        .with_sample(&points[k], resid)
        .with_terms(vec![("max_relative_residual", worst_rel)]))
}

/// Inverse-map form: g(x + ∇ψ) det₂(I + D²ψ) exp(Lψ − ½|∇ψ|²) = 1 on γ-points.
pub fn check_inverse_cov_formula(
    g: &Density,
    inverse_map: &TransportMap,
    points: &[Vec<f64>],
    tolerance: f64,
) -> Result<CheckResult> {
    let mut worst = (0.0f64, 0usize, 1.0);
    for (k, x) in points.iter().enumerate() {
        let s = inverse_map.apply(x)?;
        let k_psi = inverse_map.hess_phi(x)?;
        let d2 = crate::operators::det2(&k_psi);
        let grad = inverse_map.grad_phi(x)?;
        let lpsi = ou_of_map(inverse_map, x)?;
        let value = g.value(&s) * d2 * (lpsi - 0.5 * grad.iter().map(|v| v * v).sum::<f64>()).exp();
        let resid = (value - 1.0).abs();
        if resid >= worst.0 {
            worst = (resid, k, value);
        }
    }
    let (resid, k, value) = worst;
    let mut out = CheckResult::identity("inverse_cov_formula", value, 1.0, tolerance);
    out.residual_or_slack = resid;
    out.pass = resid <= tolerance;
    Ok(out.with_sample(&points[k], resid))
}

/// Tr[(B⁻¹ C)²] for symmetric B (given as its inverse) and symmetric C.
fn trace_sq(inv_b: &SymMatrix, c: &SymMatrix) -> f64 {
    let d = inv_b.dim();
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut v = 0.0;
            for l in 0..d {
                v += inv_b.get(i, l) * c.get(l, j);
            }
            m[i * d + j] = v;
        }
    }
    let mut tr = 0.0;
    for i in 0..d {
        for j in 0..d {
            tr += m[i * d + j] * m[j * d + i];
        }
    }
    tr
}

/// Four-term decomposition of the Fisher information:
/// I_γ g = 2 Ent_γ g − 2∫log det₂(D²Φ) g dγ + ∫‖D²Φ−I‖²_HS g dγ
///        + Σᵢ ∫ Tr[(D²Φ)⁻¹(D²Φ)_{x_i}]² g dγ,
/// together with the separate majorization of each right-hand term by I_γ g.
pub fn check_identity_2_2(
    g: &Density,
    map: &TransportMap,
    rule: &QuadratureRule,
    third_fd: Option<&FDStencil>,
    tolerance: f64,
) -> Result<CheckResult> {
    let fisher = fisher_info(g, rule)?;
    let two_ent = 2.0 * entropy(g, rule)?;
    let neg2_logdet = weighted_sum(rule, |x| {
        let b = map.hess_potential(x)?;
        let ld = log_det2_of(&b).ok_or_else(|| {
            Error::eval(format!("D²Φ not positive at {x:?}; det₂ degenerate"))
        })?;
        Ok(-2.0 * ld * g.value(x))
    })?;
    let hs_term = weighted_sum(rule, |x| {
        let dphi = map.hess_phi(x)?;
        Ok(hs_norm(&dphi).powi(2) * g.value(x))
    })?;
    let dim = g.dim();
    let third_term = weighted_sum(rule, |x| {
        let inv = map.hess_potential(x)?.inv_pd()?;
        let mut acc = 0.0;
        for i in 0..dim {
            let t = match third_fd {
                Some(st) => map.third_fd(x, i, st)?,
                None => map.third(x, i)?,
            };
            acc += trace_sq(&inv, &t);
        }
        Ok(acc * g.value(x))
    })?;
    let rhs = two_ent + neg2_logdet + hs_term + third_term;
    // every right-hand term is nonnegative and separately bounded by I_γ g
    let bound_tol = tolerance.max(1e-10);
    let terms_ok = [two_ent, neg2_logdet, hs_term, third_term]
        .iter()
        .all(|&t| t >= -bound_tol && t <= fisher + bound_tol);
    Ok(CheckResult::identity("identity_2_2", fisher, rhs, tolerance)
        .with_terms(vec![
            ("two_entropy", two_ent),
            ("neg2_log_det2", neg2_logdet),
            ("hs_deviation", hs_term),
            ("third_derivative", third_term),
        ])
        .and(terms_ok))
}

/// Ent_γ g ≥ ½ ∫ |∇φ|² g dγ.
pub fn check_talagrand(
    g: &Density,
    map: &TransportMap,
    rule: &QuadratureRule,
    tolerance: f64,
) -> Result<CheckResult> {
    let ent = entropy(g, rule)?;
    let cost = weighted_sum(rule, |x| {
        let grad = map.grad_phi(x)?;
        Ok(0.5 * grad.iter().map(|v| v * v).sum::<f64>() * g.value(x))
    })?;
    Ok(CheckResult::inequality("talagrand", ent, cost, tolerance))
}

/// Relative-entropy transport inequality between two densities:
/// Ent_{g·γ}(f/g) ≥ ½∫|∇Φ_f − ∇Φ_g|² f dγ
///                + ∫(Tr[D²Φ_g (D²Φ_f)⁻¹] − d − log det[D²Φ_g (D²Φ_f)⁻¹]) f dγ.
/// The trace-log integrand is itself pointwise nonnegative.
pub fn check_entropy_transport(
    f: &Density,
    g: &Density,
    map_f: &TransportMap,
    map_g: &TransportMap,
    rule: &QuadratureRule,
    tolerance: f64,
) -> Result<CheckResult> {
    if f.dim() != g.dim() {
        return Err(Error::invalid("densities must share a dimension".to_string()));
    }
    let d = f.dim() as f64;
    let rel_ent = weighted_sum(rule, |x| {
        let fv = f.value(x);
        let gv = g.value(x);
        Ok(fv * (fv.max(1e-300) / gv.max(1e-300)).ln())
    })?;
    let transport = weighted_sum(rule, |x| {
        let a = map_f.grad_phi(x)?;
        let b = map_g.grad_phi(x)?;
        let d2: f64 = a.iter().zip(&b).map(|(u, v)| (u - v) * (u - v)).sum();
        Ok(0.5 * d2 * f.value(x))
    })?;
    let mut min_integrand = f64::INFINITY;
    let tracelog = weighted_sum(rule, |x| {
        let inv_f = map_f.hess_potential(x)?.inv_pd()?;
        let bg = map_g.hess_potential(x)?;
        let mut tr = 0.0;
        for i in 0..f.dim() {
            for l in 0..f.dim() {
                tr += bg.get(i, l) * inv_f.get(l, i);
            }
        }
        let logdet = log_det2_like_det(&bg)? - log_det2_like_det(&map_f.hess_potential(x)?)?;
        let integrand = tr - d - logdet;
        min_integrand = min_integrand.min(integrand);
        Ok(integrand * f.value(x))
    })?;
    let ok = min_integrand >= -1e-10;
    Ok(
        CheckResult::inequality("entropy_transport", rel_ent, transport + tracelog, tolerance)
            .with_terms(vec![
                ("transport_term", transport),
                ("trace_log_term", tracelog),
                ("min_trace_log_integrand", min_integrand),
            ])
            .and(ok),
    )
}

fn log_det2_like_det(b: &SymMatrix) -> Result<f64> {
    let mut acc = 0.0;
    for &l in &b.eigen().values {
        if l <= 0.0 {
            return Err(Error::eval(format!("matrix not positive definite (eigenvalue {l:e})")));
        }
        acc += l.ln();
    }
    Ok(acc)
}

/// Shift inequality for μ = e^{−V} dx with V = −log g + |x|²/2 + const:
/// ∫(V(x+e) − V(x)) dμ ≥ ½∫|∇Φ(x+e) − ∇Φ(x)|² dμ + ∫(trace-log) dμ.
pub fn check_shift_inequality(
    g: &Density,
    e: &[f64],
    map: &TransportMap,
    rule: &QuadratureRule,
    tolerance: f64,
) -> Result<CheckResult> {
    if e.len() != g.dim() {
        return Err(Error::invalid("shift vector dimension mismatch".to_string()));
    }
    let e_norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    if e_norm > 2.0 {
        return Err(Error::invalid(format!("|e| = {e_norm} exceeds 2")));
    }
    let ld = g.log_density();
    let d = g.dim() as f64;
    let mut shifted = vec![0.0; g.dim()];
    let lhs = weighted_sum(rule, |x| {
        for i in 0..x.len() {
            shifted[i] = x[i] + e[i];
        }
        // V(x+e) − V(x) = v(x+e) − v(x) + ⟨e, x⟩ + |e|²/2
        let dv = ld.v(&shifted) - ld.v(x);
        let lin: f64 = e.iter().zip(x).map(|(ei, xi)| ei * xi).sum();
        Ok((dv + lin + 0.5 * e_norm * e_norm) * g.value(x))
    })?;
    let transport = weighted_sum(rule, |x| {
        for i in 0..x.len() {
            shifted[i] = x[i] + e[i];
        }
        let a = map.apply(&shifted)?;
        let b = map.apply(x)?;
        let d2: f64 = a.iter().zip(&b).map(|(u, v)| (u - v) * (u - v)).sum();
        Ok(0.5 * d2 * g.value(x))
    })?;
    let tracelog = weighted_sum(rule, |x| {
        for i in 0..x.len() {
            shifted[i] = x[i] + e[i];
        }
        let b_shift = map.hess_potential(&shifted)?;
        let inv = map.hess_potential(x)?.inv_pd()?;
        let mut tr = 0.0;
        for i in 0..x.len() {
            for l in 0..x.len() {
                tr += b_shift.get(i, l) * inv.get(l, i);
            }
        }
        let logdet = log_det2_like_det(&b_shift)? - log_det2_like_det(&map.hess_potential(x)?)?;
        Ok((tr - d - logdet) * g.value(x))
    })?;
    Ok(CheckResult::inequality("shift_inequality", lhs, transport + tracelog, tolerance)
        .with_terms(vec![("transport_term", transport), ("trace_log_term", tracelog)]))
}

/// Bundle: I_γ g ≥ ∫‖D²Φ − I‖²_HS g dγ, and per coordinate
/// ∫(x_i − g_{x_i}/g)² dμ ≥ ∫|D²Φ e_i|² dμ. The plus-sign variant of the
/// logarithmic derivative is reported alongside for comparison.
pub fn check_second_deriv_bounds(
    g: &Density,
    map: &TransportMap,
    rule: &QuadratureRule,
    tolerance: f64,
) -> Result<CheckResult> {
    let fisher = fisher_info(g, rule)?;
    let hs_term = weighted_sum(rule, |x| {
        Ok(hs_norm(&map.hess_phi(x)?).powi(2) * g.value(x))
    })?;
    let mut terms = vec![
        ("fisher", fisher),
        ("hs_deviation", hs_term),
    ];
    let mut min_slack = fisher - hs_term;
    let mut worst = ("p210", fisher, hs_term);
    for i in 0..g.dim() {
        let lhs_minus = weighted_sum(rule, |x| {
            let gv = g.value(x);
            let li = x[i] - g.grad(x)[i] / gv;
            Ok(li * li * gv)
        })?;
        let lhs_plus = weighted_sum(rule, |x| {
            let gv = g.value(x);
            let li = x[i] + g.grad(x)[i] / gv;
            Ok(li * li * gv)
        })?;
        let rhs_col = weighted_sum(rule, |x| {
            let b = map.hess_potential(x)?;
            let col: f64 = (0..g.dim()).map(|j| b.get(j, i) * b.get(j, i)).sum();
            Ok(col * g.value(x))
        })?;
        if lhs_minus - rhs_col < min_slack {
            min_slack = lhs_minus - rhs_col;
            worst = ("column", lhs_minus, rhs_col);
        }
        terms.push(("column_lhs_minus", lhs_minus));
        terms.push(("column_lhs_plus", lhs_plus));
        terms.push(("column_rhs", rhs_col));
    }
    let (_, lhs, rhs) = worst;
    let mut out = CheckResult::inequality("second_deriv_bounds", lhs, rhs, tolerance);
    out.residual_or_slack = min_slack;
    out.pass = min_slack >= -tolerance;
    Ok(out.with_terms(terms))
}

/// Bundle for the moment bounds: the diagonal 2p-moment bound, the
/// operator-norm bound ∫‖D²Φ‖^{2p} g dγ ≤ ∫ M(I+D²v)^p g dγ, and the sup-form
/// ‖D²Φ(x)‖² ≤ sup M(I+D²v) at the quadrature nodes.
pub fn check_moment_bounds(
    g: &Density,
    map: &TransportMap,
    p: f64,
    rule: &QuadratureRule,
    tolerance: f64,
) -> Result<CheckResult> {
    if p < 1.0 {
        return Err(Error::invalid(format!("moment exponent p = {p} must be ≥ 1")));
    }
    let ld = g.log_density();
    let m_at = |x: &[f64]| -> f64 {
        let ivv = SymMatrix::identity(g.dim()).add(&ld.hess_v(x));
        m_functional(&ivv).max(0.0)
    };

    // diagonal bound, minus convention (plus variant reported)
    let mut min_slack = f64::INFINITY;
    let mut worst = (0.0, 0.0);
    let mut terms: Vec<(&str, f64)> = Vec::new();
    let factor = (0.5 * (p + 1.0)).powf(p);
    for i in 0..g.dim() {
        let lhs_diag = weighted_sum(rule, |x| {
            let b = map.hess_potential(x)?;
            Ok(b.get(i, i).abs().powf(2.0 * p) * g.value(x))
        })?;
        let bound_minus = factor
            * weighted_sum(rule, |x| {
                let gv = g.value(x);
                Ok((x[i] - g.grad(x)[i] / gv).abs().powf(2.0 * p) * gv)
            })?;
        let bound_plus = factor
            * weighted_sum(rule, |x| {
                let gv = g.value(x);
                Ok((x[i] + g.grad(x)[i] / gv).abs().powf(2.0 * p) * gv)
            })?;
        if bound_minus - lhs_diag < min_slack {
            min_slack = bound_minus - lhs_diag;
            worst = (bound_minus, lhs_diag);
        }
        terms.push(("diag_bound_minus", bound_minus));
        terms.push(("diag_bound_plus", bound_plus));
        terms.push(("diag_moment", lhs_diag));
    }

    // operator-norm moment bound
    let lhs_op = weighted_sum(rule, |x| {
        Ok(op_norm(&map.hess_potential(x)?).powf(2.0 * p) * g.value(x))
    })?;
    let rhs_op = weighted_sum(rule, |x| Ok(m_at(x).powf(p) * g.value(x)))?;
    if rhs_op - lhs_op < min_slack {
        min_slack = rhs_op - lhs_op;
        worst = (rhs_op, lhs_op);
    }
    terms.push(("op_moment", lhs_op));
    terms.push(("op_moment_bound", rhs_op));

    // sup bound at the nodes
    let mut sup_m = 0.0f64;
    for node in rule.nodes() {
        sup_m = sup_m.max(m_at(node));
    }
    let mut max_norm2 = 0.0f64;
    for node in rule.nodes() {
        max_norm2 = max_norm2.max(op_norm(&map.hess_potential(node)?).powi(2));
    }
    if sup_m - max_norm2 < min_slack {
        min_slack = sup_m - max_norm2;
        worst = (sup_m, max_norm2);
    }
    terms.push(("sup_m", sup_m));
    terms.push(("sup_hess_norm_sq", max_norm2));

    let mut out = CheckResult::inequality("moment_bounds", worst.0, worst.1, tolerance);
    out.residual_or_slack = min_slack;
    out.pass = min_slack >= -tolerance;
    Ok(out.with_terms(terms))
}

/// Third-derivative integrability bound, p ∈ (1, 2]:
/// ∫(Σᵢ‖(D²Φ)_{x_i}‖²_HS)^{p/2} g dγ
///   ≤ (∫ M(I+D²v)^{p/(2−p)} g dγ)^{(2−p)/2} · (I_γ g)^{p/2},
/// with the L^∞ form of the first factor at p = 2.
pub fn check_third_deriv_bound(
    g: &Density,
    map: &TransportMap,
    p: f64,
    rule: &QuadratureRule,
    third_fd: Option<&FDStencil>,
    tolerance: f64,
) -> Result<CheckResult> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::invalid(format!("exponent p = {p} outside (1, 2]")));
    }
    let fisher = fisher_info(g, rule)?;
    let ld = g.log_density();
    let m_at = |x: &[f64]| -> f64 {
        let ivv = SymMatrix::identity(g.dim()).add(&ld.hess_v(x));
        m_functional(&ivv).max(0.0)
    };
    let lhs = weighted_sum(rule, |x| {
        let mut acc = 0.0;
        for i in 0..g.dim() {
            let t = match third_fd {
                Some(st) => map.third_fd(x, i, st)?,
                None => map.third(x, i)?,
            };
            acc += hs_norm(&t).powi(2);
        }
        Ok(acc.powf(0.5 * p) * g.value(x))
    })?;
    let rhs = if p < 2.0 {
        let r = p / (2.0 - p);
        let mterm = weighted_sum(rule, |x| Ok(m_at(x).powf(r) * g.value(x)))?;
        mterm.powf(0.5 * (2.0 - p)) * fisher.powf(0.5 * p)
    } else {
        let mut sup_m = 0.0f64;
        for node in rule.nodes() {
            sup_m = sup_m.max(m_at(node));
        }
        sup_m * fisher
    };
    Ok(CheckResult::inequality("third_deriv_bound", rhs, lhs, tolerance)
        .with_terms(vec![("third_integral", lhs), ("bound", rhs), ("p", p)]))
}

/// Duality relation defining Lφ:
/// ∫ Lφ ξ g dγ = −∫⟨∇φ, ∇ξ⟩ g dγ − ∫⟨∇g, ∇φ⟩ ξ dγ, over a test-function set.
pub fn check_l_duality(
    g: &Density,
    map: &TransportMap,
    xi_set: &[Box<dyn TestFunction>],
    rule: &QuadratureRule,
    tolerance: f64,
) -> Result<CheckResult> {
    let mut worst = (0.0f64, 0.0, 0.0);
    for xi in xi_set {
        let lhs = weighted_sum(rule, |x| Ok(ou_of_map(map, x)? * xi.value(x) * g.value(x)))?;
        let rhs = weighted_sum(rule, |x| {
            let gphi = map.grad_phi(x)?;
            let gxi = xi.grad(x);
            let gg = g.grad(x);
            let a: f64 = gphi.iter().zip(&gxi).map(|(u, v)| u * v).sum();
            let b: f64 = gg.iter().zip(&gphi).map(|(u, v)| u * v).sum();
            Ok(-a * g.value(x) - b * xi.value(x))
        })?;
        if (lhs - rhs).abs() >= worst.0 {
            worst = ((lhs - rhs).abs(), lhs, rhs);
        }
    }
    let mut out = CheckResult::identity("L_duality", worst.1, worst.2, tolerance);
    out.residual_or_slack = worst.0;
    out.pass = worst.0 <= tolerance;
    Ok(out)
}

/// Weighted bound ∫(Lφ)²/(1+|∇φ|²) g dγ ≤ 16·I_γ g, with the sharper constant
/// 4I + 2∫|∇φ|² g dγ + 10∫‖D²φ‖²_HS g dγ reported.
pub fn check_l_weighted_bound(
    g: &Density,
    map: &TransportMap,
    rule: &QuadratureRule,
    tolerance: f64,
) -> Result<CheckResult> {
    let fisher = fisher_info(g, rule)?;
    let weighted = weighted_sum(rule, |x| {
        let l = ou_of_map(map, x)?;
        let grad = map.grad_phi(x)?;
        let sq: f64 = grad.iter().map(|v| v * v).sum();
        Ok(l * l / (1.0 + sq) * g.value(x))
    })?;
    let grad_term = weighted_sum(rule, |x| {
        let grad = map.grad_phi(x)?;
        Ok(grad.iter().map(|v| v * v).sum::<f64>() * g.value(x))
    })?;
    let hess_term = weighted_sum(rule, |x| {
        Ok(hs_norm(&map.hess_phi(x)?).powi(2) * g.value(x))
    })?;
    let sharper = 4.0 * fisher + 2.0 * grad_term + 10.0 * hess_term;
    Ok(CheckResult::inequality("L_weighted_bound", 16.0 * fisher, weighted, tolerance)
        .with_terms(vec![("weighted_integral", weighted), ("sharper_m", sharper)]))
}

/// The cylindrical test functions {1, x₁, x₁², x₁x₂} (x₁³ replaces the cross
/// term in 1D) multiplied by a compactly supported bump on |x| ≤ 6.
pub fn standard_test_functions(dim: usize) -> Vec<Box<dyn TestFunction>> {
    let polys: Vec<Poly> = if dim >= 2 {
        vec![Poly::One, Poly::X1, Poly::X1Sq, Poly::X1X2]
    } else {
        vec![Poly::One, Poly::X1, Poly::X1Sq, Poly::X1Cube]
    };
    polys.into_iter().map(|p| Box::new(BumpPoly { poly: p }) as Box<dyn TestFunction>).collect()
}

#[derive(Clone, Copy)]
enum Poly {
    One,
    X1,
    X1Sq,
    X1X2,
    X1Cube,
}

/// poly(x) · (1 − |x|²/36)¹² on |x| < 6, zero outside. The twelfth power
/// keeps the boundary contact smooth enough that Hermite quadrature of the
/// duality integrals resolves the cut below 1e-8 at order 64.
struct BumpPoly {
    poly: Poly,
}

impl BumpPoly {
    fn bump(x: &[f64]) -> (f64, f64) {
        let s: f64 = x.iter().map(|v| v * v).sum::<f64>() / 36.0;
        if s >= 1.0 {
            return (0.0, 0.0);
        }
        let u = 1.0 - s;
        // value and d(bump)/ds
        (u.powi(12), -12.0 * u.powi(11))
    }

    fn poly_value(&self, x: &[f64]) -> f64 {
        match self.poly {
            Poly::One => 1.0,
            Poly::X1 => x[0],
            Poly::X1Sq => x[0] * x[0],
            Poly::X1X2 => x[0] * x[1],
            Poly::X1Cube => x[0] * x[0] * x[0],
        }
    }

    fn poly_grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        match self.poly {
            Poly::One => {}
            Poly::X1 => g[0] = 1.0,
            Poly::X1Sq => g[0] = 2.0 * x[0],
            Poly::X1X2 => {
                g[0] = x[1];
                g[1] = x[0];
            }
            Poly::X1Cube => g[0] = 3.0 * x[0] * x[0],
        }
        g
    }
}

impl TestFunction for BumpPoly {
    fn value(&self, x: &[f64]) -> f64 {
        let (b, _) = Self::bump(x);
        self.poly_value(x) * b
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let (b, dbds) = Self::bump(x);
        let pv = self.poly_value(x);
        let pg = self.poly_grad(x);
        // ∇bump = dbds · 2x/36
        pg.iter()
            .zip(x)
            .map(|(pgi, xi)| pgi * b + pv * dbds * xi / 18.0)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{make_mixture_1d, make_scaling, make_shift};
    use crate::quad::default_rule;
    use crate::transport::{invert, solve_1d};
    use approx::assert_abs_diff_eq;

    fn grid1() -> Vec<Vec<f64>> {
        report_grid(1)
    }

    #[test]
    fn cov_formula_closed_families() {
        let rulepts = grid1();
        let ones = make_shift(&[0.0]).unwrap();
        let t = solve_1d(&ones).unwrap();
        let r = check_cov_formula(&ones, &t, &rulepts, 1e-8).unwrap();
        assert!(r.pass, "{r:?}");

        let shift = make_shift(&[1.0]).unwrap();
        let t = solve_1d(&shift).unwrap();
        let r = check_cov_formula(&shift, &t, &rulepts, 1e-8).unwrap();
        assert!(r.pass, "residual {}", r.residual_or_slack);

        let scaling = make_scaling(&[2.0]).unwrap();
        let t = solve_1d(&scaling).unwrap();
        let r = check_cov_formula(&scaling, &t, &rulepts, 1e-8).unwrap();
        assert!(r.pass, "residual {}", r.residual_or_slack);
    }

    #[test]
    fn inverse_cov_formula_closed_families() {
        let pts = grid1();
        for g in [make_shift(&[1.0]).unwrap(), make_scaling(&[2.0]).unwrap()] {
            let t = solve_1d(&g).unwrap();
            let s = invert(&t, &g).unwrap();
            let r = check_inverse_cov_formula(&g, &s, &pts, 1e-8).unwrap();
            assert!(r.pass, "residual {}", r.residual_or_slack);
        }
    }

    #[test]
    fn identity_2_2_scaling_decomposition() {
        let g = make_scaling(&[2.0]).unwrap();
        let t = solve_1d(&g).unwrap();
        let rule = default_rule(1).unwrap();
        let r = check_identity_2_2(&g, &t, &rule, None, 1e-8).unwrap();
        assert!(r.pass, "{r:?}");
        assert_abs_diff_eq!(r.lhs, 2.25, epsilon = 1e-9);
        let terms = r.terms.unwrap();
        let get = |n: &str| terms.iter().find(|t| t.name == n).unwrap().value;
        assert_abs_diff_eq!(get("two_entropy"), 3.0 - 2.0 * 2f64.ln(), epsilon = 1e-8);
        assert_abs_diff_eq!(get("neg2_log_det2"), 2.0 * 2f64.ln() - 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(get("hs_deviation"), 0.25, epsilon = 1e-8);
        assert_abs_diff_eq!(get("third_derivative"), 0.0, epsilon = 1e-8);
    }

    #[test]
    fn identity_2_2_shift() {
        let g = make_shift(&[1.0]).unwrap();
        let t = solve_1d(&g).unwrap();
        let rule = default_rule(1).unwrap();
        let r = check_identity_2_2(&g, &t, &rule, None, 1e-8).unwrap();
        assert!(r.pass);
        assert_abs_diff_eq!(r.lhs, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.rhs, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn talagrand_examples() {
        let rule = default_rule(1).unwrap();
        let shift = make_shift(&[1.0]).unwrap();
        let t = solve_1d(&shift).unwrap();
        let r = check_talagrand(&shift, &t, &rule, 1e-8).unwrap();
        assert!(r.pass);
        assert_abs_diff_eq!(r.lhs, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(r.residual_or_slack, 0.0, epsilon = 1e-8);

        let sc = make_scaling(&[2.0]).unwrap();
        let t = solve_1d(&sc).unwrap();
        let r = check_talagrand(&sc, &t, &rule, 1e-8).unwrap();
        assert!(r.pass);
        assert_abs_diff_eq!(r.residual_or_slack, 1.0 - 2f64.ln(), epsilon = 1e-6);
    }

    #[test]
    fn l_duality_scaling() {
        let g = make_scaling(&[2.0]).unwrap();
        let t = solve_1d(&g).unwrap();
        let rule = default_rule(1).unwrap();
        let xs = standard_test_functions(1);
        let r = check_l_duality(&g, &t, &xs, &rule, 1e-8).unwrap();
        assert!(r.pass, "residual {}", r.residual_or_slack);
    }

    #[test]
    fn l_weighted_examples() {
        let rule = default_rule(1).unwrap();
        let shift = make_shift(&[1.0]).unwrap();
        let t = solve_1d(&shift).unwrap();
        let r = check_l_weighted_bound(&shift, &t, &rule, 1e-8).unwrap();
        assert!(r.pass);
        let weighted = r.terms.as_ref().unwrap()[0].value;
        assert_abs_diff_eq!(weighted, 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(r.lhs, 16.0, epsilon = 1e-7);
    }

    #[test]
    fn moment_bounds_scaling_equalities() {
        let g = make_scaling(&[2.0]).unwrap();
        let t = solve_1d(&g).unwrap();
        let rule = default_rule(1).unwrap();
        let r = check_moment_bounds(&g, &t, 1.0, &rule, 1e-8).unwrap();
        assert!(r.pass, "{r:?}");
        let terms = r.terms.unwrap();
        let get = |n: &str| terms.iter().find(|t| t.name == n).unwrap().value;
        assert_abs_diff_eq!(get("op_moment"), 0.25, epsilon = 1e-8);
        assert_abs_diff_eq!(get("op_moment_bound"), 0.25, epsilon = 1e-8);
        assert_abs_diff_eq!(get("sup_m"), 0.25, epsilon = 1e-8);
        assert_abs_diff_eq!(get("sup_hess_norm_sq"), 0.25, epsilon = 1e-8);
    }

    #[test]
    fn third_deriv_bound_mixture() {
        let g = make_mixture_1d(&[0.5, 0.5], &[-1.0, 1.0], &[1.0, 1.0]).unwrap();
        let t = solve_1d(&g).unwrap();
        let rule = default_rule(1).unwrap();
        for &p in &[1.5, 2.0] {
            let r = check_third_deriv_bound(&g, &t, p, &rule, None, 1e-5).unwrap();
            assert!(r.pass, "p={p}: {r:?}");
        }
        assert!(check_third_deriv_bound(&g, &t, 1.0, &rule, None, 1e-5).is_err());
        assert!(check_third_deriv_bound(&g, &t, 2.5, &rule, None, 1e-5).is_err());
    }

    #[test]
    fn shift_inequality_gaussian_equality() {
        // μ = N(0, 4), e = 1: both sides 1/8
        let g = make_scaling(&[2.0]).unwrap();
        let t = solve_1d(&g).unwrap();
        let rule = default_rule(1).unwrap();
        let r = check_shift_inequality(&g, &[1.0], &t, &rule, 1e-8).unwrap();
        assert!(r.pass);
        assert_abs_diff_eq!(r.lhs, 0.125, epsilon = 1e-8);
        assert_abs_diff_eq!(r.rhs, 0.125, epsilon = 1e-8);
        assert!(check_shift_inequality(&g, &[3.0], &t, &rule, 1e-8).is_err());
    }
}
