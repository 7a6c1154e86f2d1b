use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use gma_core::operators::SymMatrix;
use gma_core::{make_gaussian_cov, make_mixture_1d, make_product, make_scaling, make_shift, Density};
use serde::Deserialize;

#[derive(Debug)]
pub enum CliError {
    /// Configuration and input problems: exit code 2.
    Config(String),
    /// Solver or evaluation failures at run time: exit code 3.
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "{m}"),
            CliError::Solver(m) => write!(f, "{m}"),
        }
    }
}

pub const SCHEMA_VERSION: u32 = 1;

pub const ALL_CHECKS: [&str; 11] = [
    "cov_formula",
    "inverse_cov_formula",
    "identity_2_2",
    "talagrand",
    "entropy_transport",
    "shift_inequality",
    "second_deriv_bounds",
    "moment_bounds",
    "third_deriv_bound",
    "L_duality",
    "L_weighted_bound",
];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub density: DensitySpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub quadrature_order: Option<usize>,
    #[serde(default)]
    pub checks: ChecksSpec,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Truncation levels; defaults to 1..=dim.
    #[serde(default)]
    pub levels: Option<Vec<usize>>,
    /// Companion density for the relative-entropy transport check.
    #[serde(default)]
    pub partner: Option<DensitySpec>,
    /// Shift vector for the shift inequality; defaults to e₁.
    #[serde(default)]
    pub shift_e: Option<Vec<f64>>,
    #[serde(default)]
    pub moment_p: Option<Vec<f64>>,
    #[serde(default)]
    pub third_p: Option<Vec<f64>>,
    /// Use finite-difference third derivatives in the decomposition checks.
    #[serde(default)]
    pub third_fd: bool,
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Deserialize, Clone)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    Shift { a: Vec<f64> },
    Scaling { sigmas: Vec<f64> },
    GaussianCov { sigma: Vec<Vec<f64>> },
    Mixture1d { weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64> },
    Product { factors: Vec<DensitySpec> },
}

#[derive(Debug, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_solver_kind")]
    pub kind: String,
    #[serde(default)]
    pub grid: Option<GridSpecConfig>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub budget: Option<f64>,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec { kind: default_solver_kind(), grid: None, eps: None, budget: None }
    }
}

fn default_solver_kind() -> String {
    "auto".to_string()
}

#[derive(Debug, Deserialize, Clone, Copy)]
#[serde(deny_unknown_fields)]
pub struct GridSpecConfig {
    pub l: f64,
    pub n: usize,
}

#[derive(Debug, Deserialize, Default, Clone)]
#[serde(untagged)]
pub enum ChecksSpec {
    #[default]
    All,
    Keyword(String),
    List(Vec<String>),
}

impl ChecksSpec {
    pub fn resolve(&self) -> Result<Vec<String>, CliError> {
        match self {
            ChecksSpec::All => Ok(ALL_CHECKS.iter().map(|s| s.to_string()).collect()),
            ChecksSpec::Keyword(k) if k == "all" => {
                Ok(ALL_CHECKS.iter().map(|s| s.to_string()).collect())
            }
            ChecksSpec::Keyword(k) => Err(CliError::Config(format!(
                "unknown checks keyword {k:?}; expected \"all\" or a list of check names"
            ))),
            ChecksSpec::List(names) => {
                for n in names {
                    if !ALL_CHECKS.contains(&n.as_str()) {
                        return Err(CliError::Config(format!(
                            "unknown check name {n:?}; known checks: {}",
                            ALL_CHECKS.join(", ")
                        )));
                    }
                }
                Ok(names.clone())
            }
        }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("config {} is invalid: {e}", path.display())))?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "config schema version {} unsupported (expected {SCHEMA_VERSION})",
            cfg.schema_version
        )));
    }
    Ok(cfg)
}

pub fn build_density(spec: &DensitySpec) -> Result<Density, CliError> {
    let to_cfg = |e: gma_core::Error| CliError::Config(e.to_string());
    match spec {
        DensitySpec::Shift { a } => make_shift(a).map_err(to_cfg),
        DensitySpec::Scaling { sigmas } => make_scaling(sigmas).map_err(to_cfg),
        DensitySpec::GaussianCov { sigma } => {
            let d = sigma.len();
            if d == 0 || sigma.iter().any(|row| row.len() != d) {
                return Err(CliError::Config("covariance must be square".to_string()));
            }
            let flat: Vec<f64> = sigma.iter().flatten().copied().collect();
            let m = SymMatrix::from_rows(d, &flat).map_err(to_cfg)?;
            make_gaussian_cov(&m).map_err(to_cfg)
        }
        DensitySpec::Mixture1d { weights, means, sds } => {
            make_mixture_1d(weights, means, sds).map_err(to_cfg)
        }
        DensitySpec::Product { factors } => {
            let parts: Result<Vec<Density>, CliError> =
                factors.iter().map(build_density).collect();
            make_product(parts?).map_err(to_cfg)
        }
    }
}

/// Table of per-check tolerances: the configured override, otherwise the
/// family default (1e-8 for linear-transport families, 1e-5 for
/// quadrature-backed ones), scaled by the CLI factor.
pub fn tolerance_for(
    name: &str,
    overrides: &BTreeMap<String, f64>,
    density: &Density,
    accuracy_class: f64,
    scale: f64,
) -> f64 {
    let base = overrides.get(name).copied().unwrap_or_else(|| {
        if density.is_linear_family() { 1e-8 } else { 1e-5 }
    });
    base.max(accuracy_class * 2.0).min(1.0) * scale
}
