//! Expert-fusion rules from the distributed GP literature, in Gaussian closed form.
//!
//! Each rule combines sub-model means `M_i` and variances `V_i` by precision
//! weighting. Results keep the mean coefficients so predictions stay linear in
//! the sub-model means.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::LayerOne;

/// Relative variance below which an expert is treated as exact.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;

/// Prediction method selector, shared by the CLI and the benchmark harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nested,
    Full,
    Poe,
    /// GPoE with differential-entropy weights.
    Gpoe1,
    /// GPoE with uniform weights `1/p`.
    Gpoe2,
    Bcm,
    Rbcm,
    Spv,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Nested,
        Method::Full,
        Method::Poe,
        Method::Gpoe1,
        Method::Gpoe2,
        Method::Bcm,
        Method::Rbcm,
        Method::Spv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Nested => "nested",
            Method::Full => "full",
            Method::Poe => "poe",
            Method::Gpoe1 => "gpoe1",
            Method::Gpoe2 => "gpoe2",
            Method::Bcm => "bcm",
            Method::Rbcm => "rbcm",
            Method::Spv => "spv",
        }
    }

    /// True for the rules implemented in this module.
    pub fn is_fusion(self) -> bool {
        !matches!(self, Method::Nested | Method::Full)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                let names: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
                Error::Config(format!("unknown method `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

/// GPoE weighting of the experts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GpoeWeighting {
    Uniform,
    DifferentialEntropy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub method: Method,
    pub mean: f64,
    pub variance: f64,
    /// `mean = coefficientsᵀ M`.
    pub coefficients: DVector<f64>,
    /// Per-expert exponents, for the weighted rules.
    pub beta: Option<DVector<f64>>,
    /// Precision was clamped, an exact expert short-circuited the rule, or all weights vanished.
    pub degenerate: bool,
}

fn check(means: &DVector<f64>, vars: &DVector<f64>, prior_var: f64) -> Result<()> {
    if means.is_empty() {
        return Err(Error::InvalidData("no experts to combine".into()));
    }
    if means.len() != vars.len() {
        return Err(Error::DimensionMismatch {
            context: "expert variances",
            expected: means.len(),
            found: vars.len(),
        });
    }
    if !(prior_var > 0.0) {
        return Err(Error::InvalidData(format!("prior variance must be positive, got {prior_var}")));
    }
    if let Some(i) = vars.iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::NonPositiveVariance { index: i });
    }
    Ok(())
}

fn exact_expert(method: Method, means: &DVector<f64>, vars: &DVector<f64>, prior_var: f64) -> Option<BaselineResult> {
    let k = vars.iter().position(|&v| v <= DEGENERATE_VARIANCE * prior_var)?;
    let mut coefficients = DVector::zeros(means.len());
    coefficients[k] = 1.0;
    Some(BaselineResult {
        method,
        mean: means[k],
        variance: vars[k].max(0.0),
        coefficients,
        beta: None,
        degenerate: true,
    })
}

// τ = Σ β_i / V_i + correction, mean = Σ β_i M_i / V_i / τ
fn precision_weighted(
    method: Method,
    means: &DVector<f64>,
    vars: &DVector<f64>,
    beta: &DVector<f64>,
    correction: f64,
    prior_var: f64,
) -> BaselineResult {
    let raw = beta.component_div(vars);
    let mut tau = raw.sum() + correction;
    let floor = DEGENERATE_VARIANCE / prior_var;
    let degenerate = !(tau > floor);
    if degenerate {
        tau = floor;
    }
    let coefficients = raw / tau;
    BaselineResult {
        method,
        mean: coefficients.dot(means),
        variance: 1.0 / tau,
        coefficients,
        beta: Some(beta.clone()),
        degenerate,
    }
}

fn entropy_weights(vars: &DVector<f64>, prior_var: f64) -> DVector<f64> {
    vars.map(|v| (0.5 * (prior_var.ln() - v.ln())).max(0.0))
}

/// Product of experts: `τ = Σ 1/V_i`.
pub fn poe(means: &DVector<f64>, vars: &DVector<f64>, prior_var: f64) -> Result<BaselineResult> {
    check(means, vars, prior_var)?;
    if let Some(r) = exact_expert(Method::Poe, means, vars, prior_var) {
        return Ok(r);
    }
    let beta = DVector::from_element(means.len(), 1.0);
    let mut r = precision_weighted(Method::Poe, means, vars, &beta, 0.0, prior_var);
    r.beta = None;
    Ok(r)
}

/// Generalized product of experts: `τ = Σ β_i/V_i`. Returns the prior when every weight is zero.
pub fn gpoe(means: &DVector<f64>, vars: &DVector<f64>, prior_var: f64, weighting: GpoeWeighting) -> Result<BaselineResult> {
    check(means, vars, prior_var)?;
    let method = match weighting {
        GpoeWeighting::Uniform => Method::Gpoe2,
        GpoeWeighting::DifferentialEntropy => Method::Gpoe1,
    };
    if let Some(r) = exact_expert(method, means, vars, prior_var) {
        return Ok(r);
    }
    let p = means.len();
    let beta = match weighting {
        GpoeWeighting::Uniform => DVector::from_element(p, 1.0 / p as f64),
        GpoeWeighting::DifferentialEntropy => entropy_weights(vars, prior_var),
    };
    if beta.iter().all(|&b| b == 0.0) {
        return Ok(BaselineResult {
            method,
            mean: 0.0,
            variance: prior_var,
            coefficients: DVector::zeros(p),
            beta: Some(beta),
            degenerate: true,
        });
    }
    Ok(precision_weighted(method, means, vars, &beta, 0.0, prior_var))
}

/// Bayesian committee machine: `τ = Σ 1/V_i − (p−1)/prior`.
pub fn bcm(means: &DVector<f64>, vars: &DVector<f64>, prior_var: f64) -> Result<BaselineResult> {
    check(means, vars, prior_var)?;
    if let Some(r) = exact_expert(Method::Bcm, means, vars, prior_var) {
        return Ok(r);
    }
    let p = means.len() as f64;
    let beta = DVector::from_element(means.len(), 1.0);
    let mut r = precision_weighted(Method::Bcm, means, vars, &beta, -(p - 1.0) / prior_var, prior_var);
    r.beta = None;
    Ok(r)
}

/// Robust BCM with differential-entropy weights.
pub fn rbcm(means: &DVector<f64>, vars: &DVector<f64>, prior_var: f64) -> Result<BaselineResult> {
    check(means, vars, prior_var)?;
    rbcm_with_weights(means, vars, prior_var, &entropy_weights(vars, prior_var))
}

/// Robust BCM with given weights: `τ = Σ β_i/V_i + (1 − Σ β_i)/prior`.
pub fn rbcm_with_weights(
    means: &DVector<f64>,
    vars: &DVector<f64>,
    prior_var: f64,
    beta: &DVector<f64>,
) -> Result<BaselineResult> {
    check(means, vars, prior_var)?;
    if beta.len() != means.len() {
        return Err(Error::DimensionMismatch {
            context: "rbcm weights",
            expected: means.len(),
            found: beta.len(),
        });
    }
    if let Some(r) = exact_expert(Method::Rbcm, means, vars, prior_var) {
        return Ok(r);
    }
    Ok(precision_weighted(Method::Rbcm, means, vars, beta, (1.0 - beta.sum()) / prior_var, prior_var))
}

/// Smallest prediction variance; ties go to the lowest index.
pub fn spv(means: &DVector<f64>, vars: &DVector<f64>) -> Result<BaselineResult> {
    if means.is_empty() || means.len() != vars.len() {
        return Err(Error::DimensionMismatch {
            context: "expert variances",
            expected: means.len(),
            found: vars.len(),
        });
    }
    let mut k = 0;
    for i in 1..vars.len() {
        if vars[i] < vars[k] {
            k = i;
        }
    }
    let mut coefficients = DVector::zeros(means.len());
    coefficients[k] = 1.0;
    Ok(BaselineResult {
        method: Method::Spv,
        mean: means[k],
        variance: vars[k],
        coefficients,
        beta: None,
        degenerate: false,
    })
}

/// Applies a fusion rule to layer-one sub-model predictions, using `k(x,x)` as prior variance.
pub fn fuse(method: Method, l1: &LayerOne) -> Result<BaselineResult> {
    let vars = l1.variances();
    let (m, prior) = (&l1.means, l1.kxx);
    match method {
        Method::Poe => poe(m, &vars, prior),
        Method::Gpoe1 => gpoe(m, &vars, prior, GpoeWeighting::DifferentialEntropy),
        Method::Gpoe2 => gpoe(m, &vars, prior, GpoeWeighting::Uniform),
        Method::Bcm => bcm(m, &vars, prior),
        Method::Rbcm => rbcm(m, &vars, prior),
        Method::Spv => spv(m, &vars),
        Method::Nested | Method::Full => Err(Error::Config(format!("`{method}` is not a fusion rule"))),
    }
}
