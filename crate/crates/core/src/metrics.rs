//! Prediction-quality criteria and the simulation studies built on them.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::aggregate;
use crate::baselines::{fuse, Method};
use crate::data::{partition_consecutive, Partition};
use crate::error::{Error, Result};
use crate::gp::{sample_gaussian, sample_paths, FullModel, LayerOne, SubModelBank};
use crate::kernels::{Family, KernelSpec};
use crate::tree::{nested_from_layer_one, AggregationTree};

/// Quality of one method's predictions on a test set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criteria {
    /// Mean squared gap to the reference means.
    pub mse: f64,
    /// Mean signed gap to the reference variances.
    pub mve: f64,
    /// Mean negative log predictive density of the truth.
    pub mnlp: f64,
    /// Mean squared error normalized by the predicted variance.
    pub mnse: f64,
}

pub fn criteria(
    m: &DVector<f64>,
    v: &DVector<f64>,
    m_ref: &DVector<f64>,
    v_ref: &DVector<f64>,
    f: &DVector<f64>,
) -> Result<Criteria> {
    let n = m.len();
    for (len, context) in [(v.len(), "variances"), (m_ref.len(), "reference means"), (v_ref.len(), "reference variances"), (f.len(), "truth")] {
        if len != n {
            return Err(Error::DimensionMismatch { context, expected: n, found: len });
        }
    }
    if n == 0 {
        return Err(Error::InvalidData("empty test set".into()));
    }
    if let Some(index) = v.iter().position(|x| !(*x > 0.0)) {
        return Err(Error::NonPositiveVariance { index });
    }
    let nf = n as f64;
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    Ok(Criteria {
        mse: (m - m_ref).norm_squared() / nf,
        mve: (v - v_ref).sum() / nf,
        mnlp: (0..n)
            .map(|i| 0.5 * (ln2pi + v[i].ln()) + (m[i] - f[i]).powi(2) / (2.0 * v[i]))
            .sum::<f64>()
            / nf,
        mnse: (0..n).map(|i| (m[i] - f[i]).powi(2) / v[i]).sum::<f64>() / nf,
    })
}

/// One row of a benchmark report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub scenario: String,
    pub replication: usize,
    pub method: Method,
    pub mse: f64,
    pub mve: f64,
    pub mnlp: f64,
    pub mnse: f64,
}

/// Settings of the one-dimensional simulated comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSettings {
    pub family: Family,
    pub variance: f64,
    pub lengthscale: f64,
    pub n: usize,
    pub groups: usize,
    pub grid: usize,
    /// Predicted variances are floored at `variance_floor · σ²` before scoring.
    pub variance_floor: f64,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        Self {
            family: Family::Matern52,
            variance: 1.0,
            lengthscale: 0.05,
            n: 30,
            groups: 15,
            grid: 101,
            variance_floor: 1e-12,
        }
    }
}

impl BenchmarkSettings {
    pub fn kernel(&self) -> Result<KernelSpec> {
        KernelSpec::isotropic(self.family, self.variance, self.lengthscale, 1)
    }

    fn scenario(&self) -> String {
        format!(
            "{} s2={} theta={} n={} p={} grid={}",
            self.family.name(),
            self.variance,
            self.lengthscale,
            self.n,
            self.groups,
            self.grid
        )
    }

    pub fn grid_points(&self) -> DMatrix<f64> {
        let g = self.grid.max(2);
        DMatrix::from_fn(g, 1, |i, _| i as f64 / (g - 1) as f64)
    }
}

/// Methods compared in the simulated benchmark.
pub const BENCHMARK_METHODS: [Method; 7] = [
    Method::Nested,
    Method::Poe,
    Method::Gpoe1,
    Method::Gpoe2,
    Method::Bcm,
    Method::Rbcm,
    Method::Spv,
];

/// Everything a replication computes, for reports and plots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replication {
    pub replication: usize,
    pub grid: Vec<f64>,
    pub truth: Vec<f64>,
    pub design_x: Vec<f64>,
    pub design_y: Vec<f64>,
    pub full_mean: Vec<f64>,
    pub full_variance: Vec<f64>,
    /// Per method: means and variances on the grid.
    pub methods: Vec<(Method, Vec<f64>, Vec<f64>)>,
}

fn replication_rng(seed: u64, replication: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication as u64);
    rng
}

/// Predictions of a fusion method or of nested aggregation from layer-one quantities.
pub fn predict_from_layer_one(method: Method, l1: &LayerOne, tree: &AggregationTree) -> Result<(f64, f64)> {
    match method {
        Method::Nested => {
            let r = nested_from_layer_one(l1, tree)?;
            Ok((r.mean, r.variance))
        }
        Method::Full => Err(Error::Config("the full model is not built from sub-models".into())),
        m => {
            let r = fuse(m, l1)?;
            Ok((r.mean, r.variance))
        }
    }
}

/// Runs replication `replication` of the simulated comparison.
pub fn benchmark_replication(settings: &BenchmarkSettings, seed: u64, replication: usize) -> Result<Replication> {
    let kernel = settings.kernel()?;
    let mut rng = replication_rng(seed, replication);
    let grid = settings.grid_points();
    let g = grid.nrows();
    let n = settings.n;
    let design: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let joint = DMatrix::from_fn(g + n, 1, |i, _| if i < g { grid[(i, 0)] } else { design[i - g] });
    let path = sample_paths(&kernel, &joint, 1, rng.random())?;
    let truth = DVector::from_fn(g, |i, _| path[(0, i)]);
    let x = DMatrix::from_column_slice(n, 1, &design);
    let y = DVector::from_fn(n, |i, _| path[(0, g + i)]);

    let full = FullModel::fit(&kernel, &x, &y)?;
    let (m_ref, v_ref) = full.predict(&grid)?;
    let part = partition_consecutive(&x, settings.groups)?;
    let bank = SubModelBank::new(&kernel, &x, &y, &part)?;
    let tree = AggregationTree::two_layer(settings.groups)?;
    let layer = bank.predict_batch(&grid)?;
    let methods = BENCHMARK_METHODS
        .iter()
        .map(|&m| {
            let (mean, var): (Vec<f64>, Vec<f64>) = layer
                .iter()
                .map(|l1| predict_from_layer_one(m, l1, &tree))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .unzip();
            Ok((m, mean, var))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Replication {
        replication,
        grid: grid.column(0).iter().copied().collect(),
        truth: truth.iter().copied().collect(),
        design_x: design,
        design_y: y.iter().copied().collect(),
        full_mean: m_ref.iter().copied().collect(),
        full_variance: v_ref.iter().copied().collect(),
        methods,
    })
}

impl Replication {
    /// Criteria of every method against the full model, plus the full model itself against the truth.
    pub fn reports(&self, settings: &BenchmarkSettings, include_full: bool) -> Result<Vec<CriteriaReport>> {
        let floor = settings.variance_floor * settings.variance;
        let vec = |v: &[f64]| DVector::from_column_slice(v);
        let floored = |v: &[f64]| DVector::from_iterator(v.len(), v.iter().map(|x| x.max(floor)));
        let (m_ref, v_ref, f) = (vec(&self.full_mean), floored(&self.full_variance), vec(&self.truth));
        let full = include_full.then(|| (Method::Full, self.full_mean.clone(), self.full_variance.clone()));
        self.methods
            .iter()
            .cloned()
            .chain(full)
            .map(|(method, m, v)| {
                let c = criteria(&vec(&m), &floored(&v), &m_ref, &v_ref, &f)?;
                Ok(CriteriaReport {
                    scenario: settings.scenario(),
                    replication: self.replication,
                    method,
                    mse: c.mse,
                    mve: c.mve,
                    mnlp: c.mnlp,
                    mnse: c.mnse,
                })
            })
            .collect()
    }
}

/// One report per method per replication, replications `0..replications`
/// run in parallel with per-replication random streams.
pub fn run_benchmark(settings: &BenchmarkSettings, seed: u64, replications: usize, include_full: bool) -> Result<Vec<CriteriaReport>> {
    let per: Vec<Vec<CriteriaReport>> = (0..replications)
        .into_par_iter()
        .map(|r| benchmark_replication(settings, seed, r)?.reports(settings, include_full))
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// The default one-dimensional setting: Matérn 5/2, 30 points in 15 consecutive pairs.
pub fn run_benchmark_51(seed: u64, replications: usize) -> Result<Vec<CriteriaReport>> {
    run_benchmark(&BenchmarkSettings::default(), seed, replications, false)
}

/// Medians of each criterion for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub replications: usize,
    pub median_mse: f64,
    pub median_mve: f64,
    pub median_mnlp: f64,
    pub median_mnse: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Per-method medians, in order of first appearance.
pub fn summarize(reports: &[CriteriaReport]) -> Vec<MethodSummary> {
    let mut order: Vec<Method> = Vec::new();
    for r in reports {
        if !order.contains(&r.method) {
            order.push(r.method);
        }
    }
    order
        .into_iter()
        .map(|method| {
            let rows: Vec<&CriteriaReport> = reports.iter().filter(|r| r.method == method).collect();
            let col = |f: fn(&CriteriaReport) -> f64| median(&mut rows.iter().map(|r| f(r)).collect::<Vec<_>>());
            MethodSummary {
                method,
                replications: rows.len(),
                median_mse: col(|r| r.mse),
                median_mve: col(|r| r.mve),
                median_mnlp: col(|r| r.mnlp),
                median_mnse: col(|r| r.mnse),
            }
        })
        .collect()
}

/// Settings of the clustered-design consistency experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsistencySettings {
    pub family: Family,
    pub variance: f64,
    pub lengthscale: f64,
    /// Prediction point.
    pub x0: f64,
    /// Accumulation point of the cluster.
    pub xbar: f64,
    /// Cluster radius.
    pub radius: f64,
    /// Sample paths per design.
    pub replicates: usize,
}

impl Default for ConsistencySettings {
    fn default() -> Self {
        Self {
            family: Family::Matern52,
            variance: 1.0,
            lengthscale: 1.0,
            x0: 0.1,
            xbar: 0.9,
            radius: 0.05,
            replicates: 200,
        }
    }
}

/// Clustered design for `n` points and its grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyDesign {
    pub x: Vec<f64>,
    pub partition: Partition,
    /// Number of groups made of space-filling points.
    pub u_groups: usize,
    /// Exclusion radius around the prediction point.
    pub exclusion: f64,
}

/// Builds the design: `k_n = ⌈n^{1/5}⌉` groups of space-filling points kept
/// at distance `n^{-1/4}` from `x0`, and the remaining `p_n − k_n` groups
/// (`p_n = ⌈n^{4/5}⌉`) filled by the sequence `x̄ − r/(1+j)` accumulating at `x̄`.
/// Groups hold `C_n` points each, the largest `C` with `C (p_n − 1) < n`;
/// the last group takes the remainder.
pub fn consistency_design(n: usize, settings: &ConsistencySettings) -> Result<ConsistencyDesign> {
    if n < 8 {
        return Err(Error::InvalidData(format!("consistency design needs n >= 8, got {n}")));
    }
    let nf = n as f64;
    let p = (nf.powf(0.8).ceil() as usize).min(n);
    let k = (nf.powf(0.2).ceil() as usize).min(p - 1);
    let c = (n - 1) / (p - 1);
    let m = k * c;
    let delta = nf.powf(-0.25);
    // equispaced points over [0,1] minus (x0 - δ, x0 + δ)
    let left = (settings.x0 - delta).max(0.0);
    let right_start = (settings.x0 + delta).min(1.0);
    let total = left + (1.0 - right_start);
    if !(total > 0.0) {
        return Err(Error::InvalidData("exclusion ball covers the domain".into()));
    }
    let u: Vec<f64> = (0..m)
        .map(|j| {
            let s = (j as f64 + 0.5) * total / m as f64;
            if s < left {
                s
            } else {
                right_start + (s - left)
            }
        })
        .collect();
    let mut x = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (j, v) in u.iter().enumerate() {
        x.push(*v);
        labels.push(j % k);
    }
    for j in 0..(n - m) {
        x.push(settings.xbar - settings.radius / (2.0 + j as f64));
        labels.push((k + j / c).min(p - 1));
    }
    Ok(ConsistencyDesign {
        x,
        partition: Partition::from_labels(labels, p)?,
        u_groups: k,
        exclusion: delta,
    })
}

/// Mean squared error at `x0` for each `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyPoint {
    pub n: usize,
    pub method: Method,
    /// Monte-Carlo average over sample paths.
    pub mse: f64,
    /// Exact value `k(x0,x0) − 2λᵀk(X,x0) + λᵀKλ` of the linear predictor.
    pub exact_mse: f64,
}

/// Weights `λ` of a method's predictor at `x0`, so that the prediction is `λᵀY(X)`.
pub fn predictor_weights(method: Method, bank: &SubModelBank, x0: &[f64]) -> Result<DVector<f64>> {
    match method {
        Method::Full => FullModel::fit(bank.kernel(), &bank.design().to_matrix(), &bank.responses())?.weights_at(x0),
        _ => {
            let l1 = bank.predict(x0)?;
            let w = bank.weights_at(x0)?;
            let coefs = match method {
                Method::Nested => aggregate(l1.kxx, &l1.means, &l1.cov_y, &l1.cov)?.weights,
                m => fuse(m, &l1)?.coefficients,
            };
            Ok(bank.stack_weights(&coefs, &w))
        }
    }
}

/// Squared prediction error at `x0` over the sequence of clustered designs.
pub fn run_consistency_demo(ns: &[usize], method: Method, settings: &ConsistencySettings, seed: u64) -> Result<Vec<ConsistencyPoint>> {
    let kernel = KernelSpec::isotropic(settings.family, settings.variance, settings.lengthscale, 1)?;
    ns.par_iter()
        .enumerate()
        .map(|(step, &n)| {
            let design = consistency_design(n, settings)?;
            let x = DMatrix::from_column_slice(n, 1, &design.x);
            let bank = SubModelBank::new(&kernel, &x, &DVector::zeros(n), &design.partition)?;
            let lambda = predictor_weights(method, &bank, &[settings.x0])?;
            let kx = kernel.cross_matrix(&x, &DMatrix::from_element(1, 1, settings.x0))?.column(0).into_owned();
            let gram = kernel.cross_matrix(&x, &x)?;
            let exact = settings.variance - 2.0 * lambda.dot(&kx) + (lambda.transpose() * &gram * &lambda)[(0, 0)];
            let joint = DMatrix::from_fn(n + 1, 1, |i, _| if i < n { design.x[i] } else { settings.x0 });
            let mut rng = replication_rng(seed, step);
            let joint_cov = kernel.cross_matrix(&joint, &joint)?;
            let paths = sample_gaussian(&DVector::zeros(n + 1), &joint_cov, settings.replicates, rng.random());
            let mse = (0..settings.replicates)
                .map(|r| {
                    let pred: f64 = (0..n).map(|i| lambda[i] * paths[(r, i)]).sum();
                    (pred - paths[(r, n)]).powi(2)
                })
                .sum::<f64>()
                / settings.replicates as f64;
            log::debug!("n={n} {method}: |λ|max={:.3e}", lambda.amax());
            Ok(ConsistencyPoint {
                n,
                method,
                mse,
                exact_mse: exact.max(0.0),
            })
        })
        .collect()
}
