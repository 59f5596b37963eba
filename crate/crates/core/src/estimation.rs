//! Leave-one-out estimation of covariance parameters.
//!
//! The LOO predictor at `x_i` keeps the input division and only drops `x_i`
//! from its own group. Its effect on the layer-one quantities is captured by
//! replacing that group's weight vector with the reduced-group weights,
//! padded with a zero at the deleted position. Pair blocks are then shared
//! across all deleted indices of a batch.

use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{SubModelBank, QUERY_CHUNK};
use crate::kernels::KernelSpec;
use crate::linalg::{factor_spd, JitterPolicy};
use crate::data::Partition;
use crate::tree::{nested_from_layer_one, AggregationTree};

/// LOO prediction at one design point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LooRecord {
    pub index: usize,
    pub mean: f64,
    pub variance: f64,
}

/// Nested LOO predictions at the design points `indices`. Indices whose group
/// has a single member are skipped with a warning.
pub fn loo_predict(bank: &SubModelBank, tree: &AggregationTree, indices: &[usize]) -> Result<Vec<LooRecord>> {
    let n = bank.len();
    let mut owner = vec![(usize::MAX, 0usize); n];
    for (g, sub) in bank.groups().iter().enumerate() {
        for (pos, &idx) in sub.indices().iter().enumerate() {
            owner[idx] = (g, pos);
        }
    }
    let mut kept = Vec::with_capacity(indices.len());
    for &i in indices {
        if i >= n {
            return Err(Error::InvalidData(format!("LOO index {i} out of range for {n} points")));
        }
        if bank.group(owner[i].0).len() < 2 {
            warn!("{}", Error::EmptyGroupAfterDeletion { index: i });
            continue;
        }
        kept.push(i);
    }
    let design = bank.design();
    let kernel = bank.kernel();
    let mut out = Vec::with_capacity(kept.len());
    for chunk in kept.chunks(QUERY_CHUNK) {
        let q = design.select(chunk);
        let (kq, mut w) = bank.query_weights(&q)?;
        let reduced: Vec<DVector<f64>> = chunk
            .par_iter()
            .enumerate()
            .map(|(t, &i)| {
                let (g, pos) = owner[i];
                let sub = bank.group(g);
                let rest: Vec<usize> = (0..sub.len()).filter(|&r| r != pos).collect();
                let pts = sub.points().select(&rest);
                let factor = factor_spd(&kernel.gram(&pts), &JitterPolicy::default())?;
                let kx = DVector::from_iterator(rest.len(), rest.iter().map(|&r| kq[g][(r, t)]));
                let wr = factor.solve_vec(&kx)?;
                let mut full = DVector::zeros(sub.len());
                for (&r, v) in rest.iter().zip(wr.iter()) {
                    full[r] = *v;
                }
                Ok(full)
            })
            .collect::<Result<_>>()?;
        for (t, (&i, wi)) in chunk.iter().zip(reduced).enumerate() {
            w[owner[i].0].set_column(t, &wi);
        }
        let layer = bank.layer_one_from_weights(&kq, &w);
        for (&i, l1) in chunk.iter().zip(&layer) {
            let r = nested_from_layer_one(l1, tree)?;
            out.push(LooRecord {
                index: i,
                mean: r.mean,
                variance: r.variance,
            });
        }
    }
    Ok(out)
}

/// Mean squared LOO error; `f` is indexed like the design.
pub fn loo_criterion(records: &[LooRecord], f: &DVector<f64>) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InvalidData("no LOO records".into()));
    }
    Ok(records.iter().map(|r| (f[r.index] - r.mean).powi(2)).sum::<f64>() / records.len() as f64)
}

/// Process variance making the normalized LOO errors unit-variance. The
/// records must come from a unit-variance kernel. Records whose variance
/// rounded to zero are left out with a warning.
pub fn estimate_sigma2(records: &[LooRecord], f: &DVector<f64>) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InvalidData("no LOO records".into()));
    }
    let (mut s, mut used) = (0.0, 0);
    for r in records {
        if r.variance > 0.0 {
            s += (f[r.index] - r.mean).powi(2) / r.variance;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::NonPositiveVariance { index: records[0].index });
    }
    if used < records.len() {
        warn!("{} of {} LOO variances are zero and were ignored", records.len() - used, records.len());
    }
    Ok(s / used as f64)
}

/// LOO records over every design point at unit process variance, then `σ̂²`.
pub fn fit_sigma2(kernel: &KernelSpec, x: &DMatrix<f64>, y: &DVector<f64>, partition: &Partition, tree: &AggregationTree) -> Result<f64> {
    let bank = SubModelBank::new(&kernel.with_variance(1.0), x, y, partition)?;
    let all: Vec<usize> = (0..x.nrows()).collect();
    estimate_sigma2(&loo_predict(&bank, tree, &all)?, y)
}

/// Full or subset LOO criterion at given lengthscales.
pub fn loo_criterion_at(
    kernel: &KernelSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    partition: &Partition,
    tree: &AggregationTree,
    indices: &[usize],
) -> Result<f64> {
    let bank = SubModelBank::new(kernel, x, y, partition)?;
    loo_criterion(&loo_predict(&bank, tree, indices)?, y)
}

/// Settings of the stochastic gradient descent on log-lengthscales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdConfig {
    /// Starting lengthscales; empty means those of the kernel passed to [`sgd_fit`].
    pub theta0: Vec<f64>,
    pub a: f64,
    /// Stability constant of the step sizes; `None` means `n_iter / 10`.
    pub big_a: Option<f64>,
    pub alpha: f64,
    pub c: f64,
    pub gamma: f64,
    pub q: usize,
    pub n_iter: usize,
    pub seed: u64,
    /// Iterations of a preliminary run with `α = 0.2` whose end point starts the main run.
    pub warmup_iter: usize,
    /// Descend on the logarithm of the criterion (same minimizer), so that
    /// step sizes do not depend on the scale of the responses.
    pub log_criterion: bool,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            theta0: Vec::new(),
            a: 0.1,
            big_a: None,
            alpha: 0.602,
            c: 0.1,
            gamma: 0.101,
            q: 100,
            n_iter: 100,
            seed: 0,
            warmup_iter: 0,
            log_criterion: false,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("a", self.a), ("alpha", self.alpha), ("c", self.c), ("gamma", self.gamma)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("sgd.{name} must be positive, got {v}")));
            }
        }
        if let Some(a) = self.big_a {
            if !(a >= 0.0) {
                return Err(Error::Config(format!("sgd.big_a must be non-negative, got {a}")));
            }
        }
        if self.q == 0 {
            return Err(Error::Config("sgd.q must be positive".into()));
        }
        if self.theta0.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Config("sgd.theta0 entries must be positive".into()));
        }
        Ok(())
    }
}

/// One iteration of the descent.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdStep {
    pub iteration: usize,
    /// Average of the two perturbed subset criteria.
    pub criterion: f64,
    pub theta: Vec<f64>,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdResult {
    pub theta: Vec<f64>,
    pub trace: Vec<SgdStep>,
}

struct Problem<'a> {
    kernel: &'a KernelSpec,
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    partition: &'a Partition,
    tree: &'a AggregationTree,
}

impl Problem<'_> {
    fn criterion(&self, log_theta: &[f64], subset: &[usize]) -> f64 {
        let k = self.kernel.with_lengthscales(log_theta.iter().map(|t| t.exp()).collect());
        match loo_criterion_at(&k, self.x, self.y, self.partition, self.tree, subset) {
            Ok(v) => v,
            Err(e) => {
                debug!("criterion failed at {log_theta:?}: {e}");
                f64::NAN
            }
        }
    }
}

fn descend(problem: &Problem, log_theta: &mut [f64], cfg: &SgdConfig, alpha: f64, stream: u64, trace: &mut Vec<SgdStep>) {
    let n = problem.x.nrows();
    let q = cfg.q.min(n);
    let big_a = cfg.big_a.unwrap_or(cfg.n_iter as f64 / 10.0);
    let mut a = cfg.a;
    for i in 0..cfg.n_iter {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream + i as u64);
        let mut subset = sample(&mut rng, n, q).into_vec();
        subset.sort_unstable();
        let h: Vec<f64> = (0..log_theta.len()).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let a_i = a / (big_a + i as f64 + 1.0).powf(alpha);
        let d_i = cfg.c / (i as f64 + 1.0).powf(cfg.gamma);
        let plus: Vec<f64> = log_theta.iter().zip(&h).map(|(t, s)| t + d_i * s).collect();
        let minus: Vec<f64> = log_theta.iter().zip(&h).map(|(t, s)| t - d_i * s).collect();
        let (cp, cm) = rayon::join(|| problem.criterion(&plus, &subset), || problem.criterion(&minus, &subset));
        let grad = if cfg.log_criterion {
            (cp.ln() - cm.ln()) / (2.0 * d_i)
        } else {
            (cp - cm) / (2.0 * d_i)
        };
        debug!("iter {i}: a_i {a_i:.3e} d_i {d_i:.3e} c+ {cp:.6e} c- {cm:.6e}");
        let next: Vec<f64> = log_theta.iter().zip(&h).map(|(t, s)| t - a_i * grad * s).collect();
        let rejected = !next.iter().all(|t| t.exp().is_normal());
        if rejected {
            warn!("{} at iteration {i}; step rejected", Error::NonFiniteCriterion);
            a *= 0.5;
        } else {
            log_theta.copy_from_slice(&next);
        }
        let theta: Vec<f64> = log_theta.iter().map(|t| t.exp()).collect();
        let criterion = 0.5 * (cp + cm);
        info!("iter {i} criterion {criterion:.6e} theta {theta:?}");
        trace.push(SgdStep {
            iteration: trace.len(),
            criterion,
            theta,
            rejected,
        });
    }
}

/// Stochastic gradient descent of the LOO criterion over log-lengthscales,
/// with simultaneous-perturbation gradient estimates on random subsets.
pub fn sgd_fit(
    kernel: &KernelSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    partition: &Partition,
    tree: &AggregationTree,
    cfg: &SgdConfig,
) -> Result<SgdResult> {
    cfg.validate()?;
    let start = if cfg.theta0.is_empty() {
        kernel.lengthscales.clone()
    } else {
        cfg.theta0.clone()
    };
    kernel.check_dim(start.len(), "sgd.theta0")?;
    let problem = Problem {
        kernel,
        x,
        y,
        partition,
        tree,
    };
    let mut log_theta: Vec<f64> = start.iter().map(|t| t.ln()).collect();
    let mut trace = Vec::new();
    if cfg.warmup_iter > 0 {
        let warm = SgdConfig {
            n_iter: cfg.warmup_iter,
            big_a: Some(cfg.big_a.unwrap_or(cfg.warmup_iter as f64 / 10.0)),
            ..cfg.clone()
        };
        descend(&problem, &mut log_theta, &warm, 0.2, 1 << 32, &mut trace);
    }
    descend(&problem, &mut log_theta, cfg, cfg.alpha, 0, &mut trace);
    Ok(SgdResult {
        theta: log_theta.iter().map(|t| t.exp()).collect(),
        trace,
    })
}

/// Sum of the sub-model Gaussian log-likelihoods.
pub fn submodel_log_likelihood(bank: &SubModelBank) -> f64 {
    bank.groups()
        .iter()
        .map(|g| {
            let c = g.len() as f64;
            let y = g.responses();
            let fit = g.factor().solve_vec(y).map(|w| w.dot(y)).unwrap_or(f64::INFINITY);
            -0.5 * (fit + g.factor().log_det() + c * (2.0 * std::f64::consts::PI).ln())
        })
        .sum()
}

/// Isotropic lengthscale from `grid` maximizing [`submodel_log_likelihood`], as a starting point.
pub fn ml_grid_start(kernel: &KernelSpec, x: &DMatrix<f64>, y: &DVector<f64>, partition: &Partition, grid: &[f64]) -> Result<f64> {
    let mut best = (f64::NEG_INFINITY, None);
    for &t in grid {
        let k = kernel.with_lengthscales(vec![t; kernel.dim()]);
        let Ok(bank) = SubModelBank::new(&k, x, y, partition) else {
            continue;
        };
        let ll = submodel_log_likelihood(&bank);
        if ll > best.0 {
            best = (ll, Some(t));
        }
    }
    best.1
        .ok_or_else(|| Error::InvalidData("no grid value gave a finite likelihood".into()))
}

/// Builds the design-point subset `I` for a LOO criterion as [`sgd_fit`] does at iteration `i`.
pub fn sgd_subset(n: usize, q: usize, seed: u64, iteration: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    let mut s = sample(&mut rng, n, q.min(n)).into_vec();
    s.sort_unstable();
    s
}
