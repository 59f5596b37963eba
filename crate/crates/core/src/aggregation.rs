//! Optimal linear aggregation of sub-models and the aggregated-process view.
//!
//! [`aggregate`] consumes the covariance summary of any set of sub-models
//! (`k(x,x)`, `M(x)`, `k_M(x)`, `K_M(x)`), so it applies to Kriging sub-models
//! as well as to any other predictor whose first two moments are known.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gp::{symmetrize, FullModel, LayerOne, SubModelBank};
use crate::kernels::Points;
use crate::linalg::{factor_spd, pseudo_solve, JitterPolicy, DEFAULT_RANK_TOL};

/// Solution of `K α = k` used for every aggregation step.
#[derive(Debug, Clone, PartialEq)]
pub struct BlueWeights {
    pub weights: DVector<f64>,
    /// The pseudo-inverse fallback was used.
    pub degenerate: bool,
    /// Jitter added to the correlation-scaled system.
    pub jitter: f64,
}

/// Weights `K⁻¹ k` of the best linear unbiased combination.
///
/// Entries with a non-positive variance `K_jj` get weight zero. The remaining
/// system is scaled to unit diagonal, factored with jitter escalation, and
/// solved by pseudo-inverse if that still fails.
pub fn blue_weights(cov: &DMatrix<f64>, cov_y: &DVector<f64>) -> Result<BlueWeights> {
    let p = cov_y.len();
    if cov.nrows() != p || cov.ncols() != p {
        return Err(Error::DimensionMismatch {
            context: "aggregation covariance",
            expected: p,
            found: cov.nrows(),
        });
    }
    let active: Vec<usize> = (0..p).filter(|&j| cov[(j, j)] > 0.0).collect();
    let mut weights = DVector::zeros(p);
    if active.is_empty() {
        return Ok(BlueWeights {
            weights,
            degenerate: false,
            jitter: 0.0,
        });
    }
    let scale: Vec<f64> = active.iter().map(|&j| cov[(j, j)].sqrt().recip()).collect();
    let m = active.len();
    let mut corr = DMatrix::from_fn(m, m, |a, b| {
        cov[(active[a], active[b])] * scale[a] * scale[b]
    });
    symmetrize(&mut corr);
    for a in 0..m {
        corr[(a, a)] = 1.0;
    }
    let rhs = DVector::from_fn(m, |a, _| cov_y[active[a]] * scale[a]);
    let (beta, degenerate, jitter) = match factor_spd(&corr, &JitterPolicy::default()) {
        Ok(f) => (f.solve_vec(&rhs)?, false, f.applied_jitter()),
        Err(Error::NotFactorizable { .. }) => (pseudo_solve(&corr, &rhs, DEFAULT_RANK_TOL)?, true, 0.0),
        Err(e) => return Err(e),
    };
    for (a, &j) in active.iter().enumerate() {
        weights[j] = beta[a] * scale[a];
    }
    Ok(BlueWeights {
        weights,
        degenerate,
        jitter,
    })
}

/// Aggregated prediction at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedPrediction {
    pub mean: f64,
    pub variance: f64,
    /// `α = K_M⁻¹ k_M`
    pub weights: DVector<f64>,
    pub degenerate: bool,
    pub jitter: f64,
}

/// Best linear unbiased combination of sub-models:
/// `m_A = αᵀM`, `v_A = k(x,x) − αᵀk_M` with `α = K_M⁻¹ k_M`.
pub fn aggregate(kxx: f64, means: &DVector<f64>, cov_y: &DVector<f64>, cov: &DMatrix<f64>) -> Result<AggregatedPrediction> {
    if means.len() != cov_y.len() {
        return Err(Error::DimensionMismatch {
            context: "aggregation means",
            expected: cov_y.len(),
            found: means.len(),
        });
    }
    let blue = blue_weights(cov, cov_y)?;
    let mean = blue.weights.dot(means);
    let variance = (kxx - blue.weights.dot(cov_y)).clamp(0.0, kxx.max(0.0));
    Ok(AggregatedPrediction {
        mean,
        variance,
        weights: blue.weights,
        degenerate: blue.degenerate,
        jitter: blue.jitter,
    })
}

impl LayerOne {
    pub fn aggregate(&self) -> Result<AggregatedPrediction> {
        aggregate(self.kxx, &self.means, &self.cov_y, &self.cov)
    }
}

/// Flat aggregation of every sub-model of `bank` at the rows of `xq`.
pub fn aggregate_batch(bank: &SubModelBank, xq: &DMatrix<f64>) -> Result<Vec<AggregatedPrediction>> {
    bank.predict_batch(xq)?.iter().map(LayerOne::aggregate).collect()
}

/// Aggregation weights and sub-model weights at one location, the ingredients of `k_A`.
#[derive(Debug, Clone)]
pub struct ProcessPoint {
    point: Vec<f64>,
    alpha: DVector<f64>,
    w: Vec<DVector<f64>>,
}

impl ProcessPoint {
    pub fn new(bank: &SubModelBank, x: &[f64]) -> Result<Self> {
        let agg = bank.predict(x)?.aggregate()?;
        Ok(Self {
            point: x.to_vec(),
            alpha: agg.weights,
            w: bank.weights_at(x)?,
        })
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Coefficients `λ_A(x)` with `M_A(x) = λ_A(x)ᵀ Y(X)`.
    pub fn effective_weights(&self, bank: &SubModelBank) -> DVector<f64> {
        bank.stack_weights(&self.alpha, &self.w)
    }
}

/// Literal evaluation of the aggregated kernel between two prepared locations:
/// `k(x,x') + 2αᵀK_M(x,x')α' − αᵀk_M(x,x') − α'ᵀk_M(x',x)`, with
/// `K_M(x,x')_ij = w_i(x)ᵀ k(X_i,X_j) w_j(x')` and `k_M(x,x')_i = w_i(x)ᵀ k(X_i,x')`.
pub fn process_cov_between(bank: &SubModelBank, a: &ProcessPoint, b: &ProcessPoint) -> f64 {
    let kernel = bank.kernel();
    let p = bank.group_count();
    let mut cross = 0.0;
    let mut ka = 0.0;
    let mut kb = 0.0;
    for i in 0..p {
        let gi = bank.group(i).points();
        if a.alpha[i] != 0.0 {
            for j in 0..p {
                if b.alpha[j] == 0.0 {
                    continue;
                }
                let block = bank.pair_block(i, j);
                cross += a.alpha[i] * b.alpha[j] * (a.w[i].transpose() * block * &b.w[j])[(0, 0)];
            }
            ka += a.alpha[i] * a.w[i].dot(&kernel.column(gi, &b.point));
        }
        if b.alpha[i] != 0.0 {
            kb += b.alpha[i] * b.w[i].dot(&kernel.column(gi, &a.point));
        }
    }
    kernel.k(&a.point, &b.point) + 2.0 * cross - ka - kb
}

/// `k_A(x, x')`; returns `k(x,x)` exactly when both arguments coincide.
pub fn aggregate_process_cov(bank: &SubModelBank, x: &[f64], x2: &[f64]) -> Result<f64> {
    bank.kernel().check_dim(x.len(), "process covariance")?;
    bank.kernel().check_dim(x2.len(), "process covariance")?;
    if x == x2 {
        return Ok(bank.kernel().k(x, x));
    }
    let a = ProcessPoint::new(bank, x)?;
    let b = ProcessPoint::new(bank, x2)?;
    Ok(process_cov_between(bank, &a, &b))
}

/// Effective-weight form of the aggregated kernel on a point set:
/// `k(s,t) + 2λ_sᵀKλ_t − λ_sᵀk(X,t) − λ_tᵀk(X,s)`. Forms `k(X,X)`, so meant for small designs.
pub fn aggregated_kernel_matrix(bank: &SubModelBank, pts: &Points) -> Result<DMatrix<f64>> {
    let kernel = bank.kernel();
    let design = bank.design();
    let lambdas: Vec<DVector<f64>> = pts
        .rows()
        .map(|r| Ok(ProcessPoint::new(bank, r)?.effective_weights(bank)))
        .collect::<Result<_>>()?;
    let kxx = kernel.gram(&design);
    let kxs = kernel.cross(&design, pts);
    let m = pts.len();
    let klam: Vec<DVector<f64>> = lambdas.iter().map(|l| &kxx * l).collect();
    let mut out = DMatrix::zeros(m, m);
    for s in 0..m {
        for t in s..m {
            let v = if s == t {
                kernel.variance
            } else {
                kernel.k(pts.row(s), pts.row(t)) + 2.0 * lambdas[s].dot(&klam[t])
                    - lambdas[s].dot(&kxs.column(t))
                    - lambdas[t].dot(&kxs.column(s))
            };
            out[(s, t)] = v;
            out[(t, s)] = v;
        }
    }
    Ok(out)
}

/// Gaussian conditioning of the aggregated process on its values at the design.
#[derive(Debug, Clone)]
pub struct ProcessPosterior {
    pub means: DVector<f64>,
    pub variances: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Posterior of `Y_A` at the rows of `xq` given `Y_A(X) = f`.
pub fn aggregated_posterior(bank: &SubModelBank, xq: &DMatrix<f64>, x: &DMatrix<f64>, f: &DVector<f64>) -> Result<ProcessPosterior> {
    bank.kernel().check_dim(xq.ncols(), "posterior query")?;
    bank.kernel().check_dim(x.ncols(), "posterior design")?;
    if x.nrows() != f.len() {
        return Err(Error::DimensionMismatch {
            context: "posterior responses",
            expected: x.nrows(),
            found: f.len(),
        });
    }
    let n = x.nrows();
    let q = xq.nrows();
    let mut all = Points::from_matrix(x);
    for r in Points::from_matrix(xq).rows() {
        all.push(r);
    }
    let ka = aggregated_kernel_matrix(bank, &all)?;
    let kxx = ka.view((0, 0), (n, n)).into_owned();
    let kxq = ka.view((0, n), (n, q)).into_owned();
    let kqq = ka.view((n, n), (q, q)).into_owned();
    let factor = factor_spd(&kxx, &JitterPolicy::default())?;
    let means = kxq.transpose() * factor.solve_vec(f)?;
    let mut cov = kqq - kxq.transpose() * factor.solve(&kxq)?;
    symmetrize(&mut cov);
    let variances = DVector::from_fn(q, |i, _| cov[(i, i)].max(0.0));
    Ok(ProcessPosterior {
        means,
        variances,
        cov,
    })
}

/// Comparison of the flat aggregation with the full model at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// `m_A − m_full`
    pub mean_gap: f64,
    /// `v_A − v_full`
    pub var_gap: f64,
    /// `min_k E[(Y − M_k)²] − v_full`, the upper bound of `var_gap`.
    pub bound: f64,
    /// `E[(M_A − M_full)²] = (λ_A − λ_full)ᵀ K (λ_A − λ_full)`
    pub mean_sq_lhs: f64,
    /// `‖k(X,x) − k_A(X,x)‖²_K`
    pub mean_sq_rhs: f64,
    /// `v_A − v_full`
    pub var_lhs: f64,
    /// `‖k(X,x)‖²_K − ‖k_A(X,x)‖²_K`
    pub var_rhs: f64,
}

/// Gaps between aggregated and full predictions, the variance bound, and both
/// sides of the kernel-difference identities. The two sides are computed by
/// independent routes: effective weights on the left, `k_A` on the right.
pub fn diagnostics_vs_full(full: &FullModel, bank: &SubModelBank, x: &[f64]) -> Result<Diagnostics> {
    let kernel = bank.kernel();
    kernel.check_dim(x.len(), "diagnostics point")?;
    if full.len() != bank.len() {
        return Err(Error::DimensionMismatch {
            context: "diagnostics design",
            expected: full.len(),
            found: bank.len(),
        });
    }
    let l1 = bank.predict(x)?;
    let agg = l1.aggregate()?;
    let (m_full, v_full) = full.predict_point(x)?;
    let m_a = agg.mean;
    let v_a = agg.variance;

    let here = ProcessPoint::new(bank, x)?;
    let lambda_a = here.effective_weights(bank);
    let lambda_f = full.weights_at(x)?;
    let d = &lambda_a - &lambda_f;
    let mean_sq_lhs = d.dot(&full.gram_mul(&d));

    let design = bank.design();
    let kx = kernel.column(&design, x);
    let ka = DVector::from_iterator(
        design.len(),
        design
            .rows()
            .map(|r| Ok(process_cov_between(bank, &ProcessPoint::new(bank, r)?, &here)))
            .collect::<Result<Vec<f64>>>()?,
    );
    let mean_sq_rhs = full.k_norm2(&(&kx - &ka))?;
    let var_rhs = full.k_norm2(&kx)? - full.k_norm2(&ka)?;

    let best_sub = l1.variances().iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Diagnostics {
        mean_gap: m_a - m_full,
        var_gap: v_a - v_full,
        bound: best_sub - v_full,
        mean_sq_lhs,
        mean_sq_rhs,
        var_lhs: v_a - v_full,
        var_rhs,
    })
}
