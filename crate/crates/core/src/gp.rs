//! Exact Gaussian-process conditioning, simple-Kriging sub-models and path sampling.
//!
//! [`FullModel`] is the exact predictor used as a reference. [`SubModelBank`]
//! holds one Kriging predictor per group of design points and evaluates, at a
//! query point, the vector of sub-model means together with their covariances
//! with the process and with each other ([`LayerOne`]).

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::data::{Dataset, Partition};
use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, Points};
use crate::linalg::{factor_spd, psd_root, JitterPolicy, SpdFactor, DEFAULT_RANK_TOL};

/// Number of query points processed together by [`SubModelBank::predict_batch`].
pub const QUERY_CHUNK: usize = 128;

fn check_responses(points: &Points, y: &DVector<f64>) -> Result<()> {
    if points.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "responses",
            expected: points.len(),
            found: y.len(),
        });
    }
    Ok(())
}

/// Kriging on every design point: `m = k(x,X) K⁻¹ f`, `v = k(x,x) − k(x,X) K⁻¹ k(X,x)`.
#[derive(Debug, Clone)]
pub struct FullModel {
    kernel: KernelSpec,
    x: Points,
    factor: SpdFactor,
    alpha: DVector<f64>,
}

impl FullModel {
    pub fn fit(kernel: &KernelSpec, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        kernel.validate()?;
        kernel.check_dim(x.ncols(), "full model design")?;
        let x = Points::from_matrix(x);
        check_responses(&x, y)?;
        let factor = factor_spd(&kernel.gram(&x), &JitterPolicy::default())?;
        let alpha = factor.solve_vec(y)?;
        Ok(Self {
            kernel: kernel.clone(),
            x,
            factor,
            alpha,
        })
    }

    pub fn from_dataset(kernel: &KernelSpec, data: &Dataset) -> Result<Self> {
        Self::fit(kernel, &data.x, &data.y)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn applied_jitter(&self) -> f64 {
        self.factor.applied_jitter()
    }

    pub fn points(&self) -> &Points {
        &self.x
    }

    /// Squared norm `uᵀ k(X,X)⁻¹ u`.
    pub fn k_norm2(&self, u: &DVector<f64>) -> Result<f64> {
        self.factor.quad_form(u)
    }

    /// `k(X,X) u` without forming `k(X,X)`.
    pub fn gram_mul(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.x.len(), |i, _| {
            (0..self.x.len())
                .map(|j| self.kernel.k(self.x.row(i), self.x.row(j)) * u[j])
                .sum()
        })
    }

    /// `K⁻¹ k(X, x)`: the coefficients of the full predictor on the responses.
    pub fn weights_at(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.kernel.check_dim(x.len(), "full model query")?;
        self.factor.solve_vec(&self.kernel.column(&self.x, x))
    }

    pub fn predict_point(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.kernel.check_dim(x.len(), "full model query")?;
        let kx = self.kernel.column(&self.x, x);
        let mean = kx.dot(&self.alpha);
        let var = self.kernel.variance - self.factor.quad_form(&kx)?;
        Ok((mean, var.max(0.0)))
    }

    /// Means and variances at the rows of `xq`; variances are clamped at zero.
    pub fn predict(&self, xq: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        self.kernel.check_dim(xq.ncols(), "full model query")?;
        let q = Points::from_matrix(xq);
        let out: Vec<(f64, f64)> = (0..q.len())
            .into_par_iter()
            .map(|t| self.predict_point(q.row(t)))
            .collect::<Result<_>>()?;
        Ok((
            DVector::from_iterator(out.len(), out.iter().map(|p| p.0)),
            DVector::from_iterator(out.len(), out.iter().map(|p| p.1)),
        ))
    }

    /// Conditional covariance `k(Q,Q) − k(Q,X) K⁻¹ k(X,Q)`.
    pub fn cond_cov(&self, xq: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.kernel.check_dim(xq.ncols(), "full model query")?;
        let q = Points::from_matrix(xq);
        let kxq = self.kernel.cross(&self.x, &q);
        let mut lq = kxq.clone();
        for mut col in lq.column_iter_mut() {
            let mut v = col.as_slice().to_vec();
            self.factor.solve_in_place(&mut v)?;
            col.copy_from_slice(&v);
        }
        let mut c = self.kernel.gram(&q) - kxq.transpose() * lq;
        symmetrize(&mut c);
        Ok(c)
    }

    /// Posterior sample paths at the rows of `xq`, one path per output row.
    pub fn sample_conditional(&self, xq: &DMatrix<f64>, count: usize, seed: u64) -> Result<DMatrix<f64>> {
        let (mean, _) = self.predict(xq)?;
        let cov = self.cond_cov(xq)?;
        Ok(sample_gaussian(&mean, &cov, count, seed))
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Unconditional centered sample paths at the rows of `grid`, one path per output row.
pub fn sample_paths(kernel: &KernelSpec, grid: &DMatrix<f64>, count: usize, seed: u64) -> Result<DMatrix<f64>> {
    kernel.check_dim(grid.ncols(), "sample grid")?;
    let pts = Points::from_matrix(grid);
    let factor = factor_spd(&kernel.gram(&pts), &JitterPolicy::default())?;
    let q = pts.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(count, q);
    let mut z = vec![0.0; q];
    for r in 0..count {
        z.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
        for (c, v) in factor.mul_lower(&z).into_iter().enumerate() {
            out[(r, c)] = v;
        }
    }
    Ok(out)
}

/// Draws from `N(mean, cov)` through a symmetric eigen square root, so that
/// directions of zero variance stay exactly at the mean.
pub fn sample_gaussian(mean: &DVector<f64>, cov: &DMatrix<f64>, count: usize, seed: u64) -> DMatrix<f64> {
    let q = mean.len();
    let root = psd_root(cov, DEFAULT_RANK_TOL);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(count, q);
    for r in 0..count {
        let z = DVector::from_fn(q, |_, _| StandardNormal.sample(&mut rng));
        let path = mean + &root * z;
        out.row_mut(r).copy_from(&path.transpose());
    }
    out
}

/// Simple-Kriging predictor built on one group of design points.
#[derive(Debug, Clone)]
pub struct SubModel {
    indices: Vec<usize>,
    points: Points,
    y: DVector<f64>,
    factor: SpdFactor,
    weights: DVector<f64>,
}

impl SubModel {
    pub fn new(kernel: &KernelSpec, indices: Vec<usize>, points: Points, y: DVector<f64>) -> Result<Self> {
        check_responses(&points, &y)?;
        let factor = factor_spd(&kernel.gram(&points), &JitterPolicy::default())?;
        let weights = factor.solve_vec(&y)?;
        Ok(Self {
            indices,
            points,
            y,
            factor,
            weights,
        })
    }

    /// Indices of the group members in the full design.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn responses(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    pub fn predict_point(&self, kernel: &KernelSpec, x: &[f64]) -> Result<(f64, f64)> {
        let kx = kernel.column(&self.points, x);
        let var = kernel.variance - self.factor.quad_form(&kx)?;
        Ok((kx.dot(&self.weights), var.max(0.0)))
    }
}

/// Sub-model quantities at one query point: the inputs of the aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerOne {
    /// `k(x, x)`
    pub kxx: f64,
    /// `M(x)`, the sub-model means.
    pub means: DVector<f64>,
    /// `k_M(x) = Cov(M(x), Y(x))`
    pub cov_y: DVector<f64>,
    /// `K_M(x) = Cov(M(x), M(x))`
    pub cov: DMatrix<f64>,
}

impl LayerOne {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    /// Sub-model variances `E[(Y(x) − M_i(x))²] = k(x,x) − 2 k_M,i + K_M,ii`.
    pub fn variances(&self) -> DVector<f64> {
        DVector::from_fn(self.len(), |i, _| {
            (self.kxx - 2.0 * self.cov_y[i] + self.cov[(i, i)]).max(0.0)
        })
    }
}

/// One Kriging sub-model per group of a [`Partition`].
#[derive(Debug, Clone)]
pub struct SubModelBank {
    kernel: KernelSpec,
    n: usize,
    groups: Vec<SubModel>,
}

impl SubModelBank {
    pub fn new(kernel: &KernelSpec, x: &DMatrix<f64>, y: &DVector<f64>, partition: &Partition) -> Result<Self> {
        kernel.validate()?;
        kernel.check_dim(x.ncols(), "sub-model design")?;
        if partition.len() != x.nrows() || y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                context: "partition labels",
                expected: x.nrows(),
                found: partition.len().min(y.len()),
            });
        }
        let pts = Points::from_matrix(x);
        let groups = partition
            .members()
            .into_par_iter()
            .map(|members| {
                let gp = pts.select(&members);
                let gy = DVector::from_iterator(members.len(), members.iter().map(|&i| y[i]));
                SubModel::new(kernel, members, gp, gy)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kernel: kernel.clone(),
            n: x.nrows(),
            groups,
        })
    }

    pub fn from_dataset(kernel: &KernelSpec, data: &Dataset, partition: &Partition) -> Result<Self> {
        Self::new(kernel, &data.x, &data.y, partition)
    }

    /// Bank built from explicit sub-models, e.g. with one group modified.
    pub fn from_submodels(kernel: &KernelSpec, n: usize, groups: Vec<SubModel>) -> Result<Self> {
        kernel.validate()?;
        if groups.is_empty() {
            return Err(Error::InvalidGroupCount { groups: 0, points: n });
        }
        for g in &groups {
            kernel.check_dim(g.points.dim(), "sub-model design")?;
        }
        Ok(Self {
            kernel: kernel.clone(),
            n,
            groups,
        })
    }

    /// Same design and factors with new responses (indexed like the full design).
    pub fn with_responses(&self, y: &DVector<f64>) -> Result<Self> {
        if y.len() != self.n {
            return Err(Error::DimensionMismatch {
                context: "responses",
                expected: self.n,
                found: y.len(),
            });
        }
        let groups = self
            .groups
            .iter()
            .map(|g| {
                let gy = DVector::from_iterator(g.len(), g.indices.iter().map(|&i| y[i]));
                let weights = g.factor.solve_vec(&gy)?;
                Ok(SubModel {
                    y: gy,
                    weights,
                    ..g.clone()
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            groups,
            ..self.clone()
        })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// Number of design points.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[SubModel] {
        &self.groups
    }

    pub fn group(&self, i: usize) -> &SubModel {
        &self.groups[i]
    }

    /// Design points in their original order.
    pub fn design(&self) -> Points {
        let dim = self.kernel.dim();
        let mut data = vec![0.0; self.n * dim];
        for g in &self.groups {
            for (r, &idx) in g.indices.iter().enumerate() {
                data[idx * dim..(idx + 1) * dim].copy_from_slice(g.points.row(r));
            }
        }
        Points::from_rows(dim, data.chunks_exact(dim))
    }

    /// Responses in their original order.
    pub fn responses(&self) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for g in &self.groups {
            for (r, &idx) in g.indices.iter().enumerate() {
                y[idx] = g.y[r];
            }
        }
        y
    }

    /// Per-group vectors `w_i(x) = k(X_i,X_i)⁻¹ k(X_i, x)`.
    pub fn weights_at(&self, x: &[f64]) -> Result<Vec<DVector<f64>>> {
        self.kernel.check_dim(x.len(), "sub-model query")?;
        self.groups
            .iter()
            .map(|g| g.factor.solve_vec(&self.kernel.column(&g.points, x)))
            .collect()
    }

    /// `k(X_i, X_j)`.
    pub fn pair_block(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.kernel.cross(&self.groups[i].points, &self.groups[j].points)
    }

    /// Scatters per-group coefficients `c_i w_i` into one vector over the full design.
    pub fn stack_weights(&self, coefs: &DVector<f64>, w: &[DVector<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for ((g, wi), &ci) in self.groups.iter().zip(w).zip(coefs.iter()) {
            for (&idx, v) in g.indices.iter().zip(wi.iter()) {
                out[idx] += ci * v;
            }
        }
        out
    }

    /// Sub-model means and covariances at one point.
    pub fn predict(&self, x: &[f64]) -> Result<LayerOne> {
        self.kernel.check_dim(x.len(), "sub-model query")?;
        let q = Points::from_rows(x.len(), [x]);
        Ok(self.predict_points(&q)?.pop().expect("one query"))
    }

    /// [`SubModelBank::predict`] at every row of `xq`.
    pub fn predict_batch(&self, xq: &DMatrix<f64>) -> Result<Vec<LayerOne>> {
        self.kernel.check_dim(xq.ncols(), "sub-model query")?;
        self.predict_points(&Points::from_matrix(xq))
    }

    pub(crate) fn predict_points(&self, q: &Points) -> Result<Vec<LayerOne>> {
        let mut out = Vec::with_capacity(q.len());
        let mut start = 0;
        while start < q.len() {
            let end = (start + QUERY_CHUNK).min(q.len());
            let chunk = Points::from_rows(q.dim(), (start..end).map(|t| q.row(t)));
            let (kq, w) = self.query_weights(&chunk)?;
            out.extend(self.layer_one_from_weights(&kq, &w));
            start = end;
        }
        Ok(out)
    }

    /// Cross-covariances `k(X_i, Q)` and weights `k(X_i,X_i)⁻¹ k(X_i, Q)` for every group.
    pub(crate) fn query_weights(&self, q: &Points) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
        let pairs: Vec<(DMatrix<f64>, DMatrix<f64>)> = self
            .groups
            .par_iter()
            .map(|g| {
                let kq = self.kernel.cross(&g.points, q);
                let w = g.factor.solve(&kq)?;
                Ok((kq, w))
            })
            .collect::<Result<_>>()?;
        Ok(pairs.into_iter().unzip())
    }

    /// Assembles layer-one quantities from per-group cross-covariances and
    /// weights (each `c_i × q`). Pair blocks `k(X_i, X_j)` are formed once for
    /// the whole batch and never for the full design at once.
    pub(crate) fn layer_one_from_weights(&self, kq: &[DMatrix<f64>], w: &[DMatrix<f64>]) -> Vec<LayerOne> {
        let p = self.groups.len();
        let nq = w.first().map_or(0, |m| m.ncols());
        let means: Vec<Vec<f64>> = (0..p)
            .map(|i| (0..nq).map(|t| w[i].column(t).dot(&self.groups[i].y)).collect())
            .collect();
        let cov_y: Vec<Vec<f64>> = (0..p)
            .map(|i| (0..nq).map(|t| w[i].column(t).dot(&kq[i].column(t))).collect())
            .collect();
        // rows[i][j - i - 1][t] = K_M(x_t)_{ij} for j > i
        let rows: Vec<Vec<Vec<f64>>> = (0..p)
            .into_par_iter()
            .map(|i| {
                ((i + 1)..p)
                    .map(|j| {
                        let bw = self.pair_block(i, j) * &w[j];
                        (0..nq).map(|t| w[i].column(t).dot(&bw.column(t))).collect()
                    })
                    .collect()
            })
            .collect();
        (0..nq)
            .map(|t| {
                let mut cov = DMatrix::zeros(p, p);
                for i in 0..p {
                    // Cov(M_i, M_i) = Cov(M_i, Y) for simple Kriging
                    cov[(i, i)] = cov_y[i][t];
                    for j in (i + 1)..p {
                        let v = rows[i][j - i - 1][t];
                        cov[(i, j)] = v;
                        cov[(j, i)] = v;
                    }
                }
                LayerOne {
                    kxx: self.kernel.variance,
                    means: DVector::from_fn(p, |i, _| means[i][t]),
                    cov_y: DVector::from_fn(p, |i, _| cov_y[i][t]),
                    cov,
                }
            })
            .collect()
    }
}
