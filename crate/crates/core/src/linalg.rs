//! Dense symmetric positive-definite linear algebra.
//!
//! Every covariance inverse in the crate goes through [`SpdFactor`]: a
//! Cholesky factor computed with a bounded diagonal-jitter escalation, so that
//! nearly duplicated design points degrade gracefully instead of aborting.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative asymmetry tolerated by [`factor_spd`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Default eigenvalue cut-off (relative to the largest eigenvalue) of [`pseudo_solve`].
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Diagonal inflation schedule used when a plain Cholesky factorization fails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterPolicy {
    /// First jitter, as a multiple of the mean diagonal entry.
    pub initial_relative: f64,
    /// Multiplicative growth between attempts.
    pub growth: f64,
    /// Number of jittered attempts after the plain one.
    pub max_attempts: usize,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        Self {
            initial_relative: 1e-12,
            growth: 10.0,
            max_attempts: 6,
        }
    }
}

impl JitterPolicy {
    /// A policy that never adds jitter.
    pub fn strict() -> Self {
        Self {
            max_attempts: 0,
            ..Self::default()
        }
    }
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A + jitter·I`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    dim: usize,
    // row-major, full n×n storage; the strict upper part is zero
    lower: Vec<f64>,
    applied_jitter: f64,
}

impl SpdFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Absolute diagonal inflation that was needed for the factorization to succeed.
    pub fn applied_jitter(&self) -> f64 {
        self.applied_jitter
    }

    pub fn lower(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.lower)
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.lower[i * self.dim..i * self.dim + i + 1]
    }

    /// log det(A + jitter·I).
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim)
            .map(|i| self.lower[i * self.dim + i].ln())
            .sum::<f64>()
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<()> {
        if b.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "solve",
                expected: self.dim,
                found: b.len(),
            });
        }
        self.forward_in_place(b);
        // backward substitution with Lᵀ, column-oriented so rows of L stay contiguous
        for i in (0..self.dim).rev() {
            let row = self.row(i);
            let xi = b[i] / row[i];
            b[i] = xi;
            for (bk, lik) in b[..i].iter_mut().zip(&row[..i]) {
                *bk -= lik * xi;
            }
        }
        Ok(())
    }

    /// Solves `L y = b` in place.
    fn forward_in_place(&self, b: &mut [f64]) {
        for i in 0..self.dim {
            let row = self.row(i);
            let s: f64 = row[..i].iter().zip(&b[..i]).map(|(l, y)| l * y).sum();
            b[i] = (b[i] - s) / row[i];
        }
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let mut out = rhs.clone();
        self.solve_in_place(out.as_mut_slice())?;
        Ok(out)
    }

    /// Returns `A⁻¹ rhs` for an `n × m` right-hand side.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rhs.nrows() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "solve",
                expected: self.dim,
                found: rhs.nrows(),
            });
        }
        let mut out = rhs.clone();
        for mut col in out.column_iter_mut() {
            // columns of a DMatrix are contiguous
            self.solve_in_place(col.as_mut_slice())?;
        }
        Ok(out)
    }

    /// Squared Mahalanobis norm `bᵀ A⁻¹ b`.
    pub fn quad_form(&self, b: &DVector<f64>) -> Result<f64> {
        if b.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "quad_form",
                expected: self.dim,
                found: b.len(),
            });
        }
        let mut y = b.as_slice().to_vec();
        self.forward_in_place(&mut y);
        Ok(y.iter().map(|v| v * v).sum())
    }

    /// Computes `L z`; used to colour standard-normal draws.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(z).map(|(l, v)| l * v).sum())
            .collect()
    }
}

fn max_relative_asymmetry(matrix: &DMatrix<f64>) -> f64 {
    let n = matrix.nrows();
    let scale = matrix.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((matrix[(i, j)] - matrix[(j, i)]).abs());
        }
    }
    worst / scale
}

fn try_cholesky(matrix: &DMatrix<f64>, jitter: f64) -> Option<Vec<f64>> {
    let n = matrix.nrows();
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let (head, tail) = l.split_at_mut(j * n);
        let row_j = &mut tail[..n];
        let ajj = matrix[(j, j)] + jitter;
        let mut d = ajj;
        for k in 0..j {
            // row j is still being filled, finish it from the rows above
            let s: f64 = head[k * n..k * n + k]
                .iter()
                .zip(&row_j[..k])
                .map(|(a, b)| a * b)
                .sum();
            let v = (matrix[(j, k)] - s) / head[k * n + k];
            row_j[k] = v;
            d -= v * v;
        }
        if !(d.is_finite() && d > f64::EPSILON * ajj.abs()) {
            return None;
        }
        row_j[j] = d.sqrt();
    }
    Some(l)
}

/// Cholesky factorization with jitter escalation.
///
/// The plain factorization is tried first; on failure the diagonal is
/// inflated by `initial_relative · mean(diag)`, growing by `growth` for at
/// most `max_attempts` retries.
pub fn factor_spd(matrix: &DMatrix<f64>, policy: &JitterPolicy) -> Result<SpdFactor> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "factor_spd (square matrix)",
            expected: n,
            found: matrix.ncols(),
        });
    }
    let asymmetry = max_relative_asymmetry(matrix);
    if asymmetry > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry });
    }
    if let Some(lower) = try_cholesky(matrix, 0.0) {
        return Ok(SpdFactor {
            dim: n,
            lower,
            applied_jitter: 0.0,
        });
    }
    let mean_diag = if n == 0 {
        0.0
    } else {
        matrix.diagonal().iter().map(|v| v.abs()).sum::<f64>() / n as f64
    };
    let mut jitter = policy.initial_relative * mean_diag;
    let mut last = 0.0;
    for _ in 0..policy.max_attempts {
        if jitter > 0.0 {
            if let Some(lower) = try_cholesky(matrix, jitter) {
                return Ok(SpdFactor {
                    dim: n,
                    lower,
                    applied_jitter: jitter,
                });
            }
        }
        last = jitter;
        jitter *= policy.growth;
    }
    Err(Error::NotFactorizable {
        dim: n,
        last_jitter: last,
    })
}

/// Minimum-norm solution of `A x = b` for symmetric `A` through a symmetric
/// eigendecomposition; eigenvalues below `rank_tol · max|λ|` are treated as zero.
pub fn pseudo_solve(matrix: &DMatrix<f64>, rhs: &DVector<f64>, rank_tol: f64) -> Result<DVector<f64>> {
    let n = matrix.nrows();
    if matrix.ncols() != n || rhs.len() != n {
        return Err(Error::DimensionMismatch {
            context: "pseudo_solve",
            expected: n,
            found: rhs.len(),
        });
    }
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let eig = SymmetricEigen::new(matrix.clone());
    let max_abs = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut out = DVector::zeros(n);
    if max_abs == 0.0 {
        return Ok(out);
    }
    let cutoff = rank_tol * max_abs;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() > cutoff {
            let v = eig.eigenvectors.column(k);
            let coef = v.dot(rhs) / lambda;
            out.axpy(coef, &v, 1.0);
        }
    }
    Ok(out)
}

/// Symmetric positive-semidefinite square root `B` with `B Bᵀ ≈ A`, clamping
/// eigenvalues below `rank_tol · max λ` to zero. Used for conditional sampling
/// where rows of exactly zero variance must stay exactly zero.
pub fn psd_root(matrix: &DMatrix<f64>, rank_tol: f64) -> DMatrix<f64> {
    let n = matrix.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(matrix.clone());
    let max = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(*v));
    let mut root = eig.eigenvectors.clone();
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = if lambda > rank_tol * max { lambda.sqrt() } else { 0.0 };
        root.column_mut(k).scale_mut(s);
    }
    root
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frob(m: &DMatrix<f64>) -> f64 {
        m.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn identity_factor_is_identity() {
        let f = factor_spd(&DMatrix::identity(3, 3), &JitterPolicy::default()).unwrap();
        assert_eq!(f.applied_jitter(), 0.0);
        assert_eq!(f.lower(), DMatrix::identity(3, 3));
    }

    #[test]
    fn hand_cholesky_two_by_two() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let f = factor_spd(&a, &JitterPolicy::default()).unwrap();
        let l = f.lower();
        assert!((l[(0, 0)] - 2.0).abs() < 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
        assert!((l[(1, 0)] - 1.0).abs() < 1e-15);
        assert!((l[(1, 1)] - 2f64.sqrt()).abs() < 1e-15);
        let x = f.solve_vec(&DVector::from_vec(vec![8.0, 7.0])).unwrap();
        assert!((x[0] - 1.25).abs() < 1e-14 && (x[1] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn diagonal_solve() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 5.0]));
        let f = factor_spd(&a, &JitterPolicy::default()).unwrap();
        let x = f.solve_vec(&DVector::from_vec(vec![2.0, 5.0])).unwrap();
        assert!((x - DVector::from_vec(vec![1.0, 1.0])).amax() < 1e-15);
        let b = DVector::from_vec(vec![0.3, -1.2]);
        assert_eq!(
            factor_spd(&DMatrix::identity(2, 2), &JitterPolicy::default())
                .unwrap()
                .solve_vec(&b)
                .unwrap(),
            b
        );
    }

    #[test]
    fn rank_one_needs_jitter() {
        let a = DMatrix::from_element(2, 2, 1.0);
        let f = factor_spd(&a, &JitterPolicy::default()).unwrap();
        assert!(f.applied_jitter() > 0.0);
        assert!(matches!(
            factor_spd(&a, &JitterPolicy::strict()),
            Err(Error::NotFactorizable { .. })
        ));
    }

    #[test]
    fn negative_definite_is_rejected() {
        let a = -DMatrix::<f64>::identity(2, 2);
        assert!(matches!(
            factor_spd(&a, &JitterPolicy::default()),
            Err(Error::NotFactorizable { .. })
        ));
    }

    #[test]
    fn asymmetric_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.5, 2.0]);
        assert!(matches!(
            factor_spd(&a, &JitterPolicy::default()),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn solve_dimension_mismatch() {
        let f = factor_spd(&DMatrix::identity(3, 3), &JitterPolicy::default()).unwrap();
        assert!(matches!(
            f.solve_vec(&DVector::zeros(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn pseudo_solve_cases() {
        let a = DMatrix::from_element(2, 2, 1.0);
        let x = pseudo_solve(&a, &DVector::from_vec(vec![2.0, 2.0]), DEFAULT_RANK_TOL).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);

        let z = pseudo_solve(&DMatrix::zeros(3, 3), &DVector::from_vec(vec![1.0, 2.0, 3.0]), DEFAULT_RANK_TOL)
            .unwrap();
        assert_eq!(z, DVector::zeros(3));
    }

    #[test]
    fn log_det_matches_product_of_pivots() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let f = factor_spd(&a, &JitterPolicy::default()).unwrap();
        assert!((f.log_det() - 8f64.ln()).abs() < 1e-14);
    }

    fn random_spd(dim: usize, eigs: &[f64], angles: &[f64]) -> DMatrix<f64> {
        // Q from Givens rotations applied to the identity
        let mut q = DMatrix::<f64>::identity(dim, dim);
        for (k, &theta) in angles.iter().enumerate() {
            let i = k % dim;
            let j = (k * 7 + 3) % dim;
            if i == j {
                continue;
            }
            let (s, c) = theta.sin_cos();
            for r in 0..dim {
                let (a, b) = (q[(r, i)], q[(r, j)]);
                q[(r, i)] = c * a - s * b;
                q[(r, j)] = s * a + c * b;
            }
        }
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(&eigs[..dim]));
        let a = &q * d * q.transpose();
        (&a + a.transpose()) * 0.5
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn factor_then_solve_recovers_solution(
            dim in 1usize..50,
            log_eigs in proptest::collection::vec(-3.0f64..3.0, 50),
            angles in proptest::collection::vec(-3.2f64..3.2, 120),
            xs in proptest::collection::vec(-1.0f64..1.0, 50),
        ) {
            let eigs: Vec<f64> = log_eigs.iter().map(|l| 10f64.powf(*l)).collect();
            let a = random_spd(dim, &eigs, &angles);
            let f = factor_spd(&a, &JitterPolicy::default()).unwrap();
            prop_assert_eq!(f.applied_jitter(), 0.0);
            let l = f.lower();
            let rec = &l * l.transpose();
            prop_assert!(frob(&(&rec - &a)) <= 1e-8 * frob(&a));
            prop_assert!((0..dim).all(|i| l[(i, i)] > 0.0));

            let x = DVector::from_column_slice(&xs[..dim]);
            let b = &a * &x;
            let got = f.solve_vec(&b).unwrap();
            prop_assert!((&got - &x).norm() <= 1e-6 * x.norm().max(1e-12));
            let resid = &a * &got - &b;
            prop_assert!(resid.norm() <= 1e-8 * b.norm());

            let p = pseudo_solve(&a, &b, DEFAULT_RANK_TOL).unwrap();
            prop_assert!((&p - &got).norm() <= 1e-8 * got.norm());
        }
    }
}
