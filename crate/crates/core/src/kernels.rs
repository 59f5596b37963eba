//! Stationary anisotropic covariance families.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;
const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `exp(-½ Σ h_j²)`
    SquaredExponential,
    /// Tensorized exponential, `exp(-Σ h_j)`.
    Exponential,
    Matern32,
    Matern52,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::SquaredExponential,
        Family::Exponential,
        Family::Matern32,
        Family::Matern52,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::SquaredExponential => "squared_exponential",
            Family::Exponential => "exponential",
            Family::Matern32 => "matern32",
            Family::Matern52 => "matern52",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "squared_exponential" | "se" | "gauss" | "gaussian" => Ok(Family::SquaredExponential),
            "exponential" | "exp" => Ok(Family::Exponential),
            "matern32" | "matern3_2" => Ok(Family::Matern32),
            "matern52" | "matern5_2" => Ok(Family::Matern52),
            other => Err(Error::InvalidKernel(format!("unknown covariance family `{other}`"))),
        }
    }
}

/// Covariance family, process variance σ² and one length-scale per input dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: Family,
    pub variance: f64,
    pub lengthscales: Vec<f64>,
}

impl KernelSpec {
    pub fn new(family: Family, variance: f64, lengthscales: Vec<f64>) -> Result<Self> {
        let spec = Self {
            family,
            variance,
            lengthscales,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Same length-scale in every one of `dim` dimensions.
    pub fn isotropic(family: Family, variance: f64, lengthscale: f64, dim: usize) -> Result<Self> {
        Self::new(family, variance, vec![lengthscale; dim])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "variance must be positive, got {}",
                self.variance
            )));
        }
        if self.lengthscales.is_empty() {
            return Err(Error::InvalidKernel("no length-scales".into()));
        }
        if let Some(bad) = self
            .lengthscales
            .iter()
            .find(|t| !(t.is_finite() && **t > 0.0))
        {
            return Err(Error::InvalidKernel(format!(
                "length-scales must be positive, got {bad}"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn with_variance(&self, variance: f64) -> Self {
        Self {
            variance,
            ..self.clone()
        }
    }

    pub fn with_lengthscales(&self, lengthscales: Vec<f64>) -> Self {
        Self {
            lengthscales,
            ..self.clone()
        }
    }

    /// Covariance between two points given as slices; dimensions are not checked.
    #[inline]
    pub(crate) fn k(&self, x: &[f64], y: &[f64]) -> f64 {
        let scaled = x
            .iter()
            .zip(y)
            .zip(&self.lengthscales)
            .map(|((a, b), t)| (a - b).abs() / t);
        let rho = match self.family {
            Family::SquaredExponential => (-0.5 * scaled.map(|h| h * h).sum::<f64>()).exp(),
            Family::Exponential => (-scaled.sum::<f64>()).exp(),
            Family::Matern32 => {
                let mut poly = 1.0;
                let mut s = 0.0;
                for h in scaled {
                    let u = SQRT3 * h;
                    poly *= 1.0 + u;
                    s += u;
                }
                poly * (-s).exp()
            }
            Family::Matern52 => {
                let mut poly = 1.0;
                let mut s = 0.0;
                for h in scaled {
                    let u = SQRT5 * h;
                    poly *= 1.0 + u + u * u / 3.0;
                    s += u;
                }
                poly * (-s).exp()
            }
        };
        self.variance * rho
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_dim(x.len(), "kernel eval")?;
        self.check_dim(y.len(), "kernel eval")?;
        Ok(self.k(x, y))
    }

    pub(crate) fn check_dim(&self, found: usize, context: &'static str) -> Result<()> {
        if found != self.dim() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.dim(),
                found,
            });
        }
        Ok(())
    }

    /// `k(A, B)` for point sets stored as rows.
    pub fn cross_matrix(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let a = Points::from_matrix(a);
        let b = Points::from_matrix(b);
        self.check_dim(a.dim(), "cross_matrix")?;
        self.check_dim(b.dim(), "cross_matrix")?;
        Ok(self.cross(&a, &b))
    }

    pub(crate) fn cross(&self, a: &Points, b: &Points) -> DMatrix<f64> {
        DMatrix::from_fn(a.len(), b.len(), |i, j| self.k(a.row(i), b.row(j)))
    }

    /// Symmetric `k(A, A)`, evaluating each pair once.
    pub(crate) fn gram(&self, a: &Points) -> DMatrix<f64> {
        let n = a.len();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            m[(j, j)] = self.variance;
            for i in (j + 1)..n {
                let v = self.k(a.row(i), a.row(j));
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    /// Column vector `k(A, x)`.
    pub(crate) fn column(&self, a: &Points, x: &[f64]) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_iterator(a.len(), (0..a.len()).map(|i| self.k(a.row(i), x)))
    }
}

/// Row-major point storage used on the hot paths.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
        }
    }

    pub fn from_rows<'a, I>(dim: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut p = Self::new(dim);
        for r in rows {
            p.push(r);
        }
        p
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            data.extend(m.row(i).iter());
        }
        Self {
            dim: m.ncols(),
            data,
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.data)
    }

    pub fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.dim);
        self.data.extend_from_slice(row);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self::from_rows(self.dim, indices.iter().map(|&i| self.row(i)))
    }
}
