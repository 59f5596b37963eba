//! Self-contained fitted models stored as versioned JSON.
//!
//! A bundle holds the kernel, the training data, the partition labels and the
//! aggregation tree, so predictions need nothing else.

use std::path::Path;

use log::info;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::Method;
use crate::config::RunConfig;
use crate::data::{Dataset, Partition};
use crate::error::{Error, Result};
use crate::estimation::{fit_sigma2, ml_grid_start, sgd_fit, SgdResult};
use crate::gp::{FullModel, SubModelBank};
use crate::kernels::KernelSpec;
use crate::metrics::predict_from_layer_one;
use crate::tree::AggregationTree;

pub const BUNDLE_FORMAT: &str = "nested-kriging-bundle";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBundle {
    pub format: String,
    pub version: u32,
    pub kernel: KernelSpec,
    /// Whether `kernel.variance` came from the LOO estimate.
    pub variance_estimated: bool,
    pub inputs: Vec<String>,
    /// Training inputs, one row per point.
    pub x: Vec<Vec<f64>>,
    /// Training responses after centering.
    pub y: Vec<f64>,
    pub center: Option<f64>,
    pub labels: Vec<usize>,
    pub groups: usize,
    pub tree: AggregationTree,
    /// SHA-256 of the training data, see [`Dataset::fingerprint`].
    pub fingerprint: String,
}

/// One prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl ModelBundle {
    pub fn new(kernel: KernelSpec, data: &Dataset, inputs: Vec<String>, partition: &Partition, tree: AggregationTree) -> Result<Self> {
        data.validate()?;
        kernel.validate()?;
        if kernel.dim() != data.dim() || inputs.len() != data.dim() {
            return Err(Error::DimensionMismatch {
                context: "bundle inputs",
                expected: data.dim(),
                found: kernel.dim(),
            });
        }
        if tree.leaf_count() != partition.group_count() || partition.len() != data.len() {
            return Err(Error::InvalidTree("tree, partition and data do not agree".into()));
        }
        Ok(Self {
            format: BUNDLE_FORMAT.into(),
            version: BUNDLE_VERSION,
            kernel,
            variance_estimated: false,
            inputs,
            x: data.x.row_iter().map(|r| r.iter().copied().collect()).collect(),
            y: data.y.iter().copied().collect(),
            center: data.center,
            labels: partition.labels().to_vec(),
            groups: partition.group_count(),
            tree,
            fingerprint: data.fingerprint(),
        })
    }

    /// Groups the data and builds the tree as configured, optionally
    /// estimating lengthscales and variance by leave-one-out.
    pub fn fit(data: &Dataset, inputs: Vec<String>, cfg: &RunConfig) -> Result<(Self, Option<SgdResult>)> {
        let (partition, tree) = cfg.structure(&data.x)?;
        let mut kernel = cfg.kernel.kernel(data.dim())?;
        let mut trace = None;
        let est = &cfg.estimation;
        if est.enabled {
            let mut sgd = est.sgd.clone();
            if sgd.theta0.is_empty() && est.ml_start {
                let t = ml_grid_start(&kernel, &data.x, &data.y, &partition, &est.ml_grid)?;
                info!("sub-model likelihood start: lengthscale {t}");
                sgd.theta0 = vec![t; data.dim()];
            }
            let res = sgd_fit(&kernel, &data.x, &data.y, &partition, &tree, &sgd)?;
            kernel = kernel.with_lengthscales(res.theta.clone());
            trace = Some(res);
        }
        let mut estimated = false;
        if est.enabled && est.estimate_sigma2 {
            let s2 = fit_sigma2(&kernel, &data.x, &data.y, &partition, &tree)?;
            info!("estimated variance {s2}");
            kernel = kernel.with_variance(s2);
            estimated = true;
        }
        let mut bundle = Self::new(kernel, data, inputs, &partition, tree)?;
        bundle.variance_estimated = estimated;
        Ok((bundle, trace))
    }

    pub fn dataset(&self) -> Result<Dataset> {
        let n = self.x.len();
        let dim = self.kernel.dim();
        if self.x.iter().any(|r| r.len() != dim) {
            return Err(Error::Bundle("training rows do not match the kernel dimension".into()));
        }
        let flat: Vec<f64> = self.x.iter().flatten().copied().collect();
        let mut ds = Dataset::new(DMatrix::from_row_slice(n, dim, &flat), DVector::from_column_slice(&self.y))?;
        ds.center = self.center;
        Ok(ds)
    }

    pub fn partition(&self) -> Result<Partition> {
        Partition::from_labels(self.labels.clone(), self.groups)
    }

    pub fn bank(&self) -> Result<SubModelBank> {
        SubModelBank::from_dataset(&self.kernel, &self.dataset()?, &self.partition()?)
    }

    fn check(&self) -> Result<()> {
        if self.format != BUNDLE_FORMAT {
            return Err(Error::Bundle(format!("not a model bundle (format `{}`)", self.format)));
        }
        if self.version != BUNDLE_VERSION {
            return Err(Error::Bundle(format!("unsupported bundle version {}", self.version)));
        }
        self.kernel.validate()?;
        let data = self.dataset()?;
        if data.fingerprint() != self.fingerprint {
            return Err(Error::Bundle("training data does not match the stored fingerprint".into()));
        }
        if self.labels.len() != data.len() || self.tree.leaf_count() != self.groups {
            return Err(Error::Bundle("labels or tree do not match the training data".into()));
        }
        self.partition()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let b: Self = serde_json::from_str(text).map_err(|e| Error::Bundle(e.to_string()))?;
        b.check()?;
        Ok(b)
    }

    /// Writes the bundle; an existing file is only replaced with `force`.
    pub fn save(&self, path: impl AsRef<Path>, force: bool) -> Result<()> {
        let path = path.as_ref();
        if path.exists() && !force {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::AlreadyExists,
                format!("{} exists; pass --force to overwrite", path.display()),
            )));
        }
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path.as_ref())?)
    }

    /// Predictions at the rows of `xq`, un-centered. The full model is refused above `full_cap` points.
    pub fn predict(&self, method: Method, xq: &DMatrix<f64>, full_cap: usize) -> Result<Vec<Prediction>> {
        self.kernel.check_dim(xq.ncols(), "query points")?;
        let center = self.center.unwrap_or(0.0);
        let out: Vec<(f64, f64)> = if method == Method::Full {
            if self.x.len() > full_cap {
                return Err(Error::CapExceeded { n: self.x.len(), cap: full_cap });
            }
            let data = self.dataset()?;
            let (m, v) = FullModel::fit(&self.kernel, &data.x, &data.y)?.predict(xq)?;
            m.iter().copied().zip(v.iter().copied()).collect()
        } else {
            let bank = self.bank()?;
            bank.predict_batch(xq)?
                .par_iter()
                .map(|l1| predict_from_layer_one(method, l1, &self.tree))
                .collect::<Result<_>>()?
        };
        Ok(out
            .into_iter()
            .map(|(m, v)| Prediction { mean: m + center, variance: v })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::tests::example_one;

    fn example_bundle() -> ModelBundle {
        let (k, x, y, part) = example_one();
        let data = Dataset::new(x, y).unwrap();
        ModelBundle::new(k, &data, vec!["x".into()], &part, AggregationTree::two_layer(2).unwrap()).unwrap()
    }

    #[test]
    fn json_round_trip_keeps_predictions() {
        let b = example_bundle();
        let back = ModelBundle::from_json(&b.to_json()).unwrap();
        assert_eq!(back, b);
        let q = DMatrix::from_column_slice(3, 1, &[0.1, 0.6, 0.95]);
        let (k, x, y, part) = example_one();
        let bank = SubModelBank::new(&k, &x, &y, &part).unwrap();
        for (p, l1) in back.predict(Method::Nested, &q, 10).unwrap().iter().zip(bank.predict_batch(&q).unwrap()) {
            let a = l1.aggregate().unwrap();
            assert_eq!((p.mean, p.variance), (a.mean, a.variance));
        }
    }

    #[test]
    fn tampering_is_detected() {
        let b = example_bundle();
        let mut t = b.clone();
        t.y[0] += 1e-9;
        assert!(matches!(ModelBundle::from_json(&t.to_json()), Err(Error::Bundle(_))));
        let mut t = b.clone();
        t.version = 99;
        assert!(ModelBundle::from_json(&t.to_json()).is_err());
        assert!(ModelBundle::from_json(&b.to_json().replace("\"groups\"", "\"extra\": 1, \"groups\"")).is_err());
    }

    #[test]
    fn cap_and_overwrite() {
        let b = example_bundle();
        let q = DMatrix::from_column_slice(1, 1, &[0.3]);
        assert!(matches!(b.predict(Method::Full, &q, 4), Err(Error::CapExceeded { n: 5, cap: 4 })));
        assert!(b.predict(Method::Full, &q, 5).is_ok());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        b.save(&path, false).unwrap();
        assert!(b.save(&path, false).is_err());
        b.save(&path, true).unwrap();
        assert_eq!(ModelBundle::load(&path).unwrap(), b);
    }

    #[test]
    fn centered_data_predicts_in_original_units() {
        let (k, x, y, part) = example_one();
        let data = Dataset::new(x.clone(), y.add_scalar(10.0)).unwrap().centered();
        let b = ModelBundle::new(k, &data, vec!["x".into()], &part, AggregationTree::two_layer(2).unwrap()).unwrap();
        let p = b.predict(Method::Nested, &x, 10).unwrap();
        for i in 0..5 {
            assert!((p[i].mean - (y[i] + 10.0)).abs() < 1e-8);
        }
    }
}
