//! Run configuration, read from TOML. Every key has a default and unknown
//! keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::Method;
use crate::data::{partition_consecutive, partition_kmeans, partition_random, CsvSchema, Partition};
use crate::error::{Error, Result};
use crate::estimation::SgdConfig;
use crate::kernels::{Family, KernelSpec};
use crate::metrics::{BenchmarkSettings, ConsistencySettings};
use crate::tree::{plan_tree, AggregationTree, PlanMode};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub kernel: KernelConfig,
    pub data: CsvSchema,
    pub partition: PartitionConfig,
    pub tree: TreeConfig,
    pub estimation: EstimationConfig,
    pub predict: PredictConfig,
    pub simulate: SimulateConfig,
    pub benchmark: BenchmarkConfig,
    pub consistency: ConsistencyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub family: Family,
    pub variance: f64,
    /// One value per input dimension, or a single value used for all of them.
    pub lengthscales: Vec<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            family: Family::Matern52,
            variance: 1.0,
            lengthscales: vec![0.2],
        }
    }
}

impl KernelConfig {
    pub fn kernel(&self, dim: usize) -> Result<KernelSpec> {
        let ls = match self.lengthscales.len() {
            1 => vec![self.lengthscales[0]; dim],
            _ => self.lengthscales.clone(),
        };
        KernelSpec::new(self.family, self.variance, ls)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    #[default]
    Kmeans,
    Random,
    /// Sorted along the first input.
    Consecutive,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub mode: PartitionMode,
    /// Number of sub-models; unset means the tree planner decides.
    pub groups: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeMode {
    /// One root over all sub-models, `p = round(√n)` unless set.
    Flat,
    #[default]
    Sqrt,
    Equilibrated,
    Optimal,
    /// Child lists given in `layers`.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeConfig {
    pub mode: TreeMode,
    /// Height counting the sub-model layer, for planned trees.
    pub height: usize,
    /// For `explicit`: `layers[0]` lists the children of each layer-2 node, and so on.
    pub layers: Vec<Vec<Vec<usize>>>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            mode: TreeMode::Sqrt,
            height: 2,
            layers: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    pub enabled: bool,
    /// Start the descent from the best isotropic lengthscale of `ml_grid`
    /// under the sub-model likelihood instead of `kernel.lengthscales`.
    pub ml_start: bool,
    pub ml_grid: Vec<f64>,
    pub estimate_sigma2: bool,
    pub sgd: SgdConfig,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            ml_start: true,
            ml_grid: (0..41).map(|i| 10f64.powf(-3.0 + 4.0 * i as f64 / 40.0)).collect(),
            estimate_sigma2: true,
            sgd: SgdConfig {
                log_criterion: true,
                ..SgdConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub method: Method,
    /// Largest training set the full model accepts.
    pub full_cap: usize,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            method: Method::Nested,
            full_cap: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Points of the regular grid on `[0,1]`.
    pub grid: usize,
    pub paths: usize,
    /// Uniform design points sampled jointly with the grid; 0 for none.
    pub design: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            grid: 101,
            paths: 1,
            design: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub replications: usize,
    pub include_full: bool,
    pub scenario: BenchmarkSettings,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            replications: 50,
            include_full: false,
            scenario: BenchmarkSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsistencyConfig {
    pub ns: Vec<usize>,
    pub scenario: ConsistencySettings,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self {
            ns: vec![50, 100, 200, 400],
            scenario: ConsistencySettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path.as_ref())?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel.lengthscales.is_empty() {
            return Err(Error::Config("kernel.lengthscales must not be empty".into()));
        }
        if self.tree.height < 2 {
            return Err(Error::Config(format!("tree.height must be at least 2, got {}", self.tree.height)));
        }
        if self.tree.mode == TreeMode::Explicit && self.tree.layers.is_empty() {
            return Err(Error::Config("tree.mode = \"explicit\" needs tree.layers".into()));
        }
        self.estimation.sgd.validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The configuration as `#` comment lines, for output headers.
    pub fn echo(&self) -> String {
        self.to_toml()
            .lines()
            .map(|l| if l.is_empty() { "#\n".to_string() } else { format!("# {l}\n") })
            .collect()
    }

    /// Sub-model grouping and aggregation tree for `x`.
    pub fn structure(&self, x: &nalgebra::DMatrix<f64>) -> Result<(Partition, AggregationTree)> {
        let n = x.nrows();
        let plan_mode = match self.tree.mode {
            TreeMode::Sqrt => Some(PlanMode::TwoLayerSqrt),
            TreeMode::Equilibrated => Some(PlanMode::Equilibrated(self.tree.height)),
            TreeMode::Optimal => Some(PlanMode::Optimal(self.tree.height)),
            TreeMode::Flat | TreeMode::Explicit => None,
        };
        let plan = plan_mode.map(|m| plan_tree(n, m)).transpose()?;
        let groups = self
            .partition
            .groups
            .or(plan.as_ref().map(|p| p.groups))
            .unwrap_or_else(|| ((n as f64).sqrt().round() as usize).max(1))
            .min(n);
        let partition = match self.partition.mode {
            PartitionMode::Kmeans => partition_kmeans(x, groups, self.seed)?,
            PartitionMode::Random => partition_random(n, groups, self.seed)?,
            PartitionMode::Consecutive => partition_consecutive(x, groups)?,
        };
        let tree = match (&plan, self.tree.mode) {
            (_, TreeMode::Explicit) => AggregationTree::from_layers(groups, self.tree.layers.clone())?,
            (Some(p), _) => {
                let counts = &p.child_counts;
                AggregationTree::regular(groups, &counts[1..counts.len() - 1])?
            }
            (None, _) => AggregationTree::two_layer(groups)?,
        };
        Ok((partition, tree))
    }
}
