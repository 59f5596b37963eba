//! Nested Kriging: aggregation of Gaussian-process sub-models over a tree.
//!
//! The crate builds Kriging sub-models on groups of design points
//! ([`gp::SubModelBank`]), combines them with the best linear unbiased
//! weights ([`aggregation`]), nests such combinations along an aggregation
//! tree ([`tree`]), and provides an exact full-model reference, literature
//! baselines, leave-one-out parameter estimation and benchmark harnesses.

pub mod aggregation;
pub mod baselines;
pub mod bundle;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod estimation;
pub mod gp;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod tree;

pub use aggregation::{aggregate, AggregatedPrediction};
pub use baselines::{fuse, BaselineResult, Method};
pub use bundle::ModelBundle;
pub use config::RunConfig;
pub use data::{Dataset, Partition};
pub use error::{Error, Result};
pub use gp::{FullModel, LayerOne, SubModelBank};
pub use kernels::{Family, KernelSpec, Points};
pub use tree::{nested_predict, plan_tree, AggregationTree, NestedPrediction, PlanMode};
