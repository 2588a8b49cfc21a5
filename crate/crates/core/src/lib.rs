//! Gated perceptron: a perceptron with one extra input equal to the product
//! of all its inputs.
//!
//! - [`model`]: gated/plain perceptron, softmax model, trainers.
//! - [`data`]: CSV loading for Iris, WDBC and PIMA, imputation,
//!   normalization, product feature, seeded splits.
//! - [`metrics`]: confusion counts, precision/recall/F1, ROC/AUC, BCE.
//! - [`regions`]: boundary curves and sign-region counting on a grid.
//! - [`cli`]: experiment pipelines and the `gated` command line.

pub mod cli;
pub mod data;
pub mod metrics;
pub mod model;
pub mod regions;

pub use data::{Dataset, DatasetSchema, SchemaName, SplitSpec};
pub use metrics::{ConfusionCounts, MetricReport, RocCurve};
pub use model::{GatedModel, LossTrace, SoftmaxModel, TrainConfig};
pub use regions::{RegionRaster, Window};
