// Negated comparisons are how this crate rejects NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod data;
pub mod error;
pub mod inference;
pub mod models;
pub mod partition;
pub mod predictive;
pub mod rng;
pub mod simstudy;
pub mod stats;
pub mod weights;

pub use error::{Error, Result};
pub use rng::{Rng, RngStream};

pub use basis::{Basis, BasisKind, BasisSpec};
pub use data::{Dataset, Scaling};
pub use inference::{fit, fit_with_stop, Chain, ChainMeta, Draw, McmcConfig, Sampler};
pub use models::{ModelFamily, ModelOptions, ModelSpec, Priors};
pub use partition::{binder_point_estimate, posterior_similarity, PartitionEstimate};
pub use predictive::{predictive_summary, PredictiveSummary};
pub use simstudy::{Example, MetricsReport};
