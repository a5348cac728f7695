//! Sampling primitives, special functions and conjugate updates.

pub mod conjugate;
pub mod linalg;
pub mod polya_gamma;
pub mod sample;
pub mod special;
pub mod summary;

pub use conjugate::{
    KernelPrior, KernelUpdater, MatrixForm, MultivariateT, MvnStats, NigParams, NiwParams, NormalGammaPrior,
    RegressionStats, StudentT,
};
pub use polya_gamma::{pg1_mean, sample_pg, sample_pg1};
pub use sample::{
    sample_beta, sample_categorical, sample_categorical_log, sample_dirichlet, sample_gamma, sample_mvn,
    sample_mvn_canonical, sample_wishart,
};
