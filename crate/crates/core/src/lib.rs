//! Heteroscedastic Gaussian-process calibration of a bounded proxy against a
//! scalar covariate, with Bayesian outlier labels and MCMC inversion.
//!
//! Internal modules operate on standardized values only; [`io::Standardization`]
//! converts at the boundary.

pub mod cli;
pub mod error;
pub mod gp;
pub mod hetvar;
pub mod inversion;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod outliers;
pub mod trainer;
pub mod tuning;

pub use error::{Error, ErrorKind, Result};
pub use gp::{fit_posterior, log_marginal_likelihood, TrainedPosterior};
pub use hetvar::{knn_bandwidth, lambda_eval, select_k_loocv, KernelKind, VarianceModel};
pub use inversion::{ChainConfig, PosteriorSummary, PriorSpec};
pub use io::Standardization;
pub use kernels::{feature_map, gram_matrix, kernel_eval, FeatureMap, FeatureVector, KernelParams};
pub use outliers::{posterior_prob_outlier, sample_labels, OutlierConfig, OutlierState};
pub use trainer::{train, IterationRecord, ModelArtifact, TrainLoopConfig};
pub use tuning::{optimize_hyperparams, TuningConfig};
