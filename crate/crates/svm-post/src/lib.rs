//! Multiclass RBF-kernel SVM refinement stage: an SMO dual solver with
//! per-class balanced weighting, one-vs-one vote prediction, PCA utilities
//! for two-dimensional decision-region export, and binary model
//! persistence.

mod io;
mod kernel;
mod multiclass;
mod pca;
mod region;
mod smo;

pub use io::{decode_model, encode_model, load_model, save_model, FORMAT_VERSION, MAGIC};
pub use kernel::{rbf_kernel, GammaPolicy, Kernel};
pub use multiclass::{
    compute_class_weights, train_multiclass, PairMachine, SvmModel, VotePrediction,
};
pub use pca::{pca_fit, symmetric_eigenvalues, PcaModel};
pub use region::{decision_region_grid, DecisionRegion};
pub use smo::{max_kkt_violation, smo_train_binary, BinarySvm, TrainedBinary};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("degenerate problem: {0}")]
    Degenerate(String),
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Solver configuration. Defaults follow the production setup: C = 1,
/// scale gamma, balanced class weighting, KKT tolerance 1e-3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub c: f64,
    pub gamma: GammaPolicy,
    pub balanced: bool,
    pub tolerance: f64,
    /// Upper bound on accepted pair updates.
    pub max_passes: usize,
    /// Record the dual objective after every accepted update (test
    /// instrumentation; off by default).
    pub record_objective: bool,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: GammaPolicy::Scale,
            balanced: true,
            tolerance: 1e-3,
            max_passes: 10_000,
            record_objective: false,
        }
    }
}
