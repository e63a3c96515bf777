//! Privacy accounting, sensitivity models and exact integer noise.

mod budget;
pub mod rng;
mod sampler;

use thiserror::Error;

pub use budget::{
    eps_from_rho, per_level_sigma2, rho_from_eps_delta, stability_threshold, unbounded_sigma2,
    BudgetSource, LevelAccountant, PrivacyBudget, PrivacyType, SensitivityModel,
};
pub use sampler::{
    sample_discrete_gaussian, sample_discrete_laplace, DiscreteGaussian, DiscreteLaplace,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DpError {
    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("rho must be positive and finite, got {0}")]
    InvalidRho(f64),
    #[error("variance must be in (0, 2^36], got {0}")]
    InvalidVariance(f64),
    #[error("scale must be in (0, 2^36], got {0}")]
    InvalidScale(f64),
    #[error("per-user trip bound m must be at least 1")]
    InvalidContribution,
    #[error("tree depth must be at least 1")]
    InvalidDepth,
    #[error("sensitivity model {0:?} is not supported by this mechanism")]
    UnsupportedSensitivity(SensitivityModel),
    #[error("privacy budget exhausted")]
    BudgetExhausted,
}
