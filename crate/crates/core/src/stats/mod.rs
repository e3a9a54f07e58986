//! Statistics of event logs and the Monte Carlo harnesses built on them.

mod decay;
mod harness;
mod ks;
mod statistic;

use thiserror::Error;

use crate::branching::BranchingError;
use crate::model::ModelError;
use crate::simulate::SimError;
use crate::spectrum::SpectrumError;

pub use decay::{loglog_slope, mixing_decay_diagnostic, DecayConfig, DecayReport, DecayRow};
pub use harness::{check_hypotheses, clt_harness, HarnessConfig, HarnessReport, ReplicateRecord};
pub use ks::{kolmogorov_quantile, kolmogorov_sf, ks_one_sample, ks_two_sample, normal_cdf, KsResult};
pub use statistic::{
    path_sample, statistic_st, time_change, validate_grid, Centered, PathSample, TimeChange, TIME_CHANGE_STEPS,
};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Branching(#[from] BranchingError),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("degenerate statistic: {0}")]
    Degenerate(String),
    #[error("variance curve decreases at t = {t}: {value} after {previous}")]
    NonMonotone { t: f64, previous: f64, value: f64 },
}

impl StatsError {
    pub fn is_hypothesis(&self) -> bool {
        match self {
            StatsError::Model(e) => e.is_hypothesis(),
            StatsError::Simulation(e) => e.is_hypothesis(),
            StatsError::Spectrum(e) => e.is_hypothesis(),
            StatsError::Branching(e) => e.is_hypothesis(),
            StatsError::Hypothesis(_) => true,
            _ => false,
        }
    }
}
