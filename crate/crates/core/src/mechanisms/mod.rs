//! Disclosure-avoidance conditions applied before publication.

mod budget;
mod dgauss;
mod postprocess;
mod swap;

pub use budget::{
    allocate_budget, is_noised, strategy_variable, PrivacyBudget, StrategyCatalogue, StrategyQuery, DAS_RHO_HOUSEHOLD,
    DAS_RHO_PERSON,
};
pub use dgauss::{discrete_gaussian, sample_discrete_gaussian};
pub use postprocess::{apply_dp, largest_remainder, post_process};
pub use swap::{swap, SwapConfig, SwapKey, SwapOutcome, DEFAULT_TIERS};
