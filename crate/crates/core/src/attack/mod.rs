//! The attacker's side: detection of blocks that must contain an occupancy
//! violation, likelihood-ranked reconstructions and solution variability.

mod detect;
mod io;
mod reconstruct;
mod solvar;
mod space;

pub use detect::{classify_block, detect_violation_block, Detection, Verdict};
pub use io::{format_reconstructions, format_solvar, parse_reconstructions, parse_solvar};
pub use reconstruct::{
    enumerate_program, mle_program, reconstruct_mle, reconstruct_soft, reconstruct_topt, soft_fit, soft_program,
    AttackProgram, Fit, Likelihood, Reconstruction, TopT, TopTOptions,
};
pub use solvar::{cell_map, solution_variability, AttributePreset, HouseholdSubset, SolvarReport};
pub use space::{build_block_program, config_label, published_workload, ConfigurationSpace, SpaceOptions};
