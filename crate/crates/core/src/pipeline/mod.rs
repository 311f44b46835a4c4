//! End-to-end runs: configuration, stages, persisted artifacts and figures.

mod artifacts;
mod config;
mod plots;
mod run;

pub use artifacts::*;
pub use config::{
    Allocation, AttackOptions, DpConfig, MechanismConfig, ScenarioConfig, SweepScenario, SweepSpec,
    CONFIG_SCHEMA_VERSION,
};
pub use plots::emit_plots;
pub use run::{
    attack, attack_from, evaluate_attack, evaluate_from, format_comparison, generate_into, publish, publish_from,
    report_dir, run, run_dir, run_in, sweep, AttackArtifacts, Published,
};
