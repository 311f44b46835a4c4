//! A desk-scale laboratory for reconstruction and re-identification attacks on
//! linked block-level household statistics (census-style household tables joined
//! with subsidized-housing property statistics).
//!
//! The crate is organised the way the experiment flows:
//!
//! * [`model`] generates a synthetic ground-truth universe of households.
//! * [`workload`] evaluates the published counting queries on each block.
//! * [`mechanisms`] applies a disclosure-avoidance condition: identity,
//!   targeted swapping, or a discrete-Gaussian mechanism with consistency
//!   post-processing.
//! * [`ipcore`] is the integer-program engine (branch and bound over a
//!   bounded simplex relaxation, top-t enumeration, L1 maximisation).
//! * [`attack`] builds block programs and runs detection, likelihood
//!   reconstruction, soft reconstruction and solution variability.
//! * [`evaluate`] scores re-identification against the ground truth.
//! * [`pipeline`] ties the stages together and persists every artifact.

pub mod attack;
pub mod evaluate;
pub mod ipcore;
pub mod mechanisms;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod workload;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("no privacy budget allocation for query `{0}`")]
    MissingAllocation(String),
    #[error("query `{0}` is not covered by any strategy query")]
    UncoveredQuery(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage { stage, source: Box::new(other) },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
