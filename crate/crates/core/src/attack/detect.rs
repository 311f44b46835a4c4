use serde::{Deserialize, Serialize};

use super::space::{build_block_program, ConfigurationSpace};
use crate::ipcore::{solve, Limits, Status};
use crate::workload::BlockStatistics;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    /// Every reconstruction consistent with the statistics contains a violation.
    Violation,
    /// Some consistent reconstruction has no violation.
    NoViolation,
    /// A solver limit stopped the search before a proof either way.
    Undetermined,
    /// No reconstruction is consistent with the statistics at all, so in
    /// particular none is free of violations. Flagged, but not a proof about
    /// the underlying households.
    Inconsistent,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::Violation => "violation",
            Verdict::NoViolation => "no_violation",
            Verdict::Undetermined => "undetermined",
            Verdict::Inconsistent => "inconsistent",
        }
    }

    pub fn is_flagged(self) -> bool {
        matches!(self, Verdict::Violation | Verdict::Inconsistent)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub block_id: String,
    pub verdict: Verdict,
    pub nodes: u64,
}

/// Solve the occupancy-constrained program, and when it is infeasible check
/// whether the statistics admit any reconstruction without the rule.
pub fn classify_block(stats: &BlockStatistics, space: &ConfigurationSpace, limits: &Limits) -> Result<Detection, Error> {
    let forbid = solve(&build_block_program(stats, space, true)?, limits)?;
    let mut nodes = forbid.nodes;
    let verdict = match forbid.status {
        Status::Optimal | Status::Feasible => Verdict::NoViolation,
        Status::BoundReached => Verdict::Undetermined,
        Status::Infeasible => {
            let base = solve(&build_block_program(stats, space, false)?, limits)?;
            nodes += base.nodes;
            match base.status {
                Status::Optimal | Status::Feasible => Verdict::Violation,
                Status::Infeasible => Verdict::Inconsistent,
                Status::BoundReached => Verdict::Undetermined,
            }
        }
    };
    if verdict == Verdict::Undetermined {
        log::info!("block {}: detection undetermined after {nodes} nodes", stats.block_id);
    }
    Ok(Detection { block_id: stats.block_id.clone(), verdict, nodes })
}

/// True when no reconstruction without a violation exists. Undetermined blocks are not flagged.
pub fn detect_violation_block(
    stats: &BlockStatistics,
    space: &ConfigurationSpace,
    limits: &Limits,
) -> Result<bool, Error> {
    Ok(classify_block(stats, space, limits)?.verdict.is_flagged())
}
