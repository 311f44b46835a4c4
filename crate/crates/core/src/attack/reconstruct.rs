use serde::{Deserialize, Serialize};

use super::space::{build_block_program, ConfigurationSpace};
use crate::ipcore::{enumerate_top, solve, Constraint, IntegerProgram, Limits, RowSense, Solution, Status};
use crate::model::{EmpiricalDistribution, HouseholdRecord, ViolationRule};
use crate::workload::{BlockStatistics, N_SUBSIDIZED_ID, N_TOTAL_ID};
use crate::Error;

/// A reconstructed block: configuration counts, zero counts omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub block_id: String,
    pub counts: Vec<(HouseholdRecord, i64)>,
    /// Negative log-likelihood under the prior (0 without a prior).
    pub objective: f64,
    /// Query-error penalty of soft reconstructions; 0 otherwise.
    pub penalty: f64,
    /// Proved optimal among the solutions not yet returned.
    pub exact: bool,
}

impl Reconstruction {
    pub fn n_total(&self) -> i64 {
        self.counts.iter().map(|(_, n)| n).sum()
    }

    pub fn n_subsidized(&self) -> i64 {
        self.counts.iter().filter(|(h, _)| h.subsidized).map(|(_, n)| n).sum()
    }

    pub fn violating(&self, rule: &ViolationRule) -> Vec<(HouseholdRecord, i64)> {
        self.counts.iter().filter(|(h, _)| rule.is_violation(h)).copied().collect()
    }

    pub fn households(&self) -> impl Iterator<Item = &HouseholdRecord> {
        self.counts.iter().flat_map(|(h, n)| std::iter::repeat(h).take(*n as usize))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Fit {
    Reconstructed(Reconstruction),
    Infeasible,
    Undetermined,
}

impl Fit {
    pub fn reconstruction(&self) -> Option<&Reconstruction> {
        match self {
            Fit::Reconstructed(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopTOptions {
    pub t: usize,
    /// Fewest reconstructions kept when the node budget runs out.
    pub t_floor: usize,
    /// Total branch-and-bound nodes allowed across one enumeration.
    pub node_budget: Option<u64>,
}

impl Default for TopTOptions {
    fn default() -> Self {
        TopTOptions { t: 100, t_floor: 10, node_budget: Some(3_000) }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TopT {
    pub reconstructions: Vec<Reconstruction>,
    /// A limit ended the enumeration before `t` solutions or exhaustion.
    pub truncated: bool,
}

/// Soft reconstructions trade log-likelihood against squared query error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Likelihood {
    Prior,
    Zero,
}

/// A block program together with the configuration space of its first variables.
#[derive(Debug, Clone)]
pub struct AttackProgram {
    pub ip: IntegerProgram,
    pub space: ConfigurationSpace,
    /// Likelihood cost per configuration.
    pub likelihood: Vec<f64>,
    /// Variables holding the last, unbounded-width penalty segment of each row.
    tail_segments: Vec<usize>,
}

impl AttackProgram {
    fn reconstruction(&self, block_id: &str, s: &Solution) -> Reconstruction {
        let counts: Vec<(HouseholdRecord, i64)> = self
            .space
            .configs
            .iter()
            .zip(&s.counts)
            .filter(|(_, n)| **n > 0)
            .map(|(h, n)| (*h, *n))
            .collect();
        let objective: f64 = self.likelihood.iter().zip(&s.counts).map(|(c, n)| c * *n as f64).sum();
        Reconstruction {
            block_id: block_id.to_string(),
            counts,
            objective,
            penalty: (s.objective_value - objective).max(0.0),
            exact: s.status == Status::Optimal,
        }
    }
}

fn neg_log_prior(space: &ConfigurationSpace, prior: &EmpiricalDistribution, state: &str) -> Vec<f64> {
    space.configs.iter().map(|h| -prior.frequency(state, &h.sf1_part()).ln()).collect()
}

/// The hard program over the prior-supported space with cost `-ln p(census part)`.
pub fn mle_program(
    stats: &BlockStatistics,
    space: &ConfigurationSpace,
    prior: &EmpiricalDistribution,
) -> Result<AttackProgram, Error> {
    let space = space.support_restricted(prior, &stats.geo_state)?;
    let mut ip = build_block_program(stats, &space, false)?;
    let likelihood = neg_log_prior(&space, prior, &stats.geo_state);
    ip.set_objective(likelihood.clone());
    Ok(AttackProgram { ip, space, likelihood, tail_segments: Vec::new() })
}

fn fit(prog: &AttackProgram, block_id: &str, limits: &Limits) -> Result<(Fit, Solution), Error> {
    let s = solve(&prog.ip, limits)?;
    let f = match s.status {
        Status::Optimal | Status::Feasible => Fit::Reconstructed(prog.reconstruction(block_id, &s)),
        Status::Infeasible => Fit::Infeasible,
        Status::BoundReached => Fit::Undetermined,
    };
    Ok((f, s))
}

/// Most likely reconstruction under the empirical prior.
pub fn reconstruct_mle(
    stats: &BlockStatistics,
    space: &ConfigurationSpace,
    prior: &EmpiricalDistribution,
    limits: &Limits,
) -> Result<Fit, Error> {
    Ok(fit(&mle_program(stats, space, prior)?, &stats.block_id, limits)?.0)
}

/// The `opts.t` best solutions of `prog`. Under a node budget the search may
/// stop early; it is then repeated without the budget for `t_floor` solutions
/// if fewer were found.
pub fn enumerate_program(prog: &AttackProgram, block_id: &str, opts: &TopTOptions, limits: &Limits) -> Result<TopT, Error> {
    let budgeted = Limits { max_nodes: opts.node_budget.map_or(limits.max_nodes, |b| b.min(limits.max_nodes)), ..*limits };
    let mut e = enumerate_top(&prog.ip, opts.t, &budgeted)?;
    let floor = opts.t_floor.min(opts.t);
    if e.truncated && budgeted.max_nodes < limits.max_nodes && e.solutions.len() < floor {
        e = enumerate_top(&prog.ip, floor, limits)?;
    }
    if e.truncated {
        log::info!("block {block_id}: enumeration stopped after {} reconstructions", e.solutions.len());
    }
    Ok(TopT {
        reconstructions: e.solutions.iter().map(|s| prog.reconstruction(block_id, s)).collect(),
        truncated: e.truncated,
    })
}

/// The `t` most likely reconstructions, in non-decreasing negative log-likelihood.
pub fn reconstruct_topt(
    stats: &BlockStatistics,
    space: &ConfigurationSpace,
    prior: &EmpiricalDistribution,
    opts: &TopTOptions,
    limits: &Limits,
) -> Result<TopT, Error> {
    enumerate_program(&mle_program(stats, space, prior)?, &stats.block_id, opts, limits)
}

/// Statistic rows become convex piecewise-linear penalties `lambda * dev^2` over
/// integer deviations, with `segments` unit pieces before a final open piece.
/// Equality rows are penalised in both directions, lower bounds only on shortfall.
pub fn soft_program(
    stats: &BlockStatistics,
    space: &ConfigurationSpace,
    likelihood: Likelihood,
    prior: &EmpiricalDistribution,
    lambda: f64,
    segments: usize,
) -> Result<AttackProgram, Error> {
    if !(lambda >= 0.0) || segments == 0 {
        return Err(Error::Config("soft reconstruction needs lambda >= 0 and at least one segment".into()));
    }
    let space = match likelihood {
        Likelihood::Prior => space.support_restricted(prior, &stats.geo_state)?,
        Likelihood::Zero => space.clone(),
    };
    let hard = build_block_program(stats, &space, false)?;
    let likelihood = match likelihood {
        Likelihood::Prior => neg_log_prior(&space, prior, &stats.geo_state),
        Likelihood::Zero => vec![0.0; space.len()],
    };
    let mut ip = IntegerProgram::new();
    for j in 0..hard.n_vars() {
        ip.add_var(hard.var_names[j].clone(), hard.lower[j], hard.upper[j]);
    }
    let mut cost = likelihood.clone();
    let mut tail_segments = Vec::new();
    for row in &hard.constraints {
        if row.name == N_TOTAL_ID || row.name == N_SUBSIDIZED_ID {
            ip.add_constraint(row.clone());
            continue;
        }
        let max_act: i64 = row.coeffs.iter().map(|(g, a)| a * hard.upper[*g]).sum();
        let mut coeffs = row.coeffs.clone();
        let mut sides = vec![(1i64, row.rhs.max(0))];
        if row.sense == RowSense::Eq {
            sides.push((-1, (max_act - row.rhs).max(0)));
        }
        for (sign, total) in sides {
            for k in 1..=segments as i64 {
                let width = if k < segments as i64 { 1 } else { total - (k - 1) };
                if width <= 0 {
                    break;
                }
                let v = ip.add_var(format!("{}_dev{}_{k}", row.name, if sign > 0 { "m" } else { "p" }), 0, width);
                cost.push(lambda * (2 * k - 1) as f64);
                coeffs.push((v, sign));
                if k == segments as i64 {
                    tail_segments.push(v);
                }
            }
        }
        ip.add_constraint(Constraint::new(row.name.clone(), coeffs, row.sense, row.rhs));
    }
    ip.set_objective(cost);
    ip.identity_vars = Some(space.len());
    Ok(AttackProgram { ip, space, likelihood, tail_segments })
}

/// Solve the soft program, doubling the number of unit segments until no
/// deviation reaches the open final piece, so the penalty is exactly quadratic.
pub fn soft_fit(
    stats: &BlockStatistics,
    space: &ConfigurationSpace,
    likelihood: Likelihood,
    prior: &EmpiricalDistribution,
    lambda: f64,
    limits: &Limits,
) -> Result<(Fit, AttackProgram), Error> {
    let mut segments = 4;
    loop {
        let prog = soft_program(stats, space, likelihood, prior, lambda, segments)?;
        let (f, s) = fit(&prog, &stats.block_id, limits)?;
        let open = s.status.has_solution() && prog.tail_segments.iter().any(|&v| s.counts[v] > 1);
        if !open {
            return Ok((f, prog));
        }
        segments *= 2;
    }
}

pub fn reconstruct_soft(
    stats: &BlockStatistics,
    space: &ConfigurationSpace,
    likelihood: Likelihood,
    prior: &EmpiricalDistribution,
    lambda: f64,
    limits: &Limits,
) -> Result<Fit, Error> {
    Ok(soft_fit(stats, space, likelihood, prior, lambda, limits)?.0)
}
