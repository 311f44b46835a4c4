//! Integer programs over household-configuration counts.
//!
//! Variables are bounded non-negative integer counts, constraints are linear with
//! integer coefficients, and the objective (if any) is a real cost vector. The
//! engine is depth-first branch and bound over a bounded-simplex relaxation with
//! bound propagation at every node. Small relaxations are solved in exact
//! rational arithmetic; larger ones in double precision, where a relaxation is
//! only declared infeasible when its infeasibility exceeds a safety margin.

mod bnb;
mod l1;
pub mod lp;

pub use bnb::{enumerate_top, solve, Enumeration};
pub use l1::{maximize_l1, L1Result};

use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowSense {
    Eq,
    Ge,
    Le,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(usize, i64)>,
    pub sense: RowSense,
    pub rhs: i64,
}

impl Constraint {
    pub fn new(name: impl Into<String>, coeffs: Vec<(usize, i64)>, sense: RowSense, rhs: i64) -> Self {
        let mut coeffs = coeffs;
        coeffs.sort_by_key(|(j, _)| *j);
        coeffs.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        coeffs.retain(|(_, a)| *a != 0);
        Constraint { name: name.into(), coeffs, sense, rhs }
    }

    pub fn activity(&self, x: &[i64]) -> i128 {
        self.coeffs.iter().map(|(j, a)| *a as i128 * x[*j] as i128).sum()
    }

    pub fn satisfied(&self, x: &[i64]) -> bool {
        let act = self.activity(x);
        let rhs = self.rhs as i128;
        match self.sense {
            RowSense::Eq => act == rhs,
            RowSense::Ge => act >= rhs,
            RowSense::Le => act <= rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegerProgram {
    pub var_names: Vec<String>,
    pub lower: Vec<i64>,
    pub upper: Vec<i64>,
    pub constraints: Vec<Constraint>,
    /// Minimised; `None` for pure feasibility problems.
    pub objective: Option<Vec<f64>>,
    /// Count vectors that must not be returned.
    pub exclusions: Vec<Vec<i64>>,
    /// When set, solutions are told apart (and exclusions matched) by their
    /// first `k` variables only; the rest are auxiliary.
    pub identity_vars: Option<usize>,
}

impl IntegerProgram {
    pub fn new() -> Self {
        IntegerProgram {
            var_names: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            constraints: Vec::new(),
            objective: None,
            exclusions: Vec::new(),
            identity_vars: None,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: i64, upper: i64) -> usize {
        self.var_names.push(name.into());
        self.lower.push(lower);
        self.upper.push(upper);
        if let Some(obj) = &mut self.objective {
            obj.push(0.0);
        }
        self.var_names.len() - 1
    }

    pub fn add_constraint(&mut self, c: Constraint) {
        self.constraints.push(c);
    }

    pub fn set_objective(&mut self, cost: Vec<f64>) {
        self.objective = Some(cost);
    }

    pub fn objective_value(&self, x: &[i64]) -> f64 {
        self.objective.as_ref().map_or(0.0, |c| c.iter().zip(x).map(|(c, v)| c * *v as f64).sum())
    }

    /// True when `x` is within bounds, satisfies every constraint and is not excluded.
    pub fn is_feasible(&self, x: &[i64]) -> bool {
        x.len() == self.n_vars()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| l <= v && v <= u)
            && self.constraints.iter().all(|c| c.satisfied(x))
            && !self.exclusions.iter().any(|e| self.identity(e) == self.identity(x))
    }

    /// The part of `x` that identifies a solution.
    pub fn identity<'a>(&self, x: &'a [i64]) -> &'a [i64] {
        &x[..self.identity_vars.map_or(x.len(), |k| k.min(x.len()))]
    }

    pub fn validate(&self) -> Result<(), Error> {
        let n = self.n_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Model("bound vectors do not match variable count".into()));
        }
        if let Some((j, _)) = self.lower.iter().zip(&self.upper).enumerate().find(|(_, (l, u))| l > u || **l < 0) {
            return Err(Error::Model(format!("variable {} has invalid bounds", self.var_names[j])));
        }
        if self.objective.as_ref().is_some_and(|c| c.len() != n || c.iter().any(|v| !v.is_finite())) {
            return Err(Error::Model("objective must have one finite cost per variable".into()));
        }
        for c in &self.constraints {
            if c.coeffs.iter().any(|(j, _)| *j >= n) {
                return Err(Error::Model(format!("constraint {} references an unknown variable", c.name)));
            }
        }
        if self.exclusions.iter().any(|e| e.len() != n) {
            return Err(Error::Model("exclusion vector has the wrong length".into()));
        }
        Ok(())
    }

    /// CPLEX LP text, for cross-checking with an external solver. Exclusions are
    /// not representable in plain LP form and are listed as comments.
    pub fn to_lp_format(&self) -> String {
        let name = |j: usize| format!("x{j}");
        let term = |out: &mut String, a: f64, j: usize, first: bool| {
            match (a < 0.0, first) {
                (true, _) => out.push_str(" -"),
                (false, false) => out.push_str(" +"),
                (false, true) => {}
            }
            let _ = write!(out, " {} {}", a.abs(), name(j));
        };
        let mut out = String::new();
        for (j, v) in self.var_names.iter().enumerate() {
            let _ = writeln!(out, "\\ x{j} = {v}");
        }
        for e in &self.exclusions {
            let _ = writeln!(out, "\\ excluded: {e:?}");
        }
        out.push_str("Minimize\n obj:");
        match &self.objective {
            Some(c) if c.iter().any(|v| *v != 0.0) => {
                let mut first = true;
                for (j, v) in c.iter().enumerate().filter(|(_, v)| **v != 0.0) {
                    term(&mut out, *v, j, first);
                    first = false;
                }
            }
            _ => out.push_str(" 0 x0"),
        }
        out.push_str("\nSubject To\n");
        for (i, c) in self.constraints.iter().enumerate() {
            let _ = write!(out, " c{i}:");
            for (k, (j, a)) in c.coeffs.iter().enumerate() {
                term(&mut out, *a as f64, *j, k == 0);
            }
            if c.coeffs.is_empty() {
                out.push_str(" 0 x0");
            }
            let op = match c.sense {
                RowSense::Eq => "=",
                RowSense::Ge => ">=",
                RowSense::Le => "<=",
            };
            let _ = writeln!(out, " {op} {}", c.rhs);
        }
        out.push_str("Bounds\n");
        for j in 0..self.n_vars() {
            let _ = writeln!(out, " {} <= {} <= {}", self.lower[j], name(j), self.upper[j]);
        }
        out.push_str("General\n");
        for j in 0..self.n_vars() {
            let _ = writeln!(out, " {}", name(j));
        }
        out.push_str("End\n");
        out
    }
}

impl Default for IntegerProgram {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    Feasible,
    Infeasible,
    BoundReached,
}

impl Status {
    pub fn has_solution(self) -> bool {
        matches!(self, Status::Optimal | Status::Feasible)
    }

    pub fn label(self) -> &'static str {
        match self {
            Status::Optimal => "OPTIMAL",
            Status::Feasible => "FEASIBLE",
            Status::Infeasible => "INFEASIBLE",
            Status::BoundReached => "BOUND_REACHED",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: Status,
    /// One count per variable; empty unless a solution was found.
    pub counts: Vec<i64>,
    pub objective_value: f64,
    pub nodes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub max_nodes: u64,
    /// Wall-clock cap. Results under a time cap depend on machine speed.
    pub time_limit: Option<Duration>,
    /// Relaxations with at most this many `variables x rows` entries are solved exactly.
    pub exact_threshold: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_nodes: 200_000, time_limit: None, exact_threshold: 400 }
    }
}

impl Limits {
    pub fn nodes(max_nodes: u64) -> Self {
        Limits { max_nodes, ..Default::default() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constraint_merges_duplicate_terms() {
        let c = Constraint::new("c", vec![(1, 2), (0, 1), (1, -2), (2, 3)], RowSense::Eq, 3);
        assert_eq!(c.coeffs, vec![(0, 1), (2, 3)]);
    }

    #[test]
    fn lp_export_lists_every_row() {
        let mut ip = IntegerProgram::new();
        let a = ip.add_var("a", 0, 4);
        let b = ip.add_var("b", 0, 4);
        ip.add_constraint(Constraint::new("sum", vec![(a, 1), (b, 1)], RowSense::Eq, 3));
        ip.add_constraint(Constraint::new("cap", vec![(a, 2), (b, -1)], RowSense::Le, 2));
        ip.set_objective(vec![1.0, -0.5]);
        let text = ip.to_lp_format();
        assert!(text.contains("c0: 1 x0 + 1 x1 = 3"));
        assert!(text.contains("c1: 2 x0 - 1 x1 <= 2"));
        assert!(text.contains("obj: 1 x0 - 0.5 x1"));
        assert!(text.ends_with("End\n"));
    }
}
