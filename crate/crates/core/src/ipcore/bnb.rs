use std::time::Instant;

use num_integer::Integer;
use num_rational::BigRational;

use super::lp::{Lp, LpOutcome, Scalar};
use super::{IntegerProgram, Limits, RowSense, Solution, Status};
use crate::Error;

const OBJ_TOL: f64 = 1e-9;

fn ceil_div(a: i128, b: i128) -> i128 {
    -Integer::div_floor(&-a, &b)
}

/// Bound propagation over all rows. Returns false when a row cannot be satisfied.
pub(crate) fn propagate(ip: &IntegerProgram, lo: &mut [i64], hi: &mut [i64]) -> bool {
    for _ in 0..20 {
        let mut changed = false;
        for c in &ip.constraints {
            let (mut minact, mut maxact) = (0i128, 0i128);
            for (j, a) in &c.coeffs {
                let (a, l, h) = (*a as i128, lo[*j] as i128, hi[*j] as i128);
                if a > 0 {
                    minact += a * l;
                    maxact += a * h;
                } else {
                    minact += a * h;
                    maxact += a * l;
                }
            }
            let b = c.rhs as i128;
            let need_ge = matches!(c.sense, RowSense::Ge | RowSense::Eq);
            let need_le = matches!(c.sense, RowSense::Le | RowSense::Eq);
            if (need_ge && maxact < b) || (need_le && minact > b) {
                return false;
            }
            for (j, a) in &c.coeffs {
                let (j, a) = (*j, *a as i128);
                let (l, h) = (lo[j] as i128, hi[j] as i128);
                let mut new_lo = l;
                let mut new_hi = h;
                if need_ge {
                    if a > 0 {
                        new_lo = new_lo.max(ceil_div(b - maxact + a * h, a));
                    } else {
                        new_hi = new_hi.min(Integer::div_floor(&(b - maxact + a * l), &a));
                    }
                }
                if need_le {
                    if a > 0 {
                        new_hi = new_hi.min(Integer::div_floor(&(b - minact + a * l), &a));
                    } else {
                        new_lo = new_lo.max(ceil_div(b - minact + a * h, a));
                    }
                }
                if new_lo > new_hi {
                    return false;
                }
                if new_lo != l || new_hi != h {
                    lo[j] = new_lo as i64;
                    hi[j] = new_hi as i64;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    true
}

enum NodeLp {
    Infeasible,
    Stalled,
    Solved { bound: f64, rounded: Option<Vec<i64>>, branch: Option<(usize, i64)> },
}

fn interpret<S: Scalar>(out: LpOutcome<S>, free: &[usize]) -> NodeLp {
    match out {
        LpOutcome::Infeasible => NodeLp::Infeasible,
        LpOutcome::Stalled => NodeLp::Stalled,
        LpOutcome::Optimal { x, objective } => {
            let mut rounded = Some(Vec::with_capacity(x.len()));
            let mut branch: Option<(usize, i64, f64)> = None;
            for (k, v) in x.iter().enumerate() {
                match v.as_integer() {
                    Some(i) => {
                        if let Some(r) = rounded.as_mut() {
                            r.push(i);
                        }
                    }
                    None => {
                        rounded = None;
                        let f = v.fractionality();
                        if branch.map_or(true, |(_, _, best)| f > best + 1e-12) {
                            branch = Some((free[k], v.to_f64().floor() as i64, f));
                        }
                    }
                }
            }
            NodeLp::Solved { bound: objective, rounded, branch: branch.map(|(j, f, _)| (j, f)) }
        }
    }
}

struct Search<'a> {
    ip: &'a IntegerProgram,
    limits: &'a Limits,
    cost: Vec<f64>,
    has_objective: bool,
    integral_objective: bool,
    /// Number of distinct solutions sought.
    want: usize,
    /// Best solutions found so far, ordered by objective.
    pool: Vec<(Vec<i64>, f64)>,
    nodes: u64,
    start: Instant,
}

impl Search<'_> {
    fn improves(&self, bound: f64) -> bool {
        match self.pool.last() {
            _ if self.pool.len() < self.want => true,
            None => true,
            Some((_, inc)) if self.integral_objective => (bound - 1e-6).ceil() < *inc - 0.5,
            Some((_, inc)) => bound < inc - OBJ_TOL * inc.abs().max(1.0),
        }
    }

    fn out_of_budget(&self) -> bool {
        self.nodes >= self.limits.max_nodes || self.limits.time_limit.is_some_and(|t| self.start.elapsed() >= t)
    }

    fn relax(&self, lo: &[i64], hi: &[i64], free: &[usize]) -> Option<NodeLp> {
        let mut index = vec![usize::MAX; lo.len()];
        for (k, j) in free.iter().enumerate() {
            index[*j] = k;
        }
        let mut rows = Vec::with_capacity(self.ip.constraints.len());
        for c in &self.ip.constraints {
            let mut rhs = c.rhs as i128;
            let mut coeffs = Vec::new();
            for (j, a) in &c.coeffs {
                if index[*j] == usize::MAX {
                    rhs -= *a as i128 * lo[*j] as i128;
                } else {
                    coeffs.push((index[*j], *a));
                }
            }
            if coeffs.is_empty() {
                let ok = match c.sense {
                    RowSense::Eq => rhs == 0,
                    RowSense::Ge => rhs <= 0,
                    RowSense::Le => rhs >= 0,
                };
                if !ok {
                    return None;
                }
                continue;
            }
            rows.push((coeffs, c.sense, rhs as i64));
        }
        let flo: Vec<i64> = free.iter().map(|j| lo[*j]).collect();
        let fhi: Vec<i64> = free.iter().map(|j| hi[*j]).collect();
        let fcost: Vec<f64> = free.iter().map(|j| self.cost[*j]).collect();
        let fixed_cost: f64 =
            (0..lo.len()).filter(|j| index[*j] == usize::MAX).map(|j| self.cost[j] * lo[j] as f64).sum();
        let exact = free.len() * rows.len().max(1) <= self.limits.exact_threshold;
        let lp = Lp { n: free.len(), rows, lo: &flo, hi: &fhi, cost: &fcost };
        let out = if exact { interpret(lp.solve::<BigRational>(), free) } else { interpret(lp.solve::<f64>(), free) };
        Some(match out {
            NodeLp::Solved { bound, rounded, branch } => {
                let full = rounded.map(|r| {
                    let mut x = lo.to_vec();
                    for (k, j) in free.iter().enumerate() {
                        x[*j] = r[k];
                    }
                    x
                });
                NodeLp::Solved { bound: bound + fixed_cost, rounded: full, branch }
            }
            other => other,
        })
    }

    fn run(mut self) -> (Vec<(Vec<i64>, f64)>, u64, bool) {
        let ip = self.ip;
        let mut stack: Vec<(Vec<i64>, Vec<i64>)> = vec![(ip.lower.clone(), ip.upper.clone())];
        let mut limited = false;
        while let Some((mut lo, mut hi)) = stack.pop() {
            if self.out_of_budget() {
                limited = true;
                break;
            }
            self.nodes += 1;
            if !propagate(ip, &mut lo, &mut hi) {
                continue;
            }
            let free: Vec<usize> = (0..lo.len()).filter(|j| lo[*j] < hi[*j]).collect();
            let (bound, candidate, branch) = if free.is_empty() {
                (ip.objective_value(&lo), Some(lo.clone()), None)
            } else {
                match self.relax(&lo, &hi, &free) {
                    None | Some(NodeLp::Infeasible) => continue,
                    Some(NodeLp::Stalled) => {
                        let j = free[0];
                        (f64::NEG_INFINITY, None, Some((j, lo[j] + (hi[j] - lo[j]) / 2)))
                    }
                    Some(NodeLp::Solved { bound, rounded, branch }) => (bound, rounded, branch),
                }
            };
            if !self.improves(bound) {
                continue;
            }
            if let Some(x) = candidate {
                let valid = ip.constraints.iter().all(|c| c.satisfied(&x));
                if valid {
                    let id = ip.identity(&x);
                    let excluded = ip.exclusions.iter().any(|e| ip.identity(e) == id);
                    let pooled = self.pool.iter().position(|(p, _)| ip.identity(p) == id);
                    let obj = ip.objective_value(&x);
                    if let Some(k) = pooled {
                        // A cheaper completion of an identity already in the pool.
                        if obj < self.pool[k].1 - OBJ_TOL * obj.abs().max(1.0) {
                            self.pool.remove(k);
                            let at = self.pool.partition_point(|(_, o)| *o <= obj);
                            self.pool.insert(at, (x.clone(), obj));
                        }
                    } else if !excluded {
                        if self.improves(obj) {
                            let at = self.pool.partition_point(|(_, o)| *o <= obj);
                            self.pool.insert(at, (x.clone(), obj));
                            self.pool.truncate(self.want);
                            if !self.has_objective && self.pool.len() >= self.want {
                                break;
                            }
                        }
                        if self.want == 1 {
                            continue;
                        }
                    }
                    // Split the box around `x` so the rest of it stays searchable. Fixing
                    // the support of `x` first lets propagation close the box quickly.
                    let split = free.iter().copied().filter(|&j| j < id.len()).rev().max_by_key(|&j| x[j] - lo[j]);
                    if let Some(i) = split {
                        let v = x[i];
                        if v - 1 >= lo[i] {
                            let mut h = hi.clone();
                            h[i] = v - 1;
                            stack.push((lo.clone(), h));
                        }
                        if v + 1 <= hi[i] {
                            let mut l = lo.clone();
                            l[i] = v + 1;
                            stack.push((l, hi.clone()));
                        }
                        let (mut l, mut h) = (lo, hi);
                        l[i] = v;
                        h[i] = v;
                        stack.push((l, h));
                    }
                    continue;
                }
                if free.is_empty() {
                    continue;
                }
            }
            let (j, f) = branch.unwrap_or_else(|| {
                let j = free[0];
                (j, lo[j] + (hi[j] - lo[j]) / 2)
            });
            let mut down_hi = hi.clone();
            down_hi[j] = f.min(hi[j]);
            let mut up_lo = lo.clone();
            up_lo[j] = (f + 1).max(lo[j]);
            if down_hi[j] >= lo[j] {
                stack.push((lo.clone(), down_hi));
            }
            if up_lo[j] <= hi[j] {
                stack.push((up_lo, hi));
            }
        }
        let nodes = self.nodes;
        log::debug!("branch and bound: {nodes} nodes, limited={limited}");
        (self.pool, nodes, limited)
    }
}

fn search(ip: &IntegerProgram, want: usize, limits: &Limits) -> Result<(Vec<(Vec<i64>, f64)>, u64, bool), Error> {
    ip.validate()?;
    let cost = ip.objective.clone().unwrap_or_else(|| vec![0.0; ip.n_vars()]);
    let has_objective = cost.iter().any(|c| *c != 0.0);
    let integral_objective = cost.iter().all(|c| c.fract() == 0.0);
    let search = Search {
        ip,
        limits,
        cost,
        has_objective,
        integral_objective,
        want: want.max(1),
        pool: Vec::new(),
        nodes: 0,
        start: Instant::now(),
    };
    Ok(search.run())
}

/// Branch and bound. `OPTIMAL` carries a proof; `INFEASIBLE` means the search
/// tree was exhausted; `FEASIBLE`/`BOUND_REACHED` mean a limit stopped the search.
pub fn solve(ip: &IntegerProgram, limits: &Limits) -> Result<Solution, Error> {
    let (mut pool, nodes, limited) = search(ip, 1, limits)?;
    Ok(match (pool.pop(), limited) {
        (Some((x, obj)), false) => Solution { status: Status::Optimal, counts: x, objective_value: obj, nodes },
        (Some((x, obj)), true) => Solution { status: Status::Feasible, counts: x, objective_value: obj, nodes },
        (None, false) => Solution { status: Status::Infeasible, counts: vec![], objective_value: f64::NAN, nodes },
        (None, true) => Solution { status: Status::BoundReached, counts: vec![], objective_value: f64::NAN, nodes },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration {
    pub solutions: Vec<Solution>,
    /// A limit stopped the enumeration before `t` solutions or proven exhaustion.
    pub truncated: bool,
}

/// Up to `t` distinct solutions in non-decreasing objective order from one
/// search that keeps the `t` best found so far and prunes against the worst.
/// Solutions are marked `OPTIMAL` when the search finished, and `FEASIBLE`
/// (with `truncated`) when a limit stopped it.
pub fn enumerate_top(ip: &IntegerProgram, t: usize, limits: &Limits) -> Result<Enumeration, Error> {
    if t == 0 {
        return Ok(Enumeration { solutions: Vec::new(), truncated: false });
    }
    let (pool, nodes, limited) = search(ip, t, limits)?;
    let status = if limited { Status::Feasible } else { Status::Optimal };
    let solutions = pool
        .into_iter()
        .map(|(counts, objective_value)| Solution { status, counts, objective_value, nodes })
        .collect();
    Ok(Enumeration { solutions, truncated: limited })
}

#[cfg(test)]
mod tests {
    use super::super::Constraint;
    use super::*;

    fn single(sense: RowSense, rhs: i64) -> IntegerProgram {
        let mut ip = IntegerProgram::new();
        ip.add_var("n", 0, 10);
        ip.add_constraint(Constraint::new("c", vec![(0, 1)], sense, rhs));
        ip.set_objective(vec![1.0]);
        ip
    }

    #[test]
    fn single_equality() {
        let s = solve(&single(RowSense::Eq, 3), &Limits::default()).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert_eq!(s.counts, vec![3]);
    }

    #[test]
    fn contradictory_bounds() {
        let mut ip = single(RowSense::Ge, 2);
        ip.add_constraint(Constraint::new("d", vec![(0, 1)], RowSense::Le, 1));
        assert_eq!(solve(&ip, &Limits::default()).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn propagation_fixes_zero_rows() {
        let mut ip = IntegerProgram::new();
        for j in 0..3 {
            ip.add_var(format!("x{j}"), 0, 5);
        }
        ip.add_constraint(Constraint::new("z", vec![(0, 1), (2, 3)], RowSense::Eq, 0));
        let (mut lo, mut hi) = (ip.lower.clone(), ip.upper.clone());
        assert!(propagate(&ip, &mut lo, &mut hi));
        assert_eq!(hi, vec![0, 5, 0]);
    }

    #[test]
    fn enumerates_two_solutions() {
        let mut ip = IntegerProgram::new();
        ip.add_var("a", 0, 1);
        ip.add_var("b", 0, 1);
        ip.add_constraint(Constraint::new("sum", vec![(0, 1), (1, 1)], RowSense::Eq, 1));
        ip.set_objective(vec![1.0, 2.0]);
        let e = enumerate_top(&ip, 5, &Limits::default()).unwrap();
        assert!(!e.truncated);
        let objs: Vec<f64> = e.solutions.iter().map(|s| s.objective_value).collect();
        assert_eq!(objs, vec![1.0, 2.0]);
    }

    #[test]
    fn identity_prefix_collapses_auxiliary_completions() {
        // a + b = 1 with an auxiliary slack s in 0..=2 that only adds cost.
        let mut ip = IntegerProgram::new();
        ip.add_var("a", 0, 1);
        ip.add_var("b", 0, 1);
        ip.add_var("s", 0, 2);
        ip.add_constraint(Constraint::new("sum", vec![(0, 1), (1, 1)], RowSense::Eq, 1));
        ip.set_objective(vec![1.0, 2.0, 0.5]);
        assert_eq!(enumerate_top(&ip, 10, &Limits::default()).unwrap().solutions.len(), 6);
        ip.identity_vars = Some(2);
        let e = enumerate_top(&ip, 10, &Limits::default()).unwrap();
        let got: Vec<(Vec<i64>, f64)> = e.solutions.iter().map(|s| (s.counts.clone(), s.objective_value)).collect();
        assert_eq!(got, vec![(vec![1, 0, 0], 1.0), (vec![0, 1, 0], 2.0)]);
    }

    #[test]
    fn node_limit_reports_bound_reached() {
        let mut ip = IntegerProgram::new();
        for j in 0..4 {
            ip.add_var(format!("x{j}"), 0, 10);
        }
        ip.add_constraint(Constraint::new("odd", (0..4).map(|j| (j, 2)).collect(), RowSense::Eq, 5));
        let s = solve(&ip, &Limits::nodes(1)).unwrap();
        assert_eq!(s.status, Status::BoundReached);
        assert_eq!(solve(&ip, &Limits::default()).unwrap().status, Status::Infeasible);
    }
}
