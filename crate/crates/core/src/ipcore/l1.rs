use super::{solve, Constraint, IntegerProgram, Limits, RowSense, Status};
use crate::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct L1Result {
    pub value: i64,
    /// False when a limit stopped the search; `value` is then only a lower bound.
    pub exact: bool,
    /// Counts of the maximising program's original variables, when one was found.
    pub counts: Vec<i64>,
}

/// Largest L1 distance between the projected histogram of `reference` and that
/// of any feasible solution of `ip`.
///
/// `cell_of[g]` maps variable `g` to its histogram cell, or `None` when the
/// variable is filtered out of the comparison. Exclusions on `ip` are ignored.
pub fn maximize_l1(
    ip: &IntegerProgram,
    reference: &[i64],
    cell_of: &[Option<usize>],
    limits: &Limits,
) -> Result<L1Result, Error> {
    if reference.len() != ip.n_vars() || cell_of.len() != ip.n_vars() {
        return Err(Error::Model("reference and cell map must cover every variable".into()));
    }
    let mut base = ip.clone();
    base.exclusions.clear();
    base.objective = None;
    if !base.is_feasible(reference) {
        return Err(Error::Model("reference is not a feasible solution".into()));
    }
    let n_cells = cell_of.iter().flatten().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_cells];
    for (g, c) in cell_of.iter().enumerate() {
        if let Some(c) = c {
            members[*c].push(g);
        }
    }
    let n = ip.n_vars();
    let mut cost = vec![0.0; n];
    for (c, vars) in members.iter().enumerate() {
        if vars.is_empty() {
            continue;
        }
        let r: i64 = vars.iter().map(|g| reference[*g]).sum();
        if r == 0 {
            for g in vars {
                cost[*g] -= 1.0;
            }
            continue;
        }
        let cap: i64 = vars.iter().map(|g| ip.upper[*g]).sum::<i64>().saturating_sub(r).max(0);
        let dp = base.add_var(format!("dplus_{c}"), 0, cap);
        let dm = base.add_var(format!("dminus_{c}"), 0, r);
        let z = base.add_var(format!("z_{c}"), 0, 1);
        let mut coeffs: Vec<(usize, i64)> = vars.iter().map(|g| (*g, 1)).collect();
        coeffs.push((dp, -1));
        coeffs.push((dm, 1));
        base.add_constraint(Constraint::new(format!("dev_{c}"), coeffs, RowSense::Eq, r));
        base.add_constraint(Constraint::new(format!("up_{c}"), vec![(dp, 1), (z, -cap)], RowSense::Le, 0));
        base.add_constraint(Constraint::new(format!("down_{c}"), vec![(dm, 1), (z, r)], RowSense::Le, r));
        cost.extend([-1.0, -1.0, 0.0]);
    }
    base.set_objective(cost);
    let s = solve(&base, limits)?;
    Ok(match s.status {
        Status::Optimal | Status::Feasible => L1Result {
            value: (-s.objective_value).round() as i64,
            exact: s.status == Status::Optimal,
            counts: s.counts[..n].to_vec(),
        },
        Status::BoundReached => L1Result { value: 0, exact: false, counts: reference.to_vec() },
        Status::Infeasible => {
            return Err(Error::Invariant("L1 program infeasible although the reference is feasible".into()))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cells() -> IntegerProgram {
        let mut ip = IntegerProgram::new();
        ip.add_var("a", 0, 1);
        ip.add_var("b", 0, 1);
        ip.add_constraint(Constraint::new("one", vec![(0, 1), (1, 1)], RowSense::Eq, 1));
        ip
    }

    #[test]
    fn one_household_moves() {
        let r = maximize_l1(&two_cells(), &[1, 0], &[Some(0), Some(1)], &Limits::default()).unwrap();
        assert_eq!(r, L1Result { value: 2, exact: true, counts: vec![0, 1] });
    }

    #[test]
    fn collapsed_projection_is_zero() {
        let r = maximize_l1(&two_cells(), &[1, 0], &[Some(0), Some(0)], &Limits::default()).unwrap();
        assert_eq!(r.value, 0);
    }

    #[test]
    fn unique_solution_is_zero() {
        let mut ip = two_cells();
        ip.add_constraint(Constraint::new("fix", vec![(0, 1)], RowSense::Eq, 1));
        let r = maximize_l1(&ip, &[1, 0], &[Some(0), Some(1)], &Limits::default()).unwrap();
        assert_eq!(r.value, 0);
    }
}
