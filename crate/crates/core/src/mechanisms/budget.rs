//! Per-query privacy budget: strategy-catalogue replication or a uniform split.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::workload::{CountingQuery, QueryKind, Table};
use crate::Error;

/// A noised crosstab: its table, budget fraction and the levels of every variable it crosses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyQuery {
    pub name: String,
    pub table: Table,
    pub fraction: f64,
    pub dims: Vec<(String, u64)>,
}

impl StrategyQuery {
    /// Cells that must be summed to obtain one level of `variable`, if present.
    pub fn margin_cells(&self, variable: &str) -> Option<u64> {
        self.dims.iter().any(|(d, _)| d == variable).then(|| {
            self.dims.iter().filter(|(d, _)| d != variable).map(|(_, l)| *l).product()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyCatalogue(pub Vec<StrategyQuery>);

fn dims(spec: &[(&str, u64)]) -> Vec<(String, u64)> {
    spec.iter().map(|(n, l)| (n.to_string(), *l)).collect()
}

impl Default for StrategyCatalogue {
    /// The strategy queries that carry the attack's statistics. The household-type
    /// recode is expanded into its component variables.
    fn default() -> Self {
        StrategyCatalogue(vec![
            StrategyQuery {
                name: "SEX * HISP * HHTENSHORT_3LEV * RACE * DETAILEDCOUPLETYPEMULTGENDETOWNCHILDSIZE".into(),
                table: Table::Household,
                fraction: 0.0002,
                dims: dims(&[
                    ("SEX", 2),
                    ("HISP", 2),
                    ("HHTENSHORT_3LEV", 3),
                    ("RACE", 7),
                    ("COUPLE_TYPE", 5),
                    ("MULTIG", 2),
                    ("CHILD", 4),
                    ("HH_SIZE", 7),
                ]),
            },
            StrategyQuery {
                name: "HISP * RACE".into(),
                table: Table::Household,
                fraction: 0.0002,
                dims: dims(&[("HISP", 2), ("RACE", 7)]),
            },
            StrategyQuery {
                name: "VOTINGAGE * HISP".into(),
                table: Table::Person,
                fraction: 0.0002,
                dims: dims(&[("VOTINGAGE", 2), ("HISP", 2)]),
            },
        ])
    }
}

/// The strategy variable (and table) a published census query is a margin of.
pub fn strategy_variable(q: &CountingQuery) -> Option<(Table, &'static str)> {
    match q.kind {
        QueryKind::Size(_) | QueryKind::SizeAtLeast(_) => Some((Table::Household, "HH_SIZE")),
        QueryKind::Race(_) => Some((Table::Household, "RACE")),
        QueryKind::Children => Some((Table::Person, "VOTINGAGE")),
        _ => None,
    }
}

/// Highest adjusted allocation `c_i / M_qi` over strategies that can answer `variable`.
pub fn allocate_budget(catalogue: &StrategyCatalogue, table: Table, variable: &str) -> Result<f64, Error> {
    catalogue
        .0
        .iter()
        .filter(|s| s.table == table)
        .filter_map(|s| s.margin_cells(variable).map(|m| s.fraction / m as f64))
        .fold(None, |best: Option<f64>, v| Some(best.map_or(v, |b| b.max(v))))
        .ok_or_else(|| Error::UncoveredQuery(variable.to_string()))
}

/// Whether a query receives noise. Population is derived from the size family
/// and HUD statistics are only noised when requested.
pub fn is_noised(q: &CountingQuery, hud_noise: bool) -> bool {
    match q.kind {
        QueryKind::Size(_) | QueryKind::SizeAtLeast(_) | QueryKind::Race(_) | QueryKind::Children => true,
        QueryKind::Population => false,
        _ => hud_noise && q.is_hud(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub rho_person: f64,
    pub rho_household: f64,
    pub hud_noise: bool,
    /// `c_q` per noised query id.
    pub fractions: BTreeMap<String, f64>,
}

pub const DAS_RHO_PERSON: f64 = 4.96;
pub const DAS_RHO_HOUSEHOLD: f64 = 7.70;

impl PrivacyBudget {
    /// Fractions replicated from the strategy catalogue. HUD queries, when noised,
    /// split the household budget evenly.
    pub fn das(
        workload: &[CountingQuery],
        catalogue: &StrategyCatalogue,
        rho_person: f64,
        rho_household: f64,
        hud_noise: bool,
    ) -> Result<Self, Error> {
        let n_hud = workload.iter().filter(|q| q.is_hud()).count().max(1) as f64;
        let mut fractions = BTreeMap::new();
        for q in workload.iter().filter(|q| is_noised(q, hud_noise)) {
            let c = match strategy_variable(q) {
                Some((table, var)) => {
                    allocate_budget(catalogue, table, var).map_err(|_| Error::UncoveredQuery(q.id.clone()))?
                }
                None => 1.0 / n_hud,
            };
            fractions.insert(q.id.clone(), c);
        }
        Ok(PrivacyBudget { rho_person, rho_household, hud_noise, fractions })
    }

    /// Every noised query gets `1 / (number of noised queries)` of its table's budget.
    pub fn uniform(workload: &[CountingQuery], rho_person: f64, rho_household: f64, hud_noise: bool) -> Self {
        let noised: Vec<&CountingQuery> = workload.iter().filter(|q| is_noised(q, hud_noise)).collect();
        let c = 1.0 / noised.len().max(1) as f64;
        let fractions = noised.iter().map(|q| (q.id.clone(), c)).collect();
        PrivacyBudget { rho_person, rho_household, hud_noise, fractions }
    }

    pub fn rho(&self, table: Table) -> f64 {
        match table {
            Table::Person => self.rho_person,
            Table::Household | Table::Hud => self.rho_household,
        }
    }

    /// `1 / (c_q * rho_table)`.
    pub fn variance(&self, q: &CountingQuery) -> Result<f64, Error> {
        let c = self.fractions.get(&q.id).ok_or_else(|| Error::MissingAllocation(q.id.clone()))?;
        Ok(1.0 / (c * self.rho(q.table)))
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.rho_person > 0.0 && self.rho_household > 0.0) {
            return Err(Error::Config("privacy budgets must be positive".into()));
        }
        if let Some((id, _)) = self.fractions.iter().find(|(_, c)| !(**c > 0.0)) {
            return Err(Error::Config(format!("budget fraction for `{id}` must be positive")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RaceGroups;
    use crate::workload::{size_top_query, standard_workload};

    #[test]
    fn catalogue_allocations() {
        let c = StrategyCatalogue::default();
        assert_eq!(allocate_budget(&c, Table::Household, "HH_SIZE").unwrap(), 0.0002 / 3360.0);
        assert_eq!(allocate_budget(&c, Table::Household, "RACE").unwrap(), 0.0002 / 2.0);
        assert_eq!(allocate_budget(&c, Table::Person, "VOTINGAGE").unwrap(), 0.0002 / 2.0);
        assert!(matches!(allocate_budget(&c, Table::Person, "TENURE"), Err(Error::UncoveredQuery(_))));
    }

    #[test]
    fn single_cell_strategy() {
        let c = StrategyCatalogue(vec![StrategyQuery {
            name: "TOTAL".into(),
            table: Table::Household,
            fraction: 0.3,
            dims: dims(&[("TOTAL", 1)]),
        }]);
        assert_eq!(allocate_budget(&c, Table::Household, "TOTAL").unwrap(), 0.3);
    }

    #[test]
    fn uniform_variance() {
        let g = RaceGroups::default();
        let mut w = standard_workload(&g);
        w.push(size_top_query(&g));
        let b = PrivacyBudget::uniform(&w, 0.1, 0.1, false);
        let n = b.fractions.len() as f64;
        assert_eq!(n, 7.0 + 7.0 + 1.0);
        let q = w.iter().find(|q| q.id == "sf1_size_3").unwrap();
        assert!((b.variance(q).unwrap() - n / 0.1).abs() < 1e-9);
    }
}
