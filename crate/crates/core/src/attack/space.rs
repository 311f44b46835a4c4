use serde::{Deserialize, Serialize};

use crate::ipcore::{Constraint, IntegerProgram, RowSense};
use crate::model::{BedroomClass, EmpiricalDistribution, HouseholdRecord, RaceGroups, RaceMask, ViolationRule};
use crate::workload::{
    size_top_query, standard_workload, BlockStatistics, CountingQuery, QueryKind, Sense, N_SUBSIDIZED_ID,
    N_TOTAL_ID, SIZE_TOP_ID,
};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpaceOptions {
    /// Largest household size the attacker considers for the open top size bin.
    pub max_size: u8,
    pub rule: ViolationRule,
}

impl Default for SpaceOptions {
    fn default() -> Self {
        SpaceOptions { max_size: 15, rule: ViolationRule::default() }
    }
}

/// Household configurations admitted for one block, in sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigurationSpace {
    pub configs: Vec<HouseholdRecord>,
    pub groups: RaceGroups,
    pub options: SpaceOptions,
}

/// Short stable label, e.g. `s3.r1.c1.sub.le1`.
pub fn config_label(h: &HouseholdRecord) -> String {
    let tenure = if h.subsidized { "sub" } else { "uns" };
    format!("s{}.r{:x}.c{}.{tenure}.{}", h.size, h.race_flags, h.children, h.bedroom_class.label())
}

pub fn published_workload(groups: &RaceGroups) -> Vec<CountingQuery> {
    let mut w = standard_workload(groups);
    w.push(size_top_query(groups));
    w
}

fn check_coverage(stats: &BlockStatistics, workload: &[CountingQuery]) -> Result<(), Error> {
    for id in stats.answers.keys() {
        if !workload.iter().any(|q| &q.id == id) {
            return Err(Error::Model(format!("statistic `{id}` refers to attributes outside the configuration space")));
        }
    }
    Ok(())
}

impl ConfigurationSpace {
    pub fn new(configs: Vec<HouseholdRecord>, groups: RaceGroups, options: SpaceOptions) -> Result<Self, Error> {
        let mut configs = configs;
        for h in &configs {
            h.validate()?;
        }
        configs.sort();
        if configs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Model("configuration space has duplicate entries".into()));
        }
        Ok(ConfigurationSpace { configs, groups, options })
    }

    /// Every configuration consistent with the block's published answers taken
    /// one query at a time. Race patterns are single groups.
    pub fn for_block(stats: &BlockStatistics, groups: &RaceGroups, options: SpaceOptions) -> Result<Self, Error> {
        let workload = published_workload(groups);
        check_coverage(stats, &workload)?;
        let (n, ns) = (stats.n_total, stats.n_subsidized);
        let top = stats.get(SIZE_TOP_ID);
        let residual = stats.size_residual();
        let open_sizes = top.is_none() && residual > 0;
        let exact_zero = |id: &str| stats.get(id) == Some(0) && stats.senses.get(id) == Some(&Sense::Eq);
        let mut sizes: Vec<u8> = (1..=6u8).filter(|x| open_sizes || !exact_zero(&format!("sf1_size_{x}"))).collect();
        if top.map_or(residual > 0, |_| !exact_zero(SIZE_TOP_ID)) {
            sizes.extend(7..=options.max_size.max(7));
        }

        let race_ids: Vec<Option<i64>> = groups.0.iter().map(|g| stats.get(&format!("sf1_race_{}", g.name))).collect();
        let race_sum: Option<i64> = race_ids.iter().copied().sum();
        let races: Vec<usize> =
            (0..groups.len()).filter(|&j| !(race_sum == Some(n) && race_ids[j] == Some(0))).collect();

        let bed_ids: Vec<Option<i64>> =
            BedroomClass::UNITS.iter().map(|k| stats.get(&format!("hud_bed_{}", k.label()))).collect();
        let bed_sum: Option<i64> = bed_ids.iter().copied().sum();
        let beds: Vec<BedroomClass> = BedroomClass::UNITS
            .iter()
            .zip(&bed_ids)
            .filter(|(_, v)| !(bed_sum == Some(ns) && **v == Some(0)))
            .map(|(k, _)| *k)
            .collect();
        let with_children =
            stats.get("hud_with_children").filter(|_| stats.senses.get("hud_with_children") == Some(&Sense::Eq));

        let mut configs = Vec::new();
        for &x in &sizes {
            for &j in &races {
                for c in 0..=x {
                    let mask = RaceMask::single(j);
                    if n > ns {
                        configs.push(HouseholdRecord::unsubsidized(x, mask, c));
                    }
                    let child_ok = match with_children {
                        Some(0) => c == 0,
                        Some(v) if v == ns => c > 0,
                        _ => true,
                    };
                    if ns > 0 && child_ok {
                        for &k in &beds {
                            configs.push(HouseholdRecord::subsidized(x, mask, c, k));
                        }
                    }
                }
            }
        }
        ConfigurationSpace::new(configs, groups.clone(), options)
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn index_of(&self, h: &HouseholdRecord) -> Option<usize> {
        self.configs.binary_search(h).ok()
    }

    pub fn is_violating(&self, g: usize) -> bool {
        self.options.rule.is_violation(&self.configs[g])
    }

    pub fn filter(&self, keep: impl Fn(&HouseholdRecord) -> bool) -> Self {
        ConfigurationSpace {
            configs: self.configs.iter().filter(|h| keep(h)).copied().collect(),
            groups: self.groups.clone(),
            options: self.options,
        }
    }

    /// Configurations whose census part was observed at least once in the state's sample.
    pub fn support_restricted(&self, prior: &EmpiricalDistribution, state: &str) -> Result<Self, Error> {
        prior.state(state)?;
        Ok(self.filter(|h| prior.frequency(state, &h.sf1_part()) > 0.0))
    }

    /// Count vector of a list of households; errors if one is outside the space.
    pub fn histogram<'a>(&self, households: impl IntoIterator<Item = &'a HouseholdRecord>) -> Result<Vec<i64>, Error> {
        let mut counts = vec![0; self.len()];
        for h in households {
            let g = self
                .index_of(h)
                .ok_or_else(|| Error::Model(format!("household {} is outside the space", config_label(h))))?;
            counts[g] += 1;
        }
        Ok(counts)
    }
}

/// Total size of the `ns` largest households the census size distribution allows.
fn largest_subsidized_population(stats: &BlockStatistics, max_size: u8) -> i64 {
    let mut sizes: Vec<(i64, i64)> = Vec::new();
    let top = stats.get(SIZE_TOP_ID).unwrap_or_else(|| stats.size_residual());
    sizes.push((max_size.max(7) as i64, top));
    for x in (1..=6i64).rev() {
        sizes.push((x, stats.get(&format!("sf1_size_{x}")).unwrap_or(stats.n_total)));
    }
    let mut left = stats.n_subsidized;
    let mut total = 0;
    for (x, count) in sizes {
        let take = count.min(left).max(0);
        total += take * x;
        left -= take;
    }
    total
}

/// The block integer program over `space`. With `forbid_violations`, subsidized
/// configurations breaking the occupancy rule are constrained to zero.
pub fn build_block_program(
    stats: &BlockStatistics,
    space: &ConfigurationSpace,
    forbid_violations: bool,
) -> Result<IntegerProgram, Error> {
    let workload = published_workload(&space.groups);
    check_coverage(stats, &workload)?;
    stats.validate()?;
    let (n, ns) = (stats.n_total, stats.n_subsidized);
    let mut ip = IntegerProgram::new();
    for h in &space.configs {
        let ub = if h.subsidized { ns } else { n - ns };
        ip.add_var(config_label(h), 0, ub.max(0));
    }
    let all: Vec<(usize, i64)> = (0..space.len()).map(|g| (g, 1)).collect();
    ip.add_constraint(Constraint::new(N_TOTAL_ID, all, RowSense::Eq, n));
    let sub: Vec<(usize, i64)> = (0..space.len()).filter(|&g| space.configs[g].subsidized).map(|g| (g, 1)).collect();
    ip.add_constraint(Constraint::new(N_SUBSIDIZED_ID, sub, RowSense::Eq, ns));

    let open_sizes = stats.get(SIZE_TOP_ID).is_none() && stats.size_residual() > 0;
    for q in &workload {
        let Some(mut rhs) = stats.get(&q.id) else { continue };
        let coeffs: Vec<(usize, i64)> = space
            .configs
            .iter()
            .enumerate()
            .map(|(g, h)| (g, q.contribution(h)))
            .filter(|(_, a)| *a != 0)
            .collect();
        let mut sense = match stats.senses.get(&q.id).copied().unwrap_or(q.sense) {
            Sense::Eq => RowSense::Eq,
            Sense::Ge => RowSense::Ge,
        };
        match q.kind {
            QueryKind::Size(_) if open_sizes => sense = RowSense::Ge,
            QueryKind::HudPopulation => rhs = rhs.min(largest_subsidized_population(stats, space.options.max_size)),
            _ => {}
        }
        ip.add_constraint(Constraint::new(q.id.clone(), coeffs, sense, rhs));
    }

    if forbid_violations {
        for (name, class) in [("forbid_le1", BedroomClass::Le1), ("forbid_eq2", BedroomClass::Eq2)] {
            let coeffs: Vec<(usize, i64)> = space
                .configs
                .iter()
                .enumerate()
                .filter(|(_, h)| h.subsidized && h.bedroom_class == class && space.options.rule.exceeds(class, h.size))
                .map(|(g, _)| (g, 1))
                .collect();
            ip.add_constraint(Constraint::new(name, coeffs, RowSense::Eq, 0));
        }
    }
    Ok(ip)
}
