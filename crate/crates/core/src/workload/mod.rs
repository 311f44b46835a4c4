//! The counting-query workload published for each block and its evaluation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{BedroomClass, Block, HouseholdRecord, RaceGroups};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    Eq,
    Ge,
}

impl Sense {
    pub fn label(self) -> &'static str {
        match self {
            Sense::Eq => "EQ",
            Sense::Ge => "GE",
        }
    }

    pub fn parse(s: &str) -> Result<Self, Error> {
        match s {
            "EQ" => Ok(Sense::Eq),
            "GE" => Ok(Sense::Ge),
            other => Err(Error::Parse(format!("unknown sense `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scope {
    All,
    Subsidized,
}

/// Which published table family a query belongs to; drives budget lookups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Table {
    Person,
    Household,
    Hud,
}

/// What a query counts. Group indices refer to the configured [`RaceGroups`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryKind {
    /// Households of exactly this size.
    Size(u8),
    /// Households of at least this size (auxiliary top bin, not in the standard catalogue).
    SizeAtLeast(u8),
    Population,
    /// Households with any member of group `j`.
    Race(usize),
    Children,
    HudPopulation,
    /// Subsidized households with a member of non-Hispanic group `j`.
    HudRace(usize),
    /// Subsidized households with any Hispanic member.
    HudHispanic,
    HudWithChildren,
    HudBedroom(BedroomClass),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingQuery {
    pub id: String,
    pub kind: QueryKind,
    pub scope: Scope,
    pub sense: Sense,
    pub table: Table,
    /// Mask of Hispanic groups, used by [`QueryKind::HudHispanic`].
    pub hispanic_mask: u16,
}

impl CountingQuery {
    /// Contribution of one household: 0/1 for household counts, persons or children for weighted ones.
    pub fn contribution(&self, h: &HouseholdRecord) -> i64 {
        if self.scope == Scope::Subsidized && !h.subsidized {
            return 0;
        }
        match self.kind {
            QueryKind::Size(x) => (h.size == x) as i64,
            QueryKind::SizeAtLeast(x) => (h.size >= x) as i64,
            QueryKind::Population | QueryKind::HudPopulation => h.size as i64,
            QueryKind::Race(j) | QueryKind::HudRace(j) => h.race_flags.has(j) as i64,
            QueryKind::Children => h.children as i64,
            QueryKind::HudHispanic => (h.race_flags.0 & self.hispanic_mask != 0) as i64,
            QueryKind::HudWithChildren => h.has_children() as i64,
            QueryKind::HudBedroom(k) => (h.bedroom_class == k) as i64,
        }
    }

    pub fn is_hud(&self) -> bool {
        self.table == Table::Hud
    }
}

pub const SIZE_TOP_ID: &str = "sf1_size_7plus";
pub const N_TOTAL_ID: &str = "n_total";
pub const N_SUBSIDIZED_ID: &str = "n_subsidized";

fn query(id: String, kind: QueryKind, sense: Sense, groups: &RaceGroups) -> CountingQuery {
    let (scope, table) = match kind {
        QueryKind::Population | QueryKind::Children => (Scope::All, Table::Person),
        QueryKind::Size(_) | QueryKind::SizeAtLeast(_) | QueryKind::Race(_) => (Scope::All, Table::Household),
        _ => (Scope::Subsidized, Table::Hud),
    };
    CountingQuery { id, kind, scope, sense, table, hispanic_mask: groups.hispanic_mask().0 }
}

/// The fixed query catalogue for the configured race groups.
pub fn standard_workload(groups: &RaceGroups) -> Vec<CountingQuery> {
    let mut w = Vec::new();
    for x in 1..=6u8 {
        w.push(query(format!("sf1_size_{x}"), QueryKind::Size(x), Sense::Eq, groups));
    }
    w.push(query("sf1_pop".into(), QueryKind::Population, Sense::Ge, groups));
    for (j, g) in groups.0.iter().enumerate() {
        w.push(query(format!("sf1_race_{}", g.name), QueryKind::Race(j), Sense::Ge, groups));
    }
    w.push(query("sf1_children".into(), QueryKind::Children, Sense::Ge, groups));
    w.push(query("hud_pop".into(), QueryKind::HudPopulation, Sense::Ge, groups));
    for j in groups.non_hispanic() {
        w.push(query(format!("hud_race_{}", groups.0[j].name), QueryKind::HudRace(j), Sense::Ge, groups));
    }
    w.push(query("hud_hispanic".into(), QueryKind::HudHispanic, Sense::Ge, groups));
    w.push(query("hud_with_children".into(), QueryKind::HudWithChildren, Sense::Eq, groups));
    for k in BedroomClass::UNITS {
        w.push(query(format!("hud_bed_{}", k.label()), QueryKind::HudBedroom(k), Sense::Ge, groups));
    }
    w
}

/// The auxiliary top size bin counted alongside sizes 1..=6 by the noise mechanism.
pub fn size_top_query(groups: &RaceGroups) -> CountingQuery {
    query(SIZE_TOP_ID.into(), QueryKind::SizeAtLeast(7), Sense::Eq, groups)
}

/// Published answers for one block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockStatistics {
    pub block_id: String,
    pub geo_state: String,
    pub n_total: i64,
    pub n_subsidized: i64,
    pub answers: BTreeMap<String, i64>,
    pub senses: BTreeMap<String, Sense>,
}

impl BlockStatistics {
    pub fn get(&self, id: &str) -> Option<i64> {
        self.answers.get(id).copied()
    }

    pub fn answer(&self, id: &str) -> Result<i64, Error> {
        self.get(id).ok_or_else(|| Error::Model(format!("block {} has no answer for `{id}`", self.block_id)))
    }

    pub fn set(&mut self, q: &CountingQuery, value: i64) {
        self.answers.insert(q.id.clone(), value);
        self.senses.insert(q.id.clone(), q.sense);
    }

    /// Households left unaccounted for by the published size distribution, clamped at zero.
    pub fn size_residual(&self) -> i64 {
        let listed: i64 = (1..=6).filter_map(|x| self.get(&format!("sf1_size_{x}"))).sum();
        (self.n_total - listed).max(0)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.n_subsidized > self.n_total || self.n_subsidized < 0 {
            return Err(Error::Invariant(format!("block {}: n_subsidized out of range", self.block_id)));
        }
        if let Some((id, v)) = self.answers.iter().find(|(_, v)| **v < 0) {
            return Err(Error::Invariant(format!("block {}: answer {id} = {v} is negative", self.block_id)));
        }
        Ok(())
    }
}

pub fn evaluate_households<'a>(
    block_id: &str,
    geo_state: &str,
    households: impl IntoIterator<Item = &'a HouseholdRecord> + Clone,
    workload: &[CountingQuery],
) -> BlockStatistics {
    let mut s = BlockStatistics {
        block_id: block_id.to_string(),
        geo_state: geo_state.to_string(),
        n_total: households.clone().into_iter().count() as i64,
        n_subsidized: households.clone().into_iter().filter(|h| h.subsidized).count() as i64,
        answers: BTreeMap::new(),
        senses: BTreeMap::new(),
    };
    for q in workload {
        let v = households.clone().into_iter().map(|h| q.contribution(h)).sum();
        s.set(q, v);
    }
    s
}

pub fn evaluate(block: &Block, workload: &[CountingQuery]) -> BlockStatistics {
    evaluate_households(&block.block_id, &block.geo_state, &block.households, workload)
}

pub const STATISTICS_SCHEMA: &str = "statistics-v1";

/// Delimited text: one `block_id, state, query_id, answer, sense` row per answer,
/// with block invariants stored as `n_total` and `n_subsidized` rows.
pub fn format_statistics(stats: &[BlockStatistics], provenance: &str) -> String {
    let mut out = format!("# {STATISTICS_SCHEMA} {provenance}\nblock_id\tstate\tquery_id\tanswer\tsense\n");
    for s in stats {
        let (b, st) = (&s.block_id, &s.geo_state);
        let _ = writeln!(out, "{b}\t{st}\t{N_TOTAL_ID}\t{}\tEQ", s.n_total);
        let _ = writeln!(out, "{b}\t{st}\t{N_SUBSIDIZED_ID}\t{}\tEQ", s.n_subsidized);
        for (id, v) in &s.answers {
            let _ = writeln!(out, "{b}\t{st}\t{id}\t{v}\t{}", s.senses[id].label());
        }
    }
    out
}

pub fn parse_statistics(text: &str) -> Result<Vec<BlockStatistics>, Error> {
    let mut out: Vec<BlockStatistics> = Vec::new();
    match text.lines().next() {
        Some(h) if h.starts_with(&format!("# {STATISTICS_SCHEMA}")) => {}
        _ => return Err(Error::Parse("missing statistics schema header".into())),
    }
    for (no, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() || line.starts_with('#') || line.starts_with("block_id\t") {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(Error::Parse(format!("line {}: expected 5 fields", no + 1)));
        }
        let v: i64 = f[3].parse().map_err(|_| Error::Parse(format!("line {}: bad answer", no + 1)))?;
        let sense = Sense::parse(f[4])?;
        if out.last().map_or(true, |s| s.block_id != f[0]) {
            out.push(BlockStatistics {
                block_id: f[0].to_string(),
                geo_state: f[1].to_string(),
                n_total: 0,
                n_subsidized: 0,
                answers: BTreeMap::new(),
                senses: BTreeMap::new(),
            });
        }
        let s = out.last_mut().expect("pushed above");
        match f[2] {
            N_TOTAL_ID => s.n_total = v,
            N_SUBSIDIZED_ID => s.n_subsidized = v,
            id => {
                s.answers.insert(id.to_string(), v);
                s.senses.insert(id.to_string(), sense);
            }
        }
    }
    Ok(out)
}

pub fn write_statistics(stats: &[BlockStatistics], provenance: &str, path: &Path) -> Result<(), Error> {
    std::fs::write(path, format_statistics(stats, provenance))?;
    Ok(())
}

pub fn read_statistics(path: &Path) -> Result<Vec<BlockStatistics>, Error> {
    parse_statistics(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RaceMask;

    fn block(households: Vec<HouseholdRecord>) -> Block {
        Block { block_id: "B".into(), geo_state: "S01".into(), position: (0.0, 0.0), households }
    }

    #[test]
    fn catalogue_shape() {
        let g = RaceGroups::default();
        let w = standard_workload(&g);
        let sf1 = w.iter().filter(|q| !q.is_hud()).count();
        let hud = w.iter().filter(|q| q.is_hud()).count();
        assert_eq!(sf1, 6 + 1 + 7 + 1);
        assert_eq!(hud, 1 + 6 + 1 + 1 + 3);
        let mut ids: Vec<&str> = w.iter().map(|q| q.id.as_str()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), w.len());
    }

    #[test]
    fn empty_block_is_zero() {
        let w = standard_workload(&RaceGroups::default());
        let s = evaluate(&block(vec![]), &w);
        assert!(s.answers.values().all(|v| *v == 0));
    }

    #[test]
    fn direct_counts() {
        let w = standard_workload(&RaceGroups::default());
        let r = RaceMask::single(0);
        let s = evaluate(&block(vec![HouseholdRecord::unsubsidized(2, r, 0); 3]), &w);
        assert_eq!(s.get("sf1_size_2"), Some(3));
        assert_eq!(s.get("sf1_pop"), Some(6));
        let s = evaluate(&block(vec![HouseholdRecord::subsidized(5, r, 2, BedroomClass::Le1)]), &w);
        assert_eq!(s.get("hud_bed_le1"), Some(1));
        assert_eq!(s.get("hud_pop"), Some(5));
        assert_eq!(s.get("hud_with_children"), Some(1));
        assert_eq!(s.get("sf1_children"), Some(2));
    }

    #[test]
    fn statistics_round_trip() {
        let w = standard_workload(&RaceGroups::default());
        let r = RaceMask::single(6);
        let a = evaluate(&block(vec![HouseholdRecord::subsidized(3, r, 1, BedroomClass::Eq2)]), &w);
        let mut b = evaluate(&block(vec![HouseholdRecord::unsubsidized(9, r, 4)]), &w);
        b.block_id = "C".into();
        let text = format_statistics(&[a.clone(), b.clone()], "scenario=identity");
        assert_eq!(parse_statistics(&text).unwrap(), vec![a, b]);
    }
}
