//! Household, block and universe types, plus the synthetic-universe generator.

mod empirical;
mod generate;
mod io;

pub use empirical::{EmpiricalDistribution, SfConfig, StateTable};
pub use generate::{
    assign_bedrooms, assign_subsidized, generate_universe, sample_children, sample_tail_size,
    GenerationConfig, GenerationEvent, GenerationLog, Generated, PopulationModel,
};
pub use io::{read_universe, write_universe, UNIVERSE_SCHEMA};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::Error;

/// Bedroom class of a subsidized unit. `None` marks households outside subsidized properties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BedroomClass {
    Le1 = 0,
    Eq2 = 1,
    Ge3 = 2,
    None = 3,
}

impl BedroomClass {
    pub const UNITS: [BedroomClass; 3] = [BedroomClass::Le1, BedroomClass::Eq2, BedroomClass::Ge3];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self, Error> {
        match code {
            0 => Ok(BedroomClass::Le1),
            1 => Ok(BedroomClass::Eq2),
            2 => Ok(BedroomClass::Ge3),
            3 => Ok(BedroomClass::None),
            other => Err(Error::Parse(format!("bedroom class code {other}"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BedroomClass::Le1 => "le1",
            BedroomClass::Eq2 => "eq2",
            BedroomClass::Ge3 => "ge3",
            BedroomClass::None => "none",
        }
    }
}

/// Bit set over race/ethnicity groups; bit `j` is the indicator for group `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct RaceMask(pub u16);

impl RaceMask {
    pub fn single(group: usize) -> Self {
        RaceMask(1 << group)
    }

    pub fn has(self, group: usize) -> bool {
        self.0 & (1 << group) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Index of the lowest set flag, taken as the householder's group.
    pub fn primary(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize)
    }

    pub fn groups(self) -> impl Iterator<Item = usize> {
        (0..16).filter(move |j| self.has(*j))
    }
}

impl fmt::LowerHex for RaceMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::LowerHex::fmt(&self.0, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaceGroup {
    pub name: String,
    pub hispanic: bool,
}

/// The configured race/ethnicity groups `J`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaceGroups(pub Vec<RaceGroup>);

impl Default for RaceGroups {
    /// Six non-Hispanic race groups plus one Hispanic group.
    fn default() -> Self {
        let nh = ["white_nh", "black_nh", "aian_nh", "asian_nh", "nhpi_other_nh", "multi_nh"];
        let mut groups: Vec<RaceGroup> =
            nh.iter().map(|n| RaceGroup { name: n.to_string(), hispanic: false }).collect();
        groups.push(RaceGroup { name: "hispanic".into(), hispanic: true });
        RaceGroups(groups)
    }
}

impl RaceGroups {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn non_hispanic(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, g)| !g.hispanic).map(|(j, _)| j)
    }

    pub fn hispanic_mask(&self) -> RaceMask {
        let mut m = 0u16;
        for (j, g) in self.0.iter().enumerate() {
            if g.hispanic {
                m |= 1 << j;
            }
        }
        RaceMask(m)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.0.is_empty() || self.0.len() > 16 {
            return Err(Error::Config(format!("race group count {} not in 1..=16", self.0.len())));
        }
        Ok(())
    }
}

/// One household's reconstructable attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HouseholdRecord {
    pub size: u8,
    pub race_flags: RaceMask,
    pub children: u8,
    pub subsidized: bool,
    pub bedroom_class: BedroomClass,
}

impl HouseholdRecord {
    pub fn unsubsidized(size: u8, race_flags: RaceMask, children: u8) -> Self {
        HouseholdRecord { size, race_flags, children, subsidized: false, bedroom_class: BedroomClass::None }
    }

    pub fn subsidized(size: u8, race_flags: RaceMask, children: u8, bedroom: BedroomClass) -> Self {
        HouseholdRecord { size, race_flags, children, subsidized: true, bedroom_class: bedroom }
    }

    pub fn adults(&self) -> u8 {
        self.size - self.children
    }

    pub fn has_children(&self) -> bool {
        self.children > 0
    }

    pub fn sf1_part(&self) -> SfConfig {
        SfConfig { size: self.size, race_flags: self.race_flags, children: self.children }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.size == 0 {
            return Err(Error::Invariant("household size must be at least 1".into()));
        }
        if self.children > self.size {
            return Err(Error::Invariant(format!(
                "household has {} children but size {}",
                self.children, self.size
            )));
        }
        if self.race_flags.is_empty() {
            return Err(Error::Invariant("household has no race flag".into()));
        }
        if self.subsidized == (self.bedroom_class == BedroomClass::None) {
            return Err(Error::Invariant("bedroom class must be NONE exactly when unsubsidized".into()));
        }
        Ok(())
    }
}

/// Occupancy limits per bedroom class ("two heartbeats per room").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationRule {
    pub max_le1: u8,
    pub max_eq2: u8,
}

impl Default for ViolationRule {
    fn default() -> Self {
        ViolationRule { max_le1: 2, max_eq2: 4 }
    }
}

impl ViolationRule {
    pub fn max_occupancy(&self, class: BedroomClass) -> Option<u8> {
        match class {
            BedroomClass::Le1 => Some(self.max_le1),
            BedroomClass::Eq2 => Some(self.max_eq2),
            BedroomClass::Ge3 | BedroomClass::None => None,
        }
    }

    /// Whether a household of `size` placed in a unit of `class` exceeds the limit.
    pub fn exceeds(&self, class: BedroomClass, size: u8) -> bool {
        self.max_occupancy(class).is_some_and(|max| size > max)
    }

    pub fn is_violation(&self, record: &HouseholdRecord) -> bool {
        record.subsidized && self.exceeds(record.bedroom_class, record.size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub block_id: String,
    pub geo_state: String,
    pub position: (f64, f64),
    pub households: Vec<HouseholdRecord>,
}

impl Block {
    pub fn n_total(&self) -> usize {
        self.households.len()
    }

    pub fn n_subsidized(&self) -> usize {
        self.households.iter().filter(|h| h.subsidized).count()
    }

    pub fn violations(&self, rule: &ViolationRule) -> usize {
        self.households.iter().filter(|h| rule.is_violation(h)).count()
    }

    pub fn validate(&self) -> Result<(), Error> {
        for h in &self.households {
            h.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Universe {
    pub blocks: Vec<Block>,
    pub seed: u64,
    pub alpha: f64,
    pub race_groups: RaceGroups,
    pub empirical_reference: EmpiricalDistribution,
}

impl Universe {
    pub fn households(&self) -> impl Iterator<Item = (HouseholdId, &HouseholdRecord)> {
        self.blocks.iter().enumerate().flat_map(|(b, blk)| {
            blk.households.iter().enumerate().map(move |(i, h)| (HouseholdId { block: b, index: i }, h))
        })
    }

    pub fn states(&self) -> Vec<String> {
        let mut s: Vec<String> = self.blocks.iter().map(|b| b.geo_state.clone()).collect();
        s.sort();
        s.dedup();
        s
    }
}

/// Stable identifier of a ground-truth household: block position and index within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HouseholdId {
    pub block: usize,
    pub index: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn violation_predicate() {
        let rule = ViolationRule::default();
        let r = RaceMask::single(0);
        assert!(rule.is_violation(&HouseholdRecord::subsidized(3, r, 1, BedroomClass::Le1)));
        assert!(!rule.is_violation(&HouseholdRecord::subsidized(2, r, 1, BedroomClass::Le1)));
        assert!(rule.is_violation(&HouseholdRecord::subsidized(5, r, 1, BedroomClass::Eq2)));
        assert!(!rule.is_violation(&HouseholdRecord::subsidized(4, r, 1, BedroomClass::Eq2)));
        assert!(!rule.is_violation(&HouseholdRecord::subsidized(15, r, 9, BedroomClass::Ge3)));
        assert!(!rule.is_violation(&HouseholdRecord::unsubsidized(9, r, 0)));
    }

    #[test]
    fn record_invariants() {
        let r = RaceMask::single(2);
        assert!(HouseholdRecord::unsubsidized(2, r, 3).validate().is_err());
        assert!(HouseholdRecord::unsubsidized(2, RaceMask(0), 0).validate().is_err());
        let bad = HouseholdRecord { bedroom_class: BedroomClass::Le1, ..HouseholdRecord::unsubsidized(2, r, 0) };
        assert!(bad.validate().is_err());
        assert!(HouseholdRecord::subsidized(2, r, 2, BedroomClass::Eq2).validate().is_ok());
    }

    #[test]
    fn default_groups() {
        let g = RaceGroups::default();
        assert_eq!(g.len(), 7);
        assert_eq!(g.non_hispanic().count(), 6);
        assert_eq!(g.hispanic_mask(), RaceMask::single(6));
    }
}
