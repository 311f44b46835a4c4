use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BedroomClass, HouseholdRecord, RaceMask};
use crate::Error;

/// Census-side part of a household configuration: the attributes a public-use sample carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SfConfig {
    pub size: u8,
    pub race_flags: RaceMask,
    pub children: u8,
}

/// Per-state frequency tables estimated from a microdata sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StateTable {
    pub sample_size: u64,
    pub config_counts: BTreeMap<SfConfig, u64>,
    /// Prior over `[LE1, EQ2, GE3]`.
    pub bedroom_priors: [f64; 3],
    /// Per-group share of subsidized householders.
    pub hud_race_priors: Vec<f64>,
    /// Share of subsidized households with children.
    pub hud_children_prior: f64,
}

/// Empirical reference distribution, one [`StateTable`] per state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmpiricalDistribution {
    pub max_size: u8,
    pub n_groups: usize,
    pub states: BTreeMap<String, StateTable>,
}

pub const SMOOTHING_PSEUDO_COUNT: f64 = 0.5;

fn normalize(counts: BTreeMap<u8, f64>) -> Option<Vec<(u8, f64)>> {
    let total: f64 = counts.values().sum();
    (total > 0.0).then(|| counts.into_iter().map(|(k, v)| (k, v / total)).collect())
}

impl EmpiricalDistribution {
    /// Tabulate per-state configuration counts from sampled records.
    pub fn from_records<'a>(
        max_size: u8,
        n_groups: usize,
        records: impl IntoIterator<Item = (&'a str, &'a HouseholdRecord)>,
        priors: impl Fn(&str) -> ([f64; 3], Vec<f64>, f64),
    ) -> Self {
        let mut states: BTreeMap<String, StateTable> = BTreeMap::new();
        for (state, rec) in records {
            let t = states.entry(state.to_string()).or_default();
            t.sample_size += 1;
            *t.config_counts.entry(rec.sf1_part()).or_insert(0) += 1;
        }
        for (state, t) in states.iter_mut() {
            let (b, r, c) = priors(state);
            t.bedroom_priors = b;
            t.hud_race_priors = r;
            t.hud_children_prior = c;
        }
        EmpiricalDistribution { max_size, n_groups, states }
    }

    pub fn state(&self, state: &str) -> Result<&StateTable, Error> {
        self.states.get(state).ok_or_else(|| Error::Model(format!("no empirical table for state {state}")))
    }

    /// Number of distinct single-flag census configurations, the smoothing support.
    pub fn support_cells(&self) -> usize {
        let per_group: usize = (1..=self.max_size as usize).map(|s| s + 1).sum();
        per_group * self.n_groups
    }

    /// Raw sample frequency of a configuration; zero when unseen.
    pub fn frequency(&self, state: &str, cfg: &SfConfig) -> f64 {
        match self.states.get(state) {
            Some(t) if t.sample_size > 0 => {
                t.config_counts.get(cfg).copied().unwrap_or(0) as f64 / t.sample_size as f64
            }
            _ => 0.0,
        }
    }

    /// Frequency with an additive pseudo-count on every support cell.
    pub fn smoothed_frequency(&self, state: &str, cfg: &SfConfig) -> f64 {
        let cells = self.support_cells() as f64;
        let (count, m) = match self.states.get(state) {
            Some(t) => (t.config_counts.get(cfg).copied().unwrap_or(0) as f64, t.sample_size as f64),
            None => (0.0, 0.0),
        };
        (count + SMOOTHING_PSEUDO_COUNT) / (m + SMOOTHING_PSEUDO_COUNT * cells)
    }

    /// Distribution of sizes >= 7 among sampled households with the given race flags and child presence.
    pub fn tail_size_table(&self, state: &str, race: RaceMask, has_children: bool) -> Option<Vec<(u8, f64)>> {
        let t = self.states.get(state)?;
        let mut counts = BTreeMap::new();
        for (cfg, n) in &t.config_counts {
            if cfg.size >= 7 && cfg.race_flags == race && (cfg.children > 0) == has_children {
                *counts.entry(cfg.size).or_insert(0.0) += *n as f64;
            }
        }
        normalize(counts)
    }

    pub fn tail_size_unconditional(&self, state: &str) -> Option<Vec<(u8, f64)>> {
        let t = self.states.get(state)?;
        let mut counts = BTreeMap::new();
        for (cfg, n) in &t.config_counts {
            if cfg.size >= 7 {
                *counts.entry(cfg.size).or_insert(0.0) += *n as f64;
            }
        }
        normalize(counts)
    }

    /// Distribution of the (positive) child count among sampled households of this size and race.
    pub fn children_table(&self, state: &str, size: u8, race: RaceMask) -> Option<Vec<(u8, f64)>> {
        let t = self.states.get(state)?;
        let mut counts = BTreeMap::new();
        for (cfg, n) in &t.config_counts {
            if cfg.size == size && cfg.race_flags == race && cfg.children > 0 {
                *counts.entry(cfg.children).or_insert(0.0) += *n as f64;
            }
        }
        normalize(counts)
    }

    pub fn children_unconditional(&self, state: &str) -> Option<Vec<(u8, f64)>> {
        let t = self.states.get(state)?;
        let mut counts = BTreeMap::new();
        for (cfg, n) in &t.config_counts {
            if cfg.children > 0 {
                *counts.entry(cfg.children).or_insert(0.0) += *n as f64;
            }
        }
        normalize(counts)
    }

    pub fn bedroom_prior(&self, state: &str, class: BedroomClass) -> f64 {
        self.states.get(state).map_or(0.0, |t| match class {
            BedroomClass::None => 0.0,
            c => t.bedroom_priors[c as usize],
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), Error> {
        let file = EmpiricalFile::from(self);
        let text = toml::to_string(&file).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, Error> {
        let file: EmpiricalFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.try_into()
    }
}

pub const EMPIRICAL_SCHEMA: &str = "empirical-v1";

#[derive(Serialize, Deserialize)]
struct EmpiricalFile {
    schema: String,
    max_size: u8,
    n_groups: usize,
    states: BTreeMap<String, StateFile>,
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    sample_size: u64,
    bedroom_priors: [f64; 3],
    hud_race_priors: Vec<f64>,
    hud_children_prior: f64,
    /// Rows of `[size, race_flag_mask, children, count]`.
    configs: Vec<[u64; 4]>,
}

impl From<&EmpiricalDistribution> for EmpiricalFile {
    fn from(d: &EmpiricalDistribution) -> Self {
        let states = d
            .states
            .iter()
            .map(|(k, t)| {
                let configs = t
                    .config_counts
                    .iter()
                    .map(|(c, n)| [c.size as u64, c.race_flags.0 as u64, c.children as u64, *n])
                    .collect();
                (
                    k.clone(),
                    StateFile {
                        sample_size: t.sample_size,
                        bedroom_priors: t.bedroom_priors,
                        hud_race_priors: t.hud_race_priors.clone(),
                        hud_children_prior: t.hud_children_prior,
                        configs,
                    },
                )
            })
            .collect();
        EmpiricalFile { schema: EMPIRICAL_SCHEMA.into(), max_size: d.max_size, n_groups: d.n_groups, states }
    }
}

impl TryFrom<EmpiricalFile> for EmpiricalDistribution {
    type Error = Error;

    fn try_from(f: EmpiricalFile) -> Result<Self, Error> {
        if f.schema != EMPIRICAL_SCHEMA {
            return Err(Error::Parse(format!("unsupported empirical schema `{}`", f.schema)));
        }
        let mut states = BTreeMap::new();
        for (name, s) in f.states {
            let mut config_counts = BTreeMap::new();
            let mut total = 0;
            for [size, mask, children, count] in s.configs {
                let cfg = SfConfig { size: size as u8, race_flags: RaceMask(mask as u16), children: children as u8 };
                if cfg.size == 0 || cfg.children > cfg.size || cfg.race_flags.is_empty() {
                    return Err(Error::Parse(format!("invalid configuration row in state {name}")));
                }
                total += count;
                config_counts.insert(cfg, count);
            }
            if total != s.sample_size {
                return Err(Error::Parse(format!(
                    "state {name}: sample_size {} does not match configuration counts {total}",
                    s.sample_size
                )));
            }
            states.insert(
                name,
                StateTable {
                    sample_size: s.sample_size,
                    config_counts,
                    bedroom_priors: s.bedroom_priors,
                    hud_race_priors: s.hud_race_priors,
                    hud_children_prior: s.hud_children_prior,
                },
            );
        }
        Ok(EmpiricalDistribution { max_size: f.max_size, n_groups: f.n_groups, states })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> EmpiricalDistribution {
        let r = RaceMask::single(0);
        let recs = vec![
            HouseholdRecord::unsubsidized(7, r, 2),
            HouseholdRecord::unsubsidized(8, r, 3),
            HouseholdRecord::unsubsidized(7, r, 0),
            HouseholdRecord::unsubsidized(2, r, 1),
            HouseholdRecord::unsubsidized(2, r, 2),
            HouseholdRecord::unsubsidized(2, RaceMask::single(1), 1),
        ];
        EmpiricalDistribution::from_records(15, 7, recs.iter().map(|h| ("01", h)), |_| {
            ([0.5, 0.3, 0.2], vec![0.2; 7], 0.4)
        })
    }

    #[test]
    fn conditional_tables_sum_to_one() {
        let d = toy();
        let r = RaceMask::single(0);
        for table in [
            d.tail_size_table("01", r, true).unwrap(),
            d.tail_size_unconditional("01").unwrap(),
            d.children_table("01", 2, r).unwrap(),
            d.children_unconditional("01").unwrap(),
        ] {
            let s: f64 = table.iter().map(|(_, p)| p).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
        assert_eq!(d.tail_size_table("01", r, true).unwrap(), vec![(7, 0.5), (8, 0.5)]);
        assert!(d.tail_size_table("01", RaceMask::single(3), true).is_none());
    }

    #[test]
    fn smoothed_frequencies_sum_to_one() {
        let d = toy();
        let mut total = 0.0;
        for g in 0..7 {
            for s in 1..=15u8 {
                for c in 0..=s {
                    total += d.smoothed_frequency(
                        "01",
                        &SfConfig { size: s, race_flags: RaceMask::single(g), children: c },
                    );
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn file_round_trip() {
        let d = toy();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emp.toml");
        d.write(&p).unwrap();
        assert_eq!(EmpiricalDistribution::read(&p).unwrap(), d);
    }
}
