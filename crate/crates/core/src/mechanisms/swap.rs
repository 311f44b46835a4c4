//! Targeted household swapping within states.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{HouseholdId, HouseholdRecord, Universe};
use crate::rng::{self, Stream};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwapKey {
    /// Household size and number of adults.
    SizeAdults,
    /// Household size and number of children.
    SizeChildren,
}

impl SwapKey {
    pub fn of(self, h: &HouseholdRecord) -> (u8, u8) {
        match self {
            SwapKey::SizeAdults => (h.size, h.adults()),
            SwapKey::SizeChildren => (h.size, h.children),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwapConfig {
    /// `(cumulative fraction, swap probability)`, most vulnerable tier first.
    pub tiers: Vec<(f64, f64)>,
    pub multiplier: f64,
    pub pool_size: usize,
    pub key: SwapKey,
}

pub const DEFAULT_TIERS: [(f64, f64); 4] = [(0.005, 1.0), (0.20, 0.6), (0.50, 0.3), (1.0, 0.1)];

impl Default for SwapConfig {
    /// The multiplier targets a realised swap rate of about 10%.
    fn default() -> Self {
        let mut c = SwapConfig { tiers: DEFAULT_TIERS.to_vec(), multiplier: 1.0, pool_size: 5, key: SwapKey::SizeAdults };
        c.multiplier = 0.10 / c.expected_fraction();
        c
    }
}

impl SwapConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let mut prev = 0.0;
        for (f, p) in &self.tiers {
            if *f <= prev || !(0.0..=1.0).contains(p) {
                return Err(Error::Config("swap tiers must increase strictly with probabilities in [0, 1]".into()));
            }
            prev = *f;
        }
        if (prev - 1.0).abs() > 1e-12 {
            return Err(Error::Config("swap tiers must end at 1.0".into()));
        }
        if self.multiplier < 0.0 || self.pool_size == 0 {
            return Err(Error::Config("swap multiplier must be >= 0 and pool size >= 1".into()));
        }
        Ok(())
    }

    pub fn selection_probability(&self, tier: usize) -> f64 {
        (self.tiers[tier].1 * self.multiplier).min(1.0)
    }

    /// Expected selected fraction, `sum(tier width * probability)` for a large state.
    pub fn expected_fraction(&self) -> f64 {
        let mut prev = 0.0;
        let mut total = 0.0;
        for (k, (f, _)) in self.tiers.iter().enumerate() {
            total += (f - prev) * self.selection_probability(k);
            prev = *f;
        }
        total
    }

    /// Tier of the household at 0-based `rank` among `m` ranked households.
    pub fn tier_of(&self, rank: usize, m: usize) -> usize {
        self.tiers
            .iter()
            .position(|(f, _)| rank < (f * m as f64).floor() as usize)
            .unwrap_or(self.tiers.len() - 1)
    }
}

#[derive(Debug, Clone)]
pub struct SwapOutcome {
    pub universe: Universe,
    pub households: usize,
    /// Households drawn for swapping.
    pub selected: usize,
    /// Selected households that found a partner and exchanged attributes.
    pub swapped: usize,
    /// Selected households without a key-matching partner in another block.
    pub skipped: Vec<HouseholdId>,
}

impl SwapOutcome {
    pub fn selected_fraction(&self) -> f64 {
        if self.households == 0 {
            0.0
        } else {
            self.selected as f64 / self.households as f64
        }
    }
}

struct StateSwap {
    changes: Vec<(HouseholdId, HouseholdRecord)>,
    households: usize,
    selected: usize,
    swapped: usize,
    skipped: Vec<HouseholdId>,
}

fn swap_state(u: &Universe, state: &str, state_index: usize, cfg: &SwapConfig, seed: u64) -> StateSwap {
    let ids: Vec<HouseholdId> =
        u.households().filter(|(id, _)| u.blocks[id.block].geo_state == state).map(|(id, _)| id).collect();
    let mut recs: Vec<HouseholdRecord> =
        ids.iter().map(|id| u.blocks[id.block].households[id.index]).collect();
    let m = ids.len();
    let mut tuple_counts: HashMap<HouseholdRecord, usize> = HashMap::new();
    for r in &recs {
        *tuple_counts.entry(*r).or_insert(0) += 1;
    }
    let block_pop: Vec<u64> =
        u.blocks.iter().map(|b| b.households.iter().map(|h| h.size as u64).sum()).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        let (ia, ib) = (ids[a], ids[b]);
        tuple_counts[&recs[a]]
            .cmp(&tuple_counts[&recs[b]])
            .then(block_pop[ia.block].cmp(&block_pop[ib.block]))
            .then(u.blocks[ia.block].block_id.cmp(&u.blocks[ib.block].block_id))
            .then(ia.index.cmp(&ib.index))
    });
    let mut rng = rng::stream(seed, Stream::Swap, state_index as u64);
    let chosen: Vec<usize> = order
        .iter()
        .enumerate()
        .filter(|(rank, _)| rng.gen::<f64>() < cfg.selection_probability(cfg.tier_of(*rank, m)))
        .map(|(_, &i)| i)
        .collect();
    let mut by_key: HashMap<(u8, u8), Vec<usize>> = HashMap::new();
    for (i, r) in recs.iter().enumerate() {
        by_key.entry(cfg.key.of(r)).or_default().push(i);
    }
    let mut swapped = 0;
    let mut skipped = Vec::new();
    for &i in &chosen {
        let here = ids[i];
        let pos = u.blocks[here.block].position;
        let mut cands: Vec<(f64, &str, usize, usize)> = by_key[&cfg.key.of(&recs[i])]
            .iter()
            .filter(|&&j| ids[j].block != here.block)
            .map(|&j| {
                let b = &u.blocks[ids[j].block];
                let d = (b.position.0 - pos.0).powi(2) + (b.position.1 - pos.1).powi(2);
                (d, b.block_id.as_str(), ids[j].index, j)
            })
            .collect();
        if cands.is_empty() {
            log::info!("swap: no partner for household {} of block {}", here.index, u.blocks[here.block].block_id);
            skipped.push(here);
            continue;
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)).then(a.2.cmp(&b.2)));
        cands.truncate(cfg.pool_size);
        let j = cands[rng.gen_range(0..cands.len())].3;
        let (a, b) = (recs[i], recs[j]);
        recs[i] = HouseholdRecord { race_flags: b.race_flags, subsidized: b.subsidized, bedroom_class: b.bedroom_class, ..a };
        recs[j] = HouseholdRecord { race_flags: a.race_flags, subsidized: a.subsidized, bedroom_class: a.bedroom_class, ..b };
        swapped += 1;
    }
    StateSwap {
        changes: ids.into_iter().zip(recs).collect(),
        households: m,
        selected: chosen.len(),
        swapped,
        skipped,
    }
}

/// Swap non-key attributes (race flags, subsidized status and bedroom class)
/// between key-matched households in different blocks of the same state. All
/// released statistics are computed from the returned universe.
pub fn swap(u: &Universe, cfg: &SwapConfig, seed: u64) -> Result<SwapOutcome, Error> {
    cfg.validate()?;
    let states = u.states();
    let results: Vec<StateSwap> =
        states.par_iter().enumerate().map(|(k, s)| swap_state(u, s, k, cfg, seed)).collect();
    let mut out = u.clone();
    let mut outcome_skipped = Vec::new();
    let (mut households, mut selected, mut swapped) = (0, 0, 0);
    for r in results {
        for (id, rec) in r.changes {
            out.blocks[id.block].households[id.index] = rec;
        }
        households += r.households;
        selected += r.selected;
        swapped += r.swapped;
        outcome_skipped.extend(r.skipped);
    }
    Ok(SwapOutcome { universe: out, households, selected, swapped, skipped: outcome_skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BedroomClass, Block, EmpiricalDistribution, RaceGroups, RaceMask};

    fn two_blocks() -> Universe {
        let mk = |id: &str, x: f64, h: HouseholdRecord| Block {
            block_id: id.into(),
            geo_state: "S01".into(),
            position: (x, 0.0),
            households: vec![h],
        };
        Universe {
            blocks: vec![
                mk("A", 0.0, HouseholdRecord::subsidized(3, RaceMask::single(0), 1, BedroomClass::Eq2)),
                mk("B", 1.0, HouseholdRecord::unsubsidized(3, RaceMask::single(4), 1)),
            ],
            seed: 0,
            alpha: 1.0,
            race_groups: RaceGroups::default(),
            empirical_reference: EmpiricalDistribution::default(),
        }
    }

    #[test]
    fn default_rate_is_ten_percent() {
        assert!((SwapConfig::default().expected_fraction() - 0.10).abs() < 1e-12);
    }

    #[test]
    fn zero_multiplier_is_identity() {
        let u = two_blocks();
        let cfg = SwapConfig { multiplier: 0.0, ..Default::default() };
        assert_eq!(swap(&u, &cfg, 1).unwrap().universe, u);
    }

    #[test]
    fn forced_swap_exchanges_attributes() {
        let u = two_blocks();
        let cfg = SwapConfig { tiers: vec![(1.0, 1.0)], multiplier: 1.0, ..Default::default() };
        let out = swap(&u, &cfg, 1).unwrap();
        assert_eq!(out.selected, 2);
        let a = out.universe.blocks[0].households[0];
        let b = out.universe.blocks[1].households[0];
        assert_eq!((a.size, b.size), (3, 3));
        // Both households were selected, so the pair is exchanged twice.
        assert_eq!(a, u.blocks[0].households[0]);
        assert_eq!(b, u.blocks[1].households[0]);

        let cfg = SwapConfig { tiers: vec![(0.5, 1.0), (1.0, 0.0)], multiplier: 1.0, ..Default::default() };
        let out = swap(&u, &cfg, 1).unwrap();
        assert_eq!(out.selected, 1);
        let a = out.universe.blocks[0].households[0];
        assert_eq!(a.race_flags, RaceMask::single(4));
        assert!(!a.subsidized);
        assert_eq!(out.universe.blocks[1].households[0].bedroom_class, BedroomClass::Eq2);
    }
}
