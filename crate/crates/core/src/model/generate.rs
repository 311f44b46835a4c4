//! Synthetic ground-truth microdata.
//!
//! A reference population is drawn per state from a parametric [`PopulationModel`]
//! and a fraction of it becomes the [`EmpiricalDistribution`]. Blocks are then
//! built from coarse skeleton rows (size class with an open top bin, child
//! presence, householder group). Exact tail sizes and child counts are drawn from
//! the empirical conditionals, subsidized status from the heuristic likelihood,
//! and bedroom classes from the bedroom prior reweighted by `alpha` on violating
//! classes.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    BedroomClass, Block, EmpiricalDistribution, HouseholdRecord, RaceGroups, RaceMask, Universe,
    ViolationRule,
};
use crate::rng::{self, Stream, StreamRng};
use crate::Error;

/// Parametric household model standing in for the full-count microdata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationModel {
    pub race_probs: Vec<f64>,
    /// Probabilities of size classes 1..=6 and the open class 7+.
    pub size_class_probs: [f64; 7],
    /// Probability that a household of each size class has children.
    pub child_prob_by_size_class: [f64; 7],
    /// Ratio between consecutive tail sizes 7, 8, 9, ...
    pub tail_decay: f64,
    /// Probability that a non-householder member beyond the first child is a child.
    pub child_share: f64,
}

impl Default for PopulationModel {
    fn default() -> Self {
        PopulationModel {
            race_probs: vec![0.45, 0.25, 0.02, 0.06, 0.02, 0.03, 0.17],
            size_class_probs: [0.30, 0.26, 0.17, 0.13, 0.07, 0.04, 0.03],
            child_prob_by_size_class: [0.0, 0.25, 0.55, 0.75, 0.85, 0.9, 0.95],
            tail_decay: 0.55,
            child_share: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub n_blocks: usize,
    pub n_states: usize,
    /// Household counts per block and their weights.
    pub household_counts: Vec<(usize, f64)>,
    /// Subsidized share used to derive `n_s = round(fraction * N)`.
    pub subsidized_fraction: f64,
    pub min_subsidized: usize,
    pub enforce_suppression_floor: bool,
    pub alpha: f64,
    pub race_groups: RaceGroups,
    pub population: PopulationModel,
    pub reference_households_per_state: usize,
    pub sample_fraction: f64,
    pub max_size: u8,
    pub bedroom_priors: [f64; 3],
    /// Subsidized-householder group shares; defaults to the population race shares.
    pub hud_race_priors: Option<Vec<f64>>,
    pub hud_children_prior: f64,
    pub rule: ViolationRule,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            n_blocks: 200,
            n_states: 2,
            household_counts: (11..=30).map(|n| (n, 1.0)).collect(),
            subsidized_fraction: 0.7,
            min_subsidized: 11,
            enforce_suppression_floor: true,
            alpha: 1e-4,
            race_groups: RaceGroups::default(),
            population: PopulationModel::default(),
            reference_households_per_state: 20_000,
            sample_fraction: 0.2,
            max_size: 15,
            bedroom_priors: [0.45, 0.33, 0.22],
            hud_race_priors: None,
            hud_children_prior: 0.45,
            rule: ViolationRule::default(),
        }
    }
}

impl GenerationConfig {
    pub fn subsidized_count(&self, n_total: usize) -> usize {
        let by_share = (self.subsidized_fraction * n_total as f64).round() as usize;
        if self.enforce_suppression_floor {
            by_share.max(self.min_subsidized)
        } else {
            by_share
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.race_groups.validate()?;
        let cfg = |m: String| Err(Error::Config(m));
        if self.n_blocks == 0 || self.n_states == 0 || self.n_states > self.n_blocks {
            return cfg(format!("need 1 <= n_states ({}) <= n_blocks ({})", self.n_states, self.n_blocks));
        }
        if self.household_counts.is_empty() || self.household_counts.iter().any(|(n, w)| *n == 0 || *w < 0.0) {
            return cfg("household_counts must be non-empty with positive counts".into());
        }
        if !(0.0..=1.0).contains(&self.subsidized_fraction) {
            return cfg("subsidized_fraction must lie in [0, 1]".into());
        }
        for (n, _) in &self.household_counts {
            if self.subsidized_count(*n) > *n {
                return cfg(format!(
                    "block with {n} households would need {} subsidized households",
                    self.subsidized_count(*n)
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return cfg("alpha must lie in [0, 1]".into());
        }
        if self.population.race_probs.len() != self.race_groups.len() {
            return cfg("population.race_probs length must match race_groups".into());
        }
        if let Some(p) = &self.hud_race_priors {
            if p.len() != self.race_groups.len() {
                return cfg("hud_race_priors length must match race_groups".into());
            }
        }
        if self.max_size < 7 {
            return cfg("max_size must be at least 7".into());
        }
        if !(0.0..=1.0).contains(&self.sample_fraction) || self.sample_fraction == 0.0 {
            return cfg("sample_fraction must lie in (0, 1]".into());
        }
        if self.bedroom_priors.iter().any(|p| *p < 0.0) || self.bedroom_priors[2] <= 0.0 {
            return cfg("bedroom_priors must be non-negative with a positive GE3 share".into());
        }
        Ok(())
    }

    fn priors_for_state(&self) -> ([f64; 3], Vec<f64>, f64) {
        let total: f64 = self.bedroom_priors.iter().sum();
        let b = self.bedroom_priors.map(|p| p / total);
        let races = self.hud_race_priors.clone().unwrap_or_else(|| self.population.race_probs.clone());
        (b, races, self.hud_children_prior)
    }

    pub fn state_code(&self, block: usize) -> String {
        format!("S{:02}", block * self.n_states / self.n_blocks + 1)
    }
}

/// A household row before exact tail size and child count are known.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkeletonHousehold {
    /// 1..=6, or 7 for the open 7+ class.
    pub size_class: u8,
    pub race_flags: RaceMask,
    pub has_children: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum GenerationEvent {
    TailFallback { block: String, household: usize },
    ChildrenFallback { block: String, household: usize },
    ChildrenClamped { block: String, household: usize, drawn: u8, size: u8 },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GenerationLog {
    pub events: Vec<GenerationEvent>,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub universe: Universe,
    pub log: GenerationLog,
}

fn draw_categorical<R: Rng>(rng: &mut R, weights: impl Iterator<Item = f64> + Clone) -> usize {
    let total: f64 = weights.clone().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last = i;
            if u < w {
                return i;
            }
            u -= w;
        }
    }
    last
}

fn draw_table<R: Rng>(rng: &mut R, table: &[(u8, f64)]) -> u8 {
    table[draw_categorical(rng, table.iter().map(|(_, p)| *p))].0
}

impl PopulationModel {
    fn skeleton<R: Rng>(&self, rng: &mut R) -> SkeletonHousehold {
        let size_class = draw_categorical(rng, self.size_class_probs.iter().copied()) as u8 + 1;
        let race = draw_categorical(rng, self.race_probs.iter().copied());
        let has_children = size_class > 1 && rng.gen::<f64>() < self.child_prob_by_size_class[size_class as usize - 1];
        SkeletonHousehold { size_class, race_flags: RaceMask::single(race), has_children }
    }

    /// Full household with an exact size and child count.
    fn household<R: Rng>(&self, rng: &mut R, max_size: u8) -> HouseholdRecord {
        let sk = self.skeleton(rng);
        let mut size = sk.size_class;
        if size == 7 {
            while size < max_size && rng.gen::<f64>() < self.tail_decay {
                size += 1;
            }
        }
        let children = if sk.has_children {
            let extra = (0..size.saturating_sub(2)).filter(|_| rng.gen::<f64>() < self.child_share).count() as u8;
            1 + extra
        } else {
            0
        };
        HouseholdRecord::unsubsidized(size, sk.race_flags, children)
    }
}

/// Draw an exact size >= 7 for a household in the open top size class.
pub fn sample_tail_size<R: Rng>(
    household: &SkeletonHousehold,
    state: &str,
    dist: &EmpiricalDistribution,
    rng: &mut R,
    fallback: &mut bool,
) -> Result<u8, Error> {
    debug_assert_eq!(household.size_class, 7);
    *fallback = false;
    if let Some(t) = dist.tail_size_table(state, household.race_flags, household.has_children) {
        return Ok(draw_table(rng, &t));
    }
    *fallback = true;
    dist.tail_size_unconditional(state)
        .map(|t| draw_table(rng, &t))
        .ok_or_else(|| Error::Model(format!("state {state} has no households of size 7 or more")))
}

/// Draw the number of children for a household flagged as having children.
///
/// `outcome` reports `(fallback_used, clamped_from)`.
pub fn sample_children<R: Rng>(
    size: u8,
    race: RaceMask,
    state: &str,
    dist: &EmpiricalDistribution,
    rng: &mut R,
    outcome: &mut (bool, Option<u8>),
) -> Result<u8, Error> {
    *outcome = (false, None);
    let drawn = match dist.children_table(state, size, race) {
        Some(t) => draw_table(rng, &t),
        None => {
            outcome.0 = true;
            let t = dist
                .children_unconditional(state)
                .ok_or_else(|| Error::Model(format!("state {state} has no households with children")))?;
            draw_table(rng, &t)
        }
    };
    if drawn > size {
        outcome.1 = Some(drawn);
        return Ok(size);
    }
    Ok(drawn)
}

fn clamp_prior(p: f64) -> f64 {
    p.clamp(1e-6, 1.0 - 1e-6)
}

/// Heuristic likelihood of living in a subsidized property: the product of
/// independent binary-attribute priors divided by the smoothed configuration frequency.
pub fn subsidy_weight(record: &HouseholdRecord, state: &str, dist: &EmpiricalDistribution) -> f64 {
    let Ok(t) = dist.state(state) else { return 0.0 };
    let mut w = 1.0;
    for (j, p) in t.hud_race_priors.iter().enumerate() {
        let p = clamp_prior(*p);
        w *= if record.race_flags.has(j) { p } else { 1.0 - p };
    }
    let pc = clamp_prior(t.hud_children_prior);
    w *= if record.has_children() { pc } else { 1.0 - pc };
    w / dist.smoothed_frequency(state, &record.sf1_part())
}

/// Successive weighted draws without replacement.
pub fn weighted_sample_without_replacement<R: Rng>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..weights.len()).collect();
    let mut chosen = Vec::with_capacity(n);
    for _ in 0..n.min(weights.len()) {
        let pick = if remaining.iter().all(|i| weights[*i] <= 0.0) {
            0
        } else {
            draw_categorical(rng, remaining.iter().map(|i| weights[*i].max(0.0)))
        };
        chosen.push(remaining.remove(pick));
    }
    chosen
}

/// Mark exactly `n_s` households as subsidized. Bedroom classes are left pending
/// (`NONE`) until [`assign_bedrooms`] runs.
pub fn assign_subsidized<R: Rng>(
    mut block: Block,
    n_s: usize,
    dist: &EmpiricalDistribution,
    rng: &mut R,
) -> Result<Block, Error> {
    if n_s > block.households.len() {
        return Err(Error::Config(format!(
            "block {} has {} households, cannot mark {n_s} subsidized",
            block.block_id,
            block.households.len()
        )));
    }
    let weights: Vec<f64> =
        block.households.iter().map(|h| subsidy_weight(h, &block.geo_state, dist)).collect();
    for i in weighted_sample_without_replacement(&weights, n_s, rng) {
        block.households[i].subsidized = true;
    }
    Ok(block)
}

/// Normalised bedroom-class probabilities for a subsidized household of `size`.
pub fn bedroom_weights(size: u8, priors: [f64; 3], alpha: f64, rule: &ViolationRule) -> [f64; 3] {
    let mut w = [0.0; 3];
    for (k, class) in BedroomClass::UNITS.iter().enumerate() {
        w[k] = priors[k] * if rule.exceeds(*class, size) { alpha } else { 1.0 };
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return [0.0, 0.0, 1.0];
    }
    w.map(|x| x / total)
}

pub fn assign_bedrooms<R: Rng>(
    mut block: Block,
    dist: &EmpiricalDistribution,
    alpha: f64,
    rule: &ViolationRule,
    rng: &mut R,
) -> Result<Block, Error> {
    let priors = dist.state(&block.geo_state)?.bedroom_priors;
    for h in block.households.iter_mut().filter(|h| h.subsidized) {
        let w = bedroom_weights(h.size, priors, alpha, rule);
        h.bedroom_class = BedroomClass::UNITS[draw_categorical(rng, w.iter().copied())];
    }
    Ok(block)
}

fn reference_distribution(cfg: &GenerationConfig, seed: u64) -> EmpiricalDistribution {
    let states: Vec<String> = (0..cfg.n_states).map(|s| format!("S{:02}", s + 1)).collect();
    let samples: Vec<(String, Vec<HouseholdRecord>)> = states
        .par_iter()
        .enumerate()
        .map(|(si, state)| {
            let mut gen_rng = rng::stream(seed, Stream::Reference, si as u64);
            let mut sample_rng = rng::stream(seed, Stream::Sample, si as u64);
            let sample: Vec<HouseholdRecord> = (0..cfg.reference_households_per_state)
                .map(|_| cfg.population.household(&mut gen_rng, cfg.max_size))
                .filter(|_| sample_rng.gen::<f64>() < cfg.sample_fraction)
                .collect();
            (state.clone(), sample)
        })
        .collect();
    EmpiricalDistribution::from_records(
        cfg.max_size,
        cfg.race_groups.len(),
        samples.iter().flat_map(|(s, recs)| recs.iter().map(move |h| (s.as_str(), h))),
        |_| cfg.priors_for_state(),
    )
}

fn generate_block(
    cfg: &GenerationConfig,
    dist: &EmpiricalDistribution,
    seed: u64,
    index: usize,
) -> Result<(Block, Vec<GenerationEvent>), Error> {
    let mut rng: StreamRng = rng::stream(seed, Stream::Block, index as u64);
    let state = cfg.state_code(index);
    let state_index = index * cfg.n_states / cfg.n_blocks;
    let n = cfg.household_counts[draw_categorical(&mut rng, cfg.household_counts.iter().map(|(_, w)| *w))].0;
    let position = (state_index as f64 * 10.0 + rng.gen::<f64>(), rng.gen::<f64>());
    let block_id = format!("B{:06}", index);
    let mut events = Vec::new();
    let mut households = Vec::with_capacity(n);
    for i in 0..n {
        let sk = cfg.population.skeleton(&mut rng);
        let size = if sk.size_class == 7 {
            let mut fallback = false;
            let s = sample_tail_size(&sk, &state, dist, &mut rng, &mut fallback)?;
            if fallback {
                events.push(GenerationEvent::TailFallback { block: block_id.clone(), household: i });
            }
            s
        } else {
            sk.size_class
        };
        let children = if sk.has_children {
            let mut outcome = (false, None);
            let c = sample_children(size, sk.race_flags, &state, dist, &mut rng, &mut outcome)?;
            if outcome.0 {
                events.push(GenerationEvent::ChildrenFallback { block: block_id.clone(), household: i });
            }
            if let Some(drawn) = outcome.1 {
                log::warn!("block {block_id} household {i}: drew {drawn} children for size {size}, clamped");
                events.push(GenerationEvent::ChildrenClamped { block: block_id.clone(), household: i, drawn, size });
            }
            c
        } else {
            0
        };
        households.push(HouseholdRecord::unsubsidized(size, sk.race_flags, children));
    }
    let block = Block { block_id, geo_state: state, position, households };
    let n_s = cfg.subsidized_count(n);
    let block = assign_subsidized(block, n_s, dist, &mut rng)?;
    let block = assign_bedrooms(block, dist, cfg.alpha, &cfg.rule, &mut rng)?;
    Ok((block, events))
}

/// Build a full synthetic universe. Output depends only on `(cfg, seed)`.
pub fn generate_universe(cfg: &GenerationConfig, seed: u64) -> Result<Generated, Error> {
    cfg.validate()?;
    let dist = reference_distribution(cfg, seed);
    let results: Vec<Result<(Block, Vec<GenerationEvent>), Error>> =
        (0..cfg.n_blocks).into_par_iter().map(|i| generate_block(cfg, &dist, seed, i)).collect();
    let mut blocks = Vec::with_capacity(cfg.n_blocks);
    let mut log = GenerationLog::default();
    for r in results {
        let (b, ev) = r?;
        blocks.push(b);
        log.events.extend(ev);
    }
    Ok(Generated {
        universe: Universe {
            blocks,
            seed,
            alpha: cfg.alpha,
            race_groups: cfg.race_groups.clone(),
            empirical_reference: dist,
        },
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SfConfig;
    use rand::SeedableRng;

    fn dist_with(configs: &[(u8, u16, u8, u64)]) -> EmpiricalDistribution {
        let mut d = EmpiricalDistribution { max_size: 15, n_groups: 7, ..Default::default() };
        let t = d.states.entry("S01".into()).or_default();
        for (s, m, c, n) in configs {
            t.config_counts.insert(SfConfig { size: *s, race_flags: RaceMask(*m), children: *c }, *n);
            t.sample_size += n;
        }
        t.bedroom_priors = [0.5, 0.3, 0.2];
        t.hud_race_priors = vec![0.3; 7];
        t.hud_children_prior = 0.4;
        d
    }

    fn rng() -> StreamRng {
        StreamRng::seed_from_u64(42)
    }

    #[test]
    fn tail_size_degenerate_table() {
        let d = dist_with(&[(7, 1, 0, 5)]);
        let sk = SkeletonHousehold { size_class: 7, race_flags: RaceMask(1), has_children: false };
        let mut fb = false;
        for _ in 0..50 {
            assert_eq!(sample_tail_size(&sk, "S01", &d, &mut rng(), &mut fb).unwrap(), 7);
        }
        assert!(!fb);
    }

    #[test]
    fn tail_size_monte_carlo_mean() {
        let d = dist_with(&[(7, 1, 0, 10), (8, 1, 0, 10)]);
        let sk = SkeletonHousehold { size_class: 7, race_flags: RaceMask(1), has_children: false };
        let mut r = rng();
        let mut fb = false;
        let n = 100_000;
        let total: u64 = (0..n).map(|_| sample_tail_size(&sk, "S01", &d, &mut r, &mut fb).unwrap() as u64).sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 7.5).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn tail_size_fallback_to_unconditional() {
        let d = dist_with(&[(9, 2, 0, 10)]);
        let sk = SkeletonHousehold { size_class: 7, race_flags: RaceMask(1), has_children: true };
        let mut fb = false;
        assert_eq!(sample_tail_size(&sk, "S01", &d, &mut rng(), &mut fb).unwrap(), 9);
        assert!(fb);
    }

    #[test]
    fn children_tables() {
        let d = dist_with(&[(2, 1, 1, 7)]);
        let mut o = (false, None);
        assert_eq!(sample_children(2, RaceMask(1), "S01", &d, &mut rng(), &mut o).unwrap(), 1);

        let d = dist_with(&[(2, 1, 1, 70), (2, 1, 2, 30)]);
        let mut r = rng();
        let n = 100_000;
        let ones = (0..n).filter(|_| sample_children(2, RaceMask(1), "S01", &d, &mut r, &mut o).unwrap() == 1).count();
        assert!((ones as f64 / n as f64 - 0.7).abs() < 0.01);
    }

    #[test]
    fn children_clamped_to_size() {
        let d = dist_with(&[(6, 1, 5, 10)]);
        let mut o = (false, None);
        assert_eq!(sample_children(3, RaceMask(1), "S01", &d, &mut rng(), &mut o).unwrap(), 3);
        assert_eq!(o, (true, Some(5)));
    }

    fn plain_block(n: usize) -> Block {
        Block {
            block_id: "B0".into(),
            geo_state: "S01".into(),
            position: (0.0, 0.0),
            households: (0..n).map(|i| HouseholdRecord::unsubsidized(1 + (i % 4) as u8, RaceMask(1), 0)).collect(),
        }
    }

    #[test]
    fn subsidized_extremes() {
        let d = dist_with(&[(1, 1, 0, 3)]);
        let b = assign_subsidized(plain_block(5), 0, &d, &mut rng()).unwrap();
        assert_eq!(b.n_subsidized(), 0);
        let b = assign_subsidized(plain_block(5), 5, &d, &mut rng()).unwrap();
        assert_eq!(b.n_subsidized(), 5);
        assert!(assign_subsidized(plain_block(5), 6, &d, &mut rng()).is_err());
    }

    #[test]
    fn weighted_draw_probability() {
        let mut r = rng();
        let n = 100_000;
        let first = (0..n).filter(|_| weighted_sample_without_replacement(&[3.0, 1.0], 1, &mut r)[0] == 0).count();
        assert!((first as f64 / n as f64 - 0.75).abs() < 0.01);
    }

    #[test]
    fn alpha_zero_excludes_violating_classes() {
        let rule = ViolationRule::default();
        assert_eq!(bedroom_weights(5, [0.5, 0.3, 0.2], 0.0, &rule), [0.0, 0.0, 1.0]);
        let d = dist_with(&[(5, 1, 0, 3)]);
        let mut b = plain_block(1);
        b.households[0] = HouseholdRecord { subsidized: true, ..HouseholdRecord::unsubsidized(5, RaceMask(1), 0) };
        let mut r = rng();
        for _ in 0..200 {
            let out = assign_bedrooms(b.clone(), &d, 0.0, &rule, &mut r).unwrap();
            assert_eq!(out.households[0].bedroom_class, BedroomClass::Ge3);
        }
    }

    #[test]
    fn alpha_one_reproduces_prior() {
        let d = dist_with(&[(5, 1, 0, 3)]);
        let rule = ViolationRule::default();
        let mut b = plain_block(1);
        b.households[0] = HouseholdRecord { subsidized: true, ..HouseholdRecord::unsubsidized(5, RaceMask(1), 0) };
        let mut r = rng();
        let mut counts = [0usize; 3];
        let n = 100_000;
        for _ in 0..n {
            let out = assign_bedrooms(b.clone(), &d, 1.0, &rule, &mut r).unwrap();
            counts[out.households[0].bedroom_class as usize] += 1;
        }
        for (k, p) in [0.5, 0.3, 0.2].iter().enumerate() {
            assert!((counts[k] as f64 / n as f64 - p).abs() < 0.01);
        }
    }

    #[test]
    fn single_block_all_subsidized() {
        let cfg = GenerationConfig {
            n_blocks: 1,
            n_states: 1,
            household_counts: vec![(11, 1.0)],
            subsidized_fraction: 1.0,
            alpha: 1.0,
            reference_households_per_state: 5000,
            ..Default::default()
        };
        let g = generate_universe(&cfg, 9).unwrap();
        assert_eq!(g.universe.blocks[0].n_total(), 11);
        assert_eq!(g.universe.blocks[0].n_subsidized(), 11);
        g.universe.blocks[0].validate().unwrap();
    }

    #[test]
    fn rejects_infeasible_subsidized_rule() {
        let cfg = GenerationConfig { household_counts: vec![(8, 1.0)], ..Default::default() };
        assert!(matches!(generate_universe(&cfg, 1), Err(Error::Config(_))));
    }
}
