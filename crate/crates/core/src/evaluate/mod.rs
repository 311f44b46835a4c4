//! Re-identification scoring: match keys, confidence rankings, putative
//! violations and block- and household-level precision and recall.

mod report;

pub use report::{
    format_metrics, format_summary, AttackReport, BlockRow, CurvePoint, EvaluationOptions, ReportInputs,
};

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attack::Reconstruction;
use crate::model::{HouseholdId, HouseholdRecord, Universe, ViolationRule};
use crate::rng::{self, Stream};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Size,
    /// Householder race/ethnicity (the single race flag).
    Race,
    Children,
    ChildPresence,
    Subsidized,
    Bedroom,
}

impl Attribute {
    pub fn value(self, h: &HouseholdRecord) -> u16 {
        match self {
            Attribute::Size => h.size as u16,
            Attribute::Race => h.race_flags.0,
            Attribute::Children => h.children as u16,
            Attribute::ChildPresence => h.has_children() as u16,
            Attribute::Subsidized => h.subsidized as u16,
            Attribute::Bedroom => h.bedroom_class.code() as u16,
        }
    }
}

/// Attribute values of one household under a match key, in key order.
pub type KeyValue = Vec<u16>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchKey {
    pub name: String,
    pub attributes: Vec<Attribute>,
}

impl MatchKey {
    pub fn hud() -> Self {
        use Attribute::*;
        MatchKey { name: "hud".into(), attributes: vec![Subsidized, Bedroom, Race, ChildPresence] }
    }

    pub fn broker() -> Self {
        use Attribute::*;
        MatchKey { name: "broker".into(), attributes: vec![Race, ChildPresence] }
    }

    pub fn sf1() -> Self {
        use Attribute::*;
        MatchKey { name: "sf1".into(), attributes: vec![Size, Race, Children] }
    }

    pub fn preset(name: &str) -> Result<Self, Error> {
        match name {
            "hud" => Ok(Self::hud()),
            "broker" => Ok(Self::broker()),
            "sf1" => Ok(Self::sf1()),
            _ => Err(Error::Config(format!("unknown match key preset `{name}`"))),
        }
    }

    pub fn project(&self, h: &HouseholdRecord) -> KeyValue {
        self.attributes.iter().map(|a| a.value(h)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Reconstruction,
    SamplingBaseline,
}

impl Provenance {
    pub fn label(self) -> &'static str {
        match self {
            Provenance::Reconstruction => "reconstruction",
            Provenance::SamplingBaseline => "baseline",
        }
    }
}

/// Key projections ordered by score, highest first; ties in ascending value order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidates {
    pub provenance: Provenance,
    pub entries: Vec<(KeyValue, f64)>,
}

impl RankedCandidates {
    fn from_scores(scores: BTreeMap<KeyValue, f64>, provenance: Provenance) -> Self {
        let mut entries: Vec<(KeyValue, f64)> = scores.into_iter().filter(|(_, s)| *s > 0.0).collect();
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        RankedCandidates { provenance, entries }
    }

    pub fn top(&self, k: usize) -> &[(KeyValue, f64)] {
        &self.entries[..k.min(self.entries.len())]
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Score of a projection = violating households with it, summed over the reconstructions.
pub fn rank_from_reconstructions(recons: &[Reconstruction], key: &MatchKey, rule: &ViolationRule) -> RankedCandidates {
    let mut scores: BTreeMap<KeyValue, f64> = BTreeMap::new();
    for r in recons {
        for (h, n) in r.violating(rule) {
            *scores.entry(key.project(&h)).or_insert(0.0) += n as f64;
        }
    }
    RankedCandidates::from_scores(scores, Provenance::Reconstruction)
}

/// Global ranking by how often each projection occurs among violating sample households.
pub fn sampling_baseline(sample: &[HouseholdRecord], key: &MatchKey, rule: &ViolationRule) -> RankedCandidates {
    let mut scores: BTreeMap<KeyValue, f64> = BTreeMap::new();
    for h in sample.iter().filter(|h| rule.is_violation(h)) {
        *scores.entry(key.project(h)).or_insert(0.0) += 1.0;
    }
    RankedCandidates::from_scores(scores, Provenance::SamplingBaseline)
}

/// Independent per-household draw of a ground-truth sample, one stream per state.
pub fn truth_sample(truth: &Universe, fraction: f64, seed: u64) -> Vec<HouseholdRecord> {
    let states = truth.states();
    let mut rngs: Vec<_> = (0..states.len()).map(|s| rng::stream(seed, Stream::Sample, (1 << 32) + s as u64)).collect();
    let mut out = Vec::new();
    for (id, h) in truth.households() {
        let s = states.iter().position(|x| *x == truth.blocks[id.block].geo_state).expect("listed state");
        if rngs[s].gen::<f64>() < fraction {
            out.push(*h);
        }
    }
    out
}

/// Rankings used to claim violations: one per block, or one for every block.
#[derive(Debug, Clone, Copy)]
pub enum Rankings<'a> {
    PerBlock(&'a BTreeMap<String, RankedCandidates>),
    Global(&'a RankedCandidates),
}

impl<'a> Rankings<'a> {
    pub fn for_block(&self, block_id: &str) -> Option<&'a RankedCandidates> {
        match self {
            Rankings::PerBlock(m) => m.get(block_id),
            Rankings::Global(r) => Some(r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub n_putative: usize,
    pub n_true: usize,
    pub n_hit: usize,
}

/// `precision = |V ∩ V̂| / |V̂|`, `recall = |V ∩ V̂| / |V|`, null on empty denominators.
pub fn score(putative: &BTreeSet<HouseholdId>, truth: &BTreeSet<HouseholdId>) -> Scores {
    let hit = putative.intersection(truth).count();
    if truth.is_empty() {
        log::info!("no true violations: recall undefined");
    }
    Scores {
        precision: (!putative.is_empty()).then(|| hit as f64 / putative.len() as f64),
        recall: (!truth.is_empty()).then(|| hit as f64 / truth.len() as f64),
        n_putative: putative.len(),
        n_true: truth.len(),
        n_hit: hit,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockMetrics {
    pub flagged: usize,
    pub true_blocks: usize,
    pub hits: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

pub fn block_metrics(flagged: &BTreeSet<String>, truth: &Universe, rule: &ViolationRule) -> BlockMetrics {
    let true_blocks: BTreeSet<&str> =
        truth.blocks.iter().filter(|b| b.violations(rule) > 0).map(|b| b.block_id.as_str()).collect();
    let hits = flagged.iter().filter(|b| true_blocks.contains(b.as_str())).count();
    BlockMetrics {
        flagged: flagged.len(),
        true_blocks: true_blocks.len(),
        hits,
        precision: (!flagged.is_empty()).then(|| hits as f64 / flagged.len() as f64),
        recall: (!true_blocks.is_empty()).then(|| hits as f64 / true_blocks.len() as f64),
    }
}

/// Ground truth as seen through one match key: the attacker's identified partial records.
pub struct Linkage<'a> {
    pub truth: &'a Universe,
    pub key: &'a MatchKey,
    pub rule: ViolationRule,
    block_index: HashMap<&'a str, usize>,
    /// Per block, households whose projection is unique within the block.
    unique: Vec<Vec<bool>>,
}

impl<'a> Linkage<'a> {
    pub fn new(truth: &'a Universe, key: &'a MatchKey, rule: ViolationRule) -> Self {
        let unique = truth
            .blocks
            .iter()
            .map(|b| {
                let keys: Vec<KeyValue> = b.households.iter().map(|h| key.project(h)).collect();
                keys.iter().map(|k| keys.iter().filter(|o| *o == k).count() == 1).collect()
            })
            .collect();
        let block_index = truth.blocks.iter().enumerate().map(|(i, b)| (b.block_id.as_str(), i)).collect();
        Linkage { truth, key, rule, block_index, unique }
    }

    pub fn is_unique(&self, id: HouseholdId) -> bool {
        self.unique[id.block][id.index]
    }

    /// True violations, optionally restricted to population uniques.
    pub fn violations(&self, uniques_only: bool) -> BTreeSet<HouseholdId> {
        self.truth
            .households()
            .filter(|(id, h)| self.rule.is_violation(h) && (!uniques_only || self.is_unique(*id)))
            .map(|(id, _)| id)
            .collect()
    }

    /// Households of flagged blocks whose projection is among the block's top `k`.
    pub fn putative_violations(
        &self,
        rankings: Rankings<'_>,
        k: usize,
        flagged: &BTreeSet<String>,
        uniques_only: bool,
    ) -> BTreeSet<HouseholdId> {
        let mut out = BTreeSet::new();
        for block_id in flagged {
            let (Some(&b), Some(r)) = (self.block_index.get(block_id.as_str()), rankings.for_block(block_id)) else {
                continue;
            };
            let top: BTreeSet<&KeyValue> = r.top(k).iter().map(|(v, _)| v).collect();
            for (i, h) in self.truth.blocks[b].households.iter().enumerate() {
                let id = HouseholdId { block: b, index: i };
                if top.contains(&self.key.project(h)) && (!uniques_only || self.is_unique(id)) {
                    out.insert(id);
                }
            }
        }
        out
    }

    /// Mean over flagged blocks of `(1/k) * #{top-k entries matching a true violating household}`.
    pub fn match_rate(&self, rankings: Rankings<'_>, k: usize, flagged: &BTreeSet<String>) -> Option<f64> {
        if flagged.is_empty() || k == 0 {
            return None;
        }
        let mut total = 0.0;
        for block_id in flagged {
            let (Some(&b), Some(r)) = (self.block_index.get(block_id.as_str()), rankings.for_block(block_id)) else {
                continue;
            };
            let violating: BTreeSet<KeyValue> = self.truth.blocks[b]
                .households
                .iter()
                .filter(|h| self.rule.is_violation(h))
                .map(|h| self.key.project(h))
                .collect();
            let hits = r.top(k).iter().filter(|(v, _)| violating.contains(v)).count();
            total += hits as f64 / k as f64;
        }
        Some(total / flagged.len() as f64)
    }
}
