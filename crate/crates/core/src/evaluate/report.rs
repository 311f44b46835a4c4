use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    block_metrics, rank_from_reconstructions, sampling_baseline, score, BlockMetrics, Linkage, MatchKey, Provenance,
    RankedCandidates, Rankings,
};
use crate::attack::{Detection, Reconstruction, SolvarReport, Verdict};
use crate::model::{HouseholdRecord, Universe, ViolationRule};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationOptions {
    pub match_keys: Vec<String>,
    /// Curves are evaluated at k = 1..=k_max.
    pub k_max: usize,
    pub uniques: Vec<bool>,
    /// Share of ground-truth households in the baseline's sample.
    pub baseline_fraction: f64,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        EvaluationOptions {
            match_keys: vec!["hud".into(), "broker".into(), "sf1".into()],
            k_max: 50,
            uniques: vec![false, true],
            baseline_fraction: 0.2,
        }
    }
}

impl EvaluationOptions {
    pub fn validate(&self) -> Result<(), Error> {
        for k in &self.match_keys {
            MatchKey::preset(k)?;
        }
        if self.k_max == 0 || !(0.0..=1.0).contains(&self.baseline_fraction) {
            return Err(Error::Config("k_max must be >= 1 and baseline_fraction in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub match_key: String,
    pub method: Provenance,
    pub uniques_only: bool,
    pub k: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub match_rate: Option<f64>,
    pub n_putative: usize,
    pub n_true: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRow {
    pub block_id: String,
    pub verdict: Verdict,
    pub true_violations: usize,
    /// Violating households in the most likely reconstruction, for reconstructed blocks.
    pub reconstructed_violations: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub scenario: String,
    pub seed: u64,
    pub n_blocks: usize,
    pub blocks: BlockMetrics,
    pub verdicts: BTreeMap<String, usize>,
    pub true_violating_households: usize,
    pub k_grid: Vec<usize>,
    pub curves: Vec<CurvePoint>,
    pub per_block: Vec<BlockRow>,
    pub solvar: Vec<SolvarReport>,
}

pub struct ReportInputs<'a> {
    pub scenario: &'a str,
    pub seed: u64,
    pub truth: &'a Universe,
    pub rule: ViolationRule,
    pub detections: &'a [Detection],
    /// Ranked reconstructions of flagged blocks, most likely first.
    pub reconstructions: &'a BTreeMap<String, Vec<Reconstruction>>,
    pub solvar: &'a [SolvarReport],
    pub baseline_sample: &'a [HouseholdRecord],
}

impl AttackReport {
    pub fn build(inputs: &ReportInputs<'_>, opts: &EvaluationOptions) -> Result<Self, Error> {
        opts.validate()?;
        let truth = inputs.truth;
        let rule = inputs.rule;
        let flagged: BTreeSet<String> =
            inputs.detections.iter().filter(|d| d.verdict.is_flagged()).map(|d| d.block_id.clone()).collect();
        let mut verdicts: BTreeMap<String, usize> = BTreeMap::new();
        for d in inputs.detections {
            *verdicts.entry(d.verdict.label().to_string()).or_insert(0) += 1;
        }
        let k_grid: Vec<usize> = (1..=opts.k_max).collect();
        let mut curves = Vec::new();
        for name in &opts.match_keys {
            let key = MatchKey::preset(name)?;
            let link = Linkage::new(truth, &key, rule);
            let per_block: BTreeMap<String, RankedCandidates> = inputs
                .reconstructions
                .iter()
                .filter(|(b, r)| flagged.contains(*b) && !r.is_empty())
                .map(|(b, r)| (b.clone(), rank_from_reconstructions(r, &key, &rule)))
                .collect();
            let baseline = sampling_baseline(inputs.baseline_sample, &key, &rule);
            for (method, rankings) in [
                (Provenance::Reconstruction, Rankings::PerBlock(&per_block)),
                (Provenance::SamplingBaseline, Rankings::Global(&baseline)),
            ] {
                for &uniques_only in &opts.uniques {
                    let v = link.violations(uniques_only);
                    for &k in &k_grid {
                        let vhat = link.putative_violations(rankings, k, &flagged, uniques_only);
                        let s = score(&vhat, &v);
                        curves.push(CurvePoint {
                            match_key: name.clone(),
                            method,
                            uniques_only,
                            k,
                            precision: s.precision,
                            recall: s.recall,
                            match_rate: link.match_rate(rankings, k, &flagged),
                            n_putative: s.n_putative,
                            n_true: s.n_true,
                        });
                    }
                }
            }
        }
        let index: BTreeMap<&str, usize> =
            truth.blocks.iter().enumerate().map(|(i, b)| (b.block_id.as_str(), i)).collect();
        let mut per_block = Vec::new();
        for d in inputs.detections {
            let b = *index
                .get(d.block_id.as_str())
                .ok_or_else(|| Error::Model(format!("detection for unknown block {}", d.block_id)))?;
            per_block.push(BlockRow {
                block_id: d.block_id.clone(),
                verdict: d.verdict,
                true_violations: truth.blocks[b].violations(&rule),
                reconstructed_violations: inputs
                    .reconstructions
                    .get(&d.block_id)
                    .and_then(|r| r.first())
                    .map(|r| r.violating(&rule).iter().map(|(_, n)| n).sum()),
            });
        }
        Ok(AttackReport {
            scenario: inputs.scenario.to_string(),
            seed: inputs.seed,
            n_blocks: truth.blocks.len(),
            blocks: block_metrics(&flagged, truth, &rule),
            verdicts,
            true_violating_households: truth.blocks.iter().map(|b| b.violations(&rule)).sum(),
            k_grid,
            curves,
            per_block,
            solvar: inputs.solvar.to_vec(),
        })
    }

    pub fn curve(&self, key: &str, method: Provenance, uniques_only: bool) -> Vec<&CurvePoint> {
        self.curves
            .iter()
            .filter(|c| c.match_key == key && c.method == method && c.uniques_only == uniques_only)
            .collect()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), |x| format!("{x:.6}"))
}

/// Long-format metrics: `scenario, seed, match_key, method, uniques, k, metric, value`.
pub fn format_metrics(reports: &[AttackReport]) -> String {
    let mut out = String::from("scenario\tseed\tmatch_key\tmethod\tuniques\tk\tmetric\tvalue\n");
    for r in reports {
        let head = format!("{}\t{}\t-\tdetection\t-\t-", r.scenario, r.seed);
        let b = &r.blocks;
        for (m, v) in [("block_precision", opt(b.precision)), ("block_recall", opt(b.recall))] {
            let _ = writeln!(out, "{head}\t{m}\t{v}");
        }
        for (m, v) in [("flagged_blocks", b.flagged), ("true_blocks", b.true_blocks), ("hit_blocks", b.hits)] {
            let _ = writeln!(out, "{head}\t{m}\t{v}");
        }
        for (verdict, n) in &r.verdicts {
            let _ = writeln!(out, "{head}\tverdict_{verdict}\t{n}");
        }
        for c in &r.curves {
            let head =
                format!("{}\t{}\t{}\t{}\t{}\t{}", r.scenario, r.seed, c.match_key, c.method.label(), c.uniques_only as u8, c.k);
            let _ = writeln!(out, "{head}\tprecision\t{}", opt(c.precision));
            let _ = writeln!(out, "{head}\trecall\t{}", opt(c.recall));
            let _ = writeln!(out, "{head}\tmatch_rate\t{}", opt(c.match_rate));
            let _ = writeln!(out, "{head}\tputative\t{}", c.n_putative);
        }
    }
    out
}

/// One row per scenario with counts pooled over seeds.
pub fn format_summary(reports: &[AttackReport]) -> String {
    let mut groups: BTreeMap<&str, Vec<&AttackReport>> = BTreeMap::new();
    for r in reports {
        groups.entry(r.scenario.as_str()).or_default().push(r);
    }
    let mut out = String::from(
        "scenario\tseeds\tblocks\ttrue_violating_blocks\tviolating_blocks_detected\tblock_precision\tblock_recall\tinconsistent\tundetermined\ttrue_violations\n",
    );
    for (scenario, rs) in groups {
        let sum = |f: &dyn Fn(&AttackReport) -> usize| rs.iter().map(|r| f(r)).sum::<usize>();
        let flagged = sum(&|r| r.blocks.flagged);
        let hits = sum(&|r| r.blocks.hits);
        let truth = sum(&|r| r.blocks.true_blocks);
        let verdict = |name: &str| sum(&|r| r.verdicts.get(name).copied().unwrap_or(0));
        let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
        let _ = writeln!(
            out,
            "{scenario}\t{}\t{}\t{truth}\t{flagged}\t{}\t{}\t{}\t{}\t{}",
            rs.len(),
            sum(&|r| r.n_blocks),
            opt(ratio(hits, flagged)),
            opt(ratio(hits, truth)),
            verdict("inconsistent"),
            verdict("undetermined"),
            sum(&|r| r.true_violating_households)
        );
    }
    out
}
