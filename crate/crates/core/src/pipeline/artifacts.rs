//! File names and formats of persisted run artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::attack::{parse_reconstructions, Detection, Reconstruction, Verdict};
use crate::Error;

pub const UNIVERSE_FILE: &str = "universe.tsv";
pub const SWAPPED_UNIVERSE_FILE: &str = "universe_swapped.tsv";
pub const EMPIRICAL_FILE: &str = "empirical.toml";
pub const STATISTICS_FILE: &str = "statistics.tsv";
pub const DETECTIONS_FILE: &str = "detections.tsv";
pub const RECONSTRUCTIONS_FILE: &str = "reconstructions.tsv";
pub const SOLVAR_FILE: &str = "solvar.tsv";
pub const REPORT_FILE: &str = "report.json";
pub const METRICS_FILE: &str = "metrics.tsv";
pub const SUMMARY_FILE: &str = "summary.tsv";
pub const COMPARISON_FILE: &str = "comparison.tsv";
pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "run_manifest.json";
pub const FAILED_FILE: &str = "FAILED";

pub const DETECTIONS_SCHEMA: &str = "detections-v1";

pub fn format_detections(ds: &[Detection]) -> String {
    let mut out = format!("# {DETECTIONS_SCHEMA}\nblock_id\tverdict\tnodes\n");
    for d in ds {
        let _ = writeln!(out, "{}\t{}\t{}", d.block_id, d.verdict.label(), d.nodes);
    }
    out
}

pub fn parse_detections(text: &str) -> Result<Vec<Detection>, Error> {
    if !text.starts_with(&format!("# {DETECTIONS_SCHEMA}")) {
        return Err(Error::Parse("missing detections schema header".into()));
    }
    let verdicts = [Verdict::Violation, Verdict::NoViolation, Verdict::Undetermined, Verdict::Inconsistent];
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate().skip(2) {
        let bad = || Error::Parse(format!("detections line {}", no + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad());
        }
        out.push(Detection {
            block_id: f[0].to_string(),
            verdict: verdicts.into_iter().find(|v| v.label() == f[1]).ok_or_else(bad)?,
            nodes: f[2].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

/// Reconstructions file grouped by block, ranks in order.
pub fn read_reconstructions(path: &Path) -> Result<BTreeMap<String, Vec<Reconstruction>>, Error> {
    let mut out: BTreeMap<String, Vec<Reconstruction>> = BTreeMap::new();
    for (_, r) in parse_reconstructions(&std::fs::read_to_string(path)?)? {
        out.entry(r.block_id.clone()).or_default().push(r);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub seconds: f64,
    pub status: String,
}

/// Machine-readable record of a run: versions, seeds, stage timings, outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub version: String,
    pub label: String,
    pub seed: u64,
    pub mechanism: String,
    pub jobs: usize,
    pub stages: Vec<StageRecord>,
    pub counts: BTreeMap<String, u64>,
    pub status: String,
}

impl Manifest {
    pub fn new(label: &str, seed: u64, mechanism: &str, jobs: usize) -> Self {
        Manifest {
            schema: "run-manifest-v1".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            label: label.into(),
            seed,
            mechanism: mechanism.into(),
            jobs,
            stages: Vec::new(),
            counts: BTreeMap::new(),
            status: "running".into(),
        }
    }

    pub fn load_or_new(dir: &Path, label: &str, seed: u64, mechanism: &str, jobs: usize) -> Self {
        std::fs::read_to_string(dir.join(MANIFEST_FILE))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_else(|| Manifest::new(label, seed, mechanism, jobs))
    }

    /// Run `f` as a named stage, recording its time and outcome.
    pub fn stage<T>(
        &mut self,
        name: &'static str,
        f: impl FnOnce(&mut BTreeMap<String, u64>) -> Result<T, Error>,
    ) -> Result<T, Error> {
        let start = Instant::now();
        let r = f(&mut self.counts);
        self.stages.push(StageRecord {
            name: name.into(),
            seconds: start.elapsed().as_secs_f64(),
            status: if r.is_ok() { "ok" } else { "failed" }.into(),
        });
        r.map_err(|e| e.in_stage(name))
    }

    pub fn write(&self, dir: &Path) -> Result<(), Error> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }
}

/// Record a failure next to the partial outputs.
pub fn mark_failed(dir: &Path, manifest: &mut Manifest, err: &Error) {
    manifest.status = "failed".into();
    let _ = std::fs::write(dir.join(FAILED_FILE), format!("{err}\n"));
    let _ = manifest.write(dir);
}
