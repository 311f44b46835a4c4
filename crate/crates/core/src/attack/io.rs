//! Tab-separated dumps of reconstructions and solution variability.

use std::fmt::Write as _;

use super::reconstruct::Reconstruction;
use super::solvar::{AttributePreset, HouseholdSubset, SolvarReport};
use crate::model::{BedroomClass, HouseholdRecord, RaceMask, ViolationRule};
use crate::Error;

pub const RECONSTRUCTION_SCHEMA: &str = "reconstructions-v1";
pub const SOLVAR_SCHEMA: &str = "solvar-v1";

/// One row per (block, rank, configuration). `rank` is 1 for the most likely reconstruction.
pub fn format_reconstructions(recons: &[(usize, &Reconstruction)], rule: &ViolationRule) -> String {
    let mut out = format!(
        "# {RECONSTRUCTION_SCHEMA}\nblock_id\trank\tsize\trace_flag_mask\tchildren\tsubsidized\tbedroom_class\tcount\tviolating\tobjective\n"
    );
    for (rank, r) in recons {
        for (h, n) in &r.counts {
            let _ = writeln!(
                out,
                "{}\t{rank}\t{}\t{:x}\t{}\t{}\t{}\t{n}\t{}\t{:.6}",
                r.block_id,
                h.size,
                h.race_flags,
                h.children,
                h.subsidized as u8,
                h.bedroom_class.code(),
                rule.is_violation(h) as u8,
                r.objective + r.penalty
            );
        }
    }
    out
}

/// Inverse of [`format_reconstructions`]; objectives are kept as written.
pub fn parse_reconstructions(text: &str) -> Result<Vec<(usize, Reconstruction)>, Error> {
    if !text.starts_with(&format!("# {RECONSTRUCTION_SCHEMA}")) {
        return Err(Error::Parse("missing reconstructions schema header".into()));
    }
    let mut out: Vec<(usize, Reconstruction)> = Vec::new();
    for (no, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() || line.starts_with("block_id\t") || line.starts_with('#') {
            continue;
        }
        let bad = || Error::Parse(format!("reconstructions line {}", no + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 10 {
            return Err(bad());
        }
        let int = |i: usize| f[i].parse::<i64>().map_err(|_| bad());
        let rank = int(1)? as usize;
        let h = HouseholdRecord {
            size: int(2)? as u8,
            race_flags: RaceMask(u16::from_str_radix(f[3], 16).map_err(|_| bad())?),
            children: int(4)? as u8,
            subsidized: int(5)? == 1,
            bedroom_class: BedroomClass::from_code(int(6)? as u8)?,
        };
        let objective: f64 = f[9].parse().map_err(|_| bad())?;
        match out.last_mut() {
            Some((r, rec)) if *r == rank && rec.block_id == f[0] => rec.counts.push((h, int(7)?)),
            _ => out.push((
                rank,
                Reconstruction { block_id: f[0].into(), counts: vec![(h, int(7)?)], objective, penalty: 0.0, exact: true },
            )),
        }
    }
    Ok(out)
}

pub fn format_solvar(reports: &[SolvarReport]) -> String {
    let mut out = format!("# {SOLVAR_SCHEMA}\nblock_id\tpreset\tsubset\traw\tnormalized\texact\n");
    for r in reports {
        let norm = r.normalized.map_or("null".to_string(), |v| format!("{v:.6}"));
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{norm}\t{}",
            r.block_id,
            r.preset.label(),
            r.subset.label(),
            r.raw,
            r.exact as u8
        );
    }
    out
}

pub fn parse_solvar(text: &str) -> Result<Vec<SolvarReport>, Error> {
    if !text.starts_with(&format!("# {SOLVAR_SCHEMA}")) {
        return Err(Error::Parse("missing solvar schema header".into()));
    }
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() || line.starts_with("block_id\t") {
            continue;
        }
        let bad = || Error::Parse(format!("solvar line {}", no + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(bad());
        }
        let preset = AttributePreset::ALL.into_iter().find(|p| p.label() == f[1]).ok_or_else(bad)?;
        let subset = HouseholdSubset::ALL.into_iter().find(|s| s.label() == f[2]).ok_or_else(bad)?;
        out.push(SolvarReport {
            block_id: f[0].into(),
            preset,
            subset,
            raw: f[3].parse().map_err(|_| bad())?,
            normalized: if f[4] == "null" { None } else { Some(f[4].parse().map_err(|_| bad())?) },
            exact: f[5] == "1",
        });
    }
    Ok(out)
}
