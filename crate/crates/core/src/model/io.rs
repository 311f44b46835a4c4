//! Tab-separated universe file: one household per line after a schema header.
//!
//! ```text
//! # universe-v1 seed=<u64> alpha=<f64> groups=<name>:<0|1>,...
//! block_id  state  x  y  size  race_flag_mask  children  subsidized  bedroom_class
//! ```
//!
//! `race_flag_mask` is hexadecimal; `bedroom_class` is 0=LE1, 1=EQ2, 2=GE3, 3=NONE.
//! Blocks with no households cannot be represented and are dropped.

use std::fmt::Write as _;
use std::path::Path;

use super::{BedroomClass, Block, EmpiricalDistribution, HouseholdRecord, RaceGroup, RaceGroups, RaceMask, Universe};
use crate::Error;

pub const UNIVERSE_SCHEMA: &str = "universe-v1";

pub fn format_universe(u: &Universe) -> String {
    let groups: Vec<String> =
        u.race_groups.0.iter().map(|g| format!("{}:{}", g.name, g.hispanic as u8)).collect();
    let mut out = format!("# {UNIVERSE_SCHEMA} seed={} alpha={:e} groups={}\n", u.seed, u.alpha, groups.join(","));
    out.push_str("block_id\tstate\tx\ty\tsize\trace_flag_mask\tchildren\tsubsidized\tbedroom_class\n");
    for b in &u.blocks {
        for h in &b.households {
            let _ = writeln!(
                out,
                "{}\t{}\t{:?}\t{:?}\t{}\t{:x}\t{}\t{}\t{}",
                b.block_id,
                b.geo_state,
                b.position.0,
                b.position.1,
                h.size,
                h.race_flags,
                h.children,
                h.subsidized as u8,
                h.bedroom_class.code()
            );
        }
    }
    out
}

pub fn write_universe(u: &Universe, path: &Path) -> Result<(), Error> {
    std::fs::write(path, format_universe(u))?;
    Ok(())
}

fn parse_header(line: &str) -> Result<(u64, f64, RaceGroups), Error> {
    let bad = || Error::Parse(format!("bad universe header `{line}`"));
    let rest = line.strip_prefix("# ").ok_or_else(bad)?;
    let mut parts = rest.split_whitespace();
    if parts.next() != Some(UNIVERSE_SCHEMA) {
        return Err(Error::Parse(format!("unsupported universe schema in `{line}`")));
    }
    let (mut seed, mut alpha, mut groups) = (None, None, None);
    for kv in parts {
        let (k, v) = kv.split_once('=').ok_or_else(bad)?;
        match k {
            "seed" => seed = Some(v.parse().map_err(|_| bad())?),
            "alpha" => alpha = Some(v.parse().map_err(|_| bad())?),
            "groups" => {
                let mut g = Vec::new();
                for item in v.split(',') {
                    let (name, h) = item.split_once(':').ok_or_else(bad)?;
                    g.push(RaceGroup { name: name.to_string(), hispanic: h == "1" });
                }
                groups = Some(RaceGroups(g));
            }
            _ => {}
        }
    }
    Ok((seed.ok_or_else(bad)?, alpha.ok_or_else(bad)?, groups.ok_or_else(bad)?))
}

/// Parse a universe file. The empirical reference is not part of this file and
/// is left empty.
pub fn parse_universe(text: &str) -> Result<Universe, Error> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty universe file".into()))?;
    let (seed, alpha, race_groups) = parse_header(header)?;
    let mut blocks: Vec<Block> = Vec::new();
    for (no, line) in lines {
        if line.is_empty() || line.starts_with('#') || line.starts_with("block_id\t") {
            continue;
        }
        let bad = |what: &str| Error::Parse(format!("line {}: {what}", no + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 9 {
            return Err(bad("expected 9 fields"));
        }
        let num = |i: usize| f[i].parse::<u8>().map_err(|_| bad("bad integer field"));
        let x: f64 = f[2].parse().map_err(|_| bad("bad x"))?;
        let y: f64 = f[3].parse().map_err(|_| bad("bad y"))?;
        let mask = u16::from_str_radix(f[5], 16).map_err(|_| bad("bad race mask"))?;
        let rec = HouseholdRecord {
            size: num(4)?,
            race_flags: RaceMask(mask),
            children: num(6)?,
            subsidized: match f[7] {
                "0" => false,
                "1" => true,
                _ => return Err(bad("subsidized must be 0 or 1")),
            },
            bedroom_class: BedroomClass::from_code(num(8)?)?,
        };
        rec.validate().map_err(|e| bad(&e.to_string()))?;
        match blocks.last_mut() {
            Some(b) if b.block_id == f[0] => b.households.push(rec),
            _ => {
                if blocks.iter().any(|b| b.block_id == f[0]) {
                    return Err(bad("block rows must be contiguous"));
                }
                blocks.push(Block {
                    block_id: f[0].to_string(),
                    geo_state: f[1].to_string(),
                    position: (x, y),
                    households: vec![rec],
                });
            }
        }
    }
    Ok(Universe { blocks, seed, alpha, race_groups, empirical_reference: EmpiricalDistribution::default() })
}

pub fn read_universe(path: &Path) -> Result<Universe, Error> {
    parse_universe(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let r = RaceMask::single(3);
        let u = Universe {
            blocks: vec![
                Block {
                    block_id: "B1".into(),
                    geo_state: "S01".into(),
                    position: (0.1, 2.5),
                    households: vec![
                        HouseholdRecord::subsidized(3, r, 1, BedroomClass::Le1),
                        HouseholdRecord::unsubsidized(12, RaceMask(0x41), 0),
                    ],
                },
                Block {
                    block_id: "B2".into(),
                    geo_state: "S02".into(),
                    position: (1.0 / 3.0, 0.0),
                    households: vec![HouseholdRecord::subsidized(1, r, 0, BedroomClass::Ge3)],
                },
            ],
            seed: 99,
            alpha: 1e-4,
            race_groups: RaceGroups::default(),
            empirical_reference: EmpiricalDistribution::default(),
        };
        let text = format_universe(&u);
        assert!(text.starts_with("# universe-v1 "));
        assert_eq!(parse_universe(&text).unwrap(), u);
    }

    #[test]
    fn rejects_invalid_rows() {
        let head = "# universe-v1 seed=1 alpha=1e0 groups=a:0\n";
        assert!(parse_universe(&format!("{head}B\tS\t0\t0\t2\t1\t3\t0\t3\n")).is_err());
        assert!(parse_universe(&format!("{head}B\tS\t0\t0\t2\t1\t0\t0\t1\n")).is_err());
        assert!(parse_universe("# other-v9 seed=1\n").is_err());
    }
}
