use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::reconstruct::Reconstruction;
use super::space::{build_block_program, ConfigurationSpace};
use crate::ipcore::{maximize_l1, Limits};
use crate::model::{HouseholdRecord, RaceMask};
use crate::workload::BlockStatistics;
use crate::Error;

/// Attribute set the histograms are projected onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttributePreset {
    /// Every reconstructed attribute.
    Full,
    /// Size, bedroom class, first-group (white non-Hispanic) flag and presence of children.
    Simple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HouseholdSubset {
    All,
    Subsidized,
    Violating,
}

impl AttributePreset {
    pub const ALL: [AttributePreset; 2] = [AttributePreset::Full, AttributePreset::Simple];

    pub fn label(self) -> &'static str {
        match self {
            AttributePreset::Full => "full",
            AttributePreset::Simple => "simple",
        }
    }

    pub fn project(self, h: &HouseholdRecord) -> HouseholdRecord {
        match self {
            AttributePreset::Full => *h,
            AttributePreset::Simple => HouseholdRecord {
                size: h.size,
                race_flags: RaceMask(h.race_flags.has(0) as u16),
                children: h.has_children() as u8,
                subsidized: false,
                bedroom_class: h.bedroom_class,
            },
        }
    }
}

impl HouseholdSubset {
    pub const ALL: [HouseholdSubset; 3] = [HouseholdSubset::All, HouseholdSubset::Subsidized, HouseholdSubset::Violating];

    pub fn label(self) -> &'static str {
        match self {
            HouseholdSubset::All => "all",
            HouseholdSubset::Subsidized => "subsidized",
            HouseholdSubset::Violating => "violating",
        }
    }

    pub fn contains(self, space: &ConfigurationSpace, h: &HouseholdRecord) -> bool {
        match self {
            HouseholdSubset::All => true,
            HouseholdSubset::Subsidized => h.subsidized,
            HouseholdSubset::Violating => space.options.rule.is_violation(h),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvarReport {
    pub block_id: String,
    pub preset: AttributePreset,
    pub subset: HouseholdSubset,
    pub raw: i64,
    /// `raw / (2 |D*|)`; `None` when the reference has no household in the subset.
    pub normalized: Option<f64>,
    /// False when a solver limit made `raw` a lower bound.
    pub exact: bool,
}

/// Histogram cell per configuration after projection and filtering.
pub fn cell_map(space: &ConfigurationSpace, preset: AttributePreset, subset: HouseholdSubset) -> Vec<Option<usize>> {
    let mut cells: BTreeMap<HouseholdRecord, usize> = BTreeMap::new();
    for h in space.configs.iter().filter(|h| subset.contains(space, h)) {
        let next = cells.len();
        cells.entry(preset.project(h)).or_insert(next);
    }
    space
        .configs
        .iter()
        .map(|h| if subset.contains(space, h) { Some(cells[&preset.project(h)]) } else { None })
        .collect()
}

/// Largest L1 distance between the projected histogram of `recon` and that of
/// any reconstruction consistent with the statistics (occupancy rule not imposed).
pub fn solution_variability(
    recon: &Reconstruction,
    stats: &BlockStatistics,
    space: &ConfigurationSpace,
    preset: AttributePreset,
    subset: HouseholdSubset,
    limits: &Limits,
) -> Result<SolvarReport, Error> {
    let ip = build_block_program(stats, space, false)?;
    let reference = space.histogram(recon.households())?;
    let cell_of = cell_map(space, preset, subset);
    let r = maximize_l1(&ip, &reference, &cell_of, limits)?;
    let size: i64 = reference.iter().zip(&cell_of).filter(|(_, c)| c.is_some()).map(|(n, _)| n).sum();
    if !r.exact {
        log::info!("block {}: solvar {} is a lower bound", stats.block_id, r.value);
    }
    Ok(SolvarReport {
        block_id: stats.block_id.clone(),
        preset,
        subset,
        raw: r.value,
        normalized: (size > 0).then(|| r.value as f64 / (2 * size) as f64),
        exact: r.exact,
    })
}
