use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{AttributePreset, HouseholdSubset, SpaceOptions, TopTOptions};
use crate::evaluate::EvaluationOptions;
use crate::ipcore::Limits;
use crate::mechanisms::{PrivacyBudget, StrategyCatalogue, SwapConfig, DAS_RHO_HOUSEHOLD, DAS_RHO_PERSON};
use crate::model::GenerationConfig;
use crate::workload::CountingQuery;
use crate::Error;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    /// Fractions replicated from the strategy catalogue.
    Das,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpConfig {
    pub allocation: Allocation,
    pub rho_person: f64,
    pub rho_household: f64,
    pub hud_noise: bool,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig { allocation: Allocation::Das, rho_person: DAS_RHO_PERSON, rho_household: DAS_RHO_HOUSEHOLD, hud_noise: false }
    }
}

impl DpConfig {
    pub fn budget(&self, workload: &[CountingQuery]) -> Result<PrivacyBudget, Error> {
        let b = match self.allocation {
            Allocation::Das => PrivacyBudget::das(
                workload,
                &StrategyCatalogue::default(),
                self.rho_person,
                self.rho_household,
                self.hud_noise,
            )?,
            Allocation::Uniform => PrivacyBudget::uniform(workload, self.rho_person, self.rho_household, self.hud_noise),
        };
        b.validate()?;
        Ok(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MechanismConfig {
    Identity,
    Swap(SwapConfig),
    Dp(DpConfig),
}

impl MechanismConfig {
    pub fn label(&self) -> &'static str {
        match self {
            MechanismConfig::Identity => "identity",
            MechanismConfig::Swap(_) => "swap",
            MechanismConfig::Dp(_) => "dp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackOptions {
    pub space: SpaceOptions,
    pub max_nodes: u64,
    pub exact_threshold: usize,
    /// Reconstruct and rank flagged blocks (needed for household-level scores).
    pub reconstruct: bool,
    pub topt: TopTOptions,
    /// Query-error weight of soft reconstructions, used when the hard program has no solution.
    pub lambda: f64,
    /// Node limit for each soft solve and enumeration; the best incumbent is kept when it is hit.
    pub soft_max_nodes: u64,
    /// Solution variability of the most likely reconstruction of each flagged block.
    pub solvar: Vec<(AttributePreset, HouseholdSubset)>,
}

impl Default for AttackOptions {
    fn default() -> Self {
        AttackOptions {
            space: SpaceOptions::default(),
            max_nodes: Limits::default().max_nodes,
            exact_threshold: Limits::default().exact_threshold,
            reconstruct: true,
            topt: TopTOptions::default(),
            lambda: 1.0,
            soft_max_nodes: 5_000,
            solvar: vec![
                (AttributePreset::Full, HouseholdSubset::All),
                (AttributePreset::Simple, HouseholdSubset::All),
                (AttributePreset::Simple, HouseholdSubset::Subsidized),
            ],
        }
    }
}

impl AttackOptions {
    pub fn limits(&self) -> Limits {
        Limits { max_nodes: self.max_nodes, time_limit: None, exact_threshold: self.exact_threshold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepScenario {
    pub label: String,
    pub mechanism: MechanismConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub seeds: Vec<u64>,
    pub scenarios: Vec<SweepScenario>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            seeds: vec![1],
            scenarios: vec![
                SweepScenario { label: "identity".into(), mechanism: MechanismConfig::Identity },
                SweepScenario { label: "swap".into(), mechanism: MechanismConfig::Swap(SwapConfig::default()) },
                SweepScenario { label: "dp".into(), mechanism: MechanismConfig::Dp(DpConfig::default()) },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub label: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker threads; outputs do not depend on it.
    pub jobs: Option<usize>,
    pub generation: GenerationConfig,
    pub mechanism: MechanismConfig,
    pub attack: AttackOptions,
    pub evaluation: EvaluationOptions,
    pub sweep: SweepSpec,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            label: "identity".into(),
            seed: 1,
            out_dir: PathBuf::from("runs"),
            jobs: None,
            generation: GenerationConfig::default(),
            mechanism: MechanismConfig::Identity,
            attack: AttackOptions::default(),
            evaluation: EvaluationOptions::default(),
            sweep: SweepSpec::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "config schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.label.is_empty() || self.label.contains(['/', '\\']) {
            return Err(Error::Config("label must be a non-empty file name".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        self.generation.validate()?;
        match &self.mechanism {
            MechanismConfig::Identity => {}
            MechanismConfig::Swap(s) => s.validate()?,
            MechanismConfig::Dp(d) => {
                if !(d.rho_person > 0.0 && d.rho_household > 0.0) {
                    return Err(Error::Config("privacy budgets must be positive".into()));
                }
            }
        }
        if self.attack.topt.t == 0 || !(self.attack.lambda >= 0.0) {
            return Err(Error::Config("attack.topt.t must be >= 1 and attack.lambda >= 0".into()));
        }
        self.evaluation.validate()?;
        if self.sweep.seeds.is_empty() {
            return Err(Error::Config("sweep.seeds must not be empty".into()));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, Error> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String, Error> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}
