//! Run configuration: TOML in, fully resolved TOML/JSON out.

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Result, SimError};
use crate::metrics::OpinionScale;
use crate::moderate::{ModeratorConfig, ModeratorKind};
use crate::recommend::RecommenderConfig;
use crate::scenario::{BootstrapConfig, ScenarioConfig};
use crate::usermodel::UserModelConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Scale used for UMS and UMOE.
    pub opinion_scale: OpinionScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Loop steps `T`; 0 runs the bootstrap only.
    pub steps: usize,
    /// Slate size.
    pub k: usize,
    #[serde(deserialize_with = "scenario_with_preset")]
    pub scenario: ScenarioConfig,
    pub bootstrap: BootstrapConfig,
    pub recommender: RecommenderConfig,
    pub moderator: ModeratorConfig,
    pub users: UserModelConfig,
    pub metrics: MetricsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            steps: 60,
            k: 5,
            scenario: ScenarioConfig::default(),
            bootstrap: BootstrapConfig::default(),
            recommender: RecommenderConfig::default(),
            moderator: ModeratorConfig::default(),
            users: UserModelConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

/// Scenario table where omitted keys come from the preset named by `id`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioOverrides {
    id: Option<u8>,
    users: Option<usize>,
    items: Option<usize>,
    item_split: Option<Vec<f64>>,
    group_split: Option<Vec<f64>>,
    amplification_factor: Option<f64>,
    dirichlet_peak: Option<f64>,
}

fn scenario_with_preset<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<ScenarioConfig, D::Error> {
    let o = ScenarioOverrides::deserialize(d)?;
    let mut cfg = ScenarioConfig::preset(o.id.unwrap_or(1)).map_err(serde::de::Error::custom)?;
    if let Some(v) = o.users {
        cfg.users = v;
    }
    if let Some(v) = o.items {
        cfg.items = v;
    }
    if let Some(v) = o.item_split {
        cfg.item_split = v;
    }
    if let Some(v) = o.group_split {
        cfg.group_split = v;
    }
    if let Some(v) = o.amplification_factor {
        cfg.amplification_factor = v;
    }
    if let Some(v) = o.dirichlet_peak {
        cfg.dirichlet_peak = v;
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(SimError::Config("k must be at least 1".into()));
        }
        self.scenario.validate()?;
        self.bootstrap.validate()?;
        self.recommender.validate()?;
        self.moderator.validate(self.k)?;
        self.users.validate()?;
        if self.scenario.items < self.k {
            return Err(SimError::Config("fewer items than slate size".into()));
        }
        Ok(())
    }

    /// Switches to another scenario preset, keeping the population size.
    pub fn set_scenario(&mut self, id: u8) -> Result<()> {
        let (users, items) = (self.scenario.users, self.scenario.items);
        self.scenario = ScenarioConfig::preset(id)?;
        self.scenario.users = users;
        self.scenario.items = items;
        Ok(())
    }

    /// `lambda` if it affects this run, else `None`.
    pub fn effective_lambda(&self) -> Option<f64> {
        (self.moderator.kind == ModeratorKind::Kc).then_some(self.moderator.lambda)
    }

    /// `alpha` if it affects this run, else `None`.
    pub fn effective_alpha(&self) -> Option<usize> {
        matches!(self.moderator.kind, ModeratorKind::Rd | ModeratorKind::Sd).then_some(self.moderator.alpha)
    }

    /// Stable directory-safe identifier, e.g. `s1-oracle-kc0.4-g0.001-seed3`.
    pub fn run_id(&self) -> String {
        let moderator = match self.moderator.kind {
            ModeratorKind::Kc => format!("kc{}", self.moderator.lambda),
            ModeratorKind::Rd | ModeratorKind::Sd => format!("{}{}", self.moderator.kind.name(), self.moderator.alpha),
            kind => kind.name().to_string(),
        };
        format!(
            "s{}-{}-{}-g{}-seed{}",
            self.scenario.id,
            self.recommender.kind.name(),
            moderator,
            self.users.gamma,
            self.seed
        )
    }
}
