//! Content-agnostic moderators. Everything here sees only slates, exposure
//! counts and click history, never item stances or user preferences.

pub mod cocluster;
pub mod disperse;
pub mod kc;
pub mod rr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::model::{ClickHistory, ExposureMatrix, SlateSet};
use crate::rng::SeedTree;

pub use cocluster::{cocluster, CoclusterModel};
pub use disperse::{disperse, DispersalMode, DispersalOutcome, DispersalParams, SdSampling, Tightness};
pub use kc::{kc_moderate, within_budget, KcOutcome};
pub use rr::{rr_moderate, rr_quota, QuotaMode, RrOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeratorKind {
    None,
    Rr,
    Kc,
    Rd,
    Sd,
}

impl ModeratorKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Rr => "rr",
            Self::Kc => "kc",
            Self::Rd => "rd",
            Self::Sd => "sd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SilhouetteSpace {
    #[default]
    Embedding,
    /// Raw rows of the aggregated exposure matrix.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeratorConfig {
    pub kind: ModeratorKind,
    /// KC budget fraction.
    pub lambda: f64,
    /// Items replaced per dispersed user.
    pub alpha: usize,
    /// Silhouette threshold for tight clusters.
    pub beta: f64,
    pub n_clusters: usize,
    pub rr_quota: QuotaMode,
    pub tightness: Tightness,
    pub sd_sampling: SdSampling,
    pub silhouette_space: SilhouetteSpace,
}

impl Default for ModeratorConfig {
    fn default() -> Self {
        Self {
            kind: ModeratorKind::None,
            lambda: 0.4,
            alpha: 1,
            beta: 0.45,
            n_clusters: 3,
            rr_quota: QuotaMode::PerStep,
            tightness: Tightness::PerCluster,
            sd_sampling: SdSampling::Top,
            silhouette_space: SilhouetteSpace::Embedding,
        }
    }
}

impl ModeratorConfig {
    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(SimError::Config(format!("lambda must be in (0, 1], got {}", self.lambda)));
        }
        if self.alpha == 0 || self.alpha > k {
            return Err(SimError::Config(format!("alpha must be in 1..={k}, got {}", self.alpha)));
        }
        if !(self.beta > -1.0 && self.beta < 1.0) {
            return Err(SimError::Config(format!("beta must be in (-1, 1), got {}", self.beta)));
        }
        if self.n_clusters < 2 {
            return Err(SimError::Config("n_clusters must be at least 2".into()));
        }
        Ok(())
    }

    /// The hyperparameter that matters for this kind, for labels and CSV keys.
    pub fn label(&self) -> String {
        match self.kind {
            ModeratorKind::None => "none".into(),
            ModeratorKind::Rr => "rr".into(),
            ModeratorKind::Kc => format!("kc(lambda={})", self.lambda),
            ModeratorKind::Rd | ModeratorKind::Sd => format!("{}(alpha={})", self.kind.name(), self.alpha),
        }
    }
}

/// Relational state available to a moderator at one step.
pub struct ModerationInput<'a> {
    pub slates: &'a SlateSet,
    /// Exposures shown before this step, bootstrap included.
    pub agg: &'a ExposureMatrix,
    /// Per-item exposure over earlier loop steps only.
    pub loop_exposure: &'a [u64],
    pub consumed: &'a ClickHistory,
    pub step: usize,
    pub seeds: &'a SeedTree,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ModerationStats {
    /// Slate slots whose item changed.
    pub replaced: usize,
    pub rr_quota: Option<u32>,
    pub rr_fills: usize,
    pub rr_overrides: usize,
    pub kc_original_cost: Option<u64>,
    pub kc_cost: Option<u64>,
    pub clustering_available: Option<bool>,
    pub tight_clusters: usize,
    pub dispersed_users: usize,
}

#[derive(Debug, Clone)]
pub struct ModerationOutcome {
    pub slates: SlateSet,
    pub stats: ModerationStats,
    pub warnings: Vec<String>,
}

pub struct Moderator {
    cfg: ModeratorConfig,
}

impl Moderator {
    pub fn new(cfg: ModeratorConfig, k: usize) -> Result<Self> {
        cfg.validate(k)?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &ModeratorConfig {
        &self.cfg
    }

    pub fn moderate(&self, input: &ModerationInput<'_>) -> Result<ModerationOutcome> {
        let mut stats = ModerationStats::default();
        let mut warnings = Vec::new();
        let slates = match self.cfg.kind {
            ModeratorKind::None => input.slates.clone(),
            ModeratorKind::Rr => {
                let out = rr_moderate(
                    input.slates,
                    input.agg,
                    input.loop_exposure,
                    input.consumed,
                    input.step,
                    self.cfg.rr_quota,
                )?;
                stats.rr_quota = Some(out.quota);
                stats.rr_fills = out.fills;
                stats.rr_overrides = out.overrides;
                if out.overrides > 0 {
                    warnings.push(format!("rr: {} slots exceeded the item quota {}", out.overrides, out.quota));
                }
                out.slates
            }
            ModeratorKind::Kc => {
                let out = kc_moderate(input.slates, input.consumed, self.cfg.lambda, input.seeds, input.step)?;
                stats.kc_original_cost = Some(out.original_cost);
                stats.kc_cost = Some(out.cost);
                out.slates
            }
            ModeratorKind::Rd | ModeratorKind::Sd => {
                match cocluster(input.agg, self.cfg.n_clusters, input.seeds, input.step) {
                    None => {
                        stats.clustering_available = Some(false);
                        warnings.push("co-clustering unavailable, slates left unchanged".into());
                        input.slates.clone()
                    }
                    Some(mut model) => {
                        stats.clustering_available = Some(true);
                        if self.cfg.silhouette_space == SilhouetteSpace::Raw {
                            model.use_raw_silhouette(input.agg);
                        }
                        let params = DispersalParams {
                            alpha: self.cfg.alpha,
                            beta: self.cfg.beta,
                            mode: if self.cfg.kind == ModeratorKind::Rd {
                                DispersalMode::Random
                            } else {
                                DispersalMode::Similarity
                            },
                            tightness: self.cfg.tightness,
                            sampling: self.cfg.sd_sampling,
                        };
                        let out = disperse(input.slates, &model, &params, input.consumed, input.seeds, input.step);
                        stats.tight_clusters = out.tight_clusters.len();
                        stats.dispersed_users = out.dispersed_users;
                        if !out.short_users.is_empty() {
                            warnings.push(format!(
                                "dispersal: {} users had fewer than {} other-cluster candidates",
                                out.short_users.len(),
                                self.cfg.alpha
                            ));
                        }
                        out.slates
                    }
                }
            }
        };
        stats.replaced = input
            .slates
            .slates
            .iter()
            .zip(&slates.slates)
            .map(|(a, b)| b.items.iter().filter(|&&j| !a.contains(j)).count())
            .sum();
        Ok(ModerationOutcome { slates, stats, warnings })
    }
}
