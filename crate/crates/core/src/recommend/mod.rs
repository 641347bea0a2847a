//! The five slate producers: two content-based (exact and noisy), random,
//! matrix factorization and popularity.

mod mf;

pub use mf::{mf_rec, train_mf, MfConfig, MfState};

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::model::{ClickHistory, ItemId, PreferenceMatrix, Slate, SlateSet, StanceMatrix};
use crate::rng::{SeedTree, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RecommenderKind {
    Oracle,
    Inaccurate,
    Random,
    Mf,
    Pp,
}

impl RecommenderKind {
    pub fn name(self) -> &'static str {
        match self {
            RecommenderKind::Oracle => "oracle",
            RecommenderKind::Inaccurate => "inaccurate",
            RecommenderKind::Random => "random",
            RecommenderKind::Mf => "mf",
            RecommenderKind::Pp => "pp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecommenderConfig {
    pub kind: RecommenderKind,
    /// Score noise for the inaccurate content-based recommender.
    pub noise_sigma: f64,
    pub mf: MfConfig,
}

impl Default for RecommenderConfig {
    fn default() -> Self {
        Self { kind: RecommenderKind::Oracle, noise_sigma: 0.3, mf: MfConfig::default() }
    }
}

impl RecommenderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0) {
            return Err(SimError::Config("noise_sigma must be >= 0".into()));
        }
        self.mf.validate()
    }
}

/// Top-`k` eligible items by descending score; equal scores ordered by `tie_keys`.
pub(crate) fn top_k(
    scores: &[f64],
    tie_keys: &[u64],
    eligible: impl Fn(ItemId) -> bool,
    k: usize,
) -> Result<Vec<ItemId>> {
    let mut candidates: Vec<ItemId> = (0..scores.len()).filter(|&j| eligible(j)).collect();
    if candidates.len() < k {
        return Err(SimError::State(format!("only {} eligible items for a slate of {k}", candidates.len())));
    }
    let cmp = |a: &ItemId, b: &ItemId| scores[*b].total_cmp(&scores[*a]).then(tie_keys[*a].cmp(&tie_keys[*b]));
    if k < candidates.len() && k > 0 {
        candidates.select_nth_unstable_by(k - 1, cmp);
        candidates.truncate(k);
    }
    candidates.sort_by(cmp);
    candidates.truncate(k);
    Ok(candidates)
}

fn tie_keys<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<u64> {
    (0..n).map(|_| rng.random()).collect()
}

fn score_slates(
    n_users: usize,
    n_items: usize,
    consumed: &ClickHistory,
    k: usize,
    seeds: &SeedTree,
    step: usize,
    mut scores_for: impl FnMut(usize, &mut rand_chacha::ChaCha8Rng) -> Vec<f64>,
) -> Result<SlateSet> {
    let mut slates = Vec::with_capacity(n_users);
    for user in 0..n_users {
        let mut rng = seeds.rng(Stream::Recommender, step as u64, user as u64);
        let scores = scores_for(user, &mut rng);
        let keys = tie_keys(&mut rng, n_items);
        let items = top_k(&scores, &keys, |j| !consumed.is_consumed(user, j), k)
            .map_err(|e| SimError::State(format!("user {user}: {e}")))?;
        slates.push(Slate::new(user, items));
    }
    Ok(SlateSet::new(k, slates))
}

fn check_shapes(prefs: &PreferenceMatrix, stances: &StanceMatrix, consumed: &ClickHistory) -> Result<()> {
    if prefs.n_stances() != stances.n_stances()
        || prefs.n_users() != consumed.n_users()
        || stances.n_items() != consumed.n_items()
    {
        return Err(SimError::Input("preference, stance and history shapes disagree".into()));
    }
    Ok(())
}

/// Content-based recommender with perfect knowledge: score `U_u · A_j`.
pub fn oracle_cb(
    prefs: &PreferenceMatrix,
    stances: &StanceMatrix,
    consumed: &ClickHistory,
    k: usize,
    seeds: &SeedTree,
    step: usize,
) -> Result<SlateSet> {
    inaccurate_cb(prefs, stances, consumed, k, 0.0, seeds, step)
}

/// Content-based scores perturbed by i.i.d. Gaussian noise per (user, item, step).
pub fn inaccurate_cb(
    prefs: &PreferenceMatrix,
    stances: &StanceMatrix,
    consumed: &ClickHistory,
    k: usize,
    noise_sigma: f64,
    seeds: &SeedTree,
    step: usize,
) -> Result<SlateSet> {
    check_shapes(prefs, stances, consumed)?;
    let noise = if noise_sigma > 0.0 {
        Some(Normal::new(0.0, noise_sigma).map_err(|e| SimError::Config(e.to_string()))?)
    } else {
        None
    };
    let n = stances.n_items();
    score_slates(prefs.n_users(), n, consumed, k, seeds, step, |user, rng| {
        let row = prefs.row(user);
        (0..n)
            .map(|j| {
                let base = row[stances.stance(j).0];
                match &noise {
                    Some(dist) => base + dist.sample(rng),
                    None => base,
                }
            })
            .collect()
    })
}

/// `k` distinct non-consumed items uniformly at random per user.
pub fn random_rec(consumed: &ClickHistory, k: usize, seeds: &SeedTree, step: usize) -> Result<SlateSet> {
    let n = consumed.n_items();
    let mut slates = Vec::with_capacity(consumed.n_users());
    for user in 0..consumed.n_users() {
        let mut rng = seeds.rng(Stream::Recommender, step as u64, user as u64);
        let eligible = consumed.eligible_count(user);
        if eligible < k {
            return Err(SimError::State(format!("user {user}: only {eligible} eligible items for a slate of {k}")));
        }
        let items = if consumed.consumed_by(user).is_empty() {
            index::sample(&mut rng, n, k).into_vec()
        } else {
            let pool: Vec<ItemId> = (0..n).filter(|&j| !consumed.is_consumed(user, j)).collect();
            index::sample(&mut rng, pool.len(), k).iter().map(|i| pool[i]).collect()
        };
        slates.push(Slate::new(user, items));
    }
    Ok(SlateSet::new(k, slates))
}

/// Most-clicked non-consumed items; ties broken at random per user.
pub fn pp_rec(consumed: &ClickHistory, k: usize, seeds: &SeedTree, step: usize) -> Result<SlateSet> {
    let popularity: Vec<f64> = consumed.item_clicks().iter().map(|&c| c as f64).collect();
    score_slates(consumed.n_users(), consumed.n_items(), consumed, k, seeds, step, |_, _| popularity.clone())
}

/// Stateful dispatcher owned by one simulation run.
#[derive(Debug, Clone)]
pub struct Recommender {
    cfg: RecommenderConfig,
    mf_state: Option<MfState>,
    warnings: Vec<String>,
}

pub struct RecContext<'a> {
    pub preferences: &'a PreferenceMatrix,
    pub stances: &'a StanceMatrix,
    pub history: &'a ClickHistory,
    pub k: usize,
    pub step: usize,
    pub seeds: &'a SeedTree,
}

impl Recommender {
    pub fn new(cfg: RecommenderConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, mf_state: None, warnings: Vec::new() })
    }

    pub fn kind(&self) -> RecommenderKind {
        self.cfg.kind
    }

    pub fn recommend(&mut self, ctx: &RecContext<'_>) -> Result<SlateSet> {
        let RecContext { preferences, stances, history, k, step, seeds } = *ctx;
        match self.cfg.kind {
            RecommenderKind::Oracle => oracle_cb(preferences, stances, history, k, seeds, step),
            RecommenderKind::Inaccurate => {
                inaccurate_cb(preferences, stances, history, k, self.cfg.noise_sigma, seeds, step)
            }
            RecommenderKind::Random => random_rec(history, k, seeds, step),
            RecommenderKind::Pp => pp_rec(history, k, seeds, step),
            RecommenderKind::Mf => {
                let warm = self.mf_state.take();
                let out = mf_rec(history, k, &self.cfg.mf, warm, seeds, step)?;
                if let Some(w) = out.warning {
                    self.warnings.push(format!("step {step}: {w}"));
                }
                self.mf_state = out.state;
                Ok(out.slates)
            }
        }
    }

    pub fn drain_warnings(&mut self) -> Vec<String> {
        std::mem::take(&mut self.warnings)
    }
}
