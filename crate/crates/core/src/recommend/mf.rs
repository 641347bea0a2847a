//! Implicit-feedback matrix factorization trained by SGD with sampled negatives.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{random_rec, tie_keys, top_k};
use crate::error::{Result, SimError};
use crate::model::{ClickHistory, ItemId, Slate, SlateSet, UserId};
use crate::rng::{SeedTree, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfConfig {
    pub latent_dim: usize,
    /// Epochs for the first fit.
    pub epochs: usize,
    /// Epochs for each warm-started refit.
    pub warm_epochs: usize,
    pub learn_rate: f64,
    pub reg: f64,
    /// Sampled non-clicked items per positive.
    pub neg_ratio: usize,
    pub init_std: f64,
}

impl Default for MfConfig {
    fn default() -> Self {
        Self { latent_dim: 16, epochs: 20, warm_epochs: 5, learn_rate: 0.05, reg: 1e-4, neg_ratio: 4, init_std: 0.1 }
    }
}

impl MfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.epochs == 0 || self.neg_ratio == 0 {
            return Err(SimError::Config("mf latent_dim, epochs and neg_ratio must be positive".into()));
        }
        if !(self.learn_rate > 0.0) || !(self.reg >= 0.0) || !(self.init_std > 0.0) {
            return Err(SimError::Config("mf learn_rate and init_std must be > 0, reg >= 0".into()));
        }
        Ok(())
    }
}

/// User and item factors, row-major `users × dim` and `items × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct MfState {
    dim: usize,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
}

impl MfState {
    fn init<R: Rng + ?Sized>(n_users: usize, n_items: usize, dim: usize, std: f64, rng: &mut R) -> Result<Self> {
        let normal = Normal::new(0.0, std).map_err(|e| SimError::Config(e.to_string()))?;
        Ok(Self {
            dim,
            user_factors: (0..n_users * dim).map(|_| normal.sample(rng)).collect(),
            item_factors: (0..n_items * dim).map(|_| normal.sample(rng)).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_users(&self) -> usize {
        self.user_factors.len() / self.dim
    }

    pub fn n_items(&self) -> usize {
        self.item_factors.len() / self.dim
    }

    pub fn score(&self, user: UserId, item: ItemId) -> f64 {
        let p = &self.user_factors[user * self.dim..(user + 1) * self.dim];
        let q = &self.item_factors[item * self.dim..(item + 1) * self.dim];
        p.iter().zip(q).map(|(a, b)| a * b).sum()
    }

    fn sgd_step(&mut self, user: UserId, item: ItemId, target: f64, lr: f64, reg: f64) {
        let d = self.dim;
        let err = target - self.score(user, item);
        let (pu, qi) = (user * d, item * d);
        for f in 0..d {
            let p = self.user_factors[pu + f];
            let q = self.item_factors[qi + f];
            self.user_factors[pu + f] += lr * (err * q - reg * p);
            self.item_factors[qi + f] += lr * (err * p - reg * q);
        }
    }
}

/// Fits (or refits, when `warm` is given) on the binary click matrix.
pub fn train_mf(
    history: &ClickHistory,
    cfg: &MfConfig,
    warm: Option<MfState>,
    seeds: &SeedTree,
    step: usize,
) -> Result<MfState> {
    cfg.validate()?;
    let (m, n) = (history.n_users(), history.n_items());
    let mut rng = seeds.rng(Stream::Recommender, step as u64, u64::MAX);
    let (mut state, epochs) = match warm {
        Some(s) if s.dim == cfg.latent_dim && s.n_users() == m && s.n_items() == n => (s, cfg.warm_epochs),
        _ => (MfState::init(m, n, cfg.latent_dim, cfg.init_std, &mut rng)?, cfg.epochs),
    };

    let mut positives: Vec<(UserId, ItemId)> =
        (0..m).flat_map(|u| history.consumed_by(u).iter().map(move |&j| (u, j))).collect();
    for _ in 0..epochs {
        positives.shuffle(&mut rng);
        for &(user, item) in &positives {
            state.sgd_step(user, item, 1.0, cfg.learn_rate, cfg.reg);
            if history.eligible_count(user) == 0 {
                continue;
            }
            for _ in 0..cfg.neg_ratio {
                // rejection sampling; bounded so dense users cannot stall
                let negative = (0..32).map(|_| rng.random_range(0..n)).find(|&j| !history.is_consumed(user, j));
                if let Some(j) = negative {
                    state.sgd_step(user, j, 0.0, cfg.learn_rate, cfg.reg);
                }
            }
        }
    }
    Ok(state)
}

pub struct MfOutcome {
    pub slates: SlateSet,
    pub state: Option<MfState>,
    pub warning: Option<String>,
}

/// Retrains on the cumulative clicks and returns the top-`k` non-consumed items per user.
pub fn mf_rec(
    history: &ClickHistory,
    k: usize,
    cfg: &MfConfig,
    warm: Option<MfState>,
    seeds: &SeedTree,
    step: usize,
) -> Result<MfOutcome> {
    if history.total_clicks() == 0 {
        return Ok(MfOutcome {
            slates: random_rec(history, k, seeds, step)?,
            state: warm,
            warning: Some("mf: click matrix is all zero, fell back to random slates".into()),
        });
    }
    let state = train_mf(history, cfg, warm, seeds, step)?;
    let n = history.n_items();
    let mut slates = Vec::with_capacity(history.n_users());
    for user in 0..history.n_users() {
        let mut rng = seeds.rng(Stream::Recommender, step as u64, user as u64);
        let scores: Vec<f64> = (0..n).map(|j| state.score(user, j)).collect();
        let keys = tie_keys(&mut rng, n);
        let items = top_k(&scores, &keys, |j| !history.is_consumed(user, j), k)
            .map_err(|e| SimError::State(format!("user {user}: {e}")))?;
        slates.push(Slate::new(user, items));
    }
    Ok(MfOutcome { slates: SlateSet::new(k, slates), state: Some(state), warning: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_blocks_are_recovered() {
        // users 0..20 click in items 0..100, users 20..40 in items 100..200
        let (m, n) = (40, 200);
        let mut h = ClickHistory::new(m, n);
        let mut rng = SeedTree::new(5).rng(Stream::Scenario, 0, 0);
        for u in 0..m {
            let offset = if u < 20 { 0 } else { 100 };
            for j in rand::seq::index::sample(&mut rng, 100, 30).iter() {
                h.record(u, offset + j);
            }
        }
        let out = mf_rec(&h, 5, &MfConfig::default(), None, &SeedTree::new(5), 0).unwrap();
        let mut own = 0;
        for slate in &out.slates.slates {
            own += slate.items.iter().filter(|&&j| (j < 100) == (slate.user < 20)).count();
        }
        let share = own as f64 / (m * 5) as f64;
        assert!(share >= 0.95, "own-block share {share}");
        assert!(out.warning.is_none());
    }

    #[test]
    fn single_click_is_top_scored() {
        let mut h = ClickHistory::new(1, 20);
        h.record(0, 7);
        let cfg = MfConfig { latent_dim: 1, ..Default::default() };
        let state = train_mf(&h, &cfg, None, &SeedTree::new(1), 0).unwrap();
        let best = (0..20).max_by(|&a, &b| state.score(0, a).total_cmp(&state.score(0, b))).unwrap();
        assert_eq!(best, 7);
    }

    #[test]
    fn empty_history_falls_back_to_random() {
        let h = ClickHistory::new(3, 10);
        let out = mf_rec(&h, 2, &MfConfig::default(), None, &SeedTree::new(0), 0).unwrap();
        assert!(out.warning.is_some());
        assert_eq!(out.slates, random_rec(&h, 2, &SeedTree::new(0), 0).unwrap());
    }

    #[test]
    fn warm_start_keeps_shape_and_changes_factors() {
        let mut h = ClickHistory::new(4, 30);
        h.record(0, 1);
        h.record(1, 2);
        let cfg = MfConfig::default();
        let seeds = SeedTree::new(3);
        let first = train_mf(&h, &cfg, None, &seeds, 0).unwrap();
        h.record(2, 3);
        let second = train_mf(&h, &cfg, Some(first.clone()), &seeds, 1).unwrap();
        assert_eq!(second.dim(), first.dim());
        assert_ne!(second, first);
    }
}
