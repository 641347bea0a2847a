//! User click behaviour and the linear preference update `U_u ← U_u + γ A_i`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::model::{ItemId, StanceId, StanceMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UserModelConfig {
    /// Preference update coefficient γ.
    pub gamma: f64,
    pub click_noise_sigma: f64,
    pub click_scale: f64,
}

impl Default for UserModelConfig {
    fn default() -> Self {
        Self { gamma: 0.001, click_noise_sigma: 0.05, click_scale: 1.0 }
    }
}

impl UserModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(SimError::Config("gamma must be >= 0".into()));
        }
        if !(self.click_noise_sigma >= 0.0 && self.click_noise_sigma.is_finite()) {
            return Err(SimError::Config("click_noise_sigma must be >= 0".into()));
        }
        if !(self.click_scale > 0.0 && self.click_scale.is_finite()) {
            return Err(SimError::Config("click_scale must be > 0".into()));
        }
        Ok(())
    }
}

/// Decides whether a user clicks a shown item of a given stance.
pub trait ChoiceModel: Sync {
    fn click<R: Rng + ?Sized>(&self, preferences: &[f64], stance: StanceId, rng: &mut R) -> bool;
}

/// Clicks with probability `clamp(scale · U_u·A_j + η, 0, 1)`, `η ~ N(0, σ)`.
#[derive(Debug, Clone)]
pub struct SimilarityChoice {
    scale: f64,
    noise: Option<Normal<f64>>,
}

impl SimilarityChoice {
    pub fn new(cfg: &UserModelConfig) -> Result<Self> {
        cfg.validate()?;
        let noise = if cfg.click_noise_sigma > 0.0 {
            Some(Normal::new(0.0, cfg.click_noise_sigma).map_err(|e| SimError::Config(e.to_string()))?)
        } else {
            None
        };
        Ok(Self { scale: cfg.click_scale, noise })
    }

    pub fn probability<R: Rng + ?Sized>(&self, preferences: &[f64], stance: StanceId, rng: &mut R) -> f64 {
        let eta = self.noise.map(|n| n.sample(rng)).unwrap_or(0.0);
        (self.scale * preferences[stance.0] + eta).clamp(0.0, 1.0)
    }
}

impl ChoiceModel for SimilarityChoice {
    fn click<R: Rng + ?Sized>(&self, preferences: &[f64], stance: StanceId, rng: &mut R) -> bool {
        let p = self.probability(preferences, stance, rng);
        // always draw the uniform so the stream advances identically
        let u: f64 = rng.random();
        u < p
    }
}

/// Returns the clicked subset of `slate`, in slate order.
pub fn choose<M: ChoiceModel, R: Rng + ?Sized>(
    preferences: &[f64],
    slate: &[ItemId],
    stances: &StanceMatrix,
    model: &M,
    rng: &mut R,
) -> Vec<ItemId> {
    slate.iter().copied().filter(|&item| model.click(preferences, stances.stance(item), rng)).collect()
}

/// Adds `gamma · A_i` for every clicked item. No renormalisation.
pub fn update_preferences(preferences: &mut [f64], clicked: &[ItemId], stances: &StanceMatrix, gamma: f64) {
    for &item in clicked {
        preferences[stances.stance(item).0] += gamma;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{SeedTree, Stream};

    fn items() -> StanceMatrix {
        StanceMatrix::from_labels(3, vec![StanceId(0), StanceId(1), StanceId(2)]).unwrap()
    }

    fn noiseless() -> SimilarityChoice {
        SimilarityChoice::new(&UserModelConfig { gamma: 0.0, click_noise_sigma: 0.0, click_scale: 1.0 }).unwrap()
    }

    #[test]
    fn clamped_probabilities() {
        let mut rng = SeedTree::new(1).rng(Stream::User, 0, 0);
        let model = noiseless();
        assert_eq!(model.probability(&[1.0, 0.0, 0.0], StanceId::LEFT, &mut rng), 1.0);
        assert_eq!(model.probability(&[0.0, 0.0, 1.0], StanceId::LEFT, &mut rng), 0.0);
        for _ in 0..100 {
            assert_eq!(choose(&[1.0, 0.0, 0.0], &[0], &items(), &model, &mut rng), vec![0]);
            assert!(choose(&[0.0, 0.0, 1.0], &[0], &items(), &model, &mut rng).is_empty());
        }
    }

    #[test]
    fn monte_carlo_click_rate() {
        // E[clamp(0.6 + η)] with σ = 0.05 is 0.6 up to negligible clamp mass
        let model = SimilarityChoice::new(&UserModelConfig::default()).unwrap();
        let mut rng = SeedTree::new(42).rng(Stream::User, 0, 0);
        let trials = 100_000;
        let clicks = (0..trials).filter(|_| model.click(&[0.6, 0.2, 0.2], StanceId::LEFT, &mut rng)).count();
        let rate = clicks as f64 / trials as f64;
        assert!((rate - 0.6).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn noiseless_choice_is_deterministic() {
        let model = noiseless();
        let prefs = [0.5, 0.5, 0.0];
        let a = choose(&prefs, &[0, 1, 2], &items(), &model, &mut SeedTree::new(3).rng(Stream::User, 0, 0));
        let b = choose(&prefs, &[0, 1, 2], &items(), &model, &mut SeedTree::new(3).rng(Stream::User, 0, 0));
        assert_eq!(a, b);
    }

    #[test]
    fn update_examples() {
        let a = items();
        let mut u = vec![0.5, 0.3, 0.2];
        update_preferences(&mut u, &[0, 2], &a, 0.0);
        assert_eq!(u, vec![0.5, 0.3, 0.2]);

        update_preferences(&mut u, &[2], &a, 0.001);
        assert!((u[0] - 0.5).abs() < 1e-15 && (u[1] - 0.3).abs() < 1e-15 && (u[2] - 0.201).abs() < 1e-15);

        let left = StanceMatrix::from_labels(3, vec![StanceId(0); 10]).unwrap();
        let mut v = vec![0.2, 0.3, 0.5];
        update_preferences(&mut v, &(0..10).collect::<Vec<_>>(), &left, 0.01);
        assert!((v[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn rejects_negative_gamma() {
        let cfg = UserModelConfig { gamma: -0.1, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn update_is_order_independent_and_monotone(
                clicks in proptest::collection::vec(0usize..3, 0..20),
                gamma in 0.0f64..0.1,
            ) {
                let a = items();
                let start = vec![0.2, 0.3, 0.5];
                let mut forward = start.clone();
                update_preferences(&mut forward, &clicks, &a, gamma);
                let mut reversed_clicks = clicks.clone();
                reversed_clicks.reverse();
                let mut backward = start.clone();
                update_preferences(&mut backward, &reversed_clicks, &a, gamma);
                for s in 0..3 {
                    prop_assert!((forward[s] - backward[s]).abs() < 1e-12);
                    prop_assert!(forward[s] >= start[s]);
                }
            }
        }
    }
}
