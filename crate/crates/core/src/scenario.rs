//! Semi-synthetic users and items for the four content landscapes, plus the
//! bootstrapping phase that produces the initial interaction matrix.

use rand::seq::{index, SliceRandom};
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::model::{
    ClickHistory, ExposureMatrix, Interaction, InteractionLog, PreferenceMatrix, StanceId, StanceMatrix,
    UserGroupAssignment,
};
use crate::rng::{SeedTree, Stream};
use crate::usermodel::ChoiceModel;

pub const PEW_GROUP_SPLIT: [f64; 3] = [0.56, 0.11, 0.33];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Preset id 1..=4.
    pub id: u8,
    pub users: usize,
    pub items: usize,
    pub item_split: Vec<f64>,
    pub group_split: Vec<f64>,
    /// Multiplier applied to Right-group preference rows (scenario 4).
    pub amplification_factor: f64,
    pub dirichlet_peak: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::preset(1).expect("preset 1 exists")
    }
}

impl ScenarioConfig {
    pub fn preset(id: u8) -> Result<Self> {
        let item_split = match id {
            1 | 4 => vec![1.0 / 3.0; 3],
            2 => vec![0.45, 0.10, 0.45],
            3 => vec![0.80, 0.10, 0.10],
            _ => return Err(SimError::Config(format!("unknown scenario {id}; expected 1..=4"))),
        };
        Ok(Self {
            id,
            users: 100,
            items: 3000,
            item_split,
            group_split: PEW_GROUP_SPLIT.to_vec(),
            amplification_factor: if id == 4 { 2.0 } else { 1.0 },
            dirichlet_peak: 8.0,
        })
    }

    pub fn n_stances(&self) -> usize {
        self.item_split.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.id) {
            return Err(SimError::Config(format!("scenario id {} not in 1..=4", self.id)));
        }
        if self.users == 0 || self.items == 0 {
            return Err(SimError::Config("users and items must be positive".into()));
        }
        for (name, split) in [("item_split", &self.item_split), ("group_split", &self.group_split)] {
            if split.len() < 2 {
                return Err(SimError::Config(format!("{name} needs at least 2 stances")));
            }
            if split.iter().any(|v| !(*v >= 0.0)) || (split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(SimError::Config(format!("{name} must be nonnegative and sum to 1")));
            }
        }
        if self.item_split.len() != self.group_split.len() {
            return Err(SimError::Config("item_split and group_split disagree on stance count".into()));
        }
        if !(self.amplification_factor >= 1.0) {
            return Err(SimError::Config("amplification_factor must be >= 1".into()));
        }
        if !(self.dirichlet_peak > 0.0) {
            return Err(SimError::Config("dirichlet_peak must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub initial_items_per_user: usize,
    pub cold_item_fanout: usize,
    pub cold_threshold: f64,
    pub max_cold_rounds: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { initial_items_per_user: 10, cold_item_fanout: 10, cold_threshold: 0.005, max_cold_rounds: 50 }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_items_per_user == 0 || self.cold_item_fanout == 0 || self.max_cold_rounds == 0 {
            return Err(SimError::Config("bootstrap counts must be positive".into()));
        }
        if !(self.cold_threshold > 0.0 && self.cold_threshold < 1.0) {
            return Err(SimError::Config("cold_threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `total` over `shares`; ties go to the lower index.
pub fn apportion(total: usize, shares: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = shares.iter().map(|s| s * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|v| (v + 1e-9).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    // fractional parts quantised so float noise cannot break ties
    let frac = |i: usize| ((exact[i] - counts[i] as f64).max(0.0) * 1e9).round() as i64;
    order.sort_by_key(|&i| (-frac(i), i));
    for &i in order.iter().cycle().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Item stance matrix with exactly the apportioned count per stance, shuffled.
pub fn generate_items(cfg: &ScenarioConfig, seed: u64) -> Result<StanceMatrix> {
    cfg.validate()?;
    let counts = apportion(cfg.items, &cfg.item_split);
    let mut labels: Vec<StanceId> =
        counts.iter().enumerate().flat_map(|(s, &c)| std::iter::repeat_n(StanceId(s), c)).collect();
    labels.shuffle(&mut SeedTree::new(seed).rng(Stream::Scenario, 1, 0));
    StanceMatrix::from_labels(cfg.n_stances(), labels)
}

/// Preference rows drawn from a Dirichlet peaked on each user's group stance.
pub fn generate_users(cfg: &ScenarioConfig, seed: u64) -> Result<(PreferenceMatrix, UserGroupAssignment)> {
    cfg.validate()?;
    let n_stances = cfg.n_stances();
    let counts = apportion(cfg.users, &cfg.group_split);
    let mut groups: Vec<StanceId> =
        counts.iter().enumerate().flat_map(|(s, &c)| std::iter::repeat_n(StanceId(s), c)).collect();
    let mut rng = SeedTree::new(seed).rng(Stream::Scenario, 2, 0);
    groups.shuffle(&mut rng);

    let gamma = |shape: f64| Gamma::new(shape, 1.0).map_err(|e| SimError::Config(e.to_string()));
    let peak = gamma(cfg.dirichlet_peak)?;
    let flat = gamma(1.0)?;
    let right = StanceId(n_stances - 1);

    let mut rows = Vec::with_capacity(cfg.users);
    for &g in &groups {
        let draws: Vec<f64> =
            (0..n_stances).map(|s| if s == g.0 { peak.sample(&mut rng) } else { flat.sample(&mut rng) }).collect();
        let total: f64 = draws.iter().sum();
        let scale = if cfg.id == 4 && g == right { cfg.amplification_factor } else { 1.0 };
        let row = if total > 0.0 {
            draws.iter().map(|d| scale * d / total).collect()
        } else {
            // every gamma draw underflowed; fall back to the group vertex
            (0..n_stances).map(|s| if s == g.0 { scale } else { 0.0 }).collect()
        };
        rows.push(row);
    }
    Ok((PreferenceMatrix::from_rows(rows)?, UserGroupAssignment::new(n_stances, groups)?))
}

#[derive(Debug, Clone)]
pub struct BootstrapOutcome {
    pub exposure: ExposureMatrix,
    pub log: InteractionLog,
    pub history: ClickHistory,
    pub cold_rounds: usize,
    pub cold_remaining: usize,
    pub warning: Option<String>,
}

/// Random-exposure warm-up. Log step 0 holds the initial per-user exposures;
/// step `r` holds cold-item round `r`.
pub fn bootstrap<M: ChoiceModel>(
    preferences: &PreferenceMatrix,
    stances: &StanceMatrix,
    choice: &M,
    cfg: &BootstrapConfig,
    seed: u64,
) -> Result<BootstrapOutcome> {
    cfg.validate()?;
    let m = preferences.n_users();
    let n = stances.n_items();
    let seeds = SeedTree::new(seed);
    let mut exposure = ExposureMatrix::zeros(m, n);
    let mut log = InteractionLog::new();
    let mut history = ClickHistory::new(m, n);

    let mut show = |user: usize,
                    item: usize,
                    rank: usize,
                    step: usize,
                    rng: &mut rand_chacha::ChaCha8Rng,
                    exposure: &mut ExposureMatrix,
                    history: &mut ClickHistory| {
        let clicked = choice.click(preferences.row(user), stances.stance(item), rng);
        exposure.increment(user, item);
        log.push(Interaction { step, user, item, rank, clicked });
        if clicked {
            history.record(user, item);
        }
    };

    let initial = cfg.initial_items_per_user.min(n);
    for user in 0..m {
        let mut rng = seeds.rng(Stream::Bootstrap, 0, user as u64);
        let picks = index::sample(&mut rng, n, initial);
        for (rank, item) in picks.iter().enumerate() {
            show(user, item, rank, 0, &mut rng, &mut exposure, &mut history);
        }
    }

    let fanout = cfg.cold_item_fanout.min(m);
    let limit = cfg.cold_threshold * n as f64;
    let cold_items = |h: &ClickHistory| -> Vec<usize> { (0..n).filter(|&j| h.item_clicks()[j] == 0).collect() };
    let mut cold = cold_items(&history);
    let mut rounds = 0;
    while cold.len() as f64 > limit && rounds < cfg.max_cold_rounds {
        rounds += 1;
        let mut rng = seeds.rng(Stream::Bootstrap, rounds as u64, u64::MAX);
        for &item in &cold {
            for user in index::sample(&mut rng, m, fanout).iter() {
                show(user, item, 0, rounds, &mut rng, &mut exposure, &mut history);
            }
        }
        cold = cold_items(&history);
    }
    let warning = (cold.len() as f64 > limit).then(|| {
        format!("bootstrap: {} cold items remain after {} rounds (threshold {:.1})", cold.len(), rounds, limit)
    });
    Ok(BootstrapOutcome { exposure, log, history, cold_rounds: rounds, cold_remaining: cold.len(), warning })
}

/// Generation output bundle used by the engine and the `generate` command.
#[derive(Debug, Clone)]
pub struct Population {
    pub preferences: PreferenceMatrix,
    pub groups: UserGroupAssignment,
    pub stances: StanceMatrix,
}

pub fn generate(cfg: &ScenarioConfig, seed: u64) -> Result<Population> {
    let stances = generate_items(cfg, seed)?;
    let (preferences, groups) = generate_users(cfg, seed)?;
    Ok(Population { preferences, groups, stances })
}
