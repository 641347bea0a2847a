//! Experiment grids and their expansion into run configurations.

use crate::engine::RunConfig;
use crate::error::{Result, SimError};
use crate::moderate::ModeratorKind;
use crate::recommend::RecommenderKind;

/// A moderator with the hyperparameter that distinguishes it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModSetting {
    pub kind: ModeratorKind,
    pub lambda: Option<f64>,
    pub alpha: Option<usize>,
}

impl ModSetting {
    pub const NONE: Self = Self { kind: ModeratorKind::None, lambda: None, alpha: None };
    pub const RR: Self = Self { kind: ModeratorKind::Rr, lambda: None, alpha: None };

    pub fn kc(lambda: f64) -> Self {
        Self { kind: ModeratorKind::Kc, lambda: Some(lambda), alpha: None }
    }

    pub fn rd(alpha: usize) -> Self {
        Self { kind: ModeratorKind::Rd, lambda: None, alpha: Some(alpha) }
    }

    pub fn sd(alpha: usize) -> Self {
        Self { kind: ModeratorKind::Sd, lambda: None, alpha: Some(alpha) }
    }

    /// Every kind crossed with the lambdas (KC only) and alphas (RD and SD only).
    pub fn expand(kinds: &[ModeratorKind], lambdas: &[f64], alphas: &[usize]) -> Vec<Self> {
        let mut out = Vec::new();
        for &kind in kinds {
            match kind {
                ModeratorKind::Kc => out.extend(lambdas.iter().map(|&l| Self::kc(l))),
                ModeratorKind::Rd | ModeratorKind::Sd => {
                    out.extend(alphas.iter().map(|&a| Self { kind, lambda: None, alpha: Some(a) }))
                }
                _ => out.push(Self { kind, lambda: None, alpha: None }),
            }
        }
        out
    }
}

/// A cartesian block of the experiment grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub scenarios: Vec<u8>,
    pub recommenders: Vec<RecommenderKind>,
    pub moderators: Vec<ModSetting>,
    pub gammas: Vec<f64>,
}

/// Replacement values for grid dimensions; `None` keeps the preset's.
#[derive(Debug, Clone, Default)]
pub struct GridOverrides {
    pub scenarios: Option<Vec<u8>>,
    pub recommenders: Option<Vec<RecommenderKind>>,
    pub moderators: Option<Vec<ModeratorKind>>,
    pub lambdas: Option<Vec<f64>>,
    pub alphas: Option<Vec<usize>>,
    pub gammas: Option<Vec<f64>>,
}

impl Grid {
    pub fn apply(&mut self, o: &GridOverrides, base: &RunConfig) {
        if let Some(v) = &o.scenarios {
            self.scenarios = v.clone();
        }
        if let Some(v) = &o.recommenders {
            self.recommenders = v.clone();
        }
        if let Some(v) = &o.gammas {
            self.gammas = v.clone();
        }
        if o.moderators.is_some() || o.lambdas.is_some() || o.alphas.is_some() {
            let mut kinds: Vec<ModeratorKind> = Vec::new();
            for m in &self.moderators {
                if !kinds.contains(&m.kind) {
                    kinds.push(m.kind);
                }
            }
            let kinds = o.moderators.clone().unwrap_or(kinds);
            let lambdas = o.lambdas.clone().unwrap_or_else(|| self.distinct_lambdas(base));
            let alphas = o.alphas.clone().unwrap_or_else(|| self.distinct_alphas(base));
            self.moderators = ModSetting::expand(&kinds, &lambdas, &alphas);
        }
    }

    fn distinct_lambdas(&self, base: &RunConfig) -> Vec<f64> {
        let mut v: Vec<f64> = Vec::new();
        for l in self.moderators.iter().filter_map(|m| m.lambda) {
            if !v.contains(&l) {
                v.push(l);
            }
        }
        if v.is_empty() {
            v.push(base.moderator.lambda);
        }
        v
    }

    fn distinct_alphas(&self, base: &RunConfig) -> Vec<usize> {
        let mut v: Vec<usize> = Vec::new();
        for a in self.moderators.iter().filter_map(|m| m.alpha) {
            if !v.contains(&a) {
                v.push(a);
            }
        }
        if v.is_empty() {
            v.push(base.moderator.alpha);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.scenarios.len() * self.recommenders.len() * self.moderators.len() * self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Crosses the grids with the seeds on top of `base`; repeated runs are dropped.
pub fn expand(grids: &[Grid], seeds: &[u64], base: &RunConfig) -> Result<Vec<RunConfig>> {
    let mut out: Vec<RunConfig> = Vec::new();
    let mut ids = std::collections::HashSet::new();
    for g in grids {
        for &scenario in &g.scenarios {
            for &rec in &g.recommenders {
                for m in &g.moderators {
                    for &gamma in &g.gammas {
                        for &seed in seeds {
                            let mut cfg = base.clone();
                            cfg.set_scenario(scenario)?;
                            cfg.recommender.kind = rec;
                            cfg.moderator.kind = m.kind;
                            if let Some(l) = m.lambda {
                                cfg.moderator.lambda = l;
                            }
                            if let Some(a) = m.alpha {
                                cfg.moderator.alpha = a;
                            }
                            cfg.users.gamma = gamma;
                            cfg.seed = seed;
                            cfg.validate()?;
                            if ids.insert(cfg.run_id()) {
                                out.push(cfg);
                            }
                        }
                    }
                }
            }
        }
    }
    if out.is_empty() {
        return Err(SimError::Config("the grid is empty".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    Rq1,
    #[value(name = "rq2-oracle")]
    Rq2Oracle,
    #[value(name = "rq2-inaccurate")]
    Rq2Inaccurate,
    #[value(name = "rq2-random")]
    Rq2Random,
    Rq3,
    Runtime,
}

const SCENARIOS: [u8; 4] = [1, 2, 3, 4];

fn main_moderators() -> Vec<ModSetting> {
    vec![ModSetting::NONE, ModSetting::RR, ModSetting::kc(0.4), ModSetting::rd(1), ModSetting::sd(1)]
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Rq1 => "rq1",
            Preset::Rq2Oracle => "rq2-oracle",
            Preset::Rq2Inaccurate => "rq2-inaccurate",
            Preset::Rq2Random => "rq2-random",
            Preset::Rq3 => "rq3",
            Preset::Runtime => "runtime",
        }
    }

    /// Cell each row is compared against in `aggregate.csv`.
    pub fn baseline(self) -> &'static str {
        match self {
            Preset::Rq1 => "recommender=oracle",
            _ => "moderator=none",
        }
    }

    pub fn grids(self) -> Vec<Grid> {
        let grid = |recommenders: Vec<RecommenderKind>, moderators: Vec<ModSetting>, gammas: Vec<f64>| Grid {
            scenarios: SCENARIOS.to_vec(),
            recommenders,
            moderators,
            gammas,
        };
        use RecommenderKind::*;
        match self {
            Preset::Rq1 => vec![grid(vec![Oracle, Mf, Pp], vec![ModSetting::NONE], vec![0.0, 0.001])],
            Preset::Rq2Oracle => vec![grid(vec![Oracle], main_moderators(), vec![0.0, 0.001])],
            Preset::Rq2Inaccurate => vec![grid(vec![Inaccurate], main_moderators(), vec![0.001])],
            Preset::Rq2Random => vec![grid(vec![Random], main_moderators(), vec![0.001])],
            Preset::Rq3 => vec![
                grid(vec![Oracle], main_moderators(), vec![0.001]),
                Grid {
                    scenarios: vec![1, 3],
                    recommenders: vec![Oracle],
                    moderators: vec![ModSetting::NONE, ModSetting::sd(1), ModSetting::sd(2)],
                    gammas: vec![0.01],
                },
            ],
            Preset::Runtime => vec![Grid {
                scenarios: vec![1],
                recommenders: vec![Oracle],
                moderators: vec![
                    ModSetting::RR,
                    ModSetting::kc(0.4),
                    ModSetting::kc(0.6),
                    ModSetting::rd(1),
                    ModSetting::rd(2),
                    ModSetting::sd(1),
                    ModSetting::sd(2),
                ],
                gammas: vec![0.001],
            }],
        }
    }
}

/// Parses `10` (seeds 1..=10), `1,2,5` or `3-7`.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let bad = || SimError::Input(format!("bad seed list `{spec}`; use N, a,b,c or a-b"));
    let spec = spec.trim();
    let seeds: Vec<u64> = if spec.contains(',') {
        spec.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    } else if let Some((a, b)) = spec.split_once('-') {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        let n: u64 = spec.parse().map_err(|_| bad())?;
        (1..=n).collect()
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}
