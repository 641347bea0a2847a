//! The closed loop: recommend, moderate, click, update, log.

mod aggregate;
mod config;
mod output;
mod sweep;

pub use aggregate::{aggregate, AggregateRow, Baseline, BaselineField, CellKey, MetricAggregate, METRIC_NAMES};
pub use config::{MetricsConfig, RunConfig};
pub use output::{
    read_summary, write_aggregate, write_exposure, write_items, write_log, write_preferences, write_run, write_summary,
    write_timing, SummaryRow, TimingRow,
};
pub use sweep::{sweep, RunDigest, SweepOptions, SweepOutcome};

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Result, SimError};
use crate::metrics::{report, MetricReport, StanceCounter};
use crate::model::{ClickHistory, Interaction, InteractionLog, PreferenceMatrix, SlateSet};
use crate::moderate::{kc, ModerationInput, ModerationStats, Moderator, ModeratorKind, QuotaMode};
use crate::recommend::{RecContext, Recommender};
use crate::rng::{SeedTree, Stream};
use crate::scenario::{bootstrap, generate, Population};
use crate::usermodel::{update_preferences, ChoiceModel, SimilarityChoice};

#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub step: usize,
    /// Metrics over this step's interactions only.
    pub window: MetricReport,
    /// Metrics over loop steps `1..=step`.
    pub cumulative: MetricReport,
    pub moderation: ModerationStats,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub generate_seconds: f64,
    pub bootstrap_seconds: f64,
    pub recommend_seconds: f64,
    pub moderate_seconds: f64,
    pub users_seconds: f64,
    pub total_seconds: f64,
    /// Moderation wall time of each loop step.
    pub moderate_step_seconds: Vec<f64>,
}

impl Timings {
    pub fn mod_seconds_per_step(&self) -> f64 {
        if self.moderate_step_seconds.is_empty() {
            return 0.0;
        }
        self.moderate_step_seconds.iter().sum::<f64>() / self.moderate_step_seconds.len() as f64
    }
}

/// Independent re-checks of moderator guarantees, made by the engine each step.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct InvariantChecks {
    pub moderated_steps: usize,
    pub kc_checked_steps: usize,
    pub kc_violations: usize,
    pub rr_checked_steps: usize,
    pub rr_quota_violations: usize,
    pub rr_fills: usize,
    pub rr_overrides: usize,
    pub clustering_unavailable_steps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BootstrapSummary {
    pub exposures: usize,
    pub clicks: usize,
    pub cold_rounds: usize,
    pub cold_remaining: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: RunConfig,
    pub population: Population,
    pub initial_preferences: PreferenceMatrix,
    pub final_preferences: PreferenceMatrix,
    pub bootstrap_log: InteractionLog,
    pub log: InteractionLog,
    pub bootstrap: BootstrapSummary,
    pub bootstrap_metrics: MetricReport,
    /// Cumulative loop window, or the bootstrap window when `steps = 0`.
    pub final_metrics: MetricReport,
    pub steps: Vec<StepRecord>,
    pub warnings: Vec<String>,
    pub timings: Timings,
    pub checks: InvariantChecks,
}

/// Collapses repeated warnings into `message (xN)`.
#[derive(Default)]
struct WarningSink {
    counts: BTreeMap<String, usize>,
    order: Vec<String>,
}

impl WarningSink {
    fn push(&mut self, message: String) {
        let count = self.counts.entry(message.clone()).or_insert(0);
        if *count == 0 {
            self.order.push(message);
        }
        *count += 1;
    }

    fn extend(&mut self, messages: impl IntoIterator<Item = String>) {
        for m in messages {
            self.push(m);
        }
    }

    fn finish(self) -> Vec<String> {
        self.order
            .into_iter()
            .map(|m| match self.counts[&m] {
                1 => m,
                n => format!("{m} (x{n})"),
            })
            .collect()
    }
}

fn check_kc(original: &SlateSet, moderated: &SlateSet, n_items: usize, lambda: f64) -> bool {
    let counts = original.exposure(n_items).item_totals();
    let before = kc::weighted_cost(original, &counts);
    let after = kc::weighted_cost(moderated, &counts);
    kc::within_budget(after, before, lambda)
}

pub fn run(cfg: &RunConfig) -> Result<RunResult> {
    cfg.validate()?;
    let started = Instant::now();
    let mut timings = Timings::default();
    let mut warnings = WarningSink::default();
    let seeds = SeedTree::new(cfg.seed);

    let t0 = Instant::now();
    let population = generate(&cfg.scenario, cfg.seed)?;
    timings.generate_seconds = t0.elapsed().as_secs_f64();
    let (m, n) = (population.preferences.n_users(), population.stances.n_items());
    let choice = SimilarityChoice::new(&cfg.users)?;

    let t0 = Instant::now();
    let boot = bootstrap(&population.preferences, &population.stances, &choice, &cfg.bootstrap, cfg.seed)?;
    timings.bootstrap_seconds = t0.elapsed().as_secs_f64();
    if let Some(w) = &boot.warning {
        warnings.push(w.clone());
    }
    let boot_counter = StanceCounter::from_records(boot.log.records(), &population.stances, &population.groups);
    let mut metric_warnings = Vec::new();
    let bootstrap_metrics =
        report(&boot_counter, &population.preferences, cfg.metrics.opinion_scale, &mut metric_warnings)?;
    warnings.extend(metric_warnings.drain(..).map(|w| format!("bootstrap window: {w}")));

    let mut prefs = population.preferences.clone();
    let mut history: ClickHistory = boot.history.clone();
    let mut agg = boot.exposure.clone();
    let mut loop_exposure = vec![0u64; n];
    let mut log = InteractionLog::new();
    let mut cumulative = StanceCounter::new(population.stances.n_stances());
    let mut steps = Vec::with_capacity(cfg.steps);
    let mut checks = InvariantChecks::default();
    let mut recommender = Recommender::new(cfg.recommender.clone())?;
    let moderator = Moderator::new(cfg.moderator.clone(), cfg.k)?;
    let moderated = cfg.moderator.kind != ModeratorKind::None;

    for step in 1..=cfg.steps {
        let t0 = Instant::now();
        let ctx = RecContext {
            preferences: &prefs,
            stances: &population.stances,
            history: &history,
            k: cfg.k,
            step,
            seeds: &seeds,
        };
        let slates = recommender.recommend(&ctx).map_err(|e| e.at_step(step))?;
        warnings.extend(recommender.drain_warnings());
        timings.recommend_seconds += t0.elapsed().as_secs_f64();

        let input = ModerationInput {
            slates: &slates,
            agg: &agg,
            loop_exposure: &loop_exposure,
            consumed: &history,
            step,
            seeds: &seeds,
        };
        let t0 = Instant::now();
        let outcome = moderator.moderate(&input).map_err(|e| e.at_step(step))?;
        let elapsed = t0.elapsed().as_secs_f64();
        timings.moderate_seconds += elapsed;
        if moderated {
            timings.moderate_step_seconds.push(elapsed);
            checks.moderated_steps += 1;
        }
        warnings.extend(outcome.warnings.iter().map(|w| format!("moderator: {w}")));
        let shown = outcome.slates;
        shown.validate(n, Some(&history)).map_err(|e| e.at_step(step))?;
        if shown.n_users() != m {
            return Err(SimError::State("moderator changed the number of slates".into()).at_step(step));
        }

        match cfg.moderator.kind {
            ModeratorKind::Kc => {
                checks.kc_checked_steps += 1;
                if !check_kc(&slates, &shown, n, cfg.moderator.lambda) {
                    checks.kc_violations += 1;
                }
            }
            ModeratorKind::Rr => {
                checks.rr_checked_steps += 1;
                checks.rr_fills += outcome.stats.rr_fills;
                checks.rr_overrides += outcome.stats.rr_overrides;
                let quota = outcome.stats.rr_quota.unwrap_or(0) as u64;
                let step_exposure = shown.exposure(n).item_totals();
                let violated = (0..n).any(|j| match cfg.moderator.rr_quota {
                    QuotaMode::PerStep => step_exposure[j] > quota,
                    QuotaMode::Cumulative => loop_exposure[j] + step_exposure[j] > quota * step as u64,
                });
                if violated && outcome.stats.rr_overrides == 0 {
                    checks.rr_quota_violations += 1;
                }
            }
            ModeratorKind::Rd | ModeratorKind::Sd => {
                if outcome.stats.clustering_available == Some(false) {
                    checks.clustering_unavailable_steps += 1;
                }
            }
            ModeratorKind::None => {}
        }

        let t0 = Instant::now();
        let mut step_counter = StanceCounter::new(population.stances.n_stances());
        for slate in &shown.slates {
            let user = slate.user;
            let mut rng = seeds.rng(Stream::User, step as u64, user as u64);
            let mut clicked = Vec::new();
            for (rank, &item) in slate.items.iter().enumerate() {
                let stance = population.stances.stance(item);
                let click = choice.click(prefs.row(user), stance, &mut rng);
                log.push(Interaction { step, user, item, rank, clicked: click });
                step_counter.record(population.groups.group(user), stance, click);
                agg.increment(user, item);
                loop_exposure[item] += 1;
                if click {
                    clicked.push(item);
                }
            }
            update_preferences(prefs.row_mut(user), &clicked, &population.stances, cfg.users.gamma);
            for item in clicked {
                history.record(user, item);
            }
        }
        timings.users_seconds += t0.elapsed().as_secs_f64();

        cumulative.merge(&step_counter);
        let window = report(&step_counter, &prefs, cfg.metrics.opinion_scale, &mut metric_warnings)?;
        metric_warnings.clear();
        let cum = report(&cumulative, &prefs, cfg.metrics.opinion_scale, &mut metric_warnings)?;
        warnings.extend(metric_warnings.drain(..).map(|w| format!("cumulative window: {w}")));
        steps.push(StepRecord { step, window, cumulative: cum, moderation: outcome.stats });
    }

    let final_metrics = steps.last().map_or(bootstrap_metrics, |s| s.cumulative);
    timings.total_seconds = started.elapsed().as_secs_f64();
    Ok(RunResult {
        config: cfg.clone(),
        initial_preferences: population.preferences.clone(),
        final_preferences: prefs,
        bootstrap: BootstrapSummary {
            exposures: boot.log.len(),
            clicks: boot.log.clicks().count(),
            cold_rounds: boot.cold_rounds,
            cold_remaining: boot.cold_remaining,
        },
        population,
        bootstrap_log: boot.log,
        log,
        bootstrap_metrics,
        final_metrics,
        steps,
        warnings: warnings.finish(),
        timings,
        checks,
    })
}
