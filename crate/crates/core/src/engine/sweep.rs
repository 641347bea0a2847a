//! Parallel execution of many run configurations.

use std::path::PathBuf;

use rayon::prelude::*;

use super::{
    aggregate, run, write_aggregate, write_run, write_summary, write_timing, AggregateRow, Baseline, InvariantChecks,
    RunConfig, SummaryRow, TimingRow,
};
use crate::error::{Result, SimError};

#[derive(Debug, Clone)]
pub struct SweepOptions {
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    /// Directory for `summary.csv`, `aggregate.csv` and `timing.csv`.
    pub out: Option<PathBuf>,
    /// Also write a full directory per run under `out/runs/`.
    pub write_runs: bool,
    pub baseline: Baseline,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { workers: 0, out: None, write_runs: false, baseline: Baseline::moderator_none() }
    }
}

/// What a sweep keeps of each run.
#[derive(Debug, Clone)]
pub struct RunDigest {
    pub row: SummaryRow,
    pub checks: InvariantChecks,
    pub timing: TimingRow,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    /// Successful runs, ordered by cell then seed.
    pub digests: Vec<RunDigest>,
    /// Run id and error of each failed run.
    pub failures: Vec<(String, String)>,
    pub aggregate: Vec<AggregateRow>,
}

impl SweepOutcome {
    pub fn rows(&self) -> Vec<SummaryRow> {
        self.digests.iter().map(|d| d.row.clone()).collect()
    }
}

fn run_one(cfg: &RunConfig, opts: &SweepOptions) -> Result<RunDigest> {
    let result = run(cfg)?;
    if opts.write_runs {
        if let Some(out) = &opts.out {
            write_run(&out.join("runs"), &result)?;
        }
    }
    let row = SummaryRow::new(cfg, &result.final_metrics);
    let timing = TimingRow {
        run_id: cfg.run_id(),
        moderator: cfg.moderator.kind.name().to_string(),
        lambda: cfg.effective_lambda(),
        alpha: cfg.effective_alpha(),
        seed: cfg.seed,
        mod_seconds_per_step: result.timings.mod_seconds_per_step(),
        total_seconds: result.timings.total_seconds,
    };
    Ok(RunDigest { row, checks: result.checks, timing, warnings: result.warnings })
}

/// Runs every configuration. Failed runs are collected, not fatal; output
/// files hold the successful runs in a fixed order independent of scheduling.
pub fn sweep(configs: &[RunConfig], opts: &SweepOptions) -> Result<SweepOutcome> {
    let mut ids = std::collections::HashSet::new();
    for c in configs {
        if !ids.insert(c.run_id()) {
            return Err(SimError::Config(format!("duplicate run {}", c.run_id())));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| SimError::Config(e.to_string()))?;
    let results: Vec<(String, Result<RunDigest>)> =
        pool.install(|| configs.par_iter().map(|c| (c.run_id(), run_one(c, opts))).collect());

    let mut digests = Vec::new();
    let mut failures = Vec::new();
    for (id, r) in results {
        match r {
            Ok(d) => digests.push(d),
            Err(e) => {
                log::error!("run {id} failed: {e}");
                failures.push((id, e.to_string()));
            }
        }
    }
    digests
        .sort_by(|a, b| super::CellKey::of(&a.row).cmp(&super::CellKey::of(&b.row)).then(a.row.seed.cmp(&b.row.seed)));
    let rows: Vec<SummaryRow> = digests.iter().map(|d| d.row.clone()).collect();
    let aggregate = aggregate(&rows, &opts.baseline);

    if let Some(out) = &opts.out {
        std::fs::create_dir_all(out)?;
        write_summary(&out.join("summary.csv"), &rows)?;
        write_aggregate(&out.join("aggregate.csv"), &aggregate)?;
        let timing: Vec<TimingRow> = digests.iter().map(|d| d.timing.clone()).collect();
        write_timing(&out.join("timing.csv"), &timing)?;
    }
    Ok(SweepOutcome { digests, failures, aggregate })
}
