//! Command-line interface: `generate`, `run`, `sweep`, `reproduce`, `analyze`.
//!
//! Exit codes are 0 on success, 1 on usage errors and 2 when a run fails.

mod analyze;
mod presets;

pub use analyze::{analyze, render};
pub use presets::{expand, parse_seeds, Grid, GridOverrides, ModSetting, Preset};

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::engine::{
    read_summary, run, sweep, write_aggregate, write_exposure, write_items, write_log, write_preferences, write_run,
    write_summary, Baseline, RunConfig, SummaryRow, SweepOptions,
};
use crate::error::{Result, SimError};
use crate::moderate::ModeratorKind;
use crate::recommend::RecommenderKind;
use crate::scenario::{bootstrap, generate};
use crate::usermodel::SimilarityChoice;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

fn config_help() -> String {
    format!(
        "Configuration keys and their defaults (pass a file with --config; flags override it):\n\n{}",
        RunConfig::default().to_toml()
    )
}

#[derive(Debug, Parser)]
#[command(name = "stancesim", version, about = "Closed-loop recommendation simulator with content-agnostic moderation")]
#[command(after_help = config_help())]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a population and its bootstrap log without running the loop.
    Generate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Execute one run and write `runs/<id>/` plus a one-row `summary.csv`.
    Run {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the cartesian grid of comma-separated flag values over several seeds.
    Sweep {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Run one of the predefined experiment grids. Grid flags replace the matching preset dimension.
    Reproduce {
        #[arg(value_enum)]
        table: Preset,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Aggregate an existing `summary.csv` against a baseline cell.
    Analyze {
        summary: PathBuf,
        /// Baseline cell, `field=value` with field one of scenario, recommender, moderator, gamma.
        #[arg(long, default_value = "moderator=none")]
        baseline: String,
        /// Output file; defaults to `aggregate.csv` next to the summary.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Scalar settings shared by all run-producing commands.
#[derive(Debug, Args, Default)]
pub struct BaseArgs {
    /// TOML run configuration; see the key list below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Silhouette threshold above which a cluster counts as tight.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Number of co-clusters for dispersal.
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Loop steps after the bootstrap.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Slate size.
    #[arg(long)]
    pub k: Option<usize>,
    /// Number of users.
    #[arg(long)]
    pub users: Option<usize>,
    /// Number of items.
    #[arg(long)]
    pub items: Option<usize>,
}

impl BaseArgs {
    pub fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.beta {
            cfg.moderator.beta = v;
        }
        if let Some(v) = self.clusters {
            cfg.moderator.n_clusters = v;
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.users {
            cfg.scenario.users = v;
        }
        if let Some(v) = self.items {
            cfg.scenario.items = v;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub base: BaseArgs,
    /// Scenario preset 1 to 4.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub scenario: Option<u8>,
    #[arg(long, value_enum)]
    pub recommender: Option<RecommenderKind>,
    #[arg(long, value_enum)]
    pub moderator: Option<ModeratorKind>,
    /// Preference update rate.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// KC budget fraction.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Items replaced per dispersed user.
    #[arg(long)]
    pub alpha: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl RunArgs {
    pub fn config(&self) -> Result<RunConfig> {
        let mut cfg = self.base.config()?;
        if let Some(s) = self.scenario {
            cfg.set_scenario(s)?;
        }
        if let Some(v) = self.recommender {
            cfg.recommender.kind = v;
        }
        if let Some(v) = self.moderator {
            cfg.moderator.kind = v;
        }
        if let Some(v) = self.gamma {
            cfg.users.gamma = v;
        }
        if let Some(v) = self.lambda {
            cfg.moderator.lambda = v;
        }
        if let Some(v) = self.alpha {
            cfg.moderator.alpha = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub base: BaseArgs,
    /// Scenario presets 1 to 4.
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u8).range(1..=4))]
    pub scenario: Option<Vec<u8>>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub recommender: Option<Vec<RecommenderKind>>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub moderator: Option<Vec<ModeratorKind>>,
    /// Preference update rates.
    #[arg(long, value_delimiter = ',')]
    pub gamma: Option<Vec<f64>>,
    /// KC budget fractions.
    #[arg(long, value_delimiter = ',')]
    pub lambda: Option<Vec<f64>>,
    /// Items replaced per dispersed user.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<usize>>,
    /// `N` for seeds 1..=N, a list `1,2,5` or a range `3-7`.
    #[arg(long)]
    pub seeds: Option<String>,
}

impl GridArgs {
    fn overrides(&self) -> GridOverrides {
        GridOverrides {
            scenarios: self.scenario.clone(),
            recommenders: self.recommender.clone(),
            moderators: self.moderator.clone(),
            lambdas: self.lambda.clone(),
            alphas: self.alpha.clone(),
            gammas: self.gamma.clone(),
        }
    }

    /// The sweep grid: flag values or, where absent, the base configuration's value.
    fn grid(&self, base: &RunConfig) -> Grid {
        let kinds = self.moderator.clone().unwrap_or_else(|| vec![base.moderator.kind]);
        let lambdas = self.lambda.clone().unwrap_or_else(|| vec![base.moderator.lambda]);
        let alphas = self.alpha.clone().unwrap_or_else(|| vec![base.moderator.alpha]);
        Grid {
            scenarios: self.scenario.clone().unwrap_or_else(|| vec![base.scenario.id]),
            recommenders: self.recommender.clone().unwrap_or_else(|| vec![base.recommender.kind]),
            moderators: ModSetting::expand(&kinds, &lambdas, &alphas),
            gammas: self.gamma.clone().unwrap_or_else(|| vec![base.users.gamma]),
        }
    }

    fn seeds(&self, default: &str) -> Result<Vec<u64>> {
        parse_seeds(self.seeds.as_deref().unwrap_or(default))
    }
}

#[derive(Debug, Args)]
pub struct ExecArgs {
    /// Parallel runs; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Also write a full directory per run under `runs/`.
    #[arg(long)]
    pub write_runs: bool,
    /// Baseline cell for `aggregate.csv`; presets choose their own when omitted.
    #[arg(long)]
    pub baseline: Option<String>,
}

#[derive(Serialize)]
struct SweepManifest<'a> {
    software: &'static str,
    version: &'static str,
    command: &'a str,
    baseline: String,
    seeds: &'a [u64],
    runs: usize,
    failures: &'a [(String, String)],
    configs: &'a [RunConfig],
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, serde_json::to_string_pretty(value)? + "\n")?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn execute_sweep(
    command: &str,
    configs: Vec<RunConfig>,
    seeds: &[u64],
    exec: &ExecArgs,
    baseline: Baseline,
) -> Result<()> {
    log::info!("{command}: {} runs on {} workers", configs.len(), exec.workers);
    let opts = SweepOptions {
        workers: exec.workers,
        out: Some(exec.out.clone()),
        write_runs: exec.write_runs,
        baseline: baseline.clone(),
    };
    let outcome = sweep(&configs, &opts)?;
    let manifest = SweepManifest {
        software: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        baseline: baseline.to_string(),
        seeds,
        runs: outcome.digests.len(),
        failures: &outcome.failures,
        configs: &configs,
    };
    write_json(&exec.out.join("manifest.json"), &manifest)?;
    print!("{}", render(&outcome.aggregate));
    let violations: usize = outcome.digests.iter().map(|d| d.checks.kc_violations + d.checks.rr_quota_violations).sum();
    if violations > 0 {
        log::warn!("{violations} moderated steps failed an invariant check; see the run manifests");
    }
    if !outcome.failures.is_empty() {
        return Err(SimError::State(format!("{} of {} runs failed", outcome.failures.len(), configs.len())));
    }
    Ok(())
}

#[derive(Serialize)]
struct GenerateManifest<'a> {
    software: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    bootstrap_exposures: usize,
    cold_rounds: usize,
    cold_remaining: usize,
    warning: Option<String>,
}

fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let population = generate(&cfg.scenario, cfg.seed)?;
    let choice = SimilarityChoice::new(&cfg.users)?;
    let boot = bootstrap(&population.preferences, &population.stances, &choice, &cfg.bootstrap, cfg.seed)?;
    fs::create_dir_all(out)?;
    write_items(&out.join("items.csv"), &population.stances)?;
    write_preferences(&out.join("preferences.csv"), &population.preferences, &population.groups)?;
    write_log(&out.join("bootstrap.csv"), &boot.log)?;
    write_exposure(&out.join("exposure_t0.csv"), &boot.exposure)?;
    fs::write(out.join("config.toml"), cfg.to_toml())?;
    let manifest = GenerateManifest {
        software: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        bootstrap_exposures: boot.log.len(),
        cold_rounds: boot.cold_rounds,
        cold_remaining: boot.cold_remaining,
        warning: boot.warning.clone(),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    if let Some(w) = boot.warning {
        log::warn!("{w}");
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_run(cfg: &RunConfig, out: &Path) -> Result<()> {
    let result = run(cfg)?;
    for w in &result.warnings {
        log::warn!("{w}");
    }
    let dir = write_run(&out.join("runs"), &result)?;
    write_summary(&out.join("summary.csv"), &[SummaryRow::new(cfg, &result.final_metrics)])?;
    let m = &result.final_metrics;
    println!("{}", cfg.run_id());
    println!(
        "ctr {:.4}  jsd_o {:.4}  jsd_g {:.4}  jsd_o_read {:.4}  jsd_g_read {:.4}  ums {:.4}  umoe {:.4}",
        m.ctr, m.jsd_o_shown, m.jsd_g_shown, m.jsd_o_read, m.jsd_g_read, m.ums, m.umoe
    );
    println!("wrote {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct AnalyzeManifest<'a> {
    software: &'static str,
    version: &'static str,
    summary: &'a Path,
    baseline: String,
    cells: usize,
}

fn cmd_analyze(summary: &Path, baseline: &Baseline, out: Option<&Path>) -> Result<()> {
    let rows = read_summary(summary)?;
    let (agg, thin) = analyze(&rows, baseline);
    for t in &thin {
        log::warn!("{t}; no significance test");
    }
    let out = match out {
        Some(p) => p.to_path_buf(),
        None => summary.with_file_name("aggregate.csv"),
    };
    write_aggregate(&out, &agg)?;
    let manifest = AnalyzeManifest {
        software: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        summary,
        baseline: baseline.to_string(),
        cells: agg.len(),
    };
    write_json(&out.with_extension("json"), &manifest)?;
    print!("{}", render(&agg));
    Ok(())
}

/// Runs a parsed command.
pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { run, out } => cmd_generate(&run.config()?, &out),
        Command::Run { run, out } => cmd_run(&run.config()?, &out),
        Command::Sweep { grid, exec } => {
            let base = grid.base.config()?;
            let seeds = grid.seeds("1")?;
            let configs = expand(&[grid.grid(&base)], &seeds, &base)?;
            let baseline: Baseline = exec.baseline.as_deref().unwrap_or("moderator=none").parse()?;
            execute_sweep("sweep", configs, &seeds, &exec, baseline)
        }
        Command::Reproduce { table, grid, exec } => {
            let base = grid.base.config()?;
            let seeds = grid.seeds("10")?;
            let overrides = grid.overrides();
            let grids: Vec<Grid> = table
                .grids()
                .into_iter()
                .map(|mut g| {
                    g.apply(&overrides, &base);
                    g
                })
                .collect();
            let configs = expand(&grids, &seeds, &base)?;
            let baseline: Baseline = exec.baseline.as_deref().unwrap_or(table.baseline()).parse()?;
            execute_sweep(table.name(), configs, &seeds, &exec, baseline)
        }
        Command::Analyze { summary, baseline, out } => cmd_analyze(&summary, &baseline.parse()?, out.as_deref()),
    }
}

fn is_usage_error(e: &SimError) -> bool {
    matches!(e, SimError::Config(_) | SimError::Input(_))
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if is_usage_error(&e) {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}
