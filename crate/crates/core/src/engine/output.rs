//! CSV and JSON exports. Run directories are written to a temporary sibling
//! and renamed into place so a failed run never leaves partial files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{RunConfig, RunResult};
use crate::error::Result;
use crate::metrics::MetricReport;
use crate::model::{ExposureMatrix, InteractionLog, PreferenceMatrix, StanceId, StanceMatrix, UserGroupAssignment};

/// One row of `summary.csv`: a run's headline metrics over the cumulative window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: u8,
    pub recommender: String,
    pub moderator: String,
    pub gamma: f64,
    pub lambda: Option<f64>,
    pub alpha: Option<usize>,
    pub seed: u64,
    pub ctr: f64,
    pub jsd_o: f64,
    pub jsd_g: f64,
    pub jsd_o_read: f64,
    pub jsd_g_read: f64,
    pub ums: f64,
    pub umoe: f64,
}

impl SummaryRow {
    pub fn new(cfg: &RunConfig, m: &MetricReport) -> Self {
        Self {
            scenario: cfg.scenario.id,
            recommender: cfg.recommender.kind.name().to_string(),
            moderator: cfg.moderator.kind.name().to_string(),
            gamma: cfg.users.gamma,
            lambda: cfg.effective_lambda(),
            alpha: cfg.effective_alpha(),
            seed: cfg.seed,
            ctr: m.ctr,
            jsd_o: m.jsd_o_shown,
            jsd_g: m.jsd_g_shown,
            jsd_o_read: m.jsd_o_read,
            jsd_g_read: m.jsd_g_read,
            ums: m.ums,
            umoe: m.umoe,
        }
    }

    pub fn metric(&self, name: &str) -> f64 {
        match name {
            "ctr" => self.ctr,
            "jsd_o" => self.jsd_o,
            "jsd_g" => self.jsd_g,
            "jsd_o_read" => self.jsd_o_read,
            "jsd_g_read" => self.jsd_g_read,
            "ums" => self.ums,
            "umoe" => self.umoe,
            other => panic!("unknown metric {other}"),
        }
    }
}

/// Wall-clock figures, kept apart from `summary.csv` so that file stays reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub run_id: String,
    pub moderator: String,
    pub lambda: Option<f64>,
    pub alpha: Option<usize>,
    pub seed: u64,
    pub mod_seconds_per_step: f64,
    pub total_seconds: f64,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes to `path.tmp` then renames.
fn atomic_file(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    write(&tmp)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    atomic_file(path, |p| write_csv(p, rows))
}

pub fn write_timing(path: &Path, rows: &[TimingRow]) -> Result<()> {
    atomic_file(path, |p| write_csv(p, rows))
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

pub fn write_aggregate(path: &Path, rows: &[super::AggregateRow]) -> Result<()> {
    atomic_file(path, |p| {
        let mut w = csv::Writer::from_path(p)?;
        w.write_record(super::AggregateRow::header())?;
        for r in rows {
            w.write_record(r.record())?;
        }
        w.flush()?;
        Ok(())
    })
}

pub fn write_log(path: &Path, log: &InteractionLog) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "user", "item", "rank", "clicked"])?;
    for r in log.records() {
        w.write_record(&[
            r.step.to_string(),
            r.user.to_string(),
            r.item.to_string(),
            r.rank.to_string(),
            u8::from(r.clicked).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn metric_fields(m: &MetricReport) -> Vec<String> {
    [m.ctr, m.jsd_o_shown, m.jsd_g_shown, m.jsd_o_read, m.jsd_g_read, m.ums, m.umoe]
        .iter()
        .map(|v| v.to_string())
        .collect()
}

fn write_steps(path: &Path, result: &RunResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "step",
        "window",
        "ctr",
        "jsd_o",
        "jsd_g",
        "jsd_o_read",
        "jsd_g_read",
        "ums",
        "umoe",
        "replaced",
        "rr_fills",
        "tight_clusters",
    ])?;
    let mut row = |step: usize, window: &str, m: &MetricReport, extra: [usize; 3]| -> Result<()> {
        let mut rec = vec![step.to_string(), window.to_string()];
        rec.extend(metric_fields(m));
        rec.extend(extra.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
        Ok(())
    };
    row(0, "bootstrap", &result.bootstrap_metrics, [0, 0, 0])?;
    for s in &result.steps {
        let extra = [s.moderation.replaced, s.moderation.rr_fills, s.moderation.tight_clusters];
        row(s.step, "step", &s.window, extra)?;
        row(s.step, "cumulative", &s.cumulative, extra)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per user: id, group label and the preference row under lowercase stance names.
pub fn write_preferences(path: &Path, prefs: &PreferenceMatrix, groups: &UserGroupAssignment) -> Result<()> {
    let n_stances = prefs.n_stances();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["user".to_string(), "group".to_string()];
    header.extend((0..n_stances).map(|s| StanceId(s).label(n_stances).to_lowercase()));
    w.write_record(&header)?;
    for u in 0..prefs.n_users() {
        let mut rec = vec![u.to_string(), groups.group(u).label(n_stances)];
        rec.extend(prefs.row(u).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_items(path: &Path, stances: &StanceMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["item", "stance"])?;
    for j in 0..stances.n_items() {
        w.write_record([j.to_string(), stances.stance(j).label(stances.n_stances())])?;
    }
    w.flush()?;
    Ok(())
}

/// Sparse `row,col,count` listing of the nonzero cells.
pub fn write_exposure(path: &Path, exposure: &ExposureMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["row", "col", "count"])?;
    for (u, j, c) in exposure.triplets() {
        w.write_record([u.to_string(), j.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_step_timing(path: &Path, result: &RunResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "mod_seconds"])?;
    for (i, s) in result.timings.moderate_step_seconds.iter().enumerate() {
        w.write_record([(i + 1).to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    software: &'static str,
    version: &'static str,
    run_id: String,
    seed: u64,
    config: &'a RunConfig,
    bootstrap: &'a super::BootstrapSummary,
    final_metrics: &'a MetricReport,
    checks: &'a super::InvariantChecks,
    timings: &'a super::Timings,
    warnings: &'a [String],
}

fn write_manifest(path: &Path, result: &RunResult) -> Result<()> {
    let manifest = Manifest {
        software: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        run_id: result.config.run_id(),
        seed: result.config.seed,
        config: &result.config,
        bootstrap: &result.bootstrap,
        final_metrics: &result.final_metrics,
        checks: &result.checks,
        timings: &result.timings,
        warnings: &result.warnings,
    };
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Writes `root/<run id>/` with the manifest, logs, per-step metrics,
/// preference snapshots and item stances. Returns the final directory.
pub fn write_run(root: &Path, result: &RunResult) -> Result<PathBuf> {
    fs::create_dir_all(root)?;
    let id = result.config.run_id();
    let dir = root.join(&id);
    let tmp = root.join(format!(".{id}.tmp{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    let written = (|| -> Result<()> {
        write_manifest(&tmp.join("manifest.json"), result)?;
        write_log(&tmp.join("log.csv"), &result.log)?;
        write_log(&tmp.join("bootstrap.csv"), &result.bootstrap_log)?;
        write_steps(&tmp.join("steps.csv"), result)?;
        write_step_timing(&tmp.join("timing.csv"), result)?;
        let groups = &result.population.groups;
        write_preferences(&tmp.join("preferences_t0.csv"), &result.initial_preferences, groups)?;
        write_preferences(&tmp.join("preferences_final.csv"), &result.final_preferences, groups)?;
        write_items(&tmp.join("items.csv"), &result.population.stances)?;
        fs::write(tmp.join("config.toml"), result.config.to_toml())?;
        Ok(())
    })();
    if let Err(e) = written {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    fs::rename(&tmp, &dir)?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run;

    fn small() -> RunConfig {
        let mut cfg = RunConfig { steps: 2, ..Default::default() };
        cfg.scenario.users = 20;
        cfg.scenario.items = 200;
        cfg
    }

    #[test]
    fn run_directory_contents() {
        let dir = tempfile::tempdir().unwrap();
        let result = run(&small()).unwrap();
        let out = write_run(dir.path(), &result).unwrap();
        for f in [
            "manifest.json",
            "log.csv",
            "bootstrap.csv",
            "steps.csv",
            "timing.csv",
            "preferences_t0.csv",
            "preferences_final.csv",
            "items.csv",
            "config.toml",
        ] {
            assert!(out.join(f).exists(), "{f}");
        }
        let log = fs::read_to_string(out.join("log.csv")).unwrap();
        assert!(log.starts_with("step,user,item,rank,clicked\n"));
        assert_eq!(log.lines().count(), 1 + 2 * 20 * 5);
        // saved config replays to the same config
        let cfg = RunConfig::load(&out.join("config.toml")).unwrap();
        assert_eq!(cfg, result.config);
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["seed"], 1);
        // no temporary directories remain
        let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().filter_map(|e| e.ok()).collect();
        assert_eq!(leftovers.len(), 1);
    }

    #[test]
    fn summary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let result = run(&small()).unwrap();
        let row = SummaryRow::new(&result.config, &result.final_metrics);
        let path = dir.path().join("summary.csv");
        write_summary(&path, std::slice::from_ref(&row)).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "scenario,recommender,moderator,gamma,lambda,alpha,seed,ctr,jsd_o,jsd_g,jsd_o_read,jsd_g_read,ums,umoe\n"
        ));
        assert_eq!(read_summary(&path).unwrap(), vec![row]);
    }
}
