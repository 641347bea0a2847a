//! Acceptance criteria 1-12 at desk scale (m = 100, n = 3000, k = 5, T = 60,
//! 10 seeds per cell). Each test prints one `[PASS]` or `[FAIL]` line.
//!
//! Run with `cargo test --release --test acceptance -- --nocapture` to see
//! the lines; the simulation grid is shared between tests and built once.

mod common;

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stancesim::cli::{expand, Grid, ModSetting};
use stancesim::engine::{run, write_run, write_summary, RunConfig, RunDigest, SummaryRow, SweepOptions};
use stancesim::metrics::stats::{mean, sign_test, welch_t};
use stancesim::metrics::{ctr, jsd_overall, umoe, ums, OpinionScale};
use stancesim::model::{stance_distribution, ClickHistory, ExposureMatrix, Interaction, PreferenceMatrix};
use stancesim::moderate::{
    cocluster, kc_moderate, rr_quota, ModerationInput, Moderator, ModeratorConfig, ModeratorKind,
};
use stancesim::recommend::oracle_cb;
use stancesim::rng::SeedTree;
use stancesim::scenario::{generate, ScenarioConfig};

const SEEDS: u64 = 10;
const STEPS: usize = 60;

fn verdict(n: u32, name: &str, pass: bool, detail: String) {
    println!("[{}] {n:>2}. {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

/// Every run the criteria need, executed once per test binary.
fn grid() -> &'static [RunDigest] {
    static GRID: OnceLock<Vec<RunDigest>> = OnceLock::new();
    GRID.get_or_init(|| {
        use stancesim::recommend::RecommenderKind::*;
        let all = vec![ModSetting::NONE, ModSetting::RR, ModSetting::kc(0.4), ModSetting::rd(1), ModSetting::sd(1)];
        let grids = [
            Grid { scenarios: vec![1, 2, 3, 4], recommenders: vec![Oracle], moderators: all, gammas: vec![0.001] },
            Grid {
                scenarios: vec![1],
                recommenders: vec![Mf, Pp],
                moderators: vec![ModSetting::NONE],
                gammas: vec![0.001],
            },
            Grid {
                scenarios: vec![1],
                recommenders: vec![Oracle],
                moderators: vec![ModSetting::kc(0.6)],
                gammas: vec![0.001],
            },
        ];
        let seeds: Vec<u64> = (1..=SEEDS).collect();
        let configs = expand(&grids, &seeds, &RunConfig::default()).unwrap();
        let outcome = stancesim::engine::sweep(&configs, &SweepOptions::default()).unwrap();
        assert!(outcome.failures.is_empty(), "{:?}", outcome.failures);
        outcome.digests
    })
}

fn cell<'a>(scenario: u8, recommender: &'a str, moderator: &'a str) -> impl Iterator<Item = &'static RunDigest> + 'a {
    grid().iter().filter(move |d| {
        let r = &d.row;
        let label = match (r.lambda, r.alpha) {
            (Some(l), _) => format!("{}{l}", r.moderator),
            (_, Some(a)) => format!("{}{a}", r.moderator),
            _ => r.moderator.clone(),
        };
        r.scenario == scenario && r.recommender == recommender && label == moderator && r.gamma == 0.001
    })
}

/// Metric values of a cell ordered by seed.
fn values(scenario: u8, recommender: &str, moderator: &str, metric: &str) -> Vec<f64> {
    let mut rows: Vec<&SummaryRow> = cell(scenario, recommender, moderator).map(|d| &d.row).collect();
    rows.sort_by_key(|r| r.seed);
    assert_eq!(rows.len(), SEEDS as usize, "cell S{scenario} {recommender} {moderator}");
    rows.iter().map(|r| r.metric(metric)).collect()
}

const MODERATORS: [&str; 4] = ["rr", "kc0.4", "rd1", "sd1"];

#[test]
fn c01_kc_constraint_exactness() {
    let kc: Vec<&RunDigest> = grid().iter().filter(|d| d.row.moderator == "kc").collect();
    let steps: usize = kc.iter().map(|d| d.checks.kc_checked_steps).sum();
    let violations: usize = kc.iter().map(|d| d.checks.kc_violations).sum();
    let pass = violations == 0 && steps == kc.len() * STEPS && kc.len() == 50;
    verdict(
        1,
        "KC constraint exactness",
        pass,
        format!("{violations} violations over {} runs, {steps} steps", kc.len()),
    );
}

#[test]
fn c02_kc_optimality_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = Vec::new();
    let mut feasible = 0;
    for i in 0..200 {
        let inst = common::random_kc_instance(&mut rng);
        let greedy = kc_moderate(&inst.slates, &inst.consumed, inst.lambda, &SeedTree::new(i), 1).map(|o| o.hamming());
        let exact = common::kc_brute_force(&inst);
        feasible += exact.is_some() as usize;
        if greedy.as_ref().ok().copied() != exact {
            mismatches.push((i, greedy.ok(), exact));
        }
    }
    verdict(
        2,
        "KC optimality oracle",
        mismatches.is_empty(),
        format!("200 instances ({feasible} feasible), mismatches {mismatches:?}"),
    );
}

#[test]
fn c03_rr_quota() {
    let rr: Vec<&RunDigest> = grid().iter().filter(|d| d.row.moderator == "rr").collect();
    let violations: usize = rr.iter().map(|d| d.checks.rr_quota_violations).sum();
    let overrides: usize = rr.iter().map(|d| d.checks.rr_overrides).sum();
    let fills: usize = rr.iter().map(|d| d.checks.rr_fills).sum();
    let steps: usize = rr.iter().map(|d| d.checks.rr_checked_steps).sum();

    // direct recount on one run's log
    let mut cfg = RunConfig { seed: 3, ..Default::default() };
    cfg.moderator.kind = ModeratorKind::Rr;
    let result = run(&cfg).unwrap();
    let (m, n, k) = (cfg.scenario.users, cfg.scenario.items, cfg.k);
    let q = rr_quota(m, n, k).unwrap() as u64;
    let mut direct_ok = true;
    for t in 1..=STEPS {
        let mut per_item = vec![0u64; n];
        let mut per_user = vec![0usize; m];
        for r in result.log.records().iter().filter(|r| r.step == t) {
            per_item[r.item] += 1;
            per_user[r.user] += 1;
        }
        direct_ok &= per_item.iter().all(|&c| c <= q) && per_user.iter().all(|&c| c == k);
    }
    let pass = violations == 0 && overrides == 0 && steps == rr.len() * STEPS && direct_ok;
    verdict(
        3,
        "RR quota",
        pass,
        format!(
            "{} runs, {steps} steps, {violations} violations, {overrides} fallback warnings, {fills} least-exposed fills, recount ok {direct_ok}",
            rr.len()
        ),
    );
}

#[test]
fn c04_egalitarian_exposure() {
    // m·k = n with q = 1 forces every item to be shown exactly once
    let scenario = ScenarioConfig { users: 600, items: 3000, ..ScenarioConfig::preset(1).unwrap() };
    let pop = generate(&scenario, 5).unwrap();
    let (m, n, k) = (600, 3000, 5);
    let seeds = SeedTree::new(5);
    let consumed = ClickHistory::new(m, n);
    let slates = oracle_cb(&pop.preferences, &pop.stances, &consumed, k, &seeds, 1).unwrap();
    let moderator = Moderator::new(ModeratorConfig { kind: ModeratorKind::Rr, ..Default::default() }, k).unwrap();
    let agg = ExposureMatrix::zeros(m, n);
    let input = ModerationInput {
        slates: &slates,
        agg: &agg,
        loop_exposure: &vec![0; n],
        consumed: &consumed,
        step: 1,
        seeds: &seeds,
    };
    let out = moderator.moderate(&input).unwrap().slates;
    let exposure = out.exposure(n);
    let equal = exposure.item_totals().iter().all(|&c| c == 1);
    let before = jsd_overall(&stance_distribution(&slates.exposure(n), &pop.stances).unwrap()).unwrap();
    let after = jsd_overall(&stance_distribution(&exposure, &pop.stances).unwrap()).unwrap();
    verdict(
        4,
        "Egalitarian exposure",
        equal && after <= 1e-9,
        format!("every item shown once: {equal}; JSD-O {before:.4} -> {after:.2e}"),
    );
}

#[test]
fn c05_rq1_ordering() {
    let oracle = values(1, "oracle", "none", "ctr");
    let mf = values(1, "mf", "none", "ctr");
    let pp = values(1, "pp", "none", "ctr");
    let p1 = welch_t(&oracle, &mf).unwrap().p;
    let p2 = welch_t(&mf, &pp).unwrap().p;
    let (a, b, c) = (mean(&oracle), mean(&mf), mean(&pp));
    let pass = a > b && b > c && p1 < 0.05 && p2 < 0.05;
    verdict(5, "RQ1 CTR ordering", pass, format!("oracle {a:.3} > mf {b:.3} (p {p1:.2e}) > pp {c:.3} (p {p2:.2e})"));
}

#[test]
fn c06_rq2_moderation_effect() {
    let base = values(1, "oracle", "none", "jsd_g");
    let mut details = Vec::new();
    let mut pass = true;
    for m in MODERATORS {
        let x = values(1, "oracle", m, "jsd_g");
        let w = welch_t(&x, &base).unwrap();
        pass &= mean(&x) < mean(&base) && w.p < 0.01;
        details.push(format!("{m} {:.3} (p {:.1e})", mean(&x), w.p));
    }
    let ctr0 = mean(&values(1, "oracle", "none", "ctr"));
    let drop = |m: &str| 100.0 * (ctr0 - mean(&values(1, "oracle", m, "ctr"))) / ctr0;
    let (sd, rr) = (drop("sd1"), drop("rr"));
    pass &= sd < rr;
    verdict(
        6,
        "RQ2 moderation effect",
        pass,
        format!(
            "JSD-G none {:.3} -> {}; CTR drop SD {sd:.1}% vs RR {rr:.1}% (needs SD < RR)",
            mean(&base),
            details.join(", ")
        ),
    );
}

#[test]
fn c07_rq2_robustness_contrast() {
    let base = values(3, "oracle", "none", "jsd_o");
    let diffs =
        |m: &str| -> Vec<f64> { values(3, "oracle", m, "jsd_o").iter().zip(&base).map(|(a, b)| a - b).collect() };
    let rr = sign_test(&diffs("rr")).unwrap();
    let sd = sign_test(&diffs("sd1")).unwrap();
    let rr_up = rr.positive > rr.negative && rr.p < 0.05;
    let sd_down = sd.negative > sd.positive && sd.p < 0.05;
    verdict(
        7,
        "RQ2 robustness contrast (S3)",
        rr_up && sd_down,
        format!(
            "JSD-O none {:.3}; RR {:.3} up in {}/{} seeds (p {:.4}); SD {:.3} down in {}/{} seeds (p {:.4})",
            mean(&base),
            mean(&values(3, "oracle", "rr", "jsd_o")),
            rr.positive,
            SEEDS,
            rr.p,
            mean(&values(3, "oracle", "sd1", "jsd_o")),
            sd.negative,
            SEEDS,
            sd.p
        ),
    );
}

#[test]
fn c08_rq3_depolarization() {
    let base = values(1, "oracle", "none", "umoe");
    let mut pass = true;
    let mut details = Vec::new();
    for m in MODERATORS {
        let x = values(1, "oracle", m, "umoe");
        let w = welch_t(&x, &base).unwrap();
        let lower = x.iter().zip(&base).filter(|(a, b)| a < b).count();
        pass &= mean(&x) < mean(&base) && w.p < 0.05;
        details.push(format!("{m} {:.4} (Welch p {:.3}, lower in {lower}/{SEEDS} seeds)", mean(&x), w.p));
    }
    verdict(8, "RQ3 depolarization", pass, format!("UMOE none {:.4} -> {}", mean(&base), details.join(", ")));
}

#[test]
fn c09_runtime_contrast() {
    let per_step =
        |m: &str| -> f64 { mean(&cell(1, "oracle", m).map(|d| d.timing.mod_seconds_per_step).collect::<Vec<_>>()) };
    let (kc, rd, sd) = (per_step("kc0.6"), per_step("rd1"), per_step("sd1"));
    let pass = kc >= 10.0 * rd && kc >= 10.0 * sd;
    verdict(
        9,
        "Runtime contrast",
        pass,
        format!("seconds per step: KC(0.6) {kc:.5}, RD(1) {rd:.5}, SD(1) {sd:.5}; KC/RD {:.2}x, KC/SD {:.2}x (needs >= 10x)", kc / rd, kc / sd),
    );
}

#[test]
fn c10_metric_unit_suite() {
    let mut failures = Vec::new();
    let third: f64 = 1.0 / 3.0;
    if jsd_overall(&[third, third, third]).unwrap() != 0.0 {
        failures.push("uniform JSD-O");
    }
    // KL-sum oracle in base 2: M = [2/3, 1/6, 1/6]
    let m: [f64; 3] = [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0];
    let kl_p = (1.0f64 / m[0]).log2();
    let kl_u: f64 = (0..3).map(|i| third * (third / m[i]).log2()).sum();
    let oracle = (0.5 * kl_p + 0.5 * kl_u).sqrt();
    let got = jsd_overall(&[1.0, 0.0, 0.0]).unwrap();
    if (got - 0.6776).abs() > 1e-3 || (got - oracle).abs() > 1e-12 {
        failures.push("point-mass JSD-O");
    }
    let left = PreferenceMatrix::from_rows(vec![vec![0.7, 0.0, 0.0]; 5]).unwrap();
    if ums(&left, OpinionScale::Normalized).unwrap().value != -1.0
        || ums(&left, OpinionScale::Raw).unwrap().value != -0.7
    {
        failures.push("all-Left UMS");
    }
    let uniform = PreferenceMatrix::from_rows(vec![vec![0.2, 0.2, 0.2]; 5]).unwrap();
    if umoe(&uniform, OpinionScale::Normalized).unwrap().value.abs() > 1e-15 {
        failures.push("uniform UMOE");
    }
    let log: Vec<Interaction> =
        (0..5).map(|i| Interaction { step: 1, user: 0, item: i, rank: i, clicked: i < 3 }).collect();
    if ctr(&log).unwrap() != 0.6 {
        failures.push("3/5 CTR");
    }
    let all: Vec<Interaction> = log.iter().map(|r| Interaction { clicked: true, ..*r }).collect();
    let none: Vec<Interaction> = log.iter().map(|r| Interaction { clicked: false, ..*r }).collect();
    if ctr(&all).unwrap() != 1.0 || ctr(&none).unwrap() != 0.0 {
        failures.push("extreme CTR");
    }
    verdict(
        10,
        "Metric unit suite",
        failures.is_empty(),
        format!("JSD-O([1,0,0]) = {got:.6} (oracle {oracle:.6}); failures {failures:?}"),
    );
}

#[test]
fn c11_cocluster_recovery() {
    let mut scores = Vec::new();
    for seed in 0..20u64 {
        let (e, users, items) = common::planted(3, 30, 200, 60, 0.05, seed);
        let model = cocluster(&e, 3, &SeedTree::new(seed), 0).expect("clustering available");
        let mut truth = Vec::new();
        let mut found = Vec::new();
        for (u, &t) in users.iter().enumerate() {
            if let Some(l) = model.user_label(u) {
                truth.push(t);
                found.push(l);
            }
        }
        for (j, &t) in items.iter().enumerate() {
            if let Some(l) = model.item_label(j) {
                truth.push(t);
                found.push(l);
            }
        }
        scores.push(common::adjusted_rand_index(&truth, &found));
    }
    let good = scores.iter().filter(|&&s| s >= 0.9).count();
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    verdict(11, "Co-clustering recovery", good >= 18, format!("ARI >= 0.9 in {good}/20 seeds (min {min:.3})"));
}

#[test]
fn c12_determinism() {
    let mut identical = true;
    let mut checked = Vec::new();
    for (scenario, kind, seed) in [(2, ModeratorKind::Sd, 7), (1, ModeratorKind::Kc, 8), (3, ModeratorKind::Rr, 9)] {
        let mut cfg = RunConfig { seed, ..Default::default() };
        cfg.set_scenario(scenario).unwrap();
        cfg.moderator.kind = kind;
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            let result = run(&cfg).unwrap();
            write_run(&d.path().join("runs"), &result).unwrap();
            write_summary(&d.path().join("summary.csv"), &[SummaryRow::new(&cfg, &result.final_metrics)]).unwrap();
        }
        let id = cfg.run_id();
        for f in ["summary.csv".to_string(), format!("runs/{id}/log.csv")] {
            let a = std::fs::read(dirs[0].path().join(&f)).unwrap();
            let b = std::fs::read(dirs[1].path().join(&f)).unwrap();
            identical &= a == b;
        }
        checked.push(id);
    }
    verdict(12, "Determinism", identical, format!("summary.csv and log.csv byte-identical for {}", checked.join(", ")));
}
