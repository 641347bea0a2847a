//! Engagement and stance-neutrality metrics.

pub mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::model::{
    distribution_from_counts, Interaction, PreferenceMatrix, StanceId, StanceMatrix, UserGroupAssignment,
};

const PROB_TOL: f64 = 1e-9;

/// Clicks over exposures.
pub fn ctr(records: &[Interaction]) -> Result<f64> {
    if records.is_empty() {
        return Err(SimError::UndefinedMetric("CTR over an empty window".into()));
    }
    let clicks = records.iter().filter(|r| r.clicked).count();
    Ok(clicks as f64 / records.len() as f64)
}

fn check_probability(p: &[f64]) -> Result<()> {
    if p.is_empty() || p.iter().any(|&x| !(x >= -PROB_TOL) || !x.is_finite()) {
        return Err(SimError::Input(format!("not a probability vector: {p:?}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(SimError::Input(format!("probability vector sums to {total}")));
    }
    Ok(())
}

fn kl_to_mixture(p: &[f64], m: &[f64]) -> f64 {
    p.iter().zip(m).filter(|(&pi, _)| pi > 0.0).map(|(&pi, &mi)| pi * (pi / mi).log2()).sum()
}

/// Jensen-Shannon distance (square root of the base-2 divergence) between `p`
/// and the uniform distribution.
pub fn jsd_overall(p: &[f64]) -> Result<f64> {
    check_probability(p)?;
    let q = 1.0 / p.len() as f64;
    let p: Vec<f64> = p.iter().map(|&x| x.max(0.0)).collect();
    let m: Vec<f64> = p.iter().map(|&x| 0.5 * (x + q)).collect();
    let uniform = vec![q; p.len()];
    let div = 0.5 * kl_to_mixture(&p, &m) + 0.5 * kl_to_mixture(&uniform, &m);
    Ok(div.max(0.0).sqrt().min(1.0))
}

/// Mean of per-group distances.
pub fn jsd_group(per_group: &[Vec<f64>]) -> Result<f64> {
    if per_group.is_empty() {
        return Err(SimError::UndefinedMetric("JSD-G with no groups".into()));
    }
    let mut total = 0.0;
    for p in per_group {
        total += jsd_overall(p)?;
    }
    Ok(total / per_group.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OpinionScale {
    /// Rows are normalized to sum to one before scoring.
    #[default]
    Normalized,
    Raw,
}

/// Per-user preference vectors as used by UMS/UMOE; zero rows are dropped.
fn opinion_rows(prefs: &PreferenceMatrix, scale: OpinionScale) -> (Vec<Vec<f64>>, usize) {
    let mut rows = Vec::with_capacity(prefs.n_users());
    let mut skipped = 0;
    for row in prefs.rows() {
        let total: f64 = row.iter().sum();
        if total <= 0.0 {
            skipped += 1;
            continue;
        }
        rows.push(match scale {
            OpinionScale::Normalized => row.iter().map(|x| x / total).collect(),
            OpinionScale::Raw => row.to_vec(),
        });
    }
    (rows, skipped)
}

/// Evenly spaced stance values from -1 to 1 (`[-1, 0, 1]` for three stances).
pub fn stance_values(n_stances: usize) -> Vec<f64> {
    if n_stances == 1 {
        return vec![0.0];
    }
    (0..n_stances).map(|s| -1.0 + 2.0 * s as f64 / (n_stances - 1) as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpinionSummary {
    pub value: f64,
    /// Users dropped for an all-zero preference row.
    pub skipped: usize,
}

/// Mean user stance.
pub fn ums(prefs: &PreferenceMatrix, scale: OpinionScale) -> Result<OpinionSummary> {
    let (rows, skipped) = opinion_rows(prefs, scale);
    if rows.is_empty() {
        return Err(SimError::UndefinedMetric("UMS: every preference row is zero".into()));
    }
    let s = stance_values(prefs.n_stances());
    let total: f64 = rows.iter().map(|r| r.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>()).sum();
    Ok(OpinionSummary { value: total / rows.len() as f64, skipped })
}

/// Mean per-user population variance of the preference vector.
pub fn umoe(prefs: &PreferenceMatrix, scale: OpinionScale) -> Result<OpinionSummary> {
    let (rows, skipped) = opinion_rows(prefs, scale);
    if rows.is_empty() {
        return Err(SimError::UndefinedMetric("UMOE: every preference row is zero".into()));
    }
    let total: f64 = rows.iter().map(|r| stats::population_variance(r)).sum();
    Ok(OpinionSummary { value: total / rows.len() as f64, skipped })
}

/// Stance tallies of shown and clicked items, overall and per user group.
#[derive(Debug, Clone, PartialEq)]
pub struct StanceCounter {
    n_stances: usize,
    shown: Vec<u64>,
    read: Vec<u64>,
    /// Row-major `group × stance`.
    shown_by_group: Vec<u64>,
    read_by_group: Vec<u64>,
}

impl StanceCounter {
    pub fn new(n_stances: usize) -> Self {
        Self {
            n_stances,
            shown: vec![0; n_stances],
            read: vec![0; n_stances],
            shown_by_group: vec![0; n_stances * n_stances],
            read_by_group: vec![0; n_stances * n_stances],
        }
    }

    pub fn record(&mut self, group: StanceId, stance: StanceId, clicked: bool) {
        let cell = group.0 * self.n_stances + stance.0;
        self.shown[stance.0] += 1;
        self.shown_by_group[cell] += 1;
        if clicked {
            self.read[stance.0] += 1;
            self.read_by_group[cell] += 1;
        }
    }

    pub fn from_records(records: &[Interaction], stances: &StanceMatrix, groups: &UserGroupAssignment) -> Self {
        let mut counter = Self::new(stances.n_stances());
        for r in records {
            counter.record(groups.group(r.user), stances.stance(r.item), r.clicked);
        }
        counter
    }

    pub fn merge(&mut self, other: &StanceCounter) {
        for (a, b) in self.shown.iter_mut().zip(&other.shown) {
            *a += b;
        }
        for (a, b) in self.read.iter_mut().zip(&other.read) {
            *a += b;
        }
        for (a, b) in self.shown_by_group.iter_mut().zip(&other.shown_by_group) {
            *a += b;
        }
        for (a, b) in self.read_by_group.iter_mut().zip(&other.read_by_group) {
            *a += b;
        }
    }

    pub fn exposures(&self) -> u64 {
        self.shown.iter().sum()
    }

    pub fn clicks(&self) -> u64 {
        self.read.iter().sum()
    }

    pub fn shown(&self) -> &[u64] {
        &self.shown
    }

    pub fn read(&self) -> &[u64] {
        &self.read
    }

    pub fn shown_group(&self, group: StanceId) -> &[u64] {
        &self.shown_by_group[group.0 * self.n_stances..(group.0 + 1) * self.n_stances]
    }

    pub fn read_group(&self, group: StanceId) -> &[u64] {
        &self.read_by_group[group.0 * self.n_stances..(group.0 + 1) * self.n_stances]
    }
}

/// One row of metrics over some window of the interaction log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ctr: f64,
    pub jsd_o_shown: f64,
    pub jsd_g_shown: f64,
    pub jsd_o_read: f64,
    pub jsd_g_read: f64,
    pub ums: f64,
    pub umoe: f64,
}

fn group_distance(counter: &StanceCounter, read: bool, label: &str, warnings: &mut Vec<String>) -> Result<f64> {
    let mut dists = Vec::new();
    for g in 0..counter.n_stances {
        let counts = if read { counter.read_group(StanceId(g)) } else { counter.shown_group(StanceId(g)) };
        match distribution_from_counts(counts) {
            Ok(d) => dists.push(d),
            Err(_) => warnings.push(format!("{label}: group {g} has no events in window, excluded")),
        }
    }
    if dists.is_empty() {
        return Ok(f64::NAN);
    }
    jsd_group(&dists)
}

fn overall_distance(counts: &[u64]) -> Result<f64> {
    match distribution_from_counts(counts) {
        Ok(d) => jsd_overall(&d),
        Err(_) => Ok(f64::NAN),
    }
}

/// Builds a report from stance tallies and the current preferences. Read
/// variants are NaN when the window has no clicks.
pub fn report(
    counter: &StanceCounter,
    prefs: &PreferenceMatrix,
    scale: OpinionScale,
    warnings: &mut Vec<String>,
) -> Result<MetricReport> {
    let exposures = counter.exposures();
    if exposures == 0 {
        return Err(SimError::UndefinedMetric("window has no exposures".into()));
    }
    let ums = ums(prefs, scale)?;
    let umoe = umoe(prefs, scale)?;
    if ums.skipped > 0 {
        warnings.push(format!("{} users with all-zero preferences excluded from UMS/UMOE", ums.skipped));
    }
    let clicks = counter.clicks();
    Ok(MetricReport {
        ctr: clicks as f64 / exposures as f64,
        jsd_o_shown: overall_distance(&counter.shown)?,
        jsd_g_shown: group_distance(counter, false, "JSD-G shown", warnings)?,
        jsd_o_read: overall_distance(&counter.read)?,
        jsd_g_read: if clicks == 0 { f64::NAN } else { group_distance(counter, true, "JSD-G read", warnings)? },
        ums: ums.value,
        umoe: umoe.value,
    })
}
