//! Cross-seed aggregation with Welch stars against a baseline cell.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::SummaryRow;
use crate::error::SimError;
use crate::metrics::stats::{mean, sample_std, welch_t};

pub const METRIC_NAMES: [&str; 7] = ["ctr", "jsd_o", "jsd_g", "jsd_o_read", "jsd_g_read", "ums", "umoe"];

/// Grouping key of a summary row (everything except the seed).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub scenario: u8,
    pub recommender: String,
    pub moderator: String,
    /// Bit patterns so the key can be ordered and hashed.
    gamma_bits: u64,
    lambda_bits: Option<u64>,
    pub alpha: Option<usize>,
}

impl CellKey {
    pub fn of(row: &SummaryRow) -> Self {
        Self {
            scenario: row.scenario,
            recommender: row.recommender.clone(),
            moderator: row.moderator.clone(),
            gamma_bits: row.gamma.to_bits(),
            lambda_bits: row.lambda.map(f64::to_bits),
            alpha: row.alpha,
        }
    }

    pub fn gamma(&self) -> f64 {
        f64::from_bits(self.gamma_bits)
    }

    pub fn lambda(&self) -> Option<f64> {
        self.lambda_bits.map(f64::from_bits)
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{} {} {}", self.scenario, self.recommender, self.moderator)?;
        if let Some(l) = self.lambda() {
            write!(f, "(lambda={l})")?;
        }
        if let Some(a) = self.alpha {
            write!(f, "(alpha={a})")?;
        }
        write!(f, " gamma={}", self.gamma())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineField {
    Scenario,
    Recommender,
    Moderator,
    Gamma,
}

/// Which cell each cell is compared against, written `field=value`
/// (for example `moderator=none` or `recommender=oracle`).
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub field: BaselineField,
    pub value: String,
}

impl FromStr for Baseline {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (field, value) = s
            .split_once('=')
            .ok_or_else(|| SimError::Input(format!("baseline `{s}` is not of the form field=value")))?;
        let field = match field.trim() {
            "scenario" => BaselineField::Scenario,
            "recommender" => BaselineField::Recommender,
            "moderator" => BaselineField::Moderator,
            "gamma" => BaselineField::Gamma,
            other => return Err(SimError::Input(format!("unknown baseline field `{other}`"))),
        };
        let value = value.trim().to_string();
        match field {
            BaselineField::Scenario => {
                value.parse::<u8>().map_err(|_| SimError::Input(format!("bad scenario `{value}`")))?;
            }
            BaselineField::Gamma => {
                value.parse::<f64>().map_err(|_| SimError::Input(format!("bad gamma `{value}`")))?;
            }
            _ => {}
        }
        Ok(Self { field, value })
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let field = match self.field {
            BaselineField::Scenario => "scenario",
            BaselineField::Recommender => "recommender",
            BaselineField::Moderator => "moderator",
            BaselineField::Gamma => "gamma",
        };
        write!(f, "{field}={}", self.value)
    }
}

impl Baseline {
    pub fn moderator_none() -> Self {
        Self { field: BaselineField::Moderator, value: "none".into() }
    }

    pub fn key_for(&self, cell: &CellKey) -> CellKey {
        let mut key = cell.clone();
        match self.field {
            BaselineField::Scenario => key.scenario = self.value.parse().expect("validated"),
            BaselineField::Recommender => key.recommender = self.value.clone(),
            BaselineField::Gamma => key.gamma_bits = self.value.parse::<f64>().expect("validated").to_bits(),
            BaselineField::Moderator => {
                key.moderator = self.value.clone();
                if self.value != "kc" {
                    key.lambda_bits = None;
                }
                if self.value != "rd" && self.value != "sd" {
                    key.alpha = None;
                }
            }
        }
        key
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricAggregate {
    pub name: &'static str,
    pub mean: f64,
    pub std: f64,
    /// Percentage change of the mean versus the baseline mean.
    pub delta_pct: Option<f64>,
    pub p: Option<f64>,
    pub stars: Option<&'static str>,
}

impl MetricAggregate {
    /// Table cell: `0.762 (-13.3%**)` for CTR, `0.108**` for the rest.
    pub fn cell(&self) -> String {
        let stars = self.stars.unwrap_or("");
        match (self.name, self.delta_pct) {
            ("ctr", Some(d)) => format!("{:.3} ({:+.1}%{stars})", self.mean, d),
            ("ctr", None) => format!("{:.3} (n/a)", self.mean),
            _ => format!("{:.3}{stars}", self.mean),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub key: CellKey,
    pub n: usize,
    /// `None` when the baseline cell is missing from the summary.
    pub baseline: Option<CellKey>,
    pub metrics: Vec<MetricAggregate>,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl AggregateRow {
    pub fn header() -> Vec<String> {
        let mut h: Vec<String> =
            ["scenario", "recommender", "moderator", "gamma", "lambda", "alpha", "n", "comparable"]
                .iter()
                .map(|s| s.to_string())
                .collect();
        for m in METRIC_NAMES {
            for suffix in ["mean", "std", "delta_pct", "p", "stars", "cell"] {
                h.push(format!("{m}_{suffix}"));
            }
        }
        h
    }

    pub fn record(&self) -> Vec<String> {
        let mut r = vec![
            self.key.scenario.to_string(),
            self.key.recommender.clone(),
            self.key.moderator.clone(),
            self.key.gamma().to_string(),
            opt(self.key.lambda()),
            opt(self.key.alpha),
            self.n.to_string(),
            self.baseline.is_some().to_string(),
        ];
        for m in &self.metrics {
            r.push(m.mean.to_string());
            r.push(m.std.to_string());
            r.push(m.delta_pct.map(|d| format!("{d:.4}")).unwrap_or_default());
            r.push(opt(m.p));
            r.push(m.stars.unwrap_or("").to_string());
            r.push(m.cell());
        }
        r
    }

    pub fn metric(&self, name: &str) -> &MetricAggregate {
        self.metrics.iter().find(|m| m.name == name).expect("known metric")
    }
}

/// Groups rows by cell, sorted by key, and compares each cell with its baseline.
/// Welch tests need two seeds on both sides; otherwise `p` and `stars` stay empty.
pub fn aggregate(rows: &[SummaryRow], baseline: &Baseline) -> Vec<AggregateRow> {
    let mut cells: BTreeMap<CellKey, Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows {
        cells.entry(CellKey::of(r)).or_default().push(r);
    }
    for v in cells.values_mut() {
        v.sort_by_key(|r| r.seed);
    }
    let values = |rows: &[&SummaryRow], name: &str| -> Vec<f64> { rows.iter().map(|r| r.metric(name)).collect() };

    cells
        .iter()
        .map(|(key, members)| {
            let base_key = baseline.key_for(key);
            let base = cells.get(&base_key);
            let metrics = METRIC_NAMES
                .iter()
                .map(|&name| {
                    let xs = values(members, name);
                    let m = mean(&xs);
                    let (delta_pct, p, stars) = match base {
                        Some(b) => {
                            let ys = values(b, name);
                            let bm = mean(&ys);
                            let delta = if bm != 0.0 { Some(100.0 * (m - bm) / bm.abs()) } else { None };
                            match welch_t(&xs, &ys) {
                                Ok(w) if w.p.is_finite() => (delta, Some(w.p), Some(w.stars)),
                                _ => (delta, None, None),
                            }
                        }
                        None => (None, None, None),
                    };
                    MetricAggregate { name, mean: m, std: sample_std(&xs), delta_pct, p, stars }
                })
                .collect();
            AggregateRow { key: key.clone(), n: members.len(), baseline: base.map(|_| base_key), metrics }
        })
        .collect()
}
