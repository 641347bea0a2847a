//! Table rendering of aggregated summaries.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::engine::{aggregate, AggregateRow, Baseline, CellKey, SummaryRow, METRIC_NAMES};

/// Aggregates `rows` and lists cells with fewer than two seeds.
pub fn analyze(rows: &[SummaryRow], baseline: &Baseline) -> (Vec<AggregateRow>, Vec<String>) {
    let mut seeds: BTreeMap<CellKey, usize> = BTreeMap::new();
    for r in rows {
        *seeds.entry(CellKey::of(r)).or_default() += 1;
    }
    let thin = seeds.iter().filter(|(_, &n)| n < 2).map(|(k, n)| format!("{k}: only {n} seed")).collect();
    (aggregate(rows, baseline), thin)
}

fn cell_label(key: &CellKey) -> String {
    let mut m = key.moderator.clone();
    if let Some(l) = key.lambda() {
        m.push_str(&format!("({l})"));
    }
    if let Some(a) = key.alpha {
        m.push_str(&format!("({a})"));
    }
    format!("S{} {} {} g={}", key.scenario, key.recommender, m, key.gamma())
}

/// Plain-text table with one line per cell.
pub fn render(rows: &[AggregateRow]) -> String {
    let labels: Vec<String> = rows.iter().map(|r| cell_label(&r.key)).collect();
    let width = labels.iter().map(String::len).max().unwrap_or(4).max(4);
    let mut out = String::new();
    let _ = write!(out, "{:width$}  {:>3}", "cell", "n");
    for m in METRIC_NAMES {
        let w = if m == "ctr" { 19 } else { 11 };
        let _ = write!(out, "  {m:>w$}");
    }
    out.push('\n');
    for (row, label) in rows.iter().zip(&labels) {
        let _ = write!(out, "{label:width$}  {:>3}", row.n);
        for m in &row.metrics {
            let w = if m.name == "ctr" { 19 } else { 11 };
            let _ = write!(out, "  {:>w$}", m.cell());
        }
        if row.baseline.is_none() {
            out.push_str("  (no baseline)");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(moderator: &str, seed: u64, ctr: f64) -> SummaryRow {
        SummaryRow {
            scenario: 1,
            recommender: "oracle".into(),
            moderator: moderator.into(),
            gamma: 0.001,
            lambda: None,
            alpha: (moderator == "sd").then_some(1),
            seed,
            ctr,
            jsd_o: 0.3,
            jsd_g: 0.5,
            jsd_o_read: 0.3,
            jsd_g_read: 0.5,
            ums: 0.0,
            umoe: 0.1,
        }
    }

    #[test]
    fn two_disjoint_constant_samples_get_two_stars() {
        let rows = vec![row("none", 1, 0.9), row("none", 2, 0.9), row("sd", 1, 0.5), row("sd", 2, 0.5)];
        let (agg, thin) = analyze(&rows, &Baseline::moderator_none());
        assert!(thin.is_empty());
        let sd = agg.iter().find(|r| r.key.moderator == "sd").unwrap();
        assert_eq!(sd.metric("ctr").stars, Some("**"));
        assert_eq!(sd.metric("jsd_o").stars, Some("ns"));
        let table = render(&agg);
        assert!(table.contains("0.500 (-44.4%**)"), "{table}");
        assert!(table.contains("S1 oracle sd(1) g=0.001"));
    }

    #[test]
    fn thin_cells_are_reported() {
        let rows = vec![row("none", 1, 0.9)];
        let (_, thin) = analyze(&rows, &Baseline::moderator_none());
        assert_eq!(thin.len(), 1);
    }
}
