//! Round-robin allocation under a self-adjusting per-item exposure quota.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::model::{ClickHistory, ExposureMatrix, ItemId, Slate, SlateSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum QuotaMode {
    /// Quota applies to the exposure within the current step.
    #[default]
    PerStep,
    /// Budget `q · t` (loop step `t ≥ 1`) minus the item's exposure over earlier loop steps.
    Cumulative,
}

/// Smallest quota `ceil(a · m · k / n)`, `a = 1, 1.01, 1.02, ...`, with `n · q ≥ m · k`.
pub fn rr_quota(n_users: usize, n_items: usize, k: usize) -> Result<u32> {
    if n_items == 0 {
        return Err(SimError::Input("no items to allocate".into()));
    }
    let needed = (n_users * k) as u128;
    let n = n_items as u128;
    // a = (100 + i) / 100 kept as an integer numerator to avoid drift
    let mut i: u128 = 0;
    loop {
        let numerator = (100 + i) * needed;
        let q = numerator.div_ceil(100 * n);
        if q * n >= needed {
            return u32::try_from(q).map_err(|_| SimError::Input("quota overflow".into()));
        }
        i += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RrOutcome {
    pub slates: SlateSet,
    pub quota: u32,
    /// Slots filled from least-exposed items because the user's own picks were quota-blocked.
    pub fills: usize,
    /// Slots filled by exceeding a quota because nothing else was eligible.
    pub overrides: usize,
}

/// Allocates `k` rounds; each round visits users in an order rotated by
/// `step + round`, and each user takes their best-ranked slate item that
/// still has quota. Users whose remaining slate items are all blocked take
/// the least-exposed eligible item instead (lowest `agg` column total, then
/// lowest id). Kept items stay in original rank order; fills follow.
pub fn rr_moderate(
    slates: &SlateSet,
    agg: &ExposureMatrix,
    loop_exposure: &[u64],
    consumed: &ClickHistory,
    step: usize,
    mode: QuotaMode,
) -> Result<RrOutcome> {
    let m = slates.n_users();
    let n = agg.n_items();
    let k = slates.k;
    if n < k {
        return Err(SimError::Input(format!("RR needs at least k = {k} items, got {n}")));
    }
    let quota = rr_quota(m, n, k)?;
    let mut remaining: Vec<i64> = match mode {
        QuotaMode::PerStep => vec![quota as i64; n],
        QuotaMode::Cumulative => {
            let periods = step.max(1) as i64;
            (0..n).map(|j| quota as i64 * periods - loop_exposure.get(j).copied().unwrap_or(0) as i64).collect()
        }
    };

    let totals = agg.item_totals();
    let mut by_exposure: Vec<ItemId> = (0..n).collect();
    by_exposure.sort_by_key(|&j| (totals[j], j));

    let mut kept: Vec<Vec<bool>> = vec![vec![false; k]; m];
    let mut extra: Vec<Vec<ItemId>> = vec![Vec::new(); m];
    let (mut fills, mut overrides) = (0, 0);
    for round in 0..k {
        let offset = (step + round) % m.max(1);
        for visit in 0..m {
            let user = (offset + visit) % m;
            let slate = &slates.get(user).items;
            let pick = (0..slate.len()).find(|&r| !kept[user][r] && remaining[slate[r]] > 0);
            if let Some(r) = pick {
                kept[user][r] = true;
                remaining[slate[r]] -= 1;
                continue;
            }
            let taken = |j: ItemId, kept: &[bool], extra: &[ItemId]| {
                slate.iter().zip(kept).any(|(&s, &on)| on && s == j) || extra.contains(&j)
            };
            let eligible = |j: ItemId| !consumed.is_consumed(user, j) && !taken(j, &kept[user], &extra[user]);
            let fill = by_exposure.iter().copied().find(|&j| remaining[j] > 0 && eligible(j));
            let item = match fill {
                Some(j) => {
                    fills += 1;
                    j
                }
                None => {
                    overrides += 1;
                    by_exposure
                        .iter()
                        .copied()
                        .find(|&j| eligible(j))
                        .ok_or_else(|| SimError::State(format!("RR: no eligible item left for user {user}")))?
                }
            };
            remaining[item] -= 1;
            extra[user].push(item);
        }
    }

    let out = (0..m)
        .map(|u| {
            let slate = &slates.get(u).items;
            let mut items: Vec<ItemId> = (0..slate.len()).filter(|&r| kept[u][r]).map(|r| slate[r]).collect();
            items.extend(&extra[u]);
            Slate::new(u, items)
        })
        .collect();
    Ok(RrOutcome { slates: SlateSet::new(k, out), quota, fills, overrides })
}
