//! Knapsack-constrained popularity moderation.
//!
//! With item weights `w_j = c_j / (m·k)` (`c_j` = slates containing `j`) the
//! modified matrix `X` must satisfy `Σ X_ij w_j ≤ λ · Σ RM_ij w_j`, keep `k`
//! items per user and differ from `RM` in as few cells as possible. Every
//! quantity is scaled by `m·k` so the constraint is checked on integer
//! column counts.
//!
//! Because each user's row sum is fixed, the objective is twice the number of
//! replacements. For a user replacing `r` items the best reduction removes the
//! `r` heaviest slate items and adds the `r` lightest eligible others, so the
//! per-user marginal reductions are non-increasing and taking the largest
//! marginal across all users until the budget holds is optimal.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;

use crate::error::{Result, SimError};
use crate::model::{ClickHistory, ItemId, Slate, SlateSet, UserId};
use crate::rng::{SeedTree, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct KcOutcome {
    pub slates: SlateSet,
    /// Column counts `c_j` of the original step matrix.
    pub counts: Vec<u64>,
    /// `Σ RM_ij c_j`.
    pub original_cost: u64,
    /// `Σ X_ij c_j`.
    pub cost: u64,
    pub replacements: usize,
}

impl KcOutcome {
    pub fn hamming(&self) -> usize {
        2 * self.replacements
    }
}

/// `Σ_ij X_ij c_j` for slates against fixed column counts.
pub fn weighted_cost(slates: &SlateSet, counts: &[u64]) -> u64 {
    slates.slates.iter().flat_map(|s| s.items.iter()).map(|&j| counts[j]).sum()
}

/// The knapsack constraint in scaled form.
pub fn within_budget(cost: u64, original_cost: u64, lambda: f64) -> bool {
    cost as f64 <= lambda * original_cost as f64
}

#[derive(Debug, PartialEq, Eq)]
struct Marginal {
    gain: i64,
    user: UserId,
}

impl Ord for Marginal {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain.cmp(&other.gain).then(other.user.cmp(&self.user))
    }
}

impl PartialOrd for Marginal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct UserPlan {
    /// Slate ranks sorted by descending count (removal order).
    removal: Vec<usize>,
    /// Eligible non-slate items sorted by ascending count (insertion order).
    additions: Vec<ItemId>,
    done: usize,
}

impl UserPlan {
    fn next_gain(&self, slate: &[ItemId], counts: &[u64]) -> Option<i64> {
        let out = *self.removal.get(self.done)?;
        let add = *self.additions.get(self.done)?;
        Some(counts[slate[out]] as i64 - counts[add] as i64)
    }
}

pub fn kc_moderate(
    slates: &SlateSet,
    consumed: &ClickHistory,
    lambda: f64,
    seeds: &SeedTree,
    step: usize,
) -> Result<KcOutcome> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(SimError::Config(format!("lambda {lambda} outside (0, 1]")));
    }
    let n = consumed.n_items();
    let counts: Vec<u64> = slates.exposure(n).item_totals();
    let original_cost = weighted_cost(slates, &counts);
    let mut cost = original_cost;
    let mut plans: Vec<Option<UserPlan>> = (0..slates.n_users()).map(|_| None).collect();
    let mut heap = BinaryHeap::new();

    let build_plan = |user: UserId| -> UserPlan {
        let slate = &slates.get(user).items;
        let mut removal: Vec<usize> = (0..slate.len()).collect();
        removal.sort_by_key(|&r| (std::cmp::Reverse(counts[slate[r]]), std::cmp::Reverse(r)));
        let mut rng = seeds.rng(Stream::Moderator, step as u64, user as u64);
        let keys: Vec<u64> = (0..n).map(|_| rng.random()).collect();
        let mut additions: Vec<ItemId> =
            (0..n).filter(|&j| !slate.contains(&j) && !consumed.is_consumed(user, j)).collect();
        let take = slate.len().min(additions.len());
        let key = |j: &ItemId| (counts[*j], keys[*j]);
        if take > 0 && take < additions.len() {
            additions.select_nth_unstable_by_key(take - 1, key);
            additions.truncate(take);
        }
        additions.sort_by_key(key);
        UserPlan { removal, additions, done: 0 }
    };

    if !within_budget(cost, original_cost, lambda) {
        for (user, plan) in plans.iter_mut().enumerate() {
            let p = build_plan(user);
            if let Some(gain) = p.next_gain(&slates.get(user).items, &counts) {
                heap.push(Marginal { gain, user });
            }
            *plan = Some(p);
        }
    }

    let mut replacements = 0;
    while !within_budget(cost, original_cost, lambda) {
        let best = match heap.pop() {
            Some(b) if b.gain > 0 => b,
            _ => {
                return Err(SimError::Infeasible(format!(
                "cost {cost} still above {:.3} = lambda {lambda} x {original_cost} after {replacements} replacements",
                lambda * original_cost as f64
            )))
            }
        };
        let plan = plans[best.user].as_mut().expect("plan built");
        plan.done += 1;
        cost -= best.gain as u64;
        replacements += 1;
        if let Some(gain) = plan.next_gain(&slates.get(best.user).items, &counts) {
            heap.push(Marginal { gain, user: best.user });
        }
    }

    let out = slates
        .slates
        .iter()
        .enumerate()
        .map(|(user, slate)| match &plans[user] {
            Some(plan) if plan.done > 0 => {
                let removed = &plan.removal[..plan.done];
                let mut items: Vec<ItemId> =
                    (0..slate.items.len()).filter(|r| !removed.contains(r)).map(|r| slate.items[r]).collect();
                items.extend_from_slice(&plan.additions[..plan.done]);
                Slate::new(user, items)
            }
            _ => slate.clone(),
        })
        .collect();
    let slates_out = SlateSet::new(slates.k, out);
    debug_assert_eq!(weighted_cost(&slates_out, &counts), cost);
    Ok(KcOutcome { slates: slates_out, counts, original_cost, cost, replacements })
}
