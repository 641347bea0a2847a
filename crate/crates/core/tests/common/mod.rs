#![allow(dead_code)]

use std::collections::HashMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stancesim::model::{ClickHistory, ExposureMatrix, Slate, SlateSet};
use stancesim::moderate::kc;

fn choose2(x: u64) -> f64 {
    (x * x.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index of two labelings of the same points.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let expected = sum_a * sum_b / choose2(a.len() as u64);
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Planted co-cluster matrix: `blocks` user and item blocks; each user makes
/// `per_user` exposures, a fraction `noise` of them to items outside its block.
/// Returns the matrix with true user and item blocks.
pub fn planted(
    blocks: usize,
    users_per_block: usize,
    items_per_block: usize,
    per_user: usize,
    noise: f64,
    seed: u64,
) -> (ExposureMatrix, Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, n) = (blocks * users_per_block, blocks * items_per_block);
    let mut e = ExposureMatrix::zeros(m, n);
    for u in 0..m {
        let b = u / users_per_block;
        for _ in 0..per_user {
            let item = if rng.random::<f64>() < noise {
                let other = (b + rng.random_range(1..blocks)) % blocks;
                other * items_per_block + rng.random_range(0..items_per_block)
            } else {
                b * items_per_block + rng.random_range(0..items_per_block)
            };
            e.increment(u, item);
        }
    }
    let user_truth = (0..m).map(|u| u / users_per_block).collect();
    let item_truth = (0..n).map(|j| j / items_per_block).collect();
    (e, user_truth, item_truth)
}

/// A random small KC instance: slates of `k` distinct unconsumed items.
pub struct KcInstance {
    pub slates: SlateSet,
    pub consumed: ClickHistory,
    pub lambda: f64,
}

pub fn random_kc_instance(rng: &mut ChaCha8Rng) -> KcInstance {
    let m = rng.random_range(1..=4);
    let n = rng.random_range(2..=6);
    let k = rng.random_range(1..=2usize.min(n - 1));
    let mut consumed = ClickHistory::new(m, n);
    let mut slates = Vec::new();
    for u in 0..m {
        // leave at least k items eligible
        let n_consumed = rng.random_range(0..=(n - k).min(2));
        for j in index::sample(rng, n, n_consumed).iter() {
            consumed.record(u, j);
        }
        let eligible: Vec<usize> = (0..n).filter(|&j| !consumed.is_consumed(u, j)).collect();
        let picks: Vec<usize> = index::sample(rng, eligible.len(), k).iter().map(|i| eligible[i]).collect();
        slates.push(Slate::new(u, picks));
    }
    let lambda = rng.random_range(0.05..=1.0);
    KcInstance { slates: SlateSet::new(k, slates), consumed, lambda }
}

fn subsets(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for (i, &x) in items.iter().enumerate() {
        for mut rest in subsets(&items[i + 1..], k - 1) {
            rest.insert(0, x);
            out.push(rest);
        }
    }
    out
}

/// Minimum Hamming distance over every feasible matrix, or `None` if none is feasible.
pub fn kc_brute_force(inst: &KcInstance) -> Option<usize> {
    let n = inst.consumed.n_items();
    let k = inst.slates.k;
    let counts = inst.slates.exposure(n).item_totals();
    let original = kc::weighted_cost(&inst.slates, &counts);
    let options: Vec<Vec<(u64, usize)>> = inst
        .slates
        .slates
        .iter()
        .map(|s| {
            let eligible: Vec<usize> = (0..n).filter(|&j| !inst.consumed.is_consumed(s.user, j)).collect();
            subsets(&eligible, k)
                .into_iter()
                .map(|row| {
                    let cost = row.iter().map(|&j| counts[j]).sum();
                    let kept = row.iter().filter(|j| s.items.contains(j)).count();
                    (cost, 2 * (k - kept))
                })
                .collect()
        })
        .collect();
    let mut best: Option<usize> = None;
    let mut stack = vec![(0usize, 0u64, 0usize)];
    while let Some((user, cost, dist)) = stack.pop() {
        if user == options.len() {
            if kc::within_budget(cost, original, inst.lambda) {
                best = Some(best.map_or(dist, |b| b.min(dist)));
            }
            continue;
        }
        for &(c, d) in &options[user] {
            stack.push((user + 1, cost + c, dist + d));
        }
    }
    best
}
