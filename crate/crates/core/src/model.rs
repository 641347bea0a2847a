//! Shared data model: preferences, stances, slates, exposure counts and the
//! interaction log.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

pub type UserId = usize;
pub type ItemId = usize;

/// Stance index in `[0, |S|)`. With three stances: Left = 0, Center = 1, Right = 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StanceId(pub usize);

impl StanceId {
    pub const LEFT: StanceId = StanceId(0);
    pub const CENTER: StanceId = StanceId(1);
    pub const RIGHT: StanceId = StanceId(2);

    pub fn index(self) -> usize {
        self.0
    }

    pub fn label(self, n_stances: usize) -> String {
        match (n_stances, self.0) {
            (3, 0) => "L".into(),
            (3, 1) => "C".into(),
            (3, 2) => "R".into(),
            (_, i) => format!("S{i}"),
        }
    }
}

/// Latent user preferences, `m × |S|`, nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceMatrix {
    n_stances: usize,
    values: Vec<f64>,
}

impl PreferenceMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_stances = rows.first().map(Vec::len).unwrap_or(0);
        if n_stances < 2 {
            return Err(SimError::Input("preference rows need at least 2 stances".into()));
        }
        let mut values = Vec::with_capacity(rows.len() * n_stances);
        for (u, row) in rows.into_iter().enumerate() {
            if row.len() != n_stances {
                return Err(SimError::Input(format!("preference row {u} has wrong length")));
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(SimError::Input(format!("preference row {u} has a negative or non-finite entry")));
            }
            values.extend(row);
        }
        Ok(Self { n_stances, values })
    }

    pub fn n_users(&self) -> usize {
        self.values.len() / self.n_stances
    }

    pub fn n_stances(&self) -> usize {
        self.n_stances
    }

    pub fn row(&self, user: UserId) -> &[f64] {
        &self.values[user * self.n_stances..(user + 1) * self.n_stances]
    }

    pub fn row_mut(&mut self, user: UserId) -> &mut [f64] {
        &mut self.values[user * self.n_stances..(user + 1) * self.n_stances]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_stances)
    }

    /// Preference mass of `user` on `stance`: the dot product `U_u · A_j` for a one-hot item row.
    pub fn affinity(&self, user: UserId, stance: StanceId) -> f64 {
        self.values[user * self.n_stances + stance.0]
    }
}

/// Ground-truth item stances. Stored as one label per item; the one-hot
/// matrix view is available through [`StanceMatrix::one_hot`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StanceMatrix {
    n_stances: usize,
    labels: Vec<StanceId>,
}

impl StanceMatrix {
    pub fn from_labels(n_stances: usize, labels: Vec<StanceId>) -> Result<Self> {
        if n_stances < 2 {
            return Err(SimError::Input("need at least 2 stances".into()));
        }
        if let Some(bad) = labels.iter().find(|s| s.0 >= n_stances) {
            return Err(SimError::Input(format!("stance {} out of range", bad.0)));
        }
        Ok(Self { n_stances, labels })
    }

    /// Builds from binary rows; each row must be one-hot.
    pub fn from_one_hot(rows: &[Vec<u8>]) -> Result<Self> {
        let n_stances = rows.first().map(Vec::len).unwrap_or(0);
        let mut labels = Vec::with_capacity(rows.len());
        for (j, row) in rows.iter().enumerate() {
            let ones: Vec<usize> = row.iter().enumerate().filter(|(_, &v)| v == 1).map(|(s, _)| s).collect();
            if row.len() != n_stances || ones.len() != 1 || row.iter().any(|&v| v > 1) {
                return Err(SimError::Input(format!("item row {j} is not one-hot")));
            }
            labels.push(StanceId(ones[0]));
        }
        Self::from_labels(n_stances, labels)
    }

    pub fn n_items(&self) -> usize {
        self.labels.len()
    }

    pub fn n_stances(&self) -> usize {
        self.n_stances
    }

    pub fn stance(&self, item: ItemId) -> StanceId {
        self.labels[item]
    }

    pub fn labels(&self) -> &[StanceId] {
        &self.labels
    }

    pub fn one_hot(&self, item: ItemId) -> Vec<u8> {
        let mut row = vec![0; self.n_stances];
        row[self.labels[item].0] = 1;
        row
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_stances];
        for s in &self.labels {
            counts[s.0] += 1;
        }
        counts
    }
}

/// Fixed generation-time stance group of each user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserGroupAssignment {
    n_stances: usize,
    groups: Vec<StanceId>,
}

impl UserGroupAssignment {
    pub fn new(n_stances: usize, groups: Vec<StanceId>) -> Result<Self> {
        if groups.iter().any(|g| g.0 >= n_stances) {
            return Err(SimError::Input("group stance out of range".into()));
        }
        Ok(Self { n_stances, groups })
    }

    pub fn group(&self, user: UserId) -> StanceId {
        self.groups[user]
    }

    pub fn groups(&self) -> &[StanceId] {
        &self.groups
    }

    pub fn n_stances(&self) -> usize {
        self.n_stances
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_stances];
        for g in &self.groups {
            counts[g.0] += 1;
        }
        counts
    }
}

/// Ordered recommendation list for one user; rank 0 is most preferred.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slate {
    pub user: UserId,
    pub items: Vec<ItemId>,
}

impl Slate {
    pub fn new(user: UserId, items: Vec<ItemId>) -> Self {
        Self { user, items }
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.items.contains(&item)
    }
}

/// One slate per user for a single step (`RS_t`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlateSet {
    pub k: usize,
    pub slates: Vec<Slate>,
}

impl SlateSet {
    pub fn new(k: usize, slates: Vec<Slate>) -> Self {
        Self { k, slates }
    }

    pub fn n_users(&self) -> usize {
        self.slates.len()
    }

    pub fn get(&self, user: UserId) -> &Slate {
        &self.slates[user]
    }

    /// Checks length-k, distinctness, item range and, when given, that no
    /// consumed item is present.
    pub fn validate(&self, n_items: usize, consumed: Option<&ClickHistory>) -> Result<()> {
        for (u, slate) in self.slates.iter().enumerate() {
            if slate.user != u {
                return Err(SimError::State(format!("slate {u} is tagged for user {}", slate.user)));
            }
            if slate.items.len() != self.k {
                return Err(SimError::State(format!(
                    "user {u} slate has {} items, expected {}",
                    slate.items.len(),
                    self.k
                )));
            }
            for (r, &item) in slate.items.iter().enumerate() {
                if item >= n_items {
                    return Err(SimError::State(format!("user {u} slate item {item} out of range")));
                }
                if slate.items[..r].contains(&item) {
                    return Err(SimError::State(format!("user {u} slate repeats item {item}")));
                }
                if let Some(history) = consumed {
                    if history.is_consumed(u, item) {
                        return Err(SimError::State(format!("user {u} was re-recommended consumed item {item}")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn exposure(&self, n_items: usize) -> ExposureMatrix {
        let mut exposure = ExposureMatrix::zeros(self.n_users(), n_items);
        for slate in &self.slates {
            for &item in &slate.items {
                exposure.increment(slate.user, item);
            }
        }
        exposure
    }
}

/// `m × n` count matrix of shown items (`RM_t` for one step, `RM_agg,t` when accumulated).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExposureMatrix {
    n_users: usize,
    n_items: usize,
    counts: Vec<u32>,
}

impl ExposureMatrix {
    pub fn zeros(n_users: usize, n_items: usize) -> Self {
        Self { n_users, n_items, counts: vec![0; n_users * n_items] }
    }

    pub fn from_counts(n_users: usize, n_items: usize, counts: Vec<u32>) -> Result<Self> {
        if counts.len() != n_users * n_items {
            return Err(SimError::Input("exposure count buffer has wrong size".into()));
        }
        Ok(Self { n_users, n_items, counts })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn get(&self, user: UserId, item: ItemId) -> u32 {
        self.counts[user * self.n_items + item]
    }

    pub fn increment(&mut self, user: UserId, item: ItemId) {
        self.counts[user * self.n_items + item] += 1;
    }

    pub fn row(&self, user: UserId) -> &[u32] {
        &self.counts[user * self.n_items..(user + 1) * self.n_items]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Exposure `e_i`: how often `item` appears across all users' slates in this window.
    pub fn exposure_of_item(&self, item: ItemId) -> Result<u64> {
        if item >= self.n_items {
            return Err(SimError::Input(format!("item {item} out of range (n = {})", self.n_items)));
        }
        Ok((0..self.n_users).map(|u| self.get(u, item) as u64).sum())
    }

    /// Column sums: exposure of every item.
    pub fn item_totals(&self) -> Vec<u64> {
        let mut totals = vec![0u64; self.n_items];
        for row in self.counts.chunks_exact(self.n_items.max(1)) {
            for (t, &c) in totals.iter_mut().zip(row) {
                *t += c as u64;
            }
        }
        totals
    }

    pub fn user_totals(&self) -> Vec<u64> {
        self.counts.chunks_exact(self.n_items.max(1)).map(|row| row.iter().map(|&c| c as u64).sum()).collect()
    }

    /// Elementwise sum.
    pub fn accumulate(&self, step: &ExposureMatrix) -> Result<ExposureMatrix> {
        let mut out = self.clone();
        out.add_assign(step)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, step: &ExposureMatrix) -> Result<()> {
        if self.n_users != step.n_users || self.n_items != step.n_items {
            return Err(SimError::Input(format!(
                "shape mismatch: {}x{} vs {}x{}",
                self.n_users, self.n_items, step.n_users, step.n_items
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&step.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Nonzero entries as `(row, col, count)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(move |(idx, &c)| (idx / self.n_items, idx % self.n_items, c))
    }
}

/// Share of exposure per stance: `Σ_{i∈I_s} e_i / Σ_j e_j`.
pub fn stance_distribution(exposure: &ExposureMatrix, stances: &StanceMatrix) -> Result<Vec<f64>> {
    if exposure.n_items() != stances.n_items() {
        return Err(SimError::Input("exposure and stance matrices disagree on item count".into()));
    }
    let mut counts = vec![0u64; stances.n_stances()];
    for (item, e) in exposure.item_totals().into_iter().enumerate() {
        counts[stances.stance(item).0] += e;
    }
    distribution_from_counts(&counts)
}

pub fn distribution_from_counts(counts: &[u64]) -> Result<Vec<f64>> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(SimError::UndefinedDistribution);
    }
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub step: usize,
    pub user: UserId,
    pub item: ItemId,
    pub rank: usize,
    pub clicked: bool,
}

/// Append-only record of every shown item and whether it was clicked.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionLog {
    records: Vec<Interaction>,
}

impl InteractionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: Interaction) {
        self.records.push(record);
    }

    pub fn extend(&mut self, other: &InteractionLog) {
        self.records.extend_from_slice(&other.records);
    }

    pub fn records(&self) -> &[Interaction] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn clicks(&self) -> impl Iterator<Item = &Interaction> {
        self.records.iter().filter(|r| r.clicked)
    }

    /// Rebuilds the exposure matrix by replaying the log.
    pub fn replay_exposure(&self, n_users: usize, n_items: usize) -> ExposureMatrix {
        let mut exposure = ExposureMatrix::zeros(n_users, n_items);
        for r in &self.records {
            exposure.increment(r.user, r.item);
        }
        exposure
    }
}

/// Per-user record of clicked ("consumed") items plus per-item click counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClickHistory {
    n_users: usize,
    n_items: usize,
    consumed: Vec<bool>,
    item_clicks: Vec<u32>,
    per_user: Vec<Vec<ItemId>>,
}

impl ClickHistory {
    pub fn new(n_users: usize, n_items: usize) -> Self {
        Self {
            n_users,
            n_items,
            consumed: vec![false; n_users * n_items],
            item_clicks: vec![0; n_items],
            per_user: vec![Vec::new(); n_users],
        }
    }

    pub fn from_log(log: &InteractionLog, n_users: usize, n_items: usize) -> Self {
        let mut history = Self::new(n_users, n_items);
        for r in log.clicks() {
            history.record(r.user, r.item);
        }
        history
    }

    pub fn record(&mut self, user: UserId, item: ItemId) {
        let idx = user * self.n_items + item;
        if !self.consumed[idx] {
            self.consumed[idx] = true;
            self.per_user[user].push(item);
        }
        self.item_clicks[item] += 1;
    }

    pub fn is_consumed(&self, user: UserId, item: ItemId) -> bool {
        self.consumed[user * self.n_items + item]
    }

    pub fn consumed_by(&self, user: UserId) -> &[ItemId] {
        &self.per_user[user]
    }

    pub fn item_clicks(&self) -> &[u32] {
        &self.item_clicks
    }

    pub fn total_clicks(&self) -> u64 {
        self.item_clicks.iter().map(|&c| c as u64).sum()
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Items `user` may still be recommended.
    pub fn eligible_count(&self, user: UserId) -> usize {
        self.n_items - self.per_user[user].len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stances(labels: &[usize]) -> StanceMatrix {
        StanceMatrix::from_labels(3, labels.iter().map(|&s| StanceId(s)).collect()).unwrap()
    }

    #[test]
    fn exposure_of_item_counts() {
        let zero = ExposureMatrix::zeros(3, 4);
        assert_eq!(zero.exposure_of_item(2).unwrap(), 0);

        let slates = SlateSet::new(2, vec![Slate::new(0, vec![0, 1]), Slate::new(1, vec![1, 0])]);
        let e = slates.exposure(4);
        assert_eq!(e.exposure_of_item(0).unwrap(), 2);
        assert!(matches!(e.exposure_of_item(4), Err(SimError::Input(_))));
    }

    #[test]
    fn exposure_over_steps_matches_log_replay() {
        // item 5 appears in four slates across three steps
        let steps = [vec![vec![5, 1], vec![2, 3]], vec![vec![0, 5], vec![5, 4]], vec![vec![1, 2], vec![3, 5]]];
        let mut agg = ExposureMatrix::zeros(2, 6);
        let mut log = InteractionLog::new();
        for (t, step) in steps.iter().enumerate() {
            let set =
                SlateSet::new(2, step.iter().enumerate().map(|(u, items)| Slate::new(u, items.clone())).collect());
            agg = agg.accumulate(&set.exposure(6)).unwrap();
            for slate in &set.slates {
                for (rank, &item) in slate.items.iter().enumerate() {
                    log.push(Interaction { step: t, user: slate.user, item, rank, clicked: false });
                }
            }
        }
        let replay_count = log.records().iter().filter(|r| r.item == 5).count() as u64;
        assert_eq!(replay_count, 4);
        assert_eq!(agg.exposure_of_item(5).unwrap(), replay_count);
        assert_eq!(agg, log.replay_exposure(2, 6));
    }

    #[test]
    fn stance_distribution_examples() {
        let a = stances(&[0, 1, 2]);
        let each_once = SlateSet::new(3, vec![Slate::new(0, vec![0, 1, 2])]).exposure(3);
        let d = stance_distribution(&each_once, &a).unwrap();
        for v in d {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }

        let only_left = SlateSet::new(1, vec![Slate::new(0, vec![0])]).exposure(3);
        assert_eq!(stance_distribution(&only_left, &a).unwrap(), vec![1.0, 0.0, 0.0]);

        // L:6, C:2, R:2
        let mut e = ExposureMatrix::zeros(2, 3);
        for _ in 0..3 {
            e.increment(0, 0);
            e.increment(1, 0);
        }
        e.increment(0, 1);
        e.increment(1, 1);
        e.increment(0, 2);
        e.increment(1, 2);
        let d = stance_distribution(&e, &a).unwrap();
        assert!((d[0] - 0.6).abs() < 1e-12 && (d[1] - 0.2).abs() < 1e-12 && (d[2] - 0.2).abs() < 1e-12);

        assert!(matches!(stance_distribution(&ExposureMatrix::zeros(1, 3), &a), Err(SimError::UndefinedDistribution)));
    }

    #[test]
    fn accumulate_identity_and_shape_check() {
        let mut a = ExposureMatrix::zeros(2, 3);
        a.increment(1, 2);
        assert_eq!(a.accumulate(&ExposureMatrix::zeros(2, 3)).unwrap(), a);
        let twice = a.accumulate(&a).unwrap();
        assert_eq!(twice.get(1, 2), 2);
        assert!(a.accumulate(&ExposureMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn one_hot_rows_are_validated() {
        assert!(StanceMatrix::from_one_hot(&[vec![0, 1, 0], vec![1, 0, 0]]).is_ok());
        assert!(StanceMatrix::from_one_hot(&[vec![1, 1, 0]]).is_err());
        assert!(StanceMatrix::from_one_hot(&[vec![0, 0, 0]]).is_err());
    }

    #[test]
    fn slate_validation_catches_duplicates_and_consumed() {
        let mut history = ClickHistory::new(1, 4);
        let dup = SlateSet::new(2, vec![Slate::new(0, vec![1, 1])]);
        assert!(dup.validate(4, None).is_err());
        history.record(0, 3);
        let with_consumed = SlateSet::new(2, vec![Slate::new(0, vec![1, 3])]);
        assert!(with_consumed.validate(4, None).is_ok());
        assert!(with_consumed.validate(4, Some(&history)).is_err());
    }
}
