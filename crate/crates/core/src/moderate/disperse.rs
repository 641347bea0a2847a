//! Cluster dispersal: users in tight co-clusters get their bottom slate items
//! replaced by items from other clusters, either at random (RD) or by
//! embedding similarity (SD).

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::cocluster::CoclusterModel;
use crate::model::{ClickHistory, ItemId, Slate, SlateSet};
use crate::rng::{SeedTree, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispersalMode {
    Random,
    Similarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Tightness {
    /// A cluster is tight when its users' mean silhouette exceeds beta.
    #[default]
    PerCluster,
    /// Every cluster is tight when the overall user silhouette exceeds beta.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SdSampling {
    /// The alpha most similar candidates.
    #[default]
    Top,
    /// Sample without replacement, weight `(1 + cos) / 2`.
    Proportional,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersalParams {
    pub alpha: usize,
    pub beta: f64,
    pub mode: DispersalMode,
    pub tightness: Tightness,
    pub sampling: SdSampling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispersalOutcome {
    pub slates: SlateSet,
    pub tight_clusters: Vec<usize>,
    pub dispersed_users: usize,
    pub replaced: usize,
    /// Users that had fewer than alpha eligible other-cluster items.
    pub short_users: Vec<usize>,
}

pub fn tight_clusters(model: &CoclusterModel, beta: f64, tightness: Tightness) -> Vec<usize> {
    match tightness {
        Tightness::PerCluster => {
            (0..model.n_clusters).filter(|&c| model.cluster_user_silhouette[c].is_some_and(|s| s > beta)).collect()
        }
        Tightness::Global if model.overall_user_silhouette > beta => (0..model.n_clusters).collect(),
        Tightness::Global => Vec::new(),
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn disperse(
    slates: &SlateSet,
    model: &CoclusterModel,
    params: &DispersalParams,
    consumed: &ClickHistory,
    seeds: &SeedTree,
    step: usize,
) -> DispersalOutcome {
    let tight = tight_clusters(model, params.beta, params.tightness);
    let mut out = DispersalOutcome {
        slates: slates.clone(),
        tight_clusters: tight.clone(),
        dispersed_users: 0,
        replaced: 0,
        short_users: Vec::new(),
    };
    if tight.is_empty() || params.alpha == 0 {
        return out;
    }
    let n = consumed.n_items();

    for slate in out.slates.slates.iter_mut() {
        let user = slate.user;
        let Some(cluster) = model.user_label(user).filter(|c| tight.contains(c)) else {
            continue;
        };
        let candidates: Vec<ItemId> = (0..n)
            .filter(|&j| {
                model.item_label(j).is_some_and(|c| c != cluster)
                    && !slate.contains(j)
                    && !consumed.is_consumed(user, j)
            })
            .collect();
        let alpha = params.alpha.min(slate.items.len());
        let take = alpha.min(candidates.len());
        if take < alpha {
            out.short_users.push(user);
        }
        if take == 0 {
            continue;
        }
        let mut rng = seeds.rng(Stream::Moderator, step as u64, user as u64);
        let chosen: Vec<ItemId> = match params.mode {
            DispersalMode::Random => {
                let mut picks: Vec<usize> = index::sample(&mut rng, candidates.len(), take).into_vec();
                picks.sort_unstable();
                picks.into_iter().map(|i| candidates[i]).collect()
            }
            DispersalMode::Similarity => {
                let ue = model.user_embeddings[user].as_deref().unwrap_or(&[]);
                let sims: Vec<f64> = candidates
                    .iter()
                    .map(|&j| cosine(ue, model.item_embeddings[j].as_deref().unwrap_or(&[])))
                    .collect();
                match params.sampling {
                    SdSampling::Top => {
                        let mut order: Vec<usize> = (0..candidates.len()).collect();
                        order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(candidates[a].cmp(&candidates[b])));
                        order.into_iter().take(take).map(|i| candidates[i]).collect()
                    }
                    SdSampling::Proportional => {
                        let weights: Vec<f64> = sims.iter().map(|s| ((1.0 + s) / 2.0).max(1e-12)).collect();
                        match index::sample_weighted(&mut rng, candidates.len(), |i| weights[i], take) {
                            Ok(picks) => picks.into_iter().map(|i| candidates[i]).collect(),
                            Err(_) => candidates.iter().copied().take(take).collect(),
                        }
                    }
                }
            }
        };
        let keep = slate.items.len() - take;
        let mut items = slate.items[..keep].to_vec();
        items.extend(chosen);
        *slate = Slate::new(user, items);
        out.dispersed_users += 1;
        out.replaced += take;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two clusters: users 0,1 and items 0..3 in cluster 0; users 2,3 and items 3..6 in cluster 1.
    fn toy(sil: [f64; 2]) -> CoclusterModel {
        let ue = vec![vec![1.0, 0.1], vec![0.9, -0.2], vec![-1.0, 0.3], vec![-0.8, -0.5]];
        let ie =
            vec![vec![1.0, 0.0], vec![0.7, 0.7], vec![0.9, -0.3], vec![-1.0, 0.2], vec![-0.5, -0.9], vec![-0.6, 0.8]];
        CoclusterModel {
            n_clusters: 2,
            dim: 2,
            user_embeddings: ue.into_iter().map(Some).collect(),
            item_embeddings: ie.into_iter().map(Some).collect(),
            user_labels: vec![Some(0), Some(0), Some(1), Some(1)],
            item_labels: vec![Some(0), Some(0), Some(0), Some(1), Some(1), Some(1)],
            cluster_user_silhouette: vec![Some(sil[0]), Some(sil[1])],
            overall_user_silhouette: (sil[0] + sil[1]) / 2.0,
        }
    }

    fn slates() -> SlateSet {
        let rows = [[0, 1], [1, 2], [3, 4], [4, 5]];
        SlateSet::new(2, rows.iter().enumerate().map(|(u, r)| Slate::new(u, r.to_vec())).collect())
    }

    fn params(alpha: usize, mode: DispersalMode) -> DispersalParams {
        DispersalParams { alpha, beta: 0.45, mode, tightness: Tightness::PerCluster, sampling: SdSampling::Top }
    }

    #[test]
    fn no_tight_cluster_is_identity() {
        let model = toy([0.2, 0.45]);
        let out = disperse(
            &slates(),
            &model,
            &params(1, DispersalMode::Random),
            &ClickHistory::new(4, 6),
            &SeedTree::new(0),
            0,
        );
        assert_eq!(out.slates, slates());
        assert!(out.tight_clusters.is_empty());
    }

    #[test]
    fn full_replacement_uses_other_clusters() {
        let model = toy([0.9, 0.1]);
        for mode in [DispersalMode::Random, DispersalMode::Similarity] {
            let out = disperse(&slates(), &model, &params(2, mode), &ClickHistory::new(4, 6), &SeedTree::new(3), 0);
            for u in 0..2 {
                assert!(out.slates.get(u).items.iter().all(|&j| model.item_label(j) == Some(1)));
            }
            assert_eq!(out.slates.get(2), slates().get(2));
            out.slates.validate(6, None).unwrap();
        }
    }

    #[test]
    fn similarity_pick_matches_exhaustive_scan() {
        let model = toy([0.9, 0.9]);
        let input = slates();
        let out = disperse(
            &input,
            &model,
            &params(1, DispersalMode::Similarity),
            &ClickHistory::new(4, 6),
            &SeedTree::new(0),
            0,
        );
        for u in 0..4 {
            let own = model.user_label(u).unwrap();
            let ue = model.user_embeddings[u].as_ref().unwrap();
            let mut best: Option<(f64, usize)> = None;
            for j in 0..6 {
                if model.item_label(j) == Some(own) || input.get(u).contains(j) {
                    continue;
                }
                let ie = model.item_embeddings[j].as_ref().unwrap();
                let dot = ue[0] * ie[0] + ue[1] * ie[1];
                let c = dot / ((ue[0] * ue[0] + ue[1] * ue[1]).sqrt() * (ie[0] * ie[0] + ie[1] * ie[1]).sqrt());
                if best.is_none_or(|(b, _)| c > b) {
                    best = Some((c, j));
                }
            }
            let slate = &out.slates.get(u).items;
            assert_eq!(slate[0], input.get(u).items[0]);
            assert_eq!(slate[1], best.unwrap().1, "user {u}");
        }
    }

    #[test]
    fn short_candidate_pool_is_reported() {
        let model = toy([0.9, 0.1]);
        let mut consumed = ClickHistory::new(4, 6);
        consumed.record(0, 3);
        consumed.record(0, 4);
        let out = disperse(&slates(), &model, &params(2, DispersalMode::Random), &consumed, &SeedTree::new(0), 0);
        assert_eq!(out.short_users, vec![0]);
        assert_eq!(out.slates.get(0).items, vec![0, 5]);
    }

    #[test]
    fn global_gate() {
        let model = toy([0.9, 0.1]);
        // overall silhouette is 0.5
        assert_eq!(tight_clusters(&model, 0.55, Tightness::Global), Vec::<usize>::new());
        assert_eq!(tight_clusters(&model, 0.45, Tightness::Global), vec![0, 1]);
    }
}
