//! Spectral bipartite co-clustering of the aggregated exposure matrix.
//!
//! Rows (users) and columns (items) with nonzero degree are embedded using the
//! leading `ceil(log2 c)` non-trivial singular vectors of
//! `D1^{-1/2} · RM · D2^{-1/2}`, rescaled by `D^{-1/2}`, and clustered
//! jointly with k-means.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::model::{ExposureMatrix, ItemId, UserId};
use crate::rng::{SeedTree, Stream};

pub const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITER: usize = 300;
const KMEANS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CoclusterModel {
    pub n_clusters: usize,
    pub dim: usize,
    /// `None` for zero-degree rows.
    pub user_embeddings: Vec<Option<Vec<f64>>>,
    pub item_embeddings: Vec<Option<Vec<f64>>>,
    pub user_labels: Vec<Option<usize>>,
    pub item_labels: Vec<Option<usize>>,
    /// Mean silhouette of each cluster's users; `None` when a cluster has no users.
    pub cluster_user_silhouette: Vec<Option<f64>>,
    /// Mean silhouette over all labelled users.
    pub overall_user_silhouette: f64,
}

impl CoclusterModel {
    pub fn user_label(&self, user: UserId) -> Option<usize> {
        self.user_labels.get(user).copied().flatten()
    }

    pub fn item_label(&self, item: ItemId) -> Option<usize> {
        self.item_labels.get(item).copied().flatten()
    }

    /// Replaces the per-cluster silhouettes with ones computed from raw exposure rows.
    pub fn use_raw_silhouette(&mut self, agg: &ExposureMatrix) {
        let users: Vec<UserId> = (0..self.user_labels.len()).filter(|&u| self.user_labels[u].is_some()).collect();
        let points: Vec<Vec<f64>> = users.iter().map(|&u| agg.row(u).iter().map(|&c| c as f64).collect()).collect();
        let labels: Vec<usize> = users.iter().map(|&u| self.user_labels[u].unwrap()).collect();
        let (per_cluster, overall) = cluster_silhouettes(&points, &labels, self.n_clusters);
        self.cluster_user_silhouette = per_cluster;
        self.overall_user_silhouette = overall;
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

fn kmeans_once<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> KMeansFit {
    let n = points.len();
    // k-means++ seeding
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[next].clone());
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, centroids.last().unwrap()));
        }
    }

    let dim = points[0].len();
    let mut labels = vec![0usize; n];
    let mut inertia = f64::INFINITY;
    for _ in 0..KMEANS_MAX_ITER {
        let mut new_inertia = 0.0;
        for (label, p) in labels.iter_mut().zip(points) {
            let (best, d) = centroids
                .iter()
                .enumerate()
                .map(|(c, centroid)| (c, sq_dist(p, centroid)))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .unwrap();
            *label = best;
            new_inertia += d;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (label, p) in labels.iter().zip(points) {
            counts[*label] += 1;
            for (s, v) in sums[*label].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let converged = inertia.is_finite() && (inertia - new_inertia).abs() <= KMEANS_TOL * inertia.max(1e-300);
        inertia = new_inertia;
        if converged {
            break;
        }
    }
    KMeansFit { labels, centroids, inertia }
}

/// Best of `restarts` seeded k-means++ runs (lowest inertia, ties by restart index).
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seeds: &SeedTree, key: u64) -> KMeansFit {
    assert!(!points.is_empty() && k >= 1);
    let k = k.min(points.len());
    let mut best: Option<KMeansFit> = None;
    for restart in 0..restarts.max(1) {
        let mut rng = seeds.rng(Stream::Moderator, key, restart as u64);
        let fit = kmeans_once(points, k, &mut rng);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    best.unwrap()
}

/// Per-point silhouette with Euclidean distance. Points in singleton clusters
/// score 0, and everything scores 0 when only one cluster is occupied.
pub fn silhouette_samples(points: &[Vec<f64>], labels: &[usize], n_clusters: usize) -> Vec<f64> {
    let n = points.len();
    let mut sizes = vec![0usize; n_clusters];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return vec![0.0; n];
    }
    let mut scores = vec![0.0; n];
    let mut sums = vec![0.0; n_clusters];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[labels[j]] += sq_dist(&points[i], &points[j]).sqrt();
            }
        }
        let own = labels[i];
        if sizes[own] <= 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..n_clusters)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        scores[i] = if denom > 0.0 { (b - a) / denom } else { 0.0 };
    }
    scores
}

/// Mean silhouette per cluster (`None` if empty) and overall mean.
pub fn cluster_silhouettes(points: &[Vec<f64>], labels: &[usize], n_clusters: usize) -> (Vec<Option<f64>>, f64) {
    if points.is_empty() {
        return (vec![None; n_clusters], 0.0);
    }
    let samples = silhouette_samples(points, labels, n_clusters);
    let mut sums = vec![0.0; n_clusters];
    let mut counts = vec![0usize; n_clusters];
    for (&l, s) in labels.iter().zip(&samples) {
        sums[l] += s;
        counts[l] += 1;
    }
    let per_cluster = (0..n_clusters).map(|c| (counts[c] > 0).then(|| sums[c] / counts[c] as f64)).collect();
    let overall = samples.iter().sum::<f64>() / samples.len() as f64;
    (per_cluster, overall)
}

/// Number of non-trivial singular directions kept for `n_clusters` clusters:
/// `ceil(log2(n_clusters))`, at least one.
pub fn embedding_dim(n_clusters: usize) -> usize {
    (usize::BITS - (n_clusters.max(2) - 1).leading_zeros()) as usize
}

/// Spectral co-clustering. Returns `None` when fewer than `n_clusters` users
/// or items have nonzero degree (clustering unavailable).
pub fn cocluster(agg: &ExposureMatrix, n_clusters: usize, seeds: &SeedTree, step: usize) -> Option<CoclusterModel> {
    let (m, n) = (agg.n_users(), agg.n_items());
    let row_deg: Vec<f64> = agg.user_totals().into_iter().map(|d| d as f64).collect();
    let col_deg: Vec<f64> = agg.item_totals().into_iter().map(|d| d as f64).collect();
    let rows: Vec<UserId> = (0..m).filter(|&u| row_deg[u] > 0.0).collect();
    let cols: Vec<ItemId> = (0..n).filter(|&j| col_deg[j] > 0.0).collect();
    if n_clusters < 2 || rows.len() < n_clusters || cols.len() < n_clusters {
        return None;
    }
    let (r, c) = (rows.len(), cols.len());

    let normalized = DMatrix::from_fn(r, c, |i, j| {
        let (u, item) = (rows[i], cols[j]);
        agg.get(u, item) as f64 / (row_deg[u] * col_deg[item]).sqrt()
    });
    // singular vectors through the smaller Gram matrix, with the trivial pair
    // (sigma = 1, vectors proportional to sqrt(degree)) deflated out so that
    // disconnected blocks cannot displace it
    let user_side = r <= c;
    let mut gram = if user_side { &normalized * normalized.transpose() } else { normalized.transpose() * &normalized };
    let trivial: Vec<f64> = if user_side {
        rows.iter().map(|&u| row_deg[u].sqrt()).collect()
    } else {
        cols.iter().map(|&j| col_deg[j].sqrt()).collect()
    };
    let norm2: f64 = trivial.iter().map(|x| x * x).sum();
    for a in 0..trivial.len() {
        for b in 0..trivial.len() {
            gram[(a, b)] -= trivial[a] * trivial[b] / norm2;
        }
    }
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let dim = embedding_dim(n_clusters).min(order.len());
    if dim == 0 {
        return None;
    }

    let mut left = DMatrix::<f64>::zeros(r, dim);
    let mut right = DMatrix::<f64>::zeros(c, dim);
    for (slot, &idx) in order.iter().take(dim).enumerate() {
        let sigma = eig.eigenvalues[idx].max(0.0).sqrt();
        let vec = eig.eigenvectors.column(idx);
        if sigma < 1e-9 {
            continue;
        }
        let other: Vec<f64> = {
            let projected = if user_side { normalized.tr_mul(&vec) } else { &normalized * vec };
            projected.iter().map(|x| x / sigma).collect()
        };
        let own: Vec<f64> = vec.iter().copied().collect();
        let (u_vec, v_vec) = if user_side { (own, other) } else { (other, own) };
        for i in 0..r {
            left[(i, slot)] = u_vec[i] / row_deg[rows[i]].sqrt();
        }
        for j in 0..c {
            right[(j, slot)] = v_vec[j] / col_deg[cols[j]].sqrt();
        }
    }

    let mut points: Vec<Vec<f64>> = Vec::with_capacity(r + c);
    points.extend((0..r).map(|i| left.row(i).iter().copied().collect::<Vec<f64>>()));
    points.extend((0..c).map(|j| right.row(j).iter().copied().collect::<Vec<f64>>()));
    let fit = kmeans(&points, n_clusters, KMEANS_RESTARTS, seeds, step as u64);

    let mut user_embeddings = vec![None; m];
    let mut user_labels = vec![None; m];
    for (i, &u) in rows.iter().enumerate() {
        user_embeddings[u] = Some(points[i].clone());
        user_labels[u] = Some(fit.labels[i]);
    }
    let mut item_embeddings = vec![None; n];
    let mut item_labels = vec![None; n];
    for (j, &item) in cols.iter().enumerate() {
        item_embeddings[item] = Some(points[r + j].clone());
        item_labels[item] = Some(fit.labels[r + j]);
    }
    let (cluster_user_silhouette, overall_user_silhouette) =
        cluster_silhouettes(&points[..r], &fit.labels[..r], n_clusters);

    Some(CoclusterModel {
        n_clusters,
        dim,
        user_embeddings,
        item_embeddings,
        user_labels,
        item_labels,
        cluster_user_silhouette,
        overall_user_silhouette,
    })
}
