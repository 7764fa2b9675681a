//! Datastore and index geometry diagnostics.

use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::ivfpq::{search, IvfPqIndex};
use crate::scalar::Scalar;
use crate::store::VectorStore;

/// All diagnostics for one store/index pair, flat for JSON/CSV emission.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub imbalance_factor: f64,
    pub spherical_variance: f64,
    pub enp_mean: f64,
    pub enp_std: f64,
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
    pub mean_vector_norm: f64,
    pub cluster_sizes: Vec<u64>,
}

/// Imbalance factor of a partition: `K * sum_i (N_i / N)^2`.
///
/// 1 for perfectly equal sizes, `K` when one cluster holds everything.
/// Computed in integer arithmetic so the boundary cases are exact.
pub fn imbalance_factor(sizes: &[u64]) -> Result<f64> {
    if sizes.is_empty() {
        return Err(Error::EmptyPartition);
    }
    let total: u128 = sizes.iter().map(|&s| s as u128).sum();
    if total == 0 {
        return Err(Error::EmptyPartition);
    }
    let sum_sq: u128 = sizes.iter().map(|&s| (s as u128) * (s as u128)).sum();
    let numerator = sizes.len() as u128 * sum_sq;
    let denominator = total * total;
    Ok(numerator as f64 / denominator as f64)
}

/// True when the partition is exactly balanced (`IF == 1`), checked on the
/// integers.
pub fn is_balanced(sizes: &[u64]) -> bool {
    if sizes.is_empty() {
        return false;
    }
    let total: u128 = sizes.iter().map(|&s| s as u128).sum();
    let sum_sq: u128 = sizes.iter().map(|&s| (s as u128) * (s as u128)).sum();
    sizes.len() as u128 * sum_sq == total * total
}

/// Expected number of probes: for each query, centroids are ranked by
/// distance, the reference k-NN set is retrieved with `reference_nprobe`
/// probes, and the sample is the worst centroid rank among those
/// neighbors' cells. Returns the sample mean and (n-1) standard deviation.
pub fn enp<S: Scalar>(
    index: &IvfPqIndex<S>,
    queries: &[Vec<S>],
    k: usize,
    reference_nprobe: usize,
) -> Result<(f64, f64)> {
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if queries.is_empty() {
        return Err(Error::InvalidParameter("need at least one query".into()));
    }
    let cell_of = index.cell_of_ids();
    let kc = index.centroid_count();
    let samples: Vec<f64> = queries
        .par_iter()
        .map(|q| {
            let dists = index.coarse_distances(q);
            let mut ranked: Vec<(S, u32)> =
                dists.into_iter().enumerate().map(|(c, d)| (d, c as u32)).collect();
            ranked.sort_by(|a, b| {
                a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1))
            });
            let mut rank_of = vec![0u32; kc];
            for (rank, &(_, cell)) in ranked.iter().enumerate() {
                rank_of[cell as usize] = rank as u32 + 1;
            }
            let hits = search(index, q, k, reference_nprobe)?;
            let worst = hits
                .hits
                .iter()
                .map(|h| rank_of[cell_of[h.id as usize] as usize])
                .max()
                .ok_or(Error::EmptyHits)?;
            Ok(worst as f64)
        })
        .collect::<Result<_>>()?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok((mean, var.sqrt()))
}

/// Entropy-based clustering quality: homogeneity, completeness, v-measure.
///
/// Natural-log entropies over the joint (label, cluster) counts; zero
/// counts contribute nothing. Degenerate marginals score 1 (a single-class
/// labeling is vacuously homogeneous, a single cluster vacuously complete);
/// the v-measure is 0 when both components are 0.
pub fn clustering_metrics(cluster_ids: &[u32], labels: &[u32], beta: f64) -> Result<(f64, f64, f64)> {
    if cluster_ids.len() != labels.len() {
        return Err(Error::LengthMismatch { left: cluster_ids.len(), right: labels.len() });
    }
    if cluster_ids.is_empty() {
        return Err(Error::EmptyPartition);
    }
    let n = cluster_ids.len() as f64;
    let mut joint: HashMap<(u32, u32), u64> = HashMap::new();
    let mut by_label: HashMap<u32, u64> = HashMap::new();
    let mut by_cluster: HashMap<u32, u64> = HashMap::new();
    for (&c, &v) in cluster_ids.iter().zip(labels.iter()) {
        *joint.entry((v, c)).or_default() += 1;
        *by_label.entry(v).or_default() += 1;
        *by_cluster.entry(c).or_default() += 1;
    }

    let h_label = entropy(by_label.values(), n);
    let h_cluster = entropy(by_cluster.values(), n);
    // H(V|K) = -sum_{v,c} (n_vc/N) ln(n_vc / n_c); symmetrically for H(K|V).
    let mut h_label_given_cluster = 0.0;
    let mut h_cluster_given_label = 0.0;
    for (&(v, c), &count) in &joint {
        let p = count as f64 / n;
        h_label_given_cluster -= p * (count as f64 / by_cluster[&c] as f64).ln();
        h_cluster_given_label -= p * (count as f64 / by_label[&v] as f64).ln();
    }

    let homogeneity =
        if h_label == 0.0 { 1.0 } else { (1.0 - h_label_given_cluster / h_label).clamp(0.0, 1.0) };
    let completeness =
        if h_cluster == 0.0 { 1.0 } else { (1.0 - h_cluster_given_label / h_cluster).clamp(0.0, 1.0) };
    let v_measure = if homogeneity + completeness == 0.0 {
        0.0
    } else {
        (1.0 + beta) * homogeneity * completeness / (beta * homogeneity + completeness)
    };
    Ok((homogeneity, completeness, v_measure))
}

fn entropy<'a>(counts: impl Iterator<Item = &'a u64>, n: f64) -> f64 {
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.ln();
        }
    }
    h
}

/// Euclidean norm of the mean of the raw (unnormalized) keys.
pub fn mean_vector_norm<S: Scalar>(store: &VectorStore<S>) -> Result<f64> {
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    let mut mean = vec![0.0f64; store.dim()];
    for key in store.iter_keys() {
        for (m, &x) in mean.iter_mut().zip(key.iter()) {
            *m += x.widen();
        }
    }
    let inv = 1.0 / store.len() as f64;
    Ok(mean.iter().map(|m| (m * inv) * (m * inv)).sum::<f64>().sqrt())
}

/// Spherical variance of a store's key directions, skipping nothing: a
/// zero key is an error.
pub fn store_spherical_variance<S: Scalar>(store: &VectorStore<S>) -> Result<f64> {
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    let mut mean = vec![0.0f64; store.dim()];
    for key in store.iter_keys() {
        let norm: f64 = key.iter().map(|x| x.widen() * x.widen()).sum::<f64>().sqrt();
        if norm <= crate::geometry::ZERO_NORM_EPS {
            return Err(Error::ZeroVector);
        }
        for (m, &x) in mean.iter_mut().zip(key.iter()) {
            *m += x.widen() / norm;
        }
    }
    let inv = 1.0 / store.len() as f64;
    Ok(1.0 - mean.iter().map(|m| (m * inv) * (m * inv)).sum::<f64>().sqrt())
}

/// Per-centroid inverted-list lengths, centroid order.
pub fn cluster_size_histogram<S: Scalar>(index: &IvfPqIndex<S>) -> Vec<u64> {
    index.list_sizes()
}

/// Uniformly sample query vectors from the store's keys.
pub fn sample_queries_from_store<S: Scalar>(
    store: &VectorStore<S>,
    count: usize,
    rng: &mut crate::Rng,
) -> Vec<Vec<S>> {
    use rand::Rng as _;
    (0..count).map(|_| store.key(rng.random_range(0..store.len())).to_vec()).collect()
}

/// Full report for an index and the store it was built from.
///
/// ENP uses `enp_queries` keys sampled uniformly from the store (the
/// default query source), `k` neighbors, and `reference_nprobe` probes.
pub fn analyze<S: Scalar>(
    index: &IvfPqIndex<S>,
    store: &VectorStore<S>,
    enp_queries: usize,
    k: usize,
    reference_nprobe: usize,
    seed: u64,
) -> Result<AnalysisReport> {
    if store.len() as u64 != index.len() {
        return Err(Error::SizeMismatch { left: store.len(), right: index.len() as usize });
    }
    let sizes = index.list_sizes();
    let mut rng = crate::seeded_rng(seed);
    let queries = sample_queries_from_store(store, enp_queries.max(1), &mut rng);
    let (enp_mean, enp_std) = enp(index, &queries, k, reference_nprobe)?;
    let cells = index.cell_of_ids();
    let (homogeneity, completeness, v_measure) = clustering_metrics(&cells, store.labels(), 1.0)?;
    Ok(AnalysisReport {
        imbalance_factor: imbalance_factor(&sizes)?,
        spherical_variance: store_spherical_variance(store)?,
        enp_mean,
        enp_std,
        homogeneity,
        completeness,
        v_measure,
        mean_vector_norm: mean_vector_norm(store)?,
        cluster_sizes: sizes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ivfpq::{build_index, BuildConfig};
    use crate::seeded_rng;
    use rand::Rng;

    #[test]
    fn imbalance_boundary_cases_are_exact() {
        assert_eq!(imbalance_factor(&[7; 10]).unwrap(), 1.0);
        let mut lone = vec![0u64; 10];
        lone[3] = 42;
        assert_eq!(imbalance_factor(&lone).unwrap(), 10.0);
        assert!(is_balanced(&[5, 5, 5]));
        assert!(!is_balanced(&[5, 6, 4]));
    }

    #[test]
    fn imbalance_rejects_empty() {
        assert!(matches!(imbalance_factor(&[]), Err(Error::EmptyPartition)));
        assert!(matches!(imbalance_factor(&[0, 0]), Err(Error::EmptyPartition)));
    }

    #[test]
    fn imbalance_at_least_one() {
        let mut rng = seeded_rng(601);
        for _ in 0..100 {
            let k = rng.random_range(1..20);
            let sizes: Vec<u64> = (0..k).map(|_| rng.random_range(0..50)).collect();
            if sizes.iter().sum::<u64>() == 0 {
                continue;
            }
            let f = imbalance_factor(&sizes).unwrap();
            assert!(f >= 1.0 - 1e-15);
            assert!(f <= k as f64 + 1e-12);
            assert_eq!(is_balanced(&sizes), (f - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn perfect_clustering_scores_ones() {
        let labels = vec![0, 1, 2, 0, 1, 2];
        let clusters = vec![5, 9, 7, 5, 9, 7];
        let (h, c, v) = clustering_metrics(&clusters, &labels, 1.0).unwrap();
        assert_eq!((h, c, v), (1.0, 1.0, 1.0));
    }

    #[test]
    fn single_cluster_two_labels() {
        let labels = vec![0, 1, 0, 1];
        let clusters = vec![3, 3, 3, 3];
        let (h, c, v) = clustering_metrics(&clusters, &labels, 1.0).unwrap();
        assert_eq!(h, 0.0);
        assert_eq!(c, 1.0);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn metrics_match_joint_entropy_oracle() {
        let mut rng = seeded_rng(607);
        for _ in 0..50 {
            let n = rng.random_range(2..200);
            let labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..6)).collect();
            let clusters: Vec<u32> = (0..n).map(|_| rng.random_range(0..5)).collect();
            let (h, c, _) = clustering_metrics(&clusters, &labels, 1.0).unwrap();
            // Independent route: conditional entropy via the chain rule,
            // H(V|K) = H(V,K) - H(K).
            let nf = n as f64;
            let mut joint: HashMap<(u32, u32), u64> = HashMap::new();
            for (&a, &b) in labels.iter().zip(clusters.iter()) {
                *joint.entry((a, b)).or_default() += 1;
            }
            let h_joint = entropy(joint.values(), nf);
            let mut by_label: HashMap<u32, u64> = HashMap::new();
            let mut by_cluster: HashMap<u32, u64> = HashMap::new();
            for (&a, &b) in labels.iter().zip(clusters.iter()) {
                *by_label.entry(a).or_default() += 1;
                *by_cluster.entry(b).or_default() += 1;
            }
            let hv = entropy(by_label.values(), nf);
            let hk = entropy(by_cluster.values(), nf);
            let expected_h = if hv == 0.0 { 1.0 } else { 1.0 - (h_joint - hk) / hv };
            let expected_c = if hk == 0.0 { 1.0 } else { 1.0 - (h_joint - hv) / hk };
            assert!((h - expected_h).abs() < 1e-10);
            assert!((c - expected_c).abs() < 1e-10);
        }
    }

    #[test]
    fn metrics_are_permutation_invariant() {
        let labels = vec![0, 0, 1, 1, 2, 2, 2];
        let clusters = vec![4, 4, 2, 2, 9, 9, 2];
        let (h1, c1, v1) = clustering_metrics(&clusters, &labels, 1.0).unwrap();
        // Relabel both sides.
        let labels2: Vec<u32> = labels.iter().map(|&l| 10 - l).collect();
        let clusters2: Vec<u32> = clusters.iter().map(|&c| c * 3 + 1).collect();
        let (h2, c2, v2) = clustering_metrics(&clusters2, &labels2, 1.0).unwrap();
        assert_eq!((h1, c1, v1), (h2, c2, v2));
    }

    #[test]
    fn mean_vector_norm_cases() {
        let mut store = VectorStore::<f64>::new(3).unwrap();
        store.push(&[1.0, 2.0, -1.0], 0).unwrap();
        store.push(&[-1.0, -2.0, 1.0], 0).unwrap();
        assert_eq!(mean_vector_norm(&store).unwrap(), 0.0);

        let mut single = VectorStore::<f64>::new(3).unwrap();
        single.push(&[3.0, 0.0, 4.0], 0).unwrap();
        assert!((mean_vector_norm(&single).unwrap() - 5.0).abs() < 1e-12);
    }

    fn separated_store() -> VectorStore<f64> {
        // Four tight, well-separated clusters of 25 keys each.
        let mut rng = seeded_rng(613);
        let centers = [
            [100.0, 0.0, 0.0, 0.0],
            [0.0, 100.0, 0.0, 0.0],
            [0.0, 0.0, 100.0, 0.0],
            [0.0, 0.0, 0.0, 100.0],
        ];
        let mut store = VectorStore::<f64>::new(4).unwrap();
        for (ci, center) in centers.iter().enumerate() {
            for _ in 0..25 {
                let key: Vec<f64> =
                    center.iter().map(|&c| c + rng.random_range(-0.1..0.1)).collect();
                store.push(&key, ci as u32).unwrap();
            }
        }
        store
    }

    #[test]
    fn enp_is_one_on_separated_clusters() {
        let store = separated_store();
        let cfg = BuildConfig { centroids: 4, bypass_pq: true, seed: 1, ..Default::default() };
        let index = build_index(&store, &cfg).unwrap();
        let queries: Vec<Vec<f64>> = (0..20).map(|i| store.key(i * 5).to_vec()).collect();
        let (mean, std) = enp(&index, &queries, 4, 4).unwrap();
        assert_eq!(mean, 1.0);
        assert_eq!(std, 0.0);
    }

    #[test]
    fn enp_samples_stay_in_range() {
        let mut rng = seeded_rng(617);
        let keys: Vec<f64> = (0..800 * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let store = VectorStore::from_parts(6, keys, vec![0; 800]).unwrap();
        let cfg = BuildConfig { centroids: 16, pq_m: 3, pq_bits: 4, ..Default::default() };
        let index = build_index(&store, &cfg).unwrap();
        let queries = sample_queries_from_store(&store, 50, &mut rng);
        let (mean, _) = enp(&index, &queries, 4, 8).unwrap();
        assert!((1.0..=16.0).contains(&mean));
    }

    #[test]
    fn histogram_sums_to_store_size() {
        let store = separated_store();
        let cfg = BuildConfig { centroids: 6, bypass_pq: true, seed: 2, ..Default::default() };
        let index = build_index(&store, &cfg).unwrap();
        let hist = cluster_size_histogram(&index);
        assert_eq!(hist.len(), 6);
        assert_eq!(hist.iter().sum::<u64>(), 100);
    }

    #[test]
    fn histogram_counts_empty_cells() {
        // Two distinct values, four centroids: repair cannot separate
        // duplicates, so some cells legitimately stay empty.
        let mut store = VectorStore::<f64>::new(2).unwrap();
        for _ in 0..10 {
            store.push(&[1.0, 1.0], 0).unwrap();
            store.push(&[-1.0, -1.0], 1).unwrap();
        }
        let cfg = BuildConfig { centroids: 4, bypass_pq: true, seed: 0, ..Default::default() };
        let index = build_index(&store, &cfg).unwrap();
        let hist = cluster_size_histogram(&index);
        assert_eq!(hist.len(), 4);
        assert_eq!(hist.iter().sum::<u64>(), 20);
        assert!(hist.iter().any(|&s| s == 0), "expected an empty cell in {hist:?}");
    }

    #[test]
    fn analyze_produces_a_complete_report() {
        let store = separated_store();
        let cfg = BuildConfig { centroids: 4, bypass_pq: true, seed: 3, ..Default::default() };
        let index = build_index(&store, &cfg).unwrap();
        let report = analyze(&index, &store, 30, 4, 4, 9).unwrap();
        assert!(report.imbalance_factor >= 1.0);
        assert_eq!(report.cluster_sizes.iter().sum::<u64>(), 100);
        assert!((0.0..=1.0).contains(&report.homogeneity));
        assert!((0.0..=1.0).contains(&report.v_measure));
        assert_eq!(report.enp_mean, 1.0);
        // Labels equal k-means cells here, so clustering is perfect.
        assert_eq!(report.homogeneity, 1.0);
        assert_eq!(report.completeness, 1.0);
    }
}
