//! Lloyd's k-means with k-means++ seeding and empty-cluster repair.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{dot, l2_sq, Scalar};

/// Chunk size for parallel assignment; fixed so reductions happen in a
/// deterministic order regardless of thread scheduling.
const ASSIGN_CHUNK: usize = 1024;

/// Centroids laid out dimension-major with cached squared norms.
///
/// Distances to all centroids expand as `||q||^2 - 2<q,c> + ||c||^2`; with
/// this layout the inner loop is an elementwise multiply-add across
/// centroids, which vectorizes, instead of one latency-bound reduction per
/// centroid. Values are clamped at zero since the expansion can go
/// marginally negative under cancellation.
#[derive(Debug, Clone)]
pub struct CentroidScanner<S> {
    k: usize,
    dim: usize,
    transposed: Vec<S>,
    norms_sq: Vec<S>,
}

impl<S: Scalar> CentroidScanner<S> {
    pub fn new(centroids: &[S], dim: usize) -> Self {
        let k = centroids.len() / dim;
        debug_assert_eq!(centroids.len(), k * dim);
        let mut transposed = vec![S::zero(); k * dim];
        for (c, row) in centroids.chunks_exact(dim).enumerate() {
            for (d, &x) in row.iter().enumerate() {
                transposed[d * k + c] = x;
            }
        }
        let norms_sq = centroids.chunks_exact(dim).map(|row| dot(row, row)).collect();
        Self { k, dim, transposed, norms_sq }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Squared distances from `q` to every centroid, written into `out`.
    pub fn dists_into(&self, q: &[S], out: &mut [S]) {
        debug_assert_eq!(q.len(), self.dim);
        debug_assert_eq!(out.len(), self.k);
        out.copy_from_slice(&self.norms_sq);
        for (d, &x) in q.iter().enumerate() {
            let w = x + x;
            let row = &self.transposed[d * self.k..(d + 1) * self.k];
            for (o, &c) in out.iter_mut().zip(row.iter()) {
                *o = *o - w * c;
            }
        }
        let qn = dot(q, q);
        for o in out.iter_mut() {
            let v = *o + qn;
            *o = if v > S::zero() { v } else { S::zero() };
        }
    }

    /// Four queries at once: each centroid row is loaded once and feeds
    /// four independent multiply-add streams.
    fn dists4_into(&self, qs: [&[S]; 4], outs: &mut [S]) {
        debug_assert_eq!(outs.len(), 4 * self.k);
        let k = self.k;
        let (o01, o23) = outs.split_at_mut(2 * k);
        let (o0, o1) = o01.split_at_mut(k);
        let (o2, o3) = o23.split_at_mut(k);
        o0.copy_from_slice(&self.norms_sq);
        o1.copy_from_slice(&self.norms_sq);
        o2.copy_from_slice(&self.norms_sq);
        o3.copy_from_slice(&self.norms_sq);
        for d in 0..self.dim {
            let w0 = qs[0][d] + qs[0][d];
            let w1 = qs[1][d] + qs[1][d];
            let w2 = qs[2][d] + qs[2][d];
            let w3 = qs[3][d] + qs[3][d];
            let row = &self.transposed[d * k..(d + 1) * k];
            for ((((a, b), c), e), &r) in
                o0.iter_mut().zip(o1.iter_mut()).zip(o2.iter_mut()).zip(o3.iter_mut()).zip(row)
            {
                *a = *a - w0 * r;
                *b = *b - w1 * r;
                *c = *c - w2 * r;
                *e = *e - w3 * r;
            }
        }
        for (out, q) in [o0, o1, o2, o3].into_iter().zip(qs) {
            let qn = dot(q, q);
            for o in out.iter_mut() {
                let v = *o + qn;
                *o = if v > S::zero() { v } else { S::zero() };
            }
        }
    }

    /// Nearest centroid (lowest index on exact ties) and its distance for
    /// every row-major point; parallel over fixed chunks.
    pub fn nearest_bulk(&self, points: &[S]) -> Vec<(u32, S)> {
        let argmin = |buf: &[S]| {
            let mut best = 0usize;
            let mut best_d = buf[0];
            for (i, &v) in buf.iter().enumerate().skip(1) {
                if v < best_d {
                    best_d = v;
                    best = i;
                }
            }
            (best as u32, best_d)
        };
        points
            .par_chunks(ASSIGN_CHUNK * self.dim)
            .flat_map_iter(|chunk| {
                let dim = self.dim;
                let npts = chunk.len() / dim;
                let mut quad = vec![S::zero(); 4 * self.k];
                let mut buf = vec![S::zero(); self.k];
                let mut out = Vec::with_capacity(npts);
                let mut i = 0;
                while i + 4 <= npts {
                    let qs = [
                        &chunk[i * dim..(i + 1) * dim],
                        &chunk[(i + 1) * dim..(i + 2) * dim],
                        &chunk[(i + 2) * dim..(i + 3) * dim],
                        &chunk[(i + 3) * dim..(i + 4) * dim],
                    ];
                    self.dists4_into(qs, &mut quad);
                    for j in 0..4 {
                        out.push(argmin(&quad[j * self.k..(j + 1) * self.k]));
                    }
                    i += 4;
                }
                while i < npts {
                    self.dists_into(&chunk[i * dim..(i + 1) * dim], &mut buf);
                    out.push(argmin(&buf));
                    i += 1;
                }
                out
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    pub seed: u64,
}

pub const DEFAULT_KMEANS_ITERS: usize = 25;

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, max_iters: DEFAULT_KMEANS_ITERS, seed }
    }
}

/// Trained coarse quantizer.
#[derive(Debug, Clone)]
pub struct KMeansModel<S> {
    centroids: Vec<S>,
    dim: usize,
    pub config: KMeansConfig,
    /// Assignment objective (sum of squared distances to the nearest
    /// centroid) recorded after each Lloyd iteration.
    pub objective_trace: Vec<f64>,
}

impl<S: Scalar> KMeansModel<S> {
    pub(crate) fn from_centroids(centroids: Vec<S>, dim: usize, config: KMeansConfig) -> Self {
        Self { centroids, dim, config, objective_trace: Vec::new() }
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn centroid(&self, i: usize) -> &[S] {
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }

    pub fn centroids_flat(&self) -> &[S] {
        &self.centroids
    }
}

/// Train k-means on `n = points.len() / dim` row-major points.
///
/// k-means++ seeding, then Lloyd iterations that stop at `max_iters` or
/// when assignments no longer change. The assignment objective is
/// nonincreasing across iterations; clusters that empty out are repaired by
/// moving the farthest member of the largest cluster, which never reduces
/// the number of centroids.
pub fn kmeans_train<S: Scalar>(points: &[S], dim: usize, cfg: &KMeansConfig) -> Result<KMeansModel<S>> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::BadShape(format!(
            "point buffer length {} not divisible by dim {dim}",
            points.len()
        )));
    }
    let n = points.len() / dim;
    if cfg.k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    if n < cfg.k {
        return Err(Error::InsufficientData { needed: cfg.k, got: n });
    }

    let mut rng = crate::seeded_rng(cfg.seed);
    let mut centroids = seed_plus_plus(points, dim, n, cfg.k, &mut rng);
    let mut model = KMeansModel::from_centroids(centroids.clone(), dim, cfg.clone());
    let mut assignments: Vec<u32> = vec![u32::MAX; n];

    for _iter in 0..cfg.max_iters {
        let scanner = CentroidScanner::new(&centroids, dim);
        let pairs = scanner.nearest_bulk(points);
        let mut new_assignments = Vec::with_capacity(n);
        let mut dists = Vec::with_capacity(n);
        let mut objective = 0.0f64;
        for (a, d) in pairs {
            new_assignments.push(a);
            let d = d.widen();
            dists.push(d);
            objective += d;
        }
        model.objective_trace.push(objective);
        let changed = new_assignments != assignments;
        assignments = new_assignments;
        if !changed {
            break;
        }

        // Mean update, accumulated in f64 for determinism and stability.
        let mut sums = vec![0.0f64; cfg.k * dim];
        let mut counts = vec![0u64; cfg.k];
        for (i, &a) in assignments.iter().enumerate() {
            let a = a as usize;
            counts[a] += 1;
            let p = &points[i * dim..(i + 1) * dim];
            let s = &mut sums[a * dim..(a + 1) * dim];
            for (acc, &x) in s.iter_mut().zip(p.iter()) {
                *acc += x.widen();
            }
        }
        for c in 0..cfg.k {
            if counts[c] == 0 {
                continue;
            }
            let inv = 1.0 / counts[c] as f64;
            for j in 0..dim {
                centroids[c * dim + j] = S::from_f64_lossy(sums[c * dim + j] * inv);
            }
        }

        // Empty-cluster repair: take the farthest member of the largest
        // cluster as the new centroid.
        let empties: Vec<usize> = (0..cfg.k).filter(|&c| counts[c] == 0).collect();
        for empty in empties {
            let largest = (0..cfg.k).max_by_key(|&c| counts[c]).expect("k >= 1");
            if counts[largest] <= 1 {
                break;
            }
            let farthest = assignments
                .iter()
                .enumerate()
                .filter(|&(_, &a)| a as usize == largest)
                .max_by(|a, b| dists[a.0].partial_cmp(&dists[b.0]).expect("finite"))
                .map(|(i, _)| i)
                .expect("largest cluster is nonempty");
            let src = &points[farthest * dim..(farthest + 1) * dim];
            centroids[empty * dim..(empty + 1) * dim].copy_from_slice(src);
            counts[largest] -= 1;
            counts[empty] += 1;
            assignments[farthest] = empty as u32;
        }
    }

    model.centroids = centroids;
    Ok(model)
}

/// Index of the nearest centroid by squared Euclidean distance, ties broken
/// by the lowest index.
pub fn assign<S: Scalar>(model: &KMeansModel<S>, h: &[S]) -> usize {
    nearest(&model.centroids, model.dim, model.k(), h).0
}

/// Assign every row-major point; parallel over fixed chunks.
pub fn assign_all<S: Scalar>(model: &KMeansModel<S>, points: &[S]) -> Vec<u32> {
    let scanner = CentroidScanner::new(&model.centroids, model.dim);
    scanner.nearest_bulk(points).into_iter().map(|(a, _)| a).collect()
}

#[inline]
fn nearest<S: Scalar>(centroids: &[S], dim: usize, k: usize, h: &[S]) -> (usize, S) {
    let mut best = 0usize;
    let mut best_d = l2_sq(h, &centroids[0..dim]);
    for c in 1..k {
        let d = l2_sq(h, &centroids[c * dim..(c + 1) * dim]);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    (best, best_d)
}

/// k-means++: first center uniform, subsequent centers sampled with
/// probability proportional to the squared distance to the closest chosen
/// center.
fn seed_plus_plus<S: Scalar>(
    points: &[S],
    dim: usize,
    n: usize,
    k: usize,
    rng: &mut crate::Rng,
) -> Vec<S> {
    use rand::Rng as _;
    let mut centroids: Vec<S> = Vec::with_capacity(k * dim);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(&points[first * dim..(first + 1) * dim]);
    chosen[first] = true;

    let mut d2: Vec<f64> = points
        .chunks_exact(dim)
        .map(|p| l2_sq(p, &centroids[0..dim]).widen())
        .collect();

    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                if target < w {
                    pick = Some(i);
                    break;
                }
                target -= w;
            }
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("total > 0"))
        } else {
            // All remaining points coincide with chosen centers; fall back
            // to the first unchosen index.
            match chosen.iter().position(|&c| !c) {
                Some(i) => i,
                None => break,
            }
        };
        chosen[next] = true;
        let start = centroids.len();
        centroids.extend_from_slice(&points[next * dim..(next + 1) * dim]);
        let new_c = &centroids[start..start + dim];
        for (i, p) in points.chunks_exact(dim).enumerate() {
            let d = l2_sq(p, new_c).widen();
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    // Duplicate-heavy data can exhaust distinct points; pad by repeating
    // the first point so the model always has k centroids (repair will
    // separate them if possible).
    while centroids.len() < k * dim {
        let src: Vec<S> = centroids[0..dim].to_vec();
        centroids.extend_from_slice(&src);
    }
    centroids
}
