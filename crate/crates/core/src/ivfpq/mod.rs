//! Inverted-file index with product-quantized residuals.
//!
//! Build: a coarse k-means partitions the keys into Voronoi cells; each key
//! is stored in its cell's inverted list as a PQ code of the residual
//! `key - centroid`. Search: rank centroids by distance to the query, scan
//! the `nprobe` nearest lists with asymmetric distance computation, return
//! the `k` best candidates.
//!
//! A raw-residual mode (`bypass_pq`) stores exact residuals instead of
//! codes; with `nprobe = K` the search is then exhaustive and exact, which
//! the oracle tests rely on to isolate IVF behavior from quantization
//! error.

pub mod io;
pub mod kmeans;
pub mod pq;

pub use kmeans::{
    assign, assign_all, kmeans_train, CentroidScanner, KMeansConfig, KMeansModel,
    DEFAULT_KMEANS_ITERS,
};
pub use pq::{adc_table, pq_decode, pq_encode, pq_train, table_distance, PqCodebooks};

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{l2_sq, Scalar};
use crate::store::VectorStore;

/// Coarse centroid count used by the reference setup.
pub const DEFAULT_CENTROIDS: usize = 2048;
/// Cells probed per query unless overridden.
pub const DEFAULT_NPROBE: usize = 32;
/// PQ subspaces for 128-dimensional keys (16 coordinates per subspace).
pub const DEFAULT_PQ_M: usize = 8;
/// Bits per PQ sub-code (256 codewords per subspace).
pub const DEFAULT_PQ_BITS: u32 = 8;
/// Keys sampled for training when the store is larger.
pub const DEFAULT_TRAIN_SAMPLE: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct BuildConfig {
    pub centroids: usize,
    pub pq_m: usize,
    pub pq_bits: u32,
    pub train_sample: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Store raw residuals instead of PQ codes (oracle testing only; such
    /// indexes cannot be serialized).
    pub bypass_pq: bool,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            centroids: DEFAULT_CENTROIDS,
            pq_m: DEFAULT_PQ_M,
            pq_bits: DEFAULT_PQ_BITS,
            train_sample: DEFAULT_TRAIN_SAMPLE,
            seed: 0,
            max_iters: DEFAULT_KMEANS_ITERS,
            bypass_pq: false,
        }
    }
}

#[derive(Debug, Clone)]
struct InvertedList<S> {
    ids: Vec<u64>,
    /// PQ codes, `len * m` bytes (PQ mode).
    codes: Vec<u8>,
    /// Raw residuals, `len * dim` scalars (bypass mode).
    residuals: Vec<S>,
}

impl<S> Default for InvertedList<S> {
    fn default() -> Self {
        Self { ids: Vec::new(), codes: Vec::new(), residuals: Vec::new() }
    }
}

#[derive(Debug, Clone)]
enum FineStorage<S> {
    Pq {
        codebooks: PqCodebooks<S>,
        /// Per centroid, flat `[m][l]`: `2 <centroid_m, w> + ||w||^2` for
        /// each codeword `w`, so scanning a cell needs only a
        /// query-dependent table that is computed once per query.
        centroid_terms: Vec<S>,
        /// Codewords transposed within each subspace, flat
        /// `[m][sub_dim][l]`, so the query table also vectorizes across
        /// codewords.
        query_layout: Vec<S>,
    },
    Raw,
}

impl<S: Scalar> FineStorage<S> {
    fn pq(coarse: &KMeansModel<S>, codebooks: PqCodebooks<S>) -> Self {
        let centroid_terms = precompute_centroid_terms(coarse, &codebooks);
        let m = codebooks.subspaces();
        let l = codebooks.codewords_per_subspace();
        let sd = codebooks.sub_dim();
        let mut query_layout = vec![S::zero(); m * sd * l];
        for sub in 0..m {
            for id in 0..l {
                for (t, &x) in codebooks.codeword(sub, id).iter().enumerate() {
                    query_layout[sub * sd * l + t * l + id] = x;
                }
            }
        }
        FineStorage::Pq { codebooks, centroid_terms, query_layout }
    }
}

/// Immutable trained index; concurrent searches are safe.
#[derive(Debug, Clone)]
pub struct IvfPqIndex<S> {
    coarse: KMeansModel<S>,
    coarse_scan: CentroidScanner<S>,
    lists: Vec<InvertedList<S>>,
    labels: Vec<u32>,
    fine: FineStorage<S>,
    dim: usize,
    n: u64,
}

/// One retrieved neighbor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit<S> {
    pub id: u64,
    /// Squared Euclidean distance (approximate in PQ mode).
    pub distance: S,
    pub label: u32,
}

/// Hits in nondecreasing distance order, ties by lowest id.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult<S> {
    pub hits: Vec<Hit<S>>,
}

impl<S: Scalar> IvfPqIndex<S> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn centroid_count(&self) -> usize {
        self.coarse.k()
    }

    pub fn coarse_model(&self) -> &KMeansModel<S> {
        &self.coarse
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn codebooks(&self) -> Option<&PqCodebooks<S>> {
        match &self.fine {
            FineStorage::Pq { codebooks, .. } => Some(codebooks),
            FineStorage::Raw => None,
        }
    }

    pub fn is_bypass(&self) -> bool {
        matches!(self.fine, FineStorage::Raw)
    }

    /// Inverted-list lengths in centroid order.
    pub fn list_sizes(&self) -> Vec<u64> {
        self.lists.iter().map(|l| l.ids.len() as u64).collect()
    }

    /// Cell assignment of every stored key, indexed by key id.
    pub fn cell_of_ids(&self) -> Vec<u32> {
        let mut cells = vec![0u32; self.n as usize];
        for (c, list) in self.lists.iter().enumerate() {
            for &id in &list.ids {
                cells[id as usize] = c as u32;
            }
        }
        cells
    }

    /// Squared distances from a query to every centroid.
    pub fn coarse_distances(&self, q: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.coarse.k()];
        self.coarse_scan.dists_into(q, &mut out);
        out
    }

    /// Approximate stored key: centroid plus decoded (or raw) residual.
    pub fn reconstruct_entry(&self, cell: usize, pos: usize) -> Vec<S> {
        let list = &self.lists[cell];
        let centroid = self.coarse.centroid(cell);
        match &self.fine {
            FineStorage::Pq { codebooks, .. } => {
                let code = &list.codes[pos * codebooks.subspaces()..(pos + 1) * codebooks.subspaces()];
                let mut v = pq_decode(codebooks, code);
                for (x, c) in v.iter_mut().zip(centroid.iter()) {
                    *x += *c;
                }
                v
            }
            FineStorage::Raw => {
                let r = &list.residuals[pos * self.dim..(pos + 1) * self.dim];
                centroid.iter().zip(r.iter()).map(|(c, r)| *c + *r).collect()
            }
        }
    }
}

/// Build an index over a store. Training uses a uniform sample of
/// `min(train_sample, N)` keys (all keys for small stores); PQ codebooks
/// are trained on the sample's residuals against their assigned centroids.
pub fn build_index<S: Scalar>(store: &VectorStore<S>, cfg: &BuildConfig) -> Result<IvfPqIndex<S>> {
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    let n = store.len();
    let dim = store.dim();
    if n < cfg.centroids {
        return Err(Error::InsufficientData { needed: cfg.centroids, got: n });
    }

    let mut rng = crate::seeded_rng(cfg.seed);
    let train_idx: Vec<usize> = if n > cfg.train_sample {
        rand::seq::index::sample(&mut rng, n, cfg.train_sample).into_vec()
    } else {
        (0..n).collect()
    };
    let mut train = Vec::with_capacity(train_idx.len() * dim);
    for &i in &train_idx {
        train.extend_from_slice(store.key(i));
    }

    let kmeans_cfg = KMeansConfig { k: cfg.centroids, max_iters: cfg.max_iters, seed: cfg.seed };
    let coarse = kmeans_train(&train, dim, &kmeans_cfg)?;

    let assignments = assign_all(&coarse, store.keys_flat());

    let fine = if cfg.bypass_pq {
        FineStorage::Raw
    } else {
        let mut train_residuals = Vec::with_capacity(train_idx.len() * dim);
        for &i in &train_idx {
            let cell = assignments[i] as usize;
            let centroid = coarse.centroid(cell);
            train_residuals.extend(store.key(i).iter().zip(centroid.iter()).map(|(x, c)| *x - *c));
        }
        let codebooks = pq_train(&train_residuals, dim, cfg.pq_m, cfg.pq_bits, cfg.seed)?;
        FineStorage::pq(&coarse, codebooks)
    };

    let mut lists: Vec<InvertedList<S>> = vec![InvertedList::default(); cfg.centroids];
    match &fine {
        FineStorage::Pq { codebooks, .. } => {
            let codes = encode_store(store, &coarse, &assignments, codebooks);
            let m = codebooks.subspaces();
            for i in 0..n {
                let list = &mut lists[assignments[i] as usize];
                list.ids.push(i as u64);
                list.codes.extend_from_slice(&codes[i * m..(i + 1) * m]);
            }
        }
        FineStorage::Raw => {
            for i in 0..n {
                let cell = assignments[i] as usize;
                let centroid = coarse.centroid(cell);
                let list = &mut lists[cell];
                list.ids.push(i as u64);
                list.residuals
                    .extend(store.key(i).iter().zip(centroid.iter()).map(|(x, c)| *x - *c));
            }
        }
    }

    let coarse_scan = CentroidScanner::new(coarse.centroids_flat(), dim);
    Ok(IvfPqIndex {
        coarse,
        coarse_scan,
        lists,
        labels: store.labels().to_vec(),
        fine,
        dim,
        n: n as u64,
    })
}

/// Encode every key's residual, one subspace at a time so the codeword
/// scans vectorize; returns flat `n * m` codes.
fn encode_store<S: Scalar>(
    store: &VectorStore<S>,
    coarse: &KMeansModel<S>,
    assignments: &[u32],
    codebooks: &PqCodebooks<S>,
) -> Vec<u8> {
    let n = store.len();
    let m = codebooks.subspaces();
    let sd = codebooks.sub_dim();
    let l = codebooks.codewords_per_subspace();
    let mut codes = vec![0u8; n * m];
    let mut sub_residuals = vec![S::zero(); n * sd];
    for sub in 0..m {
        let offset = sub * sd;
        for i in 0..n {
            let key = &store.key(i)[offset..offset + sd];
            let centroid = &coarse.centroid(assignments[i] as usize)[offset..offset + sd];
            for (t, (x, c)) in key.iter().zip(centroid.iter()).enumerate() {
                sub_residuals[i * sd + t] = *x - *c;
            }
        }
        let mut words = Vec::with_capacity(l * sd);
        for id in 0..l {
            words.extend_from_slice(codebooks.codeword(sub, id));
        }
        let scanner = CentroidScanner::new(&words, sd);
        for (i, (best, _)) in scanner.nearest_bulk(&sub_residuals).into_iter().enumerate() {
            codes[i * m + sub] = best as u8;
        }
    }
    codes
}

fn precompute_centroid_terms<S: Scalar>(coarse: &KMeansModel<S>, cb: &PqCodebooks<S>) -> Vec<S> {
    let k = coarse.k();
    let m = cb.subspaces();
    let l = cb.codewords_per_subspace();
    let sd = cb.sub_dim();
    let mut terms = vec![S::zero(); k * m * l];
    terms
        .par_chunks_mut(m * l)
        .enumerate()
        .for_each(|(c, row)| {
            let centroid = coarse.centroid(c);
            for sub in 0..m {
                let c_sub = &centroid[sub * sd..(sub + 1) * sd];
                for id in 0..l {
                    let w = cb.codeword(sub, id);
                    let mut dot_cw = S::zero();
                    let mut w_sq = S::zero();
                    for (a, b) in c_sub.iter().zip(w.iter()) {
                        dot_cw += *a * *b;
                        w_sq += *b * *b;
                    }
                    row[sub * l + id] = dot_cw + dot_cw + w_sq;
                }
            }
        });
    terms
}

struct HeapEntry<S> {
    distance: S,
    id: u64,
}

impl<S: Scalar> PartialEq for HeapEntry<S> {
    fn eq(&self, other: &Self) -> bool {
        self.distance == other.distance && self.id == other.id
    }
}
impl<S: Scalar> Eq for HeapEntry<S> {}
impl<S: Scalar> PartialOrd for HeapEntry<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<S: Scalar> Ord for HeapEntry<S> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Distances are finite by construction; ids break ties so the
        // ordering is total and deterministic.
        self.distance
            .partial_cmp(&other.distance)
            .unwrap_or(Ordering::Equal)
            .then(self.id.cmp(&other.id))
    }
}

struct TopK<S> {
    heap: BinaryHeap<HeapEntry<S>>,
    k: usize,
}

impl<S: Scalar> TopK<S> {
    fn new(k: usize) -> Self {
        Self { heap: BinaryHeap::with_capacity(k + 1), k }
    }

    #[inline]
    fn offer(&mut self, distance: S, id: u64) {
        if self.heap.len() < self.k {
            self.heap.push(HeapEntry { distance, id });
        } else if let Some(worst) = self.heap.peek() {
            if distance < worst.distance || (distance == worst.distance && id < worst.id) {
                self.heap.pop();
                self.heap.push(HeapEntry { distance, id });
            }
        }
    }

    #[inline]
    fn bound(&self) -> Option<S> {
        if self.heap.len() < self.k {
            None
        } else {
            self.heap.peek().map(|e| e.distance)
        }
    }

    fn into_sorted(self, labels: &[u32]) -> Vec<Hit<S>> {
        let mut entries: Vec<HeapEntry<S>> = self.heap.into_vec();
        entries.sort_by(|a, b| a.cmp(b));
        entries
            .into_iter()
            .map(|e| Hit { id: e.id, distance: e.distance, label: labels[e.id as usize] })
            .collect()
    }
}

/// Probe the `nprobe` cells nearest to `q` and return the best `k`
/// candidates by (asymmetric) squared distance.
pub fn search<S: Scalar>(
    index: &IvfPqIndex<S>,
    q: &[S],
    k: usize,
    nprobe: usize,
) -> Result<QueryResult<S>> {
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if q.len() != index.dim {
        return Err(Error::SizeMismatch { left: q.len(), right: index.dim });
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    let kc = index.coarse.k();
    if nprobe == 0 || nprobe > kc {
        return Err(Error::InvalidParameter(format!(
            "nprobe must be in 1..={kc}, got {nprobe}"
        )));
    }

    // Rank centroids by (distance, index).
    let mut dists = vec![S::zero(); kc];
    index.coarse_scan.dists_into(q, &mut dists);
    let mut ranked: Vec<(S, u32)> =
        dists.iter().enumerate().map(|(c, &d)| (d, c as u32)).collect();
    ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));

    let mut top = TopK::new(k);
    match &index.fine {
        FineStorage::Pq { codebooks, centroid_terms, query_layout } => {
            let m = codebooks.subspaces();
            let l = codebooks.codewords_per_subspace();
            let sd = codebooks.sub_dim();
            // Query-dependent table: -2 <q_m, w> per subspace and codeword,
            // accumulated coordinate-by-coordinate across all codewords.
            let mut query_terms = vec![S::zero(); m * l];
            for sub in 0..m {
                let out = &mut query_terms[sub * l..(sub + 1) * l];
                let q_sub = &q[sub * sd..(sub + 1) * sd];
                for (t, &x) in q_sub.iter().enumerate() {
                    let w = x + x;
                    let row = &query_layout[sub * sd * l + t * l..sub * sd * l + (t + 1) * l];
                    for (o, &c) in out.iter_mut().zip(row.iter()) {
                        *o = *o - w * c;
                    }
                }
            }
            let mut combined = vec![S::zero(); m * l];
            for &(base, cell) in ranked.iter().take(nprobe) {
                let list = &index.lists[cell as usize];
                if list.ids.is_empty() {
                    continue;
                }
                let cell_terms =
                    &centroid_terms[cell as usize * m * l..(cell as usize + 1) * m * l];
                if list.ids.len() > l {
                    // Folding the two tables costs m*l adds and saves one
                    // add per scanned subspace; worth it for long lists.
                    for ((dst, &a), &b) in
                        combined.iter_mut().zip(cell_terms.iter()).zip(query_terms.iter())
                    {
                        *dst = a + b;
                    }
                    for (pos, &id) in list.ids.iter().enumerate() {
                        let code = &list.codes[pos * m..(pos + 1) * m];
                        let mut dist = base;
                        for (sub, &cd) in code.iter().enumerate() {
                            dist += combined[sub * l + cd as usize];
                        }
                        if top.bound().map_or(true, |b| dist < b) || top.heap.len() < k {
                            top.offer(dist, id);
                        }
                    }
                } else {
                    for (pos, &id) in list.ids.iter().enumerate() {
                        let code = &list.codes[pos * m..(pos + 1) * m];
                        let mut dist = base;
                        for (sub, &cd) in code.iter().enumerate() {
                            let slot = sub * l + cd as usize;
                            dist += cell_terms[slot] + query_terms[slot];
                        }
                        top.offer(dist, id);
                    }
                }
            }
        }
        FineStorage::Raw => {
            let mut q_res = vec![S::zero(); index.dim];
            for &(_, cell) in ranked.iter().take(nprobe) {
                let list = &index.lists[cell as usize];
                if list.ids.is_empty() {
                    continue;
                }
                let centroid = index.coarse.centroid(cell as usize);
                for ((dst, &qi), &ci) in q_res.iter_mut().zip(q.iter()).zip(centroid.iter()) {
                    *dst = qi - ci;
                }
                for (pos, &id) in list.ids.iter().enumerate() {
                    let r = &list.residuals[pos * index.dim..(pos + 1) * index.dim];
                    top.offer(l2_sq(&q_res, r), id);
                }
            }
        }
    }
    Ok(QueryResult { hits: top.into_sorted(&index.labels) })
}

/// Search a batch of queries; results preserve query order.
pub fn search_batch<S: Scalar>(
    index: &IvfPqIndex<S>,
    queries: &[Vec<S>],
    k: usize,
    nprobe: usize,
) -> Result<Vec<QueryResult<S>>> {
    queries.par_iter().map(|q| search(index, q, k, nprobe)).collect()
}

/// Exact k-NN by full linear scan; the ground-truth oracle for recall and
/// probe statistics.
pub fn exact_search<S: Scalar>(store: &VectorStore<S>, q: &[S], k: usize) -> Result<QueryResult<S>> {
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    if q.len() != store.dim() {
        return Err(Error::SizeMismatch { left: q.len(), right: store.dim() });
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    let mut top = TopK::new(k);
    for (i, key) in store.iter_keys().enumerate() {
        top.offer(l2_sq(q, key), i as u64);
    }
    Ok(QueryResult { hits: top.into_sorted(store.labels()) })
}

/// Fraction of the oracle's ids that the approximate result recovered.
pub fn recall_at_k<S: Scalar>(approx: &QueryResult<S>, exact: &QueryResult<S>) -> f64 {
    if exact.hits.is_empty() {
        return 1.0;
    }
    let truth: std::collections::HashSet<u64> = exact.hits.iter().map(|h| h.id).collect();
    let got = approx.hits.iter().filter(|h| truth.contains(&h.id)).count();
    got as f64 / truth.len() as f64
}
