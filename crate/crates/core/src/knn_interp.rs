//! Neighbor voting and model interpolation.
//!
//! Retrieved neighbors vote for their labels with weight
//! `exp(-distance^2 / T)` (the stored squared distance feeds the exponent
//! directly); the normalized vote distribution is interpolated with a model
//! distribution as `(1 - lambda) * p_model + lambda * p_knn`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ivfpq::{exact_search, search, IvfPqIndex, QueryResult};
use crate::scalar::{l2_sq, Scalar};
use crate::store::VectorStore;

/// Probability distribution over a token vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenDistribution {
    probs: Vec<f64>,
}

impl TokenDistribution {
    /// Validates nonnegativity and unit total mass (within `1e-9`).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidParameter("empty distribution".into()));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidParameter("probabilities must be finite and >= 0".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(vocab_size: usize) -> Self {
        Self { probs: vec![1.0 / vocab_size as f64; vocab_size] }
    }

    pub fn vocab_size(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, token: u32) -> f64 {
        self.probs[token as usize]
    }

    /// Highest-probability token, ties to the lowest id.
    pub fn argmax(&self) -> u32 {
        let mut best = 0usize;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best as u32
    }
}

/// Retrieval-and-interpolation parameters.
#[derive(Debug, Clone)]
pub struct InterpConfig {
    pub k: usize,
    pub temperature: f64,
    pub lambda: f64,
    pub nprobe: usize,
    /// Recompute hit distances exactly from the store before voting
    /// (oracle mode); the default feeds the stored approximate distances.
    pub exact_distances: bool,
}

impl Default for InterpConfig {
    fn default() -> Self {
        Self {
            k: 8,
            temperature: 100.0,
            lambda: 0.3,
            nprobe: crate::ivfpq::DEFAULT_NPROBE,
            exact_distances: false,
        }
    }
}

impl InterpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidParameter("temperature must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter("lambda must be in [0, 1]".into()));
        }
        if self.nprobe < 1 {
            return Err(Error::InvalidParameter("nprobe must be >= 1".into()));
        }
        Ok(())
    }
}

/// Temperature-weighted neighbor vote distribution.
///
/// `p(y) ∝ sum over hits with label y of exp(-distance / T)` where
/// `distance` is the stored squared distance. The smallest distance is
/// subtracted before exponentiation, which cancels in the normalization
/// but avoids underflow at small temperatures.
pub fn knn_distribution<S: Scalar>(
    hits: &QueryResult<S>,
    temperature: f64,
    vocab_size: usize,
) -> Result<TokenDistribution> {
    if hits.hits.is_empty() {
        return Err(Error::EmptyHits);
    }
    if !(temperature > 0.0) {
        return Err(Error::InvalidParameter("temperature must be > 0".into()));
    }
    let min_d = hits
        .hits
        .iter()
        .map(|h| h.distance.widen())
        .fold(f64::INFINITY, f64::min);
    let mut probs = vec![0.0f64; vocab_size];
    for hit in &hits.hits {
        if hit.label as usize >= vocab_size {
            return Err(Error::SizeMismatch { left: hit.label as usize + 1, right: vocab_size });
        }
        probs[hit.label as usize] += (-(hit.distance.widen() - min_d) / temperature).exp();
    }
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
    Ok(TokenDistribution { probs })
}

/// Convex combination `(1 - lambda) * p_model + lambda * p_knn`.
pub fn interpolate(
    p_model: &TokenDistribution,
    p_knn: &TokenDistribution,
    lambda: f64,
) -> Result<TokenDistribution> {
    if p_model.vocab_size() != p_knn.vocab_size() {
        return Err(Error::SizeMismatch { left: p_model.vocab_size(), right: p_knn.vocab_size() });
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter("lambda must be in [0, 1]".into()));
    }
    let probs = p_model
        .probs
        .iter()
        .zip(p_knn.probs.iter())
        .map(|(m, k)| (1.0 - lambda) * m + lambda * k)
        .collect();
    Ok(TokenDistribution { probs })
}

/// Retrieve, vote, interpolate: one prediction step against the index.
///
/// The store is consulted only in `exact_distances` mode, where hit
/// distances are recomputed by direct scan before voting.
pub fn step_predict<S: Scalar>(
    index: &IvfPqIndex<S>,
    store: &VectorStore<S>,
    h: &[S],
    p_model: &TokenDistribution,
    cfg: &InterpConfig,
) -> Result<TokenDistribution> {
    cfg.validate()?;
    if cfg.lambda == 0.0 {
        return Ok(p_model.clone());
    }
    let mut hits = search(index, h, cfg.k, cfg.nprobe.min(index.centroid_count()))?;
    if cfg.exact_distances {
        for hit in hits.hits.iter_mut() {
            hit.distance = l2_sq(h, store.key(hit.id as usize));
        }
        hits.hits.sort_by(|a, b| {
            a.distance
                .partial_cmp(&b.distance)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.id.cmp(&b.id))
        });
    }
    let p_knn = knn_distribution(&hits, cfg.temperature, p_model.vocab_size())?;
    interpolate(p_model, &p_knn, cfg.lambda)
}

/// Exact-retrieval analogue of [`step_predict`], used as an oracle.
pub fn step_predict_exact<S: Scalar>(
    store: &VectorStore<S>,
    h: &[S],
    p_model: &TokenDistribution,
    cfg: &InterpConfig,
) -> Result<TokenDistribution> {
    cfg.validate()?;
    if cfg.lambda == 0.0 {
        return Ok(p_model.clone());
    }
    let hits = exact_search(store, h, cfg.k)?;
    let p_knn = knn_distribution(&hits, cfg.temperature, p_model.vocab_size())?;
    interpolate(p_model, &p_knn, cfg.lambda)
}
