//! Product quantization: independent k-means codebooks per subspace.

use crate::error::{Error, Result};
use crate::ivfpq::kmeans::{kmeans_train, KMeansConfig};
use crate::scalar::{l2_sq, Scalar};

/// Per-subspace codebooks. `m` subspaces of `sub_dim = d / m` coordinates,
/// `l = 2^bits` codewords each; codes are one byte per subspace.
#[derive(Debug, Clone)]
pub struct PqCodebooks<S> {
    m: usize,
    l: usize,
    sub_dim: usize,
    /// Flat `[m][l][sub_dim]`.
    codewords: Vec<S>,
}

impl<S: Scalar> PqCodebooks<S> {
    pub(crate) fn from_parts(m: usize, l: usize, sub_dim: usize, codewords: Vec<S>) -> Self {
        debug_assert_eq!(codewords.len(), m * l * sub_dim);
        Self { m, l, sub_dim, codewords }
    }

    pub fn subspaces(&self) -> usize {
        self.m
    }

    pub fn codewords_per_subspace(&self) -> usize {
        self.l
    }

    pub fn sub_dim(&self) -> usize {
        self.sub_dim
    }

    pub fn dim(&self) -> usize {
        self.m * self.sub_dim
    }

    #[inline]
    pub fn codeword(&self, sub: usize, id: usize) -> &[S] {
        let base = (sub * self.l + id) * self.sub_dim;
        &self.codewords[base..base + self.sub_dim]
    }

    pub fn codewords_flat(&self) -> &[S] {
        &self.codewords
    }
}

/// Train per-subspace codebooks on row-major residual vectors.
pub fn pq_train<S: Scalar>(
    residuals: &[S],
    dim: usize,
    m: usize,
    bits: u32,
    seed: u64,
) -> Result<PqCodebooks<S>> {
    if m == 0 || dim % m != 0 {
        return Err(Error::BadShape(format!("dim {dim} not divisible by m {m}")));
    }
    if bits == 0 || bits > 8 {
        return Err(Error::InvalidParameter(format!("bits must be in 1..=8, got {bits}")));
    }
    let l = 1usize << bits;
    if dim == 0 || residuals.len() % dim != 0 {
        return Err(Error::BadShape("residual buffer not divisible by dim".into()));
    }
    let n = residuals.len() / dim;
    if n < l {
        return Err(Error::InsufficientData { needed: l, got: n });
    }
    let sub_dim = dim / m;
    let mut codewords = Vec::with_capacity(m * l * sub_dim);
    let mut sub_buf = vec![S::zero(); n * sub_dim];
    for sub in 0..m {
        for (row, point) in residuals.chunks_exact(dim).enumerate() {
            sub_buf[row * sub_dim..(row + 1) * sub_dim]
                .copy_from_slice(&point[sub * sub_dim..(sub + 1) * sub_dim]);
        }
        let cfg = KMeansConfig::new(l, seed.wrapping_add(sub as u64));
        let model = kmeans_train(&sub_buf, sub_dim, &cfg)?;
        codewords.extend_from_slice(model.centroids_flat());
    }
    Ok(PqCodebooks::from_parts(m, l, sub_dim, codewords))
}

/// Nearest codeword id per subspace, ties to the lowest index.
pub fn pq_encode<S: Scalar>(cb: &PqCodebooks<S>, r: &[S]) -> Vec<u8> {
    debug_assert_eq!(r.len(), cb.dim());
    let mut code = Vec::with_capacity(cb.m);
    for sub in 0..cb.m {
        let piece = &r[sub * cb.sub_dim..(sub + 1) * cb.sub_dim];
        let mut best = 0usize;
        let mut best_d = l2_sq(piece, cb.codeword(sub, 0));
        for id in 1..cb.l {
            let d = l2_sq(piece, cb.codeword(sub, id));
            if d < best_d {
                best_d = d;
                best = id;
            }
        }
        code.push(best as u8);
    }
    code
}

/// Reconstruct the vector a code stands for.
pub fn pq_decode<S: Scalar>(cb: &PqCodebooks<S>, code: &[u8]) -> Vec<S> {
    debug_assert_eq!(code.len(), cb.m);
    let mut out = Vec::with_capacity(cb.dim());
    for (sub, &id) in code.iter().enumerate() {
        out.extend_from_slice(cb.codeword(sub, id as usize));
    }
    out
}

/// Asymmetric-distance lookup table for one query residual: flat `[m][l]`
/// squared distances between the query's sub-vectors and every codeword.
/// The distance to any code is the sum of its `m` table entries.
pub fn adc_table<S: Scalar>(cb: &PqCodebooks<S>, q_residual: &[S]) -> Vec<S> {
    debug_assert_eq!(q_residual.len(), cb.dim());
    let mut table = Vec::with_capacity(cb.m * cb.l);
    for sub in 0..cb.m {
        let piece = &q_residual[sub * cb.sub_dim..(sub + 1) * cb.sub_dim];
        for id in 0..cb.l {
            table.push(l2_sq(piece, cb.codeword(sub, id)));
        }
    }
    table
}

/// Sum the table entries selected by a code.
#[inline]
pub fn table_distance<S: Scalar>(table: &[S], l: usize, code: &[u8]) -> S {
    let mut acc = S::zero();
    for (sub, &id) in code.iter().enumerate() {
        acc += table[sub * l + id as usize];
    }
    acc
}
