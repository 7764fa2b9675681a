//! Index file format.
//!
//! Little-endian layout: magic `DIVF`, version `u32`, dim `u32`, K `u32`,
//! M `u32`, bits `u32`, N `u64`, centroids (`K*d` f32), codebooks
//! (`M*L*(d/M)` f32), then per list: length `u64`, ids `u64[len]`, codes
//! `u8[len*M]`; labels `u32[N]` appended. Round-trips are bit-exact.
//! Bypass (raw-residual) indexes have no code representation and cannot be
//! written.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ivfpq::kmeans::{KMeansConfig, KMeansModel};
use crate::ivfpq::pq::PqCodebooks;
use crate::ivfpq::{FineStorage, InvertedList, IvfPqIndex};
use crate::scalar::Scalar;
use crate::store::{read_f32_vec, read_u32, read_u32_vec, read_u64, read_u64_vec};

pub const INDEX_MAGIC: [u8; 4] = *b"DIVF";
pub const INDEX_VERSION: u32 = 1;

/// Write an index, converting scalars to `f32`.
pub fn write_index<S: Scalar>(index: &IvfPqIndex<S>, path: impl AsRef<Path>) -> Result<()> {
    let codebooks = index
        .codebooks()
        .ok_or_else(|| Error::Unsupported("bypass (raw-residual) indexes cannot be serialized".into()))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&INDEX_MAGIC)?;
    w.write_all(&INDEX_VERSION.to_le_bytes())?;
    w.write_all(&(index.dim() as u32).to_le_bytes())?;
    w.write_all(&(index.centroid_count() as u32).to_le_bytes())?;
    w.write_all(&(codebooks.subspaces() as u32).to_le_bytes())?;
    let bits = codebooks.codewords_per_subspace().trailing_zeros();
    w.write_all(&bits.to_le_bytes())?;
    w.write_all(&index.len().to_le_bytes())?;
    for &x in index.coarse_model().centroids_flat() {
        w.write_all(&(x.widen() as f32).to_le_bytes())?;
    }
    for &x in codebooks.codewords_flat() {
        w.write_all(&(x.widen() as f32).to_le_bytes())?;
    }
    for list in &index.lists {
        w.write_all(&(list.ids.len() as u64).to_le_bytes())?;
        for &id in &list.ids {
            w.write_all(&id.to_le_bytes())?;
        }
        w.write_all(&list.codes)?;
    }
    for &label in index.labels() {
        w.write_all(&label.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a `DIVF` file.
pub fn read_index(path: impl AsRef<Path>) -> Result<IvfPqIndex<f32>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != INDEX_MAGIC {
        return Err(Error::Format("bad index magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != INDEX_VERSION {
        return Err(Error::Format(format!("unsupported index version {version}")));
    }
    let dim = read_u32(&mut r)? as usize;
    let k = read_u32(&mut r)? as usize;
    let m = read_u32(&mut r)? as usize;
    let bits = read_u32(&mut r)?;
    let n = read_u64(&mut r)?;
    if dim == 0 || k == 0 || m == 0 || dim % m != 0 || bits == 0 || bits > 8 {
        return Err(Error::Format("inconsistent index header".into()));
    }
    let l = 1usize << bits;
    let centroids = read_f32_vec(&mut r, k * dim)?;
    let codewords = read_f32_vec(&mut r, m * l * (dim / m))?;
    let coarse = KMeansModel::from_centroids(centroids, dim, KMeansConfig::new(k, 0));
    let codebooks = PqCodebooks::from_parts(m, l, dim / m, codewords);

    let mut lists = Vec::with_capacity(k);
    let mut total = 0u64;
    for _ in 0..k {
        let len = read_u64(&mut r)? as usize;
        total += len as u64;
        let ids = read_u64_vec(&mut r, len)?;
        let mut codes = vec![0u8; len * m];
        r.read_exact(&mut codes)?;
        lists.push(InvertedList { ids, codes, residuals: Vec::new() });
    }
    if total != n {
        return Err(Error::Format(format!("list sizes sum to {total}, header says {n}")));
    }
    let labels = read_u32_vec(&mut r, n as usize)?;

    let fine = FineStorage::pq(&coarse, codebooks);
    let coarse_scan = crate::ivfpq::CentroidScanner::new(coarse.centroids_flat(), dim);
    Ok(IvfPqIndex { coarse, coarse_scan, lists, labels, fine, dim, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ivfpq::{build_index, search, BuildConfig};
    use crate::seeded_rng;
    use crate::store::VectorStore;
    use rand::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = seeded_rng(503);
        let keys: Vec<f32> = (0..500 * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels: Vec<u32> = (0..500).map(|_| rng.random_range(0..9)).collect();
        let store = VectorStore::from_parts(8, keys, labels).unwrap();
        let cfg = BuildConfig { centroids: 8, pq_m: 4, pq_bits: 5, ..Default::default() };
        let index = build_index(&store, &cfg).unwrap();

        let dir = std::env::temp_dir();
        let p1 = dir.join("dispann_idx_a.divf");
        let p2 = dir.join("dispann_idx_b.divf");
        write_index(&index, &p1).unwrap();
        let back = read_index(&p1).unwrap();
        write_index(&back, &p2).unwrap();
        let b1 = std::fs::read(&p1).unwrap();
        let b2 = std::fs::read(&p2).unwrap();
        assert_eq!(b1, b2);

        // The reloaded index answers queries identically.
        let q: Vec<f32> = store.key(3).to_vec();
        let a = search(&index, &q, 5, 8).unwrap();
        let b = search(&back, &q, 5, 8).unwrap();
        assert_eq!(a, b);
        std::fs::remove_file(p1).ok();
        std::fs::remove_file(p2).ok();
    }

    #[test]
    fn bypass_indexes_are_not_serializable() {
        let mut rng = seeded_rng(509);
        let keys: Vec<f32> = (0..100 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let store = VectorStore::from_parts(4, keys, vec![0; 100]).unwrap();
        let cfg = BuildConfig { centroids: 4, bypass_pq: true, ..Default::default() };
        let index = build_index(&store, &cfg).unwrap();
        let path = std::env::temp_dir().join("dispann_idx_bypass.divf");
        assert!(matches!(write_index(&index, &path), Err(Error::Unsupported(_))));
    }
}
