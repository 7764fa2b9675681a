//! Binary format round trips are bit-exact.

use dispann::ivfpq::io::{read_index, write_index};
use dispann::ivfpq::{build_index, search, BuildConfig};
use dispann::seeded_rng;
use dispann::store::VectorStore;
use rand::Rng;

#[test]
fn store_write_read_write_is_byte_identical() {
    let mut rng = seeded_rng(901);
    let dim = 24;
    let keys: Vec<f32> = (0..500 * dim).map(|_| rng.random_range(-100.0..100.0)).collect();
    let labels: Vec<u32> = (0..500).map(|_| rng.random_range(0..1_000_000)).collect();
    let store = VectorStore::from_parts(dim, keys, labels).unwrap();

    let dir = std::env::temp_dir();
    let p1 = dir.join("dispann_fmt_store_a.dknn");
    let p2 = dir.join("dispann_fmt_store_b.dknn");
    store.write_to(&p1).unwrap();
    let back = VectorStore::<f32>::read_from(&p1).unwrap();
    back.write_to(&p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    std::fs::remove_file(p1).ok();
    std::fs::remove_file(p2).ok();
}

#[test]
fn store_header_layout_is_stable() {
    let mut store = VectorStore::<f32>::new(2).unwrap();
    store.push(&[1.0, 2.0], 3).unwrap();
    let path = std::env::temp_dir().join("dispann_fmt_header.dknn");
    store.write_to(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::remove_file(&path).ok();
    assert_eq!(&bytes[0..4], b"DKNN");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1); // version
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2); // dim
    assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 1); // count
    assert_eq!(f32::from_le_bytes(bytes[20..24].try_into().unwrap()), 1.0);
    assert_eq!(f32::from_le_bytes(bytes[24..28].try_into().unwrap()), 2.0);
    assert_eq!(u32::from_le_bytes(bytes[28..32].try_into().unwrap()), 3); // label
    assert_eq!(bytes.len(), 32);
}

#[test]
fn index_header_layout_is_stable() {
    let mut rng = seeded_rng(907);
    let keys: Vec<f32> = (0..400 * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let store = VectorStore::from_parts(8, keys, vec![0; 400]).unwrap();
    let cfg = BuildConfig { centroids: 4, pq_m: 2, pq_bits: 4, ..Default::default() };
    let index = build_index(&store, &cfg).unwrap();
    let path = std::env::temp_dir().join("dispann_fmt_idx_header.divf");
    write_index(&index, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[0..4], b"DIVF");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1); // version
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 8); // dim
    assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 4); // K
    assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 2); // M
    assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 4); // bits
    assert_eq!(u64::from_le_bytes(bytes[24..32].try_into().unwrap()), 400); // N
    // centroids: 4*8 f32, codebooks: 2*16*4 f32, then lists and labels.
    let expected = 32 + 4 * 8 * 4 + 2 * 16 * 4 * 4 + 4 * 8 + 400 * 8 + 400 * 2 + 400 * 4;
    assert_eq!(bytes.len(), expected);
    std::fs::remove_file(&path).ok();
}

#[test]
fn reloaded_index_searches_identically() {
    let mut rng = seeded_rng(911);
    let dim = 16;
    let keys: Vec<f32> = (0..2000 * dim).map(|_| rng.random_range(-5.0..5.0)).collect();
    let labels: Vec<u32> = (0..2000).map(|_| rng.random_range(0..40)).collect();
    let store = VectorStore::from_parts(dim, keys, labels).unwrap();
    let cfg = BuildConfig { centroids: 16, pq_m: 4, pq_bits: 8, seed: 3, ..Default::default() };
    let index = build_index(&store, &cfg).unwrap();
    let path = std::env::temp_dir().join("dispann_fmt_idx_search.divf");
    write_index(&index, &path).unwrap();
    let reloaded = read_index(&path).unwrap();
    std::fs::remove_file(&path).ok();

    assert_eq!(reloaded.len(), index.len());
    assert_eq!(reloaded.labels(), index.labels());
    for _ in 0..50 {
        let q: Vec<f32> = (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect();
        let a = search(&index, &q, 8, 8).unwrap();
        let b = search(&reloaded, &q, 8, 8).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn corrupted_magic_is_rejected() {
    let path = std::env::temp_dir().join("dispann_fmt_bad.dknn");
    std::fs::write(&path, b"NOPE00000000").unwrap();
    assert!(VectorStore::<f32>::read_from(&path).is_err());
    assert!(read_index(&path).is_err());
    std::fs::remove_file(&path).ok();
}
