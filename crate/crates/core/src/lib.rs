//! Approximate nearest-neighbor search over labeled vector datastores, with
//! tooling to measure and optimize the angular dispersion of the keys.
//!
//! The crate is organized around a simple pipeline:
//!
//! 1. [`synth`] generates labeled datastores from mixtures of power spherical
//!    distributions with controllable concentration.
//! 2. [`dispersion`] spreads out key *directions* (norms are preserved) by
//!    gradient descent on one of two objectives: pairwise hyperspherical
//!    energy or a sliced objective over random great circles.
//! 3. [`ivfpq`] builds an inverted-file index with product-quantized
//!    residuals and answers k-NN queries by probing the nearest cells.
//! 4. [`analysis`] reports cluster balance (imbalance factor), expected
//!    number of probes, clustering quality, and datastore symmetry.
//! 5. [`bench`] measures search throughput and runs the end-to-end
//!    disperse/build/bench comparison.
//! 6. [`knn_interp`] turns retrieved neighbors into a token distribution and
//!    interpolates it with a model distribution.
//!
//! All numeric kernels are generic over the scalar type via [`Scalar`];
//! `f32` is the wire format and the practical choice for large indexes,
//! `f64` is used by the optimizer and by oracle tests.

pub mod analysis;
pub mod bench;
pub mod dispersion;
pub mod error;
pub mod geometry;
pub mod ivfpq;
pub mod knn_interp;
pub mod scalar;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Seeded RNG used across the crate; fixed algorithm so that seeds mean the
/// same thing everywhere.
pub type Rng = rand_chacha::ChaCha12Rng;

/// Build the crate-standard RNG from a seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

/// Single-precision datastore: the on-disk representation.
pub type StoreF32 = store::VectorStore<f32>;
/// Double-precision datastore, used by the dispersion optimizer and oracles.
pub type StoreF64 = store::VectorStore<f64>;
/// Single-precision index: the on-disk representation.
pub type IndexF32 = ivfpq::IvfPqIndex<f32>;
/// Double-precision index, used by oracle tests.
pub type IndexF64 = ivfpq::IvfPqIndex<f64>;
