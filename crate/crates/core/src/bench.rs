//! Search-throughput measurement and the end-to-end dispersion experiment.
//!
//! Timing covers only the search phase: query generation, index build, and
//! warmup run outside the clock, and phase timers are reported so tests can
//! verify that. Queries are store entries reconstructed from the index
//! (decoded residual plus centroid) with Gaussian noise at 1% of the key
//! norm, so they exercise the populated cells the way in-distribution
//! lookups would; a uniform-query mode exists for contrast.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::analysis::{analyze, imbalance_factor, AnalysisReport};
use crate::dispersion::{disperse, DispersionConfig};
use crate::error::{Error, Result};
use crate::ivfpq::{build_index, search_batch, BuildConfig, IvfPqIndex, DEFAULT_NPROBE};
use crate::scalar::Scalar;
use crate::store::VectorStore;
use crate::synth::{make_synthetic_store, SynthSpec};

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub query_count: usize,
    pub batch_size: usize,
    pub nprobe: usize,
    pub k: usize,
    pub workers: usize,
    pub warmup_batches: usize,
    pub repeats: usize,
    /// Draw queries uniformly at random instead of near stored keys.
    pub uniform_queries: bool,
    /// Gaussian noise scale relative to the key norm.
    pub noise_fraction: f64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            query_count: 10_000,
            batch_size: 10,
            nprobe: DEFAULT_NPROBE,
            k: 8,
            workers: 1,
            warmup_batches: 10,
            repeats: 3,
            uniform_queries: false,
            noise_fraction: 0.01,
        }
    }
}

impl BenchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.query_count == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter("query_count and batch_size must be >= 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidParameter("workers must be >= 1".into()));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidParameter("repeats must be >= 1".into()));
        }
        if self.k == 0 || self.nprobe == 0 {
            return Err(Error::InvalidParameter("k and nprobe must be >= 1".into()));
        }
        Ok(())
    }
}

/// Wall-clock seconds per phase; `search_secs` has one entry per repeat.
#[derive(Debug, Clone, Default)]
pub struct PhaseTimers {
    pub query_gen_secs: f64,
    pub warmup_secs: f64,
    pub search_secs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    /// Median queries/second over the repeats.
    pub qps: f64,
    pub qps_runs: Vec<f64>,
    pub spec: BenchSpec,
    pub imbalance_factor: f64,
    pub centroids: usize,
    pub n: u64,
    pub timers: PhaseTimers,
}

/// Measure search throughput. The only nondeterministic output is timing;
/// query generation is fully determined by the RNG state.
pub fn run_bench<S: Scalar>(
    index: &IvfPqIndex<S>,
    spec: &BenchSpec,
    rng: &mut crate::Rng,
) -> Result<BenchResult> {
    spec.validate()?;
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    let mut timers = PhaseTimers::default();

    let t0 = Instant::now();
    let queries = generate_queries(index, spec, rng);
    timers.query_gen_secs = t0.elapsed().as_secs_f64();

    let nprobe = spec.nprobe.min(index.centroid_count());
    let batches: Vec<&[Vec<S>]> = queries.chunks(spec.batch_size).collect();

    let t0 = Instant::now();
    for batch in batches.iter().take(spec.warmup_batches) {
        std::hint::black_box(search_batch(index, batch, spec.k, nprobe)?);
    }
    timers.warmup_secs = t0.elapsed().as_secs_f64();

    let mut qps_runs = Vec::with_capacity(spec.repeats);
    for _ in 0..spec.repeats {
        let elapsed = if spec.workers == 1 {
            let t0 = Instant::now();
            for batch in &batches {
                for q in batch.iter() {
                    std::hint::black_box(crate::ivfpq::search(index, q, spec.k, nprobe)?);
                }
            }
            t0.elapsed().as_secs_f64()
        } else {
            let cursor = AtomicUsize::new(0);
            let t0 = Instant::now();
            std::thread::scope(|scope| -> Result<()> {
                let mut handles = Vec::new();
                for _ in 0..spec.workers {
                    let cursor = &cursor;
                    let batches = &batches;
                    handles.push(scope.spawn(move || -> Result<()> {
                        loop {
                            let next = cursor.fetch_add(1, Ordering::Relaxed);
                            if next >= batches.len() {
                                return Ok(());
                            }
                            for q in batches[next].iter() {
                                std::hint::black_box(crate::ivfpq::search(index, q, spec.k, nprobe)?);
                            }
                        }
                    }));
                }
                for h in handles {
                    h.join().expect("bench worker panicked")?;
                }
                Ok(())
            })?;
            t0.elapsed().as_secs_f64()
        };
        qps_runs.push(spec.query_count as f64 / elapsed);
        timers.search_secs.push(elapsed);
    }

    let qps = median(&qps_runs);
    Ok(BenchResult {
        qps,
        qps_runs,
        spec: spec.clone(),
        imbalance_factor: imbalance_factor(&index.list_sizes())?,
        centroids: index.centroid_count(),
        n: index.len(),
        timers,
    })
}

fn generate_queries<S: Scalar>(
    index: &IvfPqIndex<S>,
    spec: &BenchSpec,
    rng: &mut crate::Rng,
) -> Vec<Vec<S>> {
    let dim = index.dim();
    let sizes = index.list_sizes();
    let total = index.len() as usize;
    // Prefix sums map a flat entry number to (cell, position).
    let mut prefix = Vec::with_capacity(sizes.len() + 1);
    let mut acc = 0u64;
    prefix.push(0u64);
    for &s in &sizes {
        acc += s;
        prefix.push(acc);
    }
    let mean_norm = {
        let probe = (total.min(256)).max(1);
        let mut acc = 0.0f64;
        for t in 0..probe {
            let flat = (t * total / probe) as u64;
            let cell = prefix.partition_point(|&p| p <= flat) - 1;
            let pos = (flat - prefix[cell]) as usize;
            let v = index.reconstruct_entry(cell, pos);
            acc += v.iter().map(|x| x.widen() * x.widen()).sum::<f64>().sqrt();
        }
        acc / probe as f64
    };

    (0..spec.query_count)
        .map(|_| {
            if spec.uniform_queries {
                let dir = crate::geometry::random_unit_f64(dim, rng);
                dir.into_iter().map(|x| S::from_f64_lossy(x * mean_norm)).collect()
            } else {
                let flat = rng.random_range(0..total) as u64;
                let cell = prefix.partition_point(|&p| p <= flat) - 1;
                let pos = (flat - prefix[cell]) as usize;
                let mut v = index.reconstruct_entry(cell, pos);
                let norm = v.iter().map(|x| x.widen() * x.widen()).sum::<f64>().sqrt();
                let sigma = spec.noise_fraction * norm / (dim as f64).sqrt();
                for x in v.iter_mut() {
                    let noise: f64 = StandardNormal.sample(rng);
                    *x += S::from_f64_lossy(noise * sigma);
                }
                v
            }
        })
        .collect()
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite qps"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// One row of a concentration sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub kappa: f64,
    pub qps: f64,
    pub imbalance_factor: f64,
}

/// For each concentration: generate a store, build an index, bench it.
///
/// All stores share `seed` (and therefore component means and key lengths),
/// so rows differ only through the concentration itself.
pub fn sweep_concentration(
    spec: &BenchSpec,
    kappa_list: &[f64],
    store_size: usize,
    dim: usize,
    centroids: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if kappa_list.is_empty() {
        return Err(Error::InvalidParameter("kappa list must be nonempty".into()));
    }
    let mut rows = Vec::with_capacity(kappa_list.len());
    for &kappa in kappa_list {
        let synth = SynthSpec { dim, count: store_size, kappa, seed, ..Default::default() };
        let store: VectorStore<f32> = make_synthetic_store(&synth)?;
        let build = BuildConfig { centroids, seed, ..Default::default() };
        let index = build_index(&store, &build)?;
        let mut rng = crate::seeded_rng(seed);
        let result = run_bench(&index, spec, &mut rng)?;
        rows.push(SweepRow { kappa, qps: result.qps, imbalance_factor: result.imbalance_factor });
    }
    Ok(rows)
}

/// Analysis plus throughput for one index/store pair.
#[derive(Debug, Clone)]
pub struct PipelineStage {
    pub analysis: AnalysisReport,
    pub bench: BenchResult,
}

/// Build and bench the raw store, then the dispersed store, under
/// identical build and bench parameters.
pub fn pipeline_experiment<S: Scalar>(
    store: &VectorStore<S>,
    disp_cfg: &DispersionConfig,
    build_cfg: &BuildConfig,
    spec: &BenchSpec,
) -> Result<(PipelineStage, PipelineStage)> {
    let before = stage(store, build_cfg, spec)?;
    let (dispersed, _) = disperse(store, disp_cfg)?;
    let after = stage(&dispersed, build_cfg, spec)?;
    Ok((before, after))
}

fn stage<S: Scalar>(
    store: &VectorStore<S>,
    build_cfg: &BuildConfig,
    spec: &BenchSpec,
) -> Result<PipelineStage> {
    let index = build_index(store, build_cfg)?;
    let analysis = analyze(&index, store, 1000, spec.k, spec.nprobe.min(index.centroid_count()), build_cfg.seed)?;
    let mut rng = crate::seeded_rng(build_cfg.seed);
    let bench = run_bench(&index, spec, &mut rng)?;
    Ok(PipelineStage { analysis, bench })
}
