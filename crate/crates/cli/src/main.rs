//! Command-line driver: generate stores, disperse them, build and query
//! indexes, and run the measurement harness.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use dispann::analysis::analyze;
use dispann::bench::{run_bench, sweep_concentration, BenchSpec};
use dispann::dispersion::{disperse, DispersionConfig, Regularizer};
use dispann::ivfpq::{build_index, io as index_io, search_batch, BuildConfig};
use dispann::knn_interp::{step_predict, InterpConfig, TokenDistribution};
use dispann::store::VectorStore;
use dispann::synth::{make_synthetic_store, SynthSpec};

#[derive(Parser)]
#[command(name = "dispann", version, about = "IVF-PQ search over labeled vector stores, with angular-dispersion tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum RegArg {
    Sliced,
    Mhe,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic store from a power spherical mixture.
    Synth {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 5)]
        components: usize,
        #[arg(long)]
        kappa: f64,
        #[arg(long, default_value_t = 1.0)]
        norm_lo: f64,
        #[arg(long, default_value_t = 100.0)]
        norm_hi: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Increase angular dispersion of a store's keys (norms preserved).
    Disperse {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "sliced")]
        reg: RegArg,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 1)]
        circles: usize,
        #[arg(long, default_value_t = 4096)]
        batch: usize,
        #[arg(long, default_value_t = 1.0)]
        weight: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the per-step trace (loss, spherical variance) as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Build an IVF-PQ index over a store.
    Build {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 2048)]
        centroids: usize,
        #[arg(long, default_value_t = 8)]
        pq_m: usize,
        #[arg(long, default_value_t = 8)]
        pq_bits: u32,
        #[arg(long, default_value_t = 1_000_000)]
        train_sample: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run k-NN queries against an index.
    Query {
        #[arg(long)]
        index: PathBuf,
        /// Query vectors in the store format (labels ignored).
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 32)]
        nprobe: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure search throughput (appends one CSV row per run).
    Bench {
        #[arg(long)]
        index: PathBuf,
        #[arg(long = "queries", default_value_t = 10_000)]
        query_count: usize,
        #[arg(long, default_value_t = 10)]
        batch: usize,
        #[arg(long, default_value_t = 32)]
        nprobe: usize,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use uniformly random queries instead of perturbed store keys.
        #[arg(long)]
        uniform: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Geometry diagnostics for an index and its store.
    Analyze {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 1000)]
        enp_queries: usize,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 32)]
        nprobe: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON report destination.
        #[arg(long)]
        out: PathBuf,
        /// Optionally append the report as a CSV row keyed by --run-id.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value = "run")]
        run_id: String,
    },
    /// Generate, build, and bench one store per concentration value.
    Sweep {
        /// Comma-separated concentration values.
        #[arg(long, value_delimiter = ',')]
        kappas: Vec<f64>,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 128)]
        dim: usize,
        #[arg(long, default_value_t = 2048)]
        centroids: usize,
        #[arg(long = "queries", default_value_t = 10_000)]
        query_count: usize,
        #[arg(long, default_value_t = 10)]
        batch: usize,
        #[arg(long, default_value_t = 32)]
        nprobe: usize,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Interpolate model distributions with neighbor votes.
    Interp {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        store: PathBuf,
        /// Query vectors in the store format (labels ignored).
        #[arg(long)]
        queries: PathBuf,
        /// CSV with one row per query holding vocabulary probabilities.
        #[arg(long)]
        model_probs: PathBuf,
        #[arg(long, default_value_t = 0.3)]
        lambda: f64,
        #[arg(long = "temp", default_value_t = 100.0)]
        temperature: f64,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 32)]
        nprobe: usize,
        /// Recompute hit distances exactly from the store before voting.
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth { dim, count, components, kappa, norm_lo, norm_hi, seed, out } => {
            let spec = SynthSpec { dim, count, components, kappa, norm_range: (norm_lo, norm_hi), seed };
            let store: VectorStore<f32> = make_synthetic_store(&spec)?;
            store.write_to(&out).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {} keys (dim {dim}, {components} components, kappa {kappa}) to {}", store.len(), out.display());
        }
        Command::Disperse { input, out, reg, steps, lr, sigma, circles, batch, weight, seed, trace } => {
            let store = VectorStore::<f32>::read_from(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let cfg = DispersionConfig {
                regularizer: match reg {
                    RegArg::Sliced => Regularizer::Sliced,
                    RegArg::Mhe => Regularizer::Mhe,
                },
                sigma,
                step_size: lr,
                steps,
                circles_per_step: circles,
                loss_weight: weight,
                seed,
                batch_size: batch,
                ..Default::default()
            };
            // The optimizer runs in double precision regardless of the
            // store scalar; converting here keeps the written file
            // deterministic for a fixed seed.
            let (dispersed, trace_out) = disperse(&store.cast::<f64>(), &cfg)?;
            dispersed.write_to(&out).with_context(|| format!("writing {}", out.display()))?;
            if let Some(path) = trace {
                let mut rows = Vec::with_capacity(trace_out.records.len());
                for r in &trace_out.records {
                    rows.push(format!("{},{},{}", r.step, r.loss, r.spherical_variance));
                }
                write_csv(&path, "step,loss,spherical_variance", &rows)?;
            }
            let first = trace_out.records.first().map(|r| r.spherical_variance).unwrap_or(0.0);
            let last = trace_out.records.last().map(|r| r.spherical_variance).unwrap_or(0.0);
            println!("dispersed {} keys over {steps} steps: spherical variance {first:.4} -> {last:.4}", dispersed.len());
        }
        Command::Build { input, centroids, pq_m, pq_bits, train_sample, seed, out } => {
            let store = VectorStore::<f32>::read_from(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let cfg = BuildConfig { centroids, pq_m, pq_bits, train_sample, seed, ..Default::default() };
            let index = build_index(&store, &cfg)?;
            index_io::write_index(&index, &out).with_context(|| format!("writing {}", out.display()))?;
            let sizes = index.list_sizes();
            let imb = dispann::analysis::imbalance_factor(&sizes)?;
            println!("indexed {} keys into {centroids} cells (imbalance factor {imb:.3}) at {}", index.len(), out.display());
        }
        Command::Query { index, queries, k, nprobe, out } => {
            let index = index_io::read_index(&index)?;
            let qstore = VectorStore::<f32>::read_from(&queries)?;
            if qstore.dim() != index.dim() {
                bail!("query dim {} does not match index dim {}", qstore.dim(), index.dim());
            }
            let qvecs: Vec<Vec<f32>> = qstore.iter_keys().map(|q| q.to_vec()).collect();
            let results = search_batch(&index, &qvecs, k, nprobe.min(index.centroid_count()))?;
            let mut rows = Vec::new();
            for (qi, result) in results.iter().enumerate() {
                for (rank, hit) in result.hits.iter().enumerate() {
                    rows.push(format!("{qi},{rank},{},{},{}", hit.id, hit.distance, hit.label));
                }
            }
            write_csv(&out, "query,rank,key_id,squared_distance,label", &rows)?;
            println!("ran {} queries (k={k}, nprobe={nprobe}) -> {}", qvecs.len(), out.display());
        }
        Command::Bench { index, query_count, batch, nprobe, k, workers, repeats, seed, uniform, out } => {
            let index = index_io::read_index(&index)?;
            let spec = BenchSpec {
                query_count,
                batch_size: batch,
                nprobe,
                k,
                workers,
                repeats,
                uniform_queries: uniform,
                ..Default::default()
            };
            let mut rng = dispann::seeded_rng(seed);
            let result = run_bench(&index, &spec, &mut rng)?;
            let row = format!(
                "{},{},{},{},{},{},{},{},{:.3},{:.6}",
                result.n,
                result.centroids,
                query_count,
                batch,
                nprobe,
                k,
                workers,
                repeats,
                result.qps,
                result.imbalance_factor
            );
            append_csv(&out, "n,centroids,queries,batch,nprobe,k,workers,repeats,qps,imbalance_factor", &[row])?;
            println!(
                "qps {:.1} (median of {:?}), imbalance factor {:.3}",
                result.qps,
                result.qps_runs.iter().map(|q| q.round()).collect::<Vec<_>>(),
                result.imbalance_factor
            );
        }
        Command::Analyze { index, store, enp_queries, k, nprobe, seed, out, csv, run_id } => {
            let index = index_io::read_index(&index)?;
            let store = VectorStore::<f32>::read_from(&store)?;
            let report = analyze(&index, &store, enp_queries, k, nprobe.min(index.centroid_count()), seed)?;
            let json = serde_json::to_string_pretty(&report)?;
            std::fs::write(&out, &json).with_context(|| format!("writing {}", out.display()))?;
            if let Some(path) = csv {
                let row = format!(
                    "{run_id},{},{},{},{},{},{},{},{}",
                    report.imbalance_factor,
                    report.spherical_variance,
                    report.enp_mean,
                    report.enp_std,
                    report.homogeneity,
                    report.completeness,
                    report.v_measure,
                    report.mean_vector_norm
                );
                append_csv(
                    &path,
                    "run_id,imbalance_factor,spherical_variance,enp_mean,enp_std,homogeneity,completeness,v_measure,mean_vector_norm",
                    &[row],
                )?;
            }
            println!(
                "IF {:.3}  svar {:.4}  ENP {:.3} +/- {:.3}  hom {:.3}  compl {:.3}  v {:.3}  ||mean|| {:.3}",
                report.imbalance_factor,
                report.spherical_variance,
                report.enp_mean,
                report.enp_std,
                report.homogeneity,
                report.completeness,
                report.v_measure,
                report.mean_vector_norm
            );
        }
        Command::Sweep { kappas, count, dim, centroids, query_count, batch, nprobe, k, workers, repeats, seed, out } => {
            let spec = BenchSpec {
                query_count,
                batch_size: batch,
                nprobe,
                k,
                workers,
                repeats,
                ..Default::default()
            };
            let rows = sweep_concentration(&spec, &kappas, count, dim, centroids, seed)?;
            let lines: Vec<String> = rows
                .iter()
                .map(|r| format!("{},{:.3},{:.6}", r.kappa, r.qps, r.imbalance_factor))
                .collect();
            append_csv(&out, "kappa,qps,imbalance_factor", &lines)?;
            for r in &rows {
                println!("kappa {:8.1}  qps {:9.1}  imbalance factor {:.3}", r.kappa, r.qps, r.imbalance_factor);
            }
        }
        Command::Interp { index, store, queries, model_probs, lambda, temperature, k, nprobe, exact, out } => {
            let index = index_io::read_index(&index)?;
            let store = VectorStore::<f32>::read_from(&store)?;
            let qstore = VectorStore::<f32>::read_from(&queries)?;
            if qstore.dim() != index.dim() {
                bail!("query dim {} does not match index dim {}", qstore.dim(), index.dim());
            }
            let model_rows = read_prob_rows(&model_probs)?;
            if model_rows.len() != qstore.len() {
                bail!(
                    "model-probs has {} rows but there are {} queries",
                    model_rows.len(),
                    qstore.len()
                );
            }
            let cfg = InterpConfig { k, temperature, lambda, nprobe, exact_distances: exact };
            let mut rows = Vec::with_capacity(qstore.len());
            let vocab = model_rows.first().map(|r| r.vocab_size()).unwrap_or(0);
            for (q, p_model) in qstore.iter_keys().zip(model_rows.iter()) {
                let qv: Vec<f32> = q.to_vec();
                let dist = step_predict(&index, &store, &qv, p_model, &cfg)?;
                rows.push(
                    dist.probs().iter().map(|p| p.to_string()).collect::<Vec<_>>().join(","),
                );
            }
            let header: String =
                (0..vocab).map(|i| format!("p{i}")).collect::<Vec<_>>().join(",");
            write_csv(&out, &header, &rows)?;
            println!("interpolated {} queries (lambda {lambda}, T {temperature}) -> {}", rows.len(), out.display());
        }
    }
    Ok(())
}

/// Rows of vocabulary probabilities; a non-numeric first line is treated
/// as a header and skipped.
fn read_prob_rows(path: &Path) -> Result<Vec<TokenDistribution>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    let mut vocab = None;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            trimmed.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if lineno == 0 => continue, // header row
            Err(e) => bail!("bad probability row at line {}: {e}", lineno + 1),
        };
        if let Some(v) = vocab {
            if values.len() != v {
                bail!("row {} has {} columns, expected {v}", lineno + 1, values.len());
            }
        } else {
            vocab = Some(values.len());
        }
        rows.push(TokenDistribution::new(values).map_err(|e| anyhow::anyhow!("line {}: {e}", lineno + 1))?);
    }
    Ok(rows)
}

/// Write a CSV file from scratch with a fixed header.
fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut f =
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    writeln!(f, "{header}")?;
    for row in rows {
        writeln!(f, "{row}")?;
    }
    Ok(())
}

/// Append rows to a CSV file, emitting the header only when the file is
/// new or empty.
fn append_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let needs_header = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    if needs_header {
        writeln!(f, "{header}")?;
    }
    for row in rows {
        writeln!(f, "{row}")?;
    }
    Ok(())
}
