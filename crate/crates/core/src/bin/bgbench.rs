//! Benchmark CLI: ground-truth generation, index building and query sweeps.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bridgegraph::eval::{run_sweep, Engine, SweepConfig};
use bridgegraph::graph::DEFAULT_KMEANS_ITERS;
use bridgegraph::ivf::IvfBuildParams;
use bridgegraph::{
    build_index, build_ivf, load_dataset, load_index, load_ivf, read_id_lists, save_index,
    save_ivf, write_id_lists, Dataset, Format, IndexParams,
};

#[derive(Parser)]
#[command(name = "bgbench", version, about = "augmented-graph ANN benchmark harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliFormat {
    Fvecs,
    Bvecs,
}

impl From<CliFormat> for Format {
    fn from(f: CliFormat) -> Format {
        match f {
            CliFormat::Fvecs => Format::Fvecs,
            CliFormat::Bvecs => Format::Bvecs,
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// Reference vector file.
    #[arg(long)]
    base: PathBuf,
    /// Dataset file format.
    #[arg(long, value_enum, default_value = "fvecs")]
    format: CliFormat,
}

#[derive(Subcommand)]
enum Cmd {
    /// Exact top-k neighbor ids per query, written as ivecs.
    Groundtruth {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 100)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the augmented-graph index and persist it.
    Build {
        #[command(flatten)]
        data: DataArgs,
        /// Subspace partitions (m).
        #[arg(long, default_value_t = 4)]
        partitions: usize,
        /// Clusters per partition (n).
        #[arg(long, default_value_t = 50)]
        clusters: usize,
        /// Neighborhood graph degree (R).
        #[arg(long, default_value_t = 20)]
        degree: usize,
        /// Nearest bridges streamed per reference vector.
        #[arg(long = "bridge-t", default_value_t = 100)]
        bridge_t: usize,
        /// References kept per bridge vector.
        #[arg(long = "bridge-b", default_value_t = 5)]
        bridge_b: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Lloyd iterations for codebook training.
        #[arg(long, default_value_t = DEFAULT_KMEANS_ITERS)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep queries over visit budgets and emit a CSV report.
    Search {
        #[command(flatten)]
        data: DataArgs,
        /// Index file: ANNB for augmented/plain, ANNV for ivfadc.
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        /// Ground-truth ivecs file.
        #[arg(long)]
        truth: PathBuf,
        /// Result counts, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "1,10")]
        k: Vec<usize>,
        /// Visit budgets T (candidate list lengths for ivfadc), comma
        /// separated.
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
        visits: Vec<usize>,
        /// Engines to run: augmented, plain, ivfadc.
        #[arg(long, value_delimiter = ',', default_value = "augmented")]
        engine: Vec<Engine>,
        /// Inverted lists probed per query (ivfadc only).
        #[arg(long, default_value_t = 8)]
        probes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// CSV output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the inverted-file index with graph-searched coarse centers.
    IvfBuild {
        #[command(flatten)]
        data: DataArgs,
        /// Coarse centers / inverted lists (K).
        #[arg(long, default_value_t = 1024)]
        centers: usize,
        #[arg(long, default_value_t = 4)]
        partitions: usize,
        #[arg(long, default_value_t = 32)]
        clusters: usize,
        #[arg(long, default_value_t = 10)]
        degree: usize,
        #[arg(long = "bridge-t", default_value_t = 50)]
        bridge_t: usize,
        #[arg(long = "bridge-b", default_value_t = 5)]
        bridge_b: usize,
        /// Residual code partitions (bytes per vector at 256 clusters).
        #[arg(long = "res-partitions", default_value_t = 8)]
        res_partitions: usize,
        #[arg(long = "res-clusters", default_value_t = 256)]
        res_clusters: usize,
        /// Visit budget for graph-based center assignment.
        #[arg(long = "assign-budget", default_value_t = 64)]
        assign_budget: usize,
        #[arg(long, default_value_t = 10)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Query sweep over an ANNV index (shorthand for search --engine ivfadc).
    IvfSearch {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,10,100")]
        k: Vec<usize>,
        /// Candidate list lengths for reranking, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "1000,3000,10000")]
        visits: Vec<usize>,
        #[arg(long, default_value_t = 8)]
        probes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn init_threads(threads: usize) {
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
}

fn load_base(data: &DataArgs) -> bridgegraph::Result<Dataset> {
    load_dataset(&data.base, data.format.into())
}

fn run() -> Result<(), Box<dyn std::error::Error>> {
    match Cli::parse().cmd {
        Cmd::Groundtruth {
            data,
            queries,
            k,
            out,
        } => {
            let base = load_base(&data)?;
            let queries = load_dataset(&queries, data.format.into())?;
            let truth = bridgegraph::eval::compute_ground_truth(&base, &queries, k)?;
            let mut w = std::io::BufWriter::new(std::fs::File::create(&out)?);
            write_id_lists(&truth, &mut w)?;
            eprintln!(
                "wrote exact top-{k} for {} queries to {}",
                truth.len(),
                out.display()
            );
        }
        Cmd::Build {
            data,
            partitions,
            clusters,
            degree,
            bridge_t,
            bridge_b,
            seed,
            iters,
            threads,
            out,
        } => {
            init_threads(threads);
            let base = load_base(&data)?;
            let params = IndexParams {
                m: partitions,
                n: clusters,
                r: degree,
                t: bridge_t,
                b: bridge_b,
                seed,
            };
            let g = build_index(&base, params, iters)?;
            save_index(&g, &out)?;
            let total = g.pq.bridge_count().unwrap_or(0);
            eprintln!(
                "index: N={} d={} bridges={} stored_bridges={} #reference={} \
                 alpha_mean={:.2} alpha_coverage={:.2}%",
                base.count(),
                base.dim(),
                total,
                g.bgraph.num_bridges(),
                g.stats.referenced,
                g.stats.alpha_mean,
                g.stats.alpha_coverage * 100.0
            );
        }
        Cmd::Search {
            data,
            index,
            queries,
            truth,
            k,
            visits,
            engine,
            probes,
            seed,
            threads,
            out,
        } => {
            init_threads(threads);
            let base = load_base(&data)?;
            let queries = load_dataset(&queries, data.format.into())?;
            let truth = read_id_lists(std::io::BufReader::new(std::fs::File::open(&truth)?))?;
            let needs_graph = engine.iter().any(|e| *e != Engine::Ivfadc);
            let needs_ivf = engine.contains(&Engine::Ivfadc);
            let graph = if needs_graph { Some(load_index(&index)?) } else { None };
            let ivf = if needs_ivf { Some(load_ivf(&index)?) } else { None };
            let cfg = SweepConfig {
                engines: engine,
                ks: k,
                visits,
                seed,
                probes,
            };
            let report = run_sweep(graph.as_ref(), ivf.as_ref(), &base, &queries, &truth, &cfg)?;
            emit_csv(&report.to_csv(), out.as_deref())?;
        }
        Cmd::IvfBuild {
            data,
            centers,
            partitions,
            clusters,
            degree,
            bridge_t,
            bridge_b,
            res_partitions,
            res_clusters,
            assign_budget,
            iters,
            seed,
            threads,
            out,
        } => {
            init_threads(threads);
            let base = load_base(&data)?;
            let params = IvfBuildParams {
                num_centers: centers,
                coarse_iters: iters,
                coarse_graph: IndexParams {
                    m: partitions,
                    n: clusters,
                    r: degree,
                    t: bridge_t,
                    b: bridge_b,
                    seed,
                },
                residual_m: res_partitions,
                residual_n: res_clusters,
                residual_iters: iters,
                assign_budget,
                seed,
            };
            let ix = build_ivf(&base, params)?;
            save_ivf(&ix, &out)?;
            eprintln!(
                "ivf index: N={} K={} code_bytes={} assignment_fallbacks={} ({:.3}%)",
                ix.num_vectors(),
                ix.num_centers(),
                ix.code_bytes(),
                ix.assign_fallbacks,
                100.0 * ix.assign_fallbacks as f64 / ix.num_vectors().max(1) as f64
            );
        }
        Cmd::IvfSearch {
            data,
            index,
            queries,
            truth,
            k,
            visits,
            probes,
            seed,
            threads,
            out,
        } => {
            init_threads(threads);
            let base = load_base(&data)?;
            let queries = load_dataset(&queries, data.format.into())?;
            let truth = read_id_lists(std::io::BufReader::new(std::fs::File::open(&truth)?))?;
            let ivf = load_ivf(&index)?;
            let cfg = SweepConfig {
                engines: vec![Engine::Ivfadc],
                ks: k,
                visits,
                seed,
                probes,
            };
            let report = run_sweep(None, Some(&ivf), &base, &queries, &truth, &cfg)?;
            emit_csv(&report.to_csv(), out.as_deref())?;
        }
    }
    Ok(())
}

fn emit_csv(csv: &str, out: Option<&std::path::Path>) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bgbench: {e}");
            ExitCode::FAILURE
        }
    }
}
