//! Benchmark plumbing: exact ground truth, query sweeps over the visit
//! budget, and CSV emission.

use std::time::Instant;

use rayon::prelude::*;

use crate::dataset::{Dataset, DistanceCounter};
use crate::dense::batch_knn_exact;
use crate::error::{Error, Result};
use crate::graph::AugmentedGraph;
use crate::ivf::{search_ivf, CoarseIndex, RerankParams};
use crate::search::{accuracy, SearchParams, Searcher};

pub const CSV_HEADER: &str = "engine,k,T,accuracy,mean_us,dist_evals,heap_ops";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Augmented,
    Plain,
    Ivfadc,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Augmented => "augmented",
            Engine::Plain => "plain",
            Engine::Ivfadc => "ivfadc",
        }
    }
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "augmented" => Ok(Engine::Augmented),
            "plain" => Ok(Engine::Plain),
            "ivfadc" => Ok(Engine::Ivfadc),
            other => Err(Error::InvalidParam(format!("unknown engine {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub engine: Engine,
    pub k: usize,
    pub t: usize,
    pub accuracy: f64,
    pub mean_us: f64,
    pub dist_evals: f64,
    pub heap_ops: f64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub seed: u64,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.3},{:.2},{:.2}\n",
                r.engine.name(),
                r.k,
                r.t,
                r.accuracy,
                r.mean_us,
                r.dist_evals,
                r.heap_ops
            ));
        }
        out
    }
}

/// Exact top-k ids per query (the brute-force ground truth).
pub fn compute_ground_truth(base: &Dataset, queries: &Dataset, k: usize) -> Result<Vec<Vec<u32>>> {
    if base.count() == 0 {
        return Err(Error::EmptyDataset);
    }
    if queries.dim() != base.dim() {
        return Err(Error::Dimension {
            left: queries.dim(),
            right: base.dim(),
        });
    }
    if k > base.count() {
        return Err(Error::KTooLarge {
            k,
            n: base.count(),
        });
    }
    let lists = batch_knn_exact(base.data(), queries.data(), base.dim(), k, false);
    Ok(lists
        .into_iter()
        .map(|l| l.into_iter().map(|e| e.0).collect())
        .collect())
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub engines: Vec<Engine>,
    pub ks: Vec<usize>,
    pub visits: Vec<usize>,
    pub seed: u64,
    /// Inverted lists probed per query (ivfadc engine only).
    pub probes: usize,
}

struct QueryOutcome {
    ids: Vec<u32>,
    micros: f64,
    counter: DistanceCounter,
}

/// Runs one CSV row per (engine, k, T). Queries may run on a worker pool;
/// results are gathered in input order so the output is deterministic
/// regardless of scheduling (wall-clock excepted).
pub fn run_sweep(
    graph: Option<&AugmentedGraph>,
    ivf: Option<&CoarseIndex>,
    base: &Dataset,
    queries: &Dataset,
    truth: &[Vec<u32>],
    cfg: &SweepConfig,
) -> Result<EvalReport> {
    if truth.len() < queries.count() {
        return Err(Error::InvalidParam(format!(
            "{} ground-truth rows for {} queries",
            truth.len(),
            queries.count()
        )));
    }
    let plain_seeds: Vec<u32> = {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
        (0..3).map(|_| rng.gen_range(0..base.count() as u32)).collect()
    };
    let mut rows = Vec::new();
    for &engine in &cfg.engines {
        for &k in &cfg.ks {
            for &t in &cfg.visits {
                let outcomes: Vec<QueryOutcome> = match engine {
                    Engine::Augmented => {
                        let g = graph.ok_or_else(|| {
                            Error::InvalidParam("augmented engine needs a graph index".into())
                        })?;
                        (0..queries.count())
                            .into_par_iter()
                            .map_init(
                                || Searcher::new(g, base).unwrap(),
                                |s, qi| {
                                    let mut c = DistanceCounter::default();
                                    let start = Instant::now();
                                    let res = s
                                        .search(
                                            queries.get(qi),
                                            SearchParams { k, t_max: t },
                                            &mut c,
                                        )
                                        .unwrap();
                                    QueryOutcome {
                                        ids: res.iter().map(|e| e.0).collect(),
                                        micros: start.elapsed().as_secs_f64() * 1e6,
                                        counter: c,
                                    }
                                },
                            )
                            .collect()
                    }
                    Engine::Plain => {
                        let g = graph.ok_or_else(|| {
                            Error::InvalidParam("plain engine needs a graph index".into())
                        })?;
                        let seeds = plain_seeds.clone();
                        (0..queries.count())
                            .into_par_iter()
                            .map(|qi| {
                                let mut c = DistanceCounter::default();
                                let start = Instant::now();
                                let res = crate::search::search_plain(
                                    g.ngraph(),
                                    base,
                                    queries.get(qi),
                                    &seeds,
                                    SearchParams { k, t_max: t },
                                    &mut c,
                                )
                                .unwrap();
                                QueryOutcome {
                                    ids: res.iter().map(|e| e.0).collect(),
                                    micros: start.elapsed().as_secs_f64() * 1e6,
                                    counter: c,
                                }
                            })
                            .collect()
                    }
                    Engine::Ivfadc => {
                        let ix = ivf.ok_or_else(|| {
                            Error::InvalidParam("ivfadc engine needs an ivf index".into())
                        })?;
                        (0..queries.count())
                            .into_par_iter()
                            .map(|qi| {
                                let mut c = DistanceCounter::default();
                                let start = Instant::now();
                                let res = search_ivf(
                                    ix,
                                    base,
                                    queries.get(qi),
                                    RerankParams {
                                        probes: cfg.probes,
                                        list_len: t,
                                    },
                                    k,
                                    &mut c,
                                )
                                .unwrap();
                                QueryOutcome {
                                    ids: res.iter().map(|e| e.0).collect(),
                                    micros: start.elapsed().as_secs_f64() * 1e6,
                                    counter: c,
                                }
                            })
                            .collect()
                    }
                };
                let nq = outcomes.len() as f64;
                let mut acc = 0.0;
                let mut micros = 0.0;
                let mut evals = 0.0;
                let mut heap = 0.0;
                for (qi, o) in outcomes.iter().enumerate() {
                    acc += accuracy(&o.ids, &truth[qi], k)?;
                    micros += o.micros;
                    evals += o.counter.full_dist_evals as f64;
                    heap += o.counter.heap_ops as f64;
                }
                rows.push(EvalRow {
                    engine,
                    k,
                    t,
                    accuracy: acc / nq,
                    mean_us: micros / nq,
                    dist_evals: evals / nq,
                    heap_ops: heap / nq,
                });
            }
        }
    }
    Ok(EvalReport {
        rows,
        seed: cfg.seed,
    })
}
