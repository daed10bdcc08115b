//! Index construction: the exact R-NN neighborhood graph over the reference
//! set and the sparse bridge graph linking bridge vectors to nearby reference
//! vectors.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::dataset::{cmp_dist_id, Dataset, DistanceCounter, ElementKind};
use crate::dense::batch_knn_exact;
use crate::error::{Error, Result};
use crate::multiseq::MultiSeq;
use crate::quantizer::ProductQuantizer;

/// Per reference vector: its R exact nearest neighbors (no self-loop),
/// ascending by (distance, id).
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodGraph {
    r: usize,
    adj: Vec<(u32, f32)>,
}

impl NeighborhoodGraph {
    pub fn degree(&self) -> usize {
        self.r
    }

    pub fn num_nodes(&self) -> usize {
        if self.r == 0 {
            0
        } else {
            self.adj.len() / self.r
        }
    }

    pub fn neighbors(&self, id: u32) -> &[(u32, f32)] {
        let i = id as usize;
        &self.adj[i * self.r..(i + 1) * self.r]
    }

    pub(crate) fn from_flat(r: usize, adj: Vec<(u32, f32)>) -> Self {
        NeighborhoodGraph { r, adj }
    }
}

/// Exact R-NN graph. O(N^2) distance work, GEMM-blocked with an exact rerank
/// of the shortlist so every adjacency matches the brute-force oracle.
pub fn build_ngraph(ds: &Dataset, r: usize) -> Result<NeighborhoodGraph> {
    if ds.count() == 0 {
        return Err(Error::EmptyDataset);
    }
    if r == 0 || r >= ds.count() {
        return Err(Error::InvalidParam(format!(
            "graph degree {r} must be in 1..{}",
            ds.count()
        )));
    }
    let lists = batch_knn_exact(ds.data(), ds.data(), ds.dim(), r, true);
    let mut adj = Vec::with_capacity(ds.count() * r);
    for list in lists {
        debug_assert_eq!(list.len(), r);
        adj.extend(list);
    }
    Ok(NeighborhoodGraph { r, adj })
}

/// Sparse map from bridge id to the (at most b) reference vectors nearest to
/// it, ascending by (distance, id). Only bridges with non-empty lists are
/// stored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BridgeGraph {
    /// Sorted by bridge id.
    entries: Vec<(u64, Vec<(u32, f32)>)>,
}

impl BridgeGraph {
    pub fn num_bridges(&self) -> usize {
        self.entries.len()
    }

    pub fn lookup(&self, bridge_id: u64) -> Option<&[(u32, f32)]> {
        self.entries
            .binary_search_by_key(&bridge_id, |e| e.0)
            .ok()
            .map(|i| self.entries[i].1.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &[(u32, f32)])> {
        self.entries.iter().map(|(id, l)| (*id, l.as_slice()))
    }

    pub(crate) fn from_entries(entries: Vec<(u64, Vec<(u32, f32)>)>) -> Self {
        BridgeGraph { entries }
    }
}

/// Inserts into a list kept ascending by (distance, id) and truncated to b.
fn keep_b(list: &mut Vec<(u32, f32)>, entry: (u32, f32), b: usize) {
    let pos = list.partition_point(|e| cmp_dist_id(e, &entry).is_lt());
    list.insert(pos, entry);
    if list.len() > b {
        list.pop();
    }
}

/// Streams the top t nearest bridge vectors for each reference vector and
/// keeps, per bridge vector, the b nearest references seen. O(Nt(log t + b)).
pub fn build_bgraph(
    ds: &Dataset,
    pq: &ProductQuantizer,
    t: usize,
    b: usize,
) -> Result<BridgeGraph> {
    if t == 0 || b == 0 {
        return Err(Error::InvalidParam("bridge t and b must be >= 1".into()));
    }
    let total = pq
        .bridge_count()
        .ok_or_else(|| Error::InvalidParam("bridge set too large".into()))?;
    if t as u64 > total {
        return Err(Error::InvalidParam(format!(
            "t = {t} exceeds bridge count {total}"
        )));
    }
    let merged = (0..ds.count())
        .into_par_iter()
        .fold(
            HashMap::<u64, Vec<(u32, f32)>>::new,
            |mut acc, ref_id| {
                let mut counter = DistanceCounter::default();
                let tables = pq.build_tables(ds.get(ref_id), &mut counter).unwrap();
                let mut ms = MultiSeq::new(&tables).unwrap();
                for _ in 0..t {
                    let Some(cand) = ms.next(&mut counter) else { break };
                    let list = acc.entry(cand.bridge_id).or_default();
                    keep_b(list, (ref_id as u32, cand.dist), b);
                }
                acc
            },
        )
        .reduce(HashMap::new, |mut a, b_map| {
            for (id, list) in b_map {
                match a.entry(id) {
                    std::collections::hash_map::Entry::Vacant(e) => {
                        e.insert(list);
                    }
                    std::collections::hash_map::Entry::Occupied(mut e) => {
                        for entry in list {
                            keep_b(e.get_mut(), entry, b);
                        }
                    }
                }
            }
            a
        });
    let mut entries: Vec<(u64, Vec<(u32, f32)>)> = merged.into_iter().collect();
    entries.sort_unstable_by_key(|e| e.0);
    Ok(BridgeGraph { entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexParams {
    /// Subspace partitions.
    pub m: usize,
    /// Clusters per partition.
    pub n: usize,
    /// Neighborhood graph degree.
    pub r: usize,
    /// Nearest bridges streamed per reference vector.
    pub t: usize,
    /// References kept per bridge vector.
    pub b: usize,
    pub seed: u64,
}

impl Default for IndexParams {
    fn default() -> Self {
        IndexParams {
            m: 4,
            n: 50,
            r: 20,
            t: 100,
            b: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphStats {
    /// Distinct reference vectors appearing in the bridge graph.
    pub referenced: u64,
    /// Mean unique reference-list length per stored bridge vector.
    pub alpha_mean: f64,
    /// `referenced` as a fraction of the full bridge set n^m.
    pub alpha_coverage: f64,
}

pub fn compute_stats(bgraph: &BridgeGraph, bridge_total: u64) -> GraphStats {
    let mut seen = std::collections::HashSet::new();
    let mut pairs = 0u64;
    for (_, list) in bgraph.iter() {
        pairs += list.len() as u64;
        for &(id, _) in list {
            seen.insert(id);
        }
    }
    let stored = bgraph.num_bridges() as u64;
    GraphStats {
        referenced: seen.len() as u64,
        alpha_mean: if stored == 0 {
            0.0
        } else {
            pairs as f64 / stored as f64
        },
        alpha_coverage: if bridge_total == 0 {
            0.0
        } else {
            seen.len() as f64 / bridge_total as f64
        },
    }
}

/// The full index: quantizer, neighborhood graph and bridge graph.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedGraph {
    pub pq: ProductQuantizer,
    pub ngraph: NeighborhoodGraph,
    pub bgraph: BridgeGraph,
    pub params: IndexParams,
    pub stats: GraphStats,
    pub element_kind: ElementKind,
}

pub const DEFAULT_KMEANS_ITERS: usize = 25;

pub fn build_index(ds: &Dataset, params: IndexParams, iters: usize) -> Result<AugmentedGraph> {
    if ds.count() == 0 {
        return Err(Error::EmptyDataset);
    }
    let pq = ProductQuantizer::train(ds, params.m, params.n, params.seed, iters)?;
    let ngraph = build_ngraph(ds, params.r)?;
    let bgraph = build_bgraph(ds, &pq, params.t, params.b)?;
    let stats = compute_stats(&bgraph, pq.bridge_count().unwrap_or(0));
    Ok(AugmentedGraph {
        pq,
        ngraph,
        bgraph,
        params,
        stats,
        element_kind: ds.element_kind(),
    })
}
