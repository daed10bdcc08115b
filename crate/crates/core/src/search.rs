//! Query-time engines: best-first traversal of the augmented graph with
//! extraction-on-demand, the plain neighborhood-graph baseline, and the
//! accuracy metric.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::dataset::{cmp_dist_id, sq_dist_counted, Dataset, DistanceCounter};
use crate::error::{Error, Result};
use crate::graph::{AugmentedGraph, NeighborhoodGraph};
use crate::multiseq::MultiSeq;

#[derive(Debug, Clone, Copy)]
pub struct SearchParams {
    /// Result count.
    pub k: usize,
    /// Maximum number of discovered (distance-evaluated) reference vectors.
    pub t_max: usize,
}

/// Hook for externally auditing the traversal; the default implementation
/// observes nothing.
pub trait SearchObserver {
    fn on_push(&mut self, _key: f32, _bridge: bool, _id: u64) {}
    fn on_pop(&mut self, _key: f32, _bridge: bool, _id: u64) {}
    fn on_dist_eval(&mut self, _id: u32) {}
    fn on_iteration_end(&mut self, _bridges_in_queue: usize, _queue_len: usize) {}
}

pub struct NullObserver;

impl SearchObserver for NullObserver {}

#[derive(Debug, Clone, Copy, PartialEq)]
enum NodeKind {
    Bridge,
    Reference,
}

#[derive(Debug, Clone, Copy)]
struct QueueEntry {
    key: f32,
    kind: NodeKind,
    id: u64,
}

// Max-heap ordering that pops the smallest key first; equal keys pop the
// bridge entry before references, then the smaller id.
impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .key
            .total_cmp(&self.key)
            .then_with(|| {
                let rank = |k: NodeKind| u8::from(k == NodeKind::Reference);
                rank(other.kind).cmp(&rank(self.kind))
            })
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QueueEntry {}

/// Bounded max-heap keeping the k smallest (distance, id) pairs.
struct ResultSet {
    k: usize,
    heap: BinaryHeap<ResultEntry>,
}

struct ResultEntry(u32, f32);

impl Ord for ResultEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_dist_id(&(self.0, self.1), &(other.0, other.1))
    }
}

impl PartialOrd for ResultEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for ResultEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ResultEntry {}

impl ResultSet {
    fn new(k: usize) -> Self {
        ResultSet {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    fn add(&mut self, id: u32, dist: f32, counter: &mut DistanceCounter) {
        self.heap.push(ResultEntry(id, dist));
        counter.heap_ops += 1;
        if self.heap.len() > self.k {
            self.heap.pop();
            counter.heap_ops += 1;
        }
    }

    fn into_sorted(self) -> Vec<(u32, f32)> {
        let mut out: Vec<(u32, f32)> = self.heap.into_iter().map(|e| (e.0, e.1)).collect();
        out.sort_unstable_by(cmp_dist_id);
        out
    }
}

/// Query engine over a shared immutable index. Holds per-thread scratch
/// (epoch-marked visited array), so each concurrent query needs its own
/// `Searcher`.
pub struct Searcher<'a> {
    index: &'a AugmentedGraph,
    dataset: &'a Dataset,
    visited: Vec<u32>,
    epoch: u32,
}

impl<'a> Searcher<'a> {
    pub fn new(index: &'a AugmentedGraph, dataset: &'a Dataset) -> Result<Self> {
        if dataset.count() == 0 {
            return Err(Error::EmptyDataset);
        }
        if dataset.dim() != index.pq.layout().dim() {
            return Err(Error::Dimension {
                left: dataset.dim(),
                right: index.pq.layout().dim(),
            });
        }
        Ok(Searcher {
            index,
            dataset,
            visited: vec![0; dataset.count()],
            epoch: 0,
        })
    }

    fn next_epoch(&mut self) -> u32 {
        if self.epoch == u32::MAX {
            self.visited.fill(0);
            self.epoch = 0;
        }
        self.epoch += 1;
        self.epoch
    }

    /// Best-first search of the augmented graph (extraction-on-demand): the
    /// main queue holds at most one bridge entry; popping it inserts its
    /// bridge-graph list and fetches the next bridge from the stream.
    pub fn search(
        &mut self,
        q: &[f32],
        params: SearchParams,
        counter: &mut DistanceCounter,
    ) -> Result<Vec<(u32, f32)>> {
        self.search_observed(q, params, counter, &mut NullObserver)
    }

    pub fn search_observed<O: SearchObserver>(
        &mut self,
        q: &[f32],
        params: SearchParams,
        counter: &mut DistanceCounter,
        obs: &mut O,
    ) -> Result<Vec<(u32, f32)>> {
        let tables = self.index.pq.build_tables(q, counter)?;
        let mut stream = MultiSeq::new(&tables)?;
        // a budget beyond N can never be spent; cap it so the loop does not
        // drain the whole bridge stream once every reference is visited
        let t_cap = params.t_max.min(self.dataset.count());
        // bridge pops beyond a small multiple of the budget stop paying for
        // themselves; without this cap an unreachable straggler makes the
        // loop drain all n^m stream entries
        let bridge_cap = 2 * t_cap + 16;
        let mut bridge_pops = 0usize;
        let epoch = self.next_epoch();
        let mut queue: BinaryHeap<QueueEntry> = BinaryHeap::new();
        let mut results = ResultSet::new(params.k);
        let mut discovered = 0usize;
        let mut bridges_in_queue = 0usize;

        if let Some(cand) = stream.next(counter) {
            let e = QueueEntry {
                key: cand.dist,
                kind: NodeKind::Bridge,
                id: cand.bridge_id,
            };
            obs.on_push(e.key, true, e.id);
            queue.push(e);
            counter.heap_ops += 1;
            bridges_in_queue += 1;
        }

        while discovered < t_cap {
            let Some(top) = queue.pop() else { break };
            counter.heap_ops += 1;
            obs.on_pop(top.key, top.kind == NodeKind::Bridge, top.id);
            match top.kind {
                NodeKind::Reference => {
                    for &(nb, _) in self.index.ngraph.neighbors(top.id as u32) {
                        self.discover(
                            nb, q, epoch, params.t_max, &mut queue, &mut results,
                            &mut discovered, counter, obs,
                        );
                    }
                }
                NodeKind::Bridge => {
                    bridges_in_queue -= 1;
                    bridge_pops += 1;
                    if let Some(list) = self.index.bgraph.lookup(top.id) {
                        for &(nb, _) in list {
                            self.discover(
                                nb, q, epoch, params.t_max, &mut queue, &mut results,
                                &mut discovered, counter, obs,
                            );
                        }
                    }
                    if bridge_pops < bridge_cap {
                        if let Some(cand) = stream.next(counter) {
                            let e = QueueEntry {
                                key: cand.dist,
                                kind: NodeKind::Bridge,
                                id: cand.bridge_id,
                            };
                            obs.on_push(e.key, true, e.id);
                            queue.push(e);
                            counter.heap_ops += 1;
                            bridges_in_queue += 1;
                        }
                    }
                }
            }
            obs.on_iteration_end(bridges_in_queue, queue.len());
        }
        Ok(results.into_sorted())
    }

    #[allow(clippy::too_many_arguments)]
    fn discover<O: SearchObserver>(
        &mut self,
        id: u32,
        q: &[f32],
        epoch: u32,
        t_max: usize,
        queue: &mut BinaryHeap<QueueEntry>,
        results: &mut ResultSet,
        discovered: &mut usize,
        counter: &mut DistanceCounter,
        obs: &mut O,
    ) {
        // T caps exact distance evaluations; stop mid-expansion if spent
        if *discovered >= t_max || self.visited[id as usize] == epoch {
            return;
        }
        self.visited[id as usize] = epoch;
        let d = sq_dist_counted(q, self.dataset.get(id as usize), counter);
        obs.on_dist_eval(id);
        let e = QueueEntry {
            key: d,
            kind: NodeKind::Reference,
            id: id as u64,
        };
        obs.on_push(e.key, false, e.id);
        queue.push(e);
        counter.heap_ops += 1;
        results.add(id, d, counter);
        *discovered += 1;
    }

    /// Plain neighborhood-graph baseline: identical loop, no bridge
    /// machinery; the seeds are distance-evaluated and pushed first.
    pub fn search_plain(
        &mut self,
        q: &[f32],
        seeds: &[u32],
        params: SearchParams,
        counter: &mut DistanceCounter,
    ) -> Result<Vec<(u32, f32)>> {
        search_plain(self.index.ngraph(), self.dataset, q, seeds, params, counter)
    }
}

impl AugmentedGraph {
    pub fn ngraph(&self) -> &NeighborhoodGraph {
        &self.ngraph
    }
}

pub fn search_plain(
    ngraph: &NeighborhoodGraph,
    dataset: &Dataset,
    q: &[f32],
    seeds: &[u32],
    params: SearchParams,
    counter: &mut DistanceCounter,
) -> Result<Vec<(u32, f32)>> {
    if seeds.is_empty() {
        return Err(Error::InvalidParam("no seeds".into()));
    }
    if q.len() != dataset.dim() {
        return Err(Error::Dimension {
            left: q.len(),
            right: dataset.dim(),
        });
    }
    let n = dataset.count();
    if seeds.iter().any(|&s| s as usize >= n) {
        return Err(Error::InvalidParam("seed id out of range".into()));
    }
    let mut visited = vec![false; n];
    let mut queue: BinaryHeap<QueueEntry> = BinaryHeap::new();
    let mut results = ResultSet::new(params.k);
    let mut discovered = 0usize;
    for &s in seeds {
        if visited[s as usize] {
            continue;
        }
        visited[s as usize] = true;
        let d = sq_dist_counted(q, dataset.get(s as usize), counter);
        queue.push(QueueEntry {
            key: d,
            kind: NodeKind::Reference,
            id: s as u64,
        });
        counter.heap_ops += 1;
        results.add(s, d, counter);
        discovered += 1;
    }
    while discovered < params.t_max {
        let Some(top) = queue.pop() else { break };
        counter.heap_ops += 1;
        for &(nb, _) in ngraph.neighbors(top.id as u32) {
            if discovered >= params.t_max || visited[nb as usize] {
                continue;
            }
            visited[nb as usize] = true;
            let d = sq_dist_counted(q, dataset.get(nb as usize), counter);
            queue.push(QueueEntry {
                key: d,
                kind: NodeKind::Reference,
                id: nb as u64,
            });
            counter.heap_ops += 1;
            results.add(nb, d, counter);
            discovered += 1;
        }
    }
    Ok(results.into_sorted())
}

/// Fraction of the true k nearest neighbors present among the returned
/// candidates (r/k).
pub fn accuracy(result: &[u32], truth: &[u32], k: usize) -> Result<f64> {
    if truth.len() < k {
        return Err(Error::InvalidParam(format!(
            "ground truth holds {} ids, need {k}",
            truth.len()
        )));
    }
    let truth_set: std::collections::HashSet<u32> = truth[..k].iter().copied().collect();
    let hits = result
        .iter()
        .take(k)
        .filter(|id| truth_set.contains(id))
        .count();
    Ok(hits as f64 / k as f64)
}

/// 1 iff the true nearest neighbor appears within the first `t` entries.
pub fn recall_at(result: &[u32], true_nn: u32, t: usize) -> u32 {
    u32::from(result.iter().take(t).any(|&id| id == true_nn))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{brute_force_knn, Dataset, ElementKind};
    use crate::graph::{build_index, build_ngraph, IndexParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..n * d).map(|_| rng.gen_range(0.0..10.0)).collect();
        Dataset::from_vec(d, data, ElementKind::Float32)
    }

    fn small_index(ds: &Dataset) -> AugmentedGraph {
        let params = IndexParams {
            m: 2,
            n: 8,
            r: 8,
            t: 16,
            b: 4,
            seed: 1,
        };
        build_index(ds, params, 25).unwrap()
    }

    #[test]
    fn full_budget_matches_exact_oracle() {
        let ds = random_dataset(500, 8, 50);
        let ix = small_index(&ds);
        let mut s = Searcher::new(&ix, &ds).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut c = DistanceCounter::default();
        for _ in 0..20 {
            let q: Vec<f32> = (0..8).map(|_| rng.gen_range(0.0..10.0)).collect();
            c.reset();
            let got = s
                .search(&q, SearchParams { k: 10, t_max: 500 }, &mut c)
                .unwrap();
            let mut oc = DistanceCounter::default();
            let want = brute_force_knn(&ds, &q, 10, &mut oc).unwrap();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn self_queries_mostly_exact() {
        let ds = random_dataset(1000, 8, 51);
        let ix = small_index(&ds);
        let mut s = Searcher::new(&ix, &ds).unwrap();
        let mut c = DistanceCounter::default();
        let mut hits = 0;
        for j in (0..1000).step_by(5) {
            c.reset();
            let got = s
                .search(ds.get(j), SearchParams { k: 1, t_max: 100 }, &mut c)
                .unwrap();
            if got.first() == Some(&(j as u32, 0.0)) {
                hits += 1;
            }
        }
        assert!(hits >= 190, "only {hits}/200 self-queries exact");
    }

    #[test]
    fn accuracy_monotone_in_budget() {
        let ds = random_dataset(2000, 12, 52);
        let ix = small_index(&ds);
        let mut s = Searcher::new(&ix, &ds).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut c = DistanceCounter::default();
        for _ in 0..10 {
            let q: Vec<f32> = (0..12).map(|_| rng.gen_range(0.0..10.0)).collect();
            let truth: Vec<u32> = brute_force_knn(&ds, &q, 10, &mut c)
                .unwrap()
                .iter()
                .map(|e| e.0)
                .collect();
            let mut prev = -1.0;
            for t_max in [20, 100, 400, 2000] {
                c.reset();
                let got = s
                    .search(&q, SearchParams { k: 10, t_max }, &mut c)
                    .unwrap();
                let ids: Vec<u32> = got.iter().map(|e| e.0).collect();
                let acc = accuracy(&ids, &truth, 10).unwrap();
                assert!(acc >= prev, "accuracy dropped: {acc} < {prev} at T={t_max}");
                prev = acc;
            }
        }
    }

    #[test]
    fn plain_baseline_finds_seeded_nn() {
        let ds = random_dataset(300, 6, 53);
        let g = build_ngraph(&ds, 6).unwrap();
        let mut c = DistanceCounter::default();
        let q = ds.get(42).to_vec();
        let got = search_plain(&g, &ds, &q, &[42], SearchParams { k: 5, t_max: 50 }, &mut c)
            .unwrap();
        assert_eq!(got[0], (42, 0.0));
        assert!(search_plain(&g, &ds, &q, &[], SearchParams { k: 1, t_max: 1 }, &mut c).is_err());
    }

    #[test]
    fn plain_unreachable_component_never_returned() {
        // two clusters far apart; R=1 keeps them disconnected
        let mut data = Vec::new();
        for i in 0..4 {
            data.push(i as f32 * 0.1);
        }
        for i in 0..4 {
            data.push(1000.0 + i as f32 * 0.1);
        }
        let ds = Dataset::from_vec(1, data, ElementKind::Float32);
        let g = build_ngraph(&ds, 2).unwrap();
        let mut c = DistanceCounter::default();
        let got = search_plain(
            &g,
            &ds,
            &[1000.2],
            &[0],
            SearchParams { k: 8, t_max: 100 },
            &mut c,
        )
        .unwrap();
        assert!(got.iter().all(|e| e.0 < 4), "{got:?}");
    }

    #[test]
    fn accuracy_definition() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3], 3).unwrap(), 1.0);
        assert_eq!(accuracy(&[4, 5, 6], &[1, 2, 3], 3).unwrap(), 0.0);
        let result: Vec<u32> = (0..10).collect();
        let truth: Vec<u32> = (3..13).collect();
        assert_eq!(accuracy(&result, &truth, 10).unwrap(), 0.7);
        assert!(accuracy(&[0], &[0], 2).is_err());
    }

    #[test]
    fn recall_at_definition() {
        assert_eq!(recall_at(&[5, 2, 9], 5, 1), 1);
        assert_eq!(recall_at(&[5, 2, 9], 9, 2), 0);
        assert_eq!(recall_at(&[5, 2, 9], 9, 3), 1);
        assert_eq!(recall_at(&[], 1, 10), 0);
    }

    #[test]
    fn counter_accounting() {
        let ds = random_dataset(400, 8, 54);
        let ix = small_index(&ds);
        let mut s = Searcher::new(&ix, &ds).unwrap();
        struct EvalCount(u64);
        impl SearchObserver for EvalCount {
            fn on_dist_eval(&mut self, _id: u32) {
                self.0 += 1;
            }
        }
        let mut c = DistanceCounter::default();
        let mut obs = EvalCount(0);
        let q: Vec<f32> = (0..8).map(|x| x as f32).collect();
        s.search_observed(&q, SearchParams { k: 10, t_max: 80 }, &mut c, &mut obs)
            .unwrap();
        assert_eq!(c.sub_dist_evals, (ix.params.m * ix.params.n) as u64);
        assert_eq!(c.full_dist_evals, obs.0);
    }
}
