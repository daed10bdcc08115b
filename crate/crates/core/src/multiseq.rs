//! Multi-sequence enumeration: lazily yields bridge vectors in non-decreasing
//! distance to the query, driven by the sorted per-subspace distance tables.
//!
//! A candidate is a tuple of ranks, one per sorted row; its key is the sum of
//! the ranked values. The stream pops the minimum-key tuple and pushes a
//! successor (one rank incremented) once all of the successor's predecessors
//! have themselves been pushed. Producing the t-th tuple costs O(log t) heap
//! work.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use crate::dataset::DistanceCounter;
use crate::error::{Error, Result};
use crate::quantizer::DistanceTables;

#[derive(Debug, Clone)]
struct Candidate {
    key: f32,
    /// 0-based ranks into each sorted row.
    pos: Vec<u32>,
}

// Min-ordering: smaller key first, ties by lexicographically smaller ranks.
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .key
            .total_cmp(&self.key)
            .then_with(|| other.pos.cmp(&self.pos))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key && self.pos == other.pos
    }
}

impl Eq for Candidate {}

/// One extraction from the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeCandidate {
    /// Packed codeword tuple (ranks mapped through the sort permutations).
    pub bridge_id: u64,
    /// Squared distance to the query: sum of the ranked row values.
    pub dist: f32,
    /// The rank tuple itself, 0-based.
    pub positions: Vec<u32>,
}

pub struct MultiSeq<'a> {
    tables: &'a DistanceTables,
    heap: BinaryHeap<Candidate>,
    /// Packed rank tuples ever pushed (pushed-or-popped membership).
    pushed: HashSet<u64>,
    n: usize,
    m: usize,
    extracted: u64,
}

impl<'a> MultiSeq<'a> {
    pub fn new(tables: &'a DistanceTables) -> Result<Self> {
        let m = tables.num_subspaces();
        if m == 0 || (0..m).any(|i| tables.row(i).is_empty()) {
            return Err(Error::InvalidParam("multiseq: empty row".into()));
        }
        let n = tables.clusters();
        if (n as u64).checked_pow(m as u32).is_none() {
            return Err(Error::InvalidParam(format!(
                "multiseq: {n}^{m} tuples overflow u64"
            )));
        }
        let first = Candidate {
            key: sum_key(tables, &vec![0u32; m]),
            pos: vec![0u32; m],
        };
        let mut pushed = HashSet::new();
        pushed.insert(pack_pos(&first.pos, n));
        let mut heap = BinaryHeap::new();
        heap.push(first);
        Ok(MultiSeq {
            tables,
            heap,
            pushed,
            n,
            m,
            extracted: 0,
        })
    }

    pub fn extracted(&self) -> u64 {
        self.extracted
    }

    /// Next bridge vector in non-decreasing distance order, or None once all
    /// n^m tuples have been emitted.
    pub fn next(&mut self, counter: &mut DistanceCounter) -> Option<BridgeCandidate> {
        let top = self.heap.pop()?;
        counter.heap_ops += 1;
        self.extracted += 1;
        for i in 0..self.m {
            if top.pos[i] as usize + 1 >= self.n {
                continue;
            }
            let mut succ = top.pos.clone();
            succ[i] += 1;
            let packed = pack_pos(&succ, self.n);
            if self.pushed.contains(&packed) || !self.predecessors_pushed(&succ) {
                continue;
            }
            self.pushed.insert(packed);
            self.heap.push(Candidate {
                key: sum_key(self.tables, &succ),
                pos: succ,
            });
            counter.heap_ops += 1;
        }
        let mut bridge_id = 0u64;
        for (i, &rank) in top.pos.iter().enumerate() {
            bridge_id = bridge_id * self.n as u64 + self.tables.perm(i)[rank as usize] as u64;
        }
        Some(BridgeCandidate {
            bridge_id,
            dist: top.key,
            positions: top.pos,
        })
    }

    fn predecessors_pushed(&self, pos: &[u32]) -> bool {
        let mut pred = pos.to_vec();
        for j in 0..self.m {
            if pos[j] == 0 {
                continue;
            }
            pred[j] -= 1;
            let in_set = self.pushed.contains(&pack_pos(&pred, self.n));
            pred[j] += 1;
            if !in_set {
                return false;
            }
        }
        true
    }
}

fn sum_key(tables: &DistanceTables, pos: &[u32]) -> f32 {
    let mut acc = 0.0f32;
    for (i, &rank) in pos.iter().enumerate() {
        acc += tables.ranked(i, rank as usize);
    }
    acc
}

fn pack_pos(pos: &[u32], n: usize) -> u64 {
    let mut id = 0u64;
    for &p in pos {
        id = id * n as u64 + p as u64;
    }
    id
}
