//! Blocked dense-kernel helpers for the O(N^2)-style build phases.
//!
//! Distances are expanded as |a|^2 + |b|^2 - 2 a.b so the inner products run
//! through a GEMM. The expansion is only used to shortlist candidates; callers
//! that need bit-exact ordering rerank the shortlist with the scalar kernel.

use ndarray::ArrayView2;

use crate::dataset::{cmp_dist_id, sq_dist};

const ROW_BLOCK: usize = 128;

fn sq_norms(data: &[f32], d: usize) -> Vec<f32> {
    data.chunks_exact(d)
        .map(|v| v.iter().map(|x| x * x).sum())
        .collect()
}

/// Nearest center per point (ties to the smaller center index), plus the
/// GEMM-approximate squared distance to it.
pub fn nearest_centers(points: &[f32], centers: &[f32], d: usize) -> Vec<(u32, f32)> {
    let n = points.len() / d;
    let k = centers.len() / d;
    assert!(k > 0);
    let c_norms = sq_norms(centers, d);
    let c_view = ArrayView2::from_shape((k, d), centers).unwrap();
    let mut out = Vec::with_capacity(n);
    for block_start in (0..n).step_by(ROW_BLOCK) {
        let rows = ROW_BLOCK.min(n - block_start);
        let p_view =
            ArrayView2::from_shape((rows, d), &points[block_start * d..(block_start + rows) * d])
                .unwrap();
        let prod = p_view.dot(&c_view.t());
        for r in 0..rows {
            let p_norm: f32 = p_view.row(r).iter().map(|x| x * x).sum();
            let mut best = (0u32, f32::INFINITY);
            for c in 0..k {
                let dist = p_norm + c_norms[c] - 2.0 * prod[(r, c)];
                if dist < best.1 {
                    best = (c as u32, dist);
                }
            }
            out.push(best);
        }
    }
    out
}

/// Exact k nearest points for each query row, ascending by (distance, id).
///
/// A GEMM pass shortlists `k + pad` candidates per query; the shortlist is
/// reranked with the exact scalar kernel so the final ordering matches
/// `brute_force_knn` bit for bit.
pub fn batch_knn_exact(
    points: &[f32],
    queries: &[f32],
    d: usize,
    k: usize,
    exclude_self_ids: bool,
) -> Vec<Vec<(u32, f32)>> {
    let n = points.len() / d;
    let nq = queries.len() / d;
    assert!(k <= n);
    let pad = 16 + if exclude_self_ids { 1 } else { 0 };
    let shortlist = (k + pad).min(n);
    let p_norms = sq_norms(points, d);
    let p_view = ArrayView2::from_shape((n, d), points).unwrap();
    let mut out = Vec::with_capacity(nq);
    let mut scored: Vec<(f32, u32)> = Vec::with_capacity(n);
    for block_start in (0..nq).step_by(ROW_BLOCK) {
        let rows = ROW_BLOCK.min(nq - block_start);
        let q_view =
            ArrayView2::from_shape((rows, d), &queries[block_start * d..(block_start + rows) * d])
                .unwrap();
        let prod = q_view.dot(&p_view.t());
        for r in 0..rows {
            let qi = block_start + r;
            let q = &queries[qi * d..(qi + 1) * d];
            let q_norm: f32 = q.iter().map(|x| x * x).sum();
            scored.clear();
            for c in 0..n {
                scored.push((q_norm + p_norms[c] - 2.0 * prod[(r, c)], c as u32));
            }
            if shortlist < n {
                scored.select_nth_unstable_by(shortlist, |a, b| {
                    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
                });
                scored.truncate(shortlist);
            }
            let mut exact: Vec<(u32, f32)> = scored
                .iter()
                .filter(|&&(_, id)| !(exclude_self_ids && id as usize == qi))
                .map(|&(_, id)| (id, sq_dist(q, &points[id as usize * d..(id as usize + 1) * d])))
                .collect();
            exact.sort_unstable_by(cmp_dist_id);
            exact.truncate(k);
            out.push(exact);
        }
    }
    out
}
