//! Lloyd k-means with k-means++ seeding, used for codebook and vocabulary
//! training. Deterministic for a fixed seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::sq_dist;
use crate::dense::nearest_centers;
use crate::error::{Error, Result};

pub struct KMeansOutput {
    /// k centers, row-major.
    pub centers: Vec<f32>,
    /// Nearest-center index per input point.
    pub assignments: Vec<u32>,
    /// Within-cluster SSE after each Lloyd iteration.
    pub sse_history: Vec<f64>,
}

impl KMeansOutput {
    pub fn sse(&self) -> f64 {
        *self.sse_history.last().unwrap_or(&0.0)
    }
}

/// k-means++ seeding: first center uniform, the rest by D^2 sampling.
pub fn kmeanspp_init(data: &[f32], d: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = data.len() / d;
    let mut centers = Vec::with_capacity(k * d);
    let first = rng.gen_range(0..n);
    centers.extend_from_slice(&data[first * d..(first + 1) * d]);
    let mut min_d2: Vec<f32> = data
        .chunks_exact(d)
        .map(|p| sq_dist(p, &centers[..d]))
        .collect();
    for _ in 1..k {
        let total: f64 = min_d2.iter().map(|&x| x as f64).sum();
        let pick = if total > 0.0 {
            let threshold = rng.gen::<f64>() * total;
            let mut acc = 0.0f64;
            let mut chosen = n - 1;
            for (i, &w) in min_d2.iter().enumerate() {
                acc += w as f64;
                if acc >= threshold {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // all points coincide with existing centers
            rng.gen_range(0..n)
        };
        let start = centers.len();
        centers.extend_from_slice(&data[pick * d..(pick + 1) * d]);
        for (i, p) in data.chunks_exact(d).enumerate() {
            let dd = sq_dist(p, &centers[start..start + d]);
            if dd < min_d2[i] {
                min_d2[i] = dd;
            }
        }
    }
    centers
}

/// Runs at most `iters` Lloyd iterations. Empty clusters are repaired by
/// re-seeding at the farthest member of the largest cluster.
pub fn kmeans(data: &[f32], d: usize, k: usize, seed: u64, iters: usize) -> Result<KMeansOutput> {
    let n = data.len() / d;
    if k == 0 || n < k {
        return Err(Error::InvalidParam(format!(
            "kmeans: {n} points cannot seed {k} clusters"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeanspp_init(data, d, k, &mut rng);
    let mut assignments: Vec<u32> = vec![0; n];
    let mut sse_history = Vec::with_capacity(iters);
    for _ in 0..iters {
        let assigned = nearest_centers(data, &centers, d);
        let mut sse = 0.0f64;
        for (i, &(c, dist)) in assigned.iter().enumerate() {
            assignments[i] = c;
            sse += dist.max(0.0) as f64;
        }
        sse_history.push(sse);

        // update step
        let mut sums = vec![0.0f64; k * d];
        let mut counts = vec![0usize; k];
        for (i, p) in data.chunks_exact(d).enumerate() {
            let c = assignments[i] as usize;
            counts[c] += 1;
            for (j, &x) in p.iter().enumerate() {
                sums[c * d + j] += x as f64;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            for j in 0..d {
                centers[c * d + j] = (sums[c * d + j] / counts[c] as f64) as f32;
            }
        }
        repair_empty_clusters(data, d, &mut centers, &mut assignments, &mut counts);
        if sse_history.len() >= 2 {
            let m = sse_history.len();
            if sse_history[m - 1] == sse_history[m - 2] {
                break;
            }
        }
    }
    // final assignment against the last centers
    let assigned = nearest_centers(data, &centers, d);
    let mut sse = 0.0f64;
    for (i, &(c, dist)) in assigned.iter().enumerate() {
        assignments[i] = c;
        sse += dist.max(0.0) as f64;
    }
    sse_history.push(sse);
    Ok(KMeansOutput {
        centers,
        assignments,
        sse_history,
    })
}

fn repair_empty_clusters(
    data: &[f32],
    d: usize,
    centers: &mut [f32],
    assignments: &mut [u32],
    counts: &mut [usize],
) {
    let k = counts.len();
    for empty in 0..k {
        if counts[empty] != 0 {
            continue;
        }
        let donor = (0..k).max_by_key(|&c| counts[c]).unwrap();
        if counts[donor] < 2 {
            continue;
        }
        // split the largest cluster at its farthest member
        let mut far = (0usize, -1.0f32);
        for (i, p) in data.chunks_exact(d).enumerate() {
            if assignments[i] as usize == donor {
                let dist = sq_dist(p, &centers[donor * d..(donor + 1) * d]);
                if dist > far.1 {
                    far = (i, dist);
                }
            }
        }
        let (idx, _) = far;
        centers[empty * d..(empty + 1) * d].copy_from_slice(&data[idx * d..(idx + 1) * d]);
        assignments[idx] = empty as u32;
        counts[donor] -= 1;
        counts[empty] += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn recovers_exact_clusters() {
        // 4 well-separated values repeated; k = 4 must reach SSE 0
        let mut data = Vec::new();
        for v in [0.0f32, 10.0, 20.0, 30.0] {
            for _ in 0..8 {
                data.push(v);
                data.push(v + 1.0);
            }
        }
        let out = kmeans(&data, 2, 4, 9, 25).unwrap();
        assert!(out.sse() < 1e-9, "sse = {}", out.sse());
    }

    #[test]
    fn sse_monotone_nonincreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let data: Vec<f32> = (0..500 * 4).map(|_| rng.gen_range(0.0..1.0)).collect();
        let out = kmeans(&data, 4, 8, 1, 25).unwrap();
        for w in out.sse_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-6) + 1e-12, "{:?}", out.sse_history);
        }
    }

    #[test]
    fn too_few_points_rejected() {
        let data = vec![0.0f32; 3 * 2];
        assert!(kmeans(&data, 2, 4, 0, 10).is_err());
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<f32> = (0..100 * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
        let a = kmeans(&data, 3, 5, 77, 15).unwrap();
        let b = kmeans(&data, 3, 5, 77, 15).unwrap();
        assert_eq!(a.centers, b.centers);
        assert_eq!(a.assignments, b.assignments);
    }
}
