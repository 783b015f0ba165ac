//! Lloyd's k-means with k-means++ seeding, shared by PQ codebook training
//! and k-means token selection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::squared_l2;

pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone)]
pub struct KMeans {
    /// `k x dim` row-major centroids.
    pub centroids: Vec<f32>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

/// Index of the nearest centroid by squared Euclidean distance, ties toward
/// the smaller index.
pub fn nearest(point: &[f32], centroids: &[f32], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = squared_l2(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Clusters `n = data.len() / dim` points into `k` groups.
///
/// Stops when assignments no longer change or after [`MAX_ITERATIONS`]
/// updates. On return `centroids` are exactly the means of the clusters
/// described by `assignments` and every cluster is non-empty.
pub fn kmeans(data: &[f32], dim: usize, k: usize, seed: u64) -> Result<KMeans> {
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(Error::InvalidParameter(
            "data length is not a multiple of dim".into(),
        ));
    }
    let n = data.len() / dim;
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    if n < k {
        return Err(Error::TooFewVectors { needed: k, got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(data, dim, k, &mut rng);
    let mut assignments = assign(data, &centroids, dim);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        reseed_empty(data, dim, k, &mut centroids, &mut assignments);
        centroids = means(data, dim, k, &assignments);
        let next = assign(data, &centroids, dim);
        if next == assignments {
            converged = true;
            break;
        }
        assignments = next;
    }
    if !converged {
        reseed_empty(data, dim, k, &mut centroids, &mut assignments);
        centroids = means(data, dim, k, &assignments);
    }
    Ok(KMeans {
        centroids,
        assignments,
        iterations,
        converged,
    })
}

fn plus_plus_init(data: &[f32], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = data.len() / dim;
    let point = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(point(first));
    let mut dist: Vec<f64> = (0..n).map(|i| squared_l2(point(i), point(first))).collect();
    for _ in 1..k {
        let total: f64 = dist.iter().sum();
        let chosen = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in dist.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                pick = Some(i);
                acc += d;
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // fewer distinct points than k
            rng.random_range(0..n)
        };
        let c = point(chosen);
        centroids.extend_from_slice(c);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(squared_l2(point(i), c));
        }
    }
    centroids
}

fn assign(data: &[f32], centroids: &[f32], dim: usize) -> Vec<usize> {
    data.par_chunks_exact(dim)
        .map(|p| nearest(p, centroids, dim).0)
        .collect()
}

fn means(data: &[f32], dim: usize, k: usize, assignments: &[usize]) -> Vec<f32> {
    let mut sums = vec![0f64; k * dim];
    let mut counts = vec![0usize; k];
    for (p, &a) in data.chunks_exact(dim).zip(assignments) {
        counts[a] += 1;
        for (s, &v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(p) {
            *s += v as f64;
        }
    }
    sums.chunks_exact(dim)
        .zip(&counts)
        .flat_map(|(s, &c)| s.iter().map(move |v| (v / c.max(1) as f64) as f32))
        .collect()
}

/// Moves, for every empty cluster, the point farthest from its assigned
/// centroid (among clusters with more than one member) into that cluster.
fn reseed_empty(
    data: &[f32],
    dim: usize,
    k: usize,
    centroids: &mut [f32],
    assignments: &mut [usize],
) {
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    for empty in 0..k {
        if counts[empty] != 0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in data.chunks_exact(dim).enumerate() {
            let a = assignments[i];
            if counts[a] < 2 {
                continue;
            }
            let d = squared_l2(p, &centroids[a * dim..(a + 1) * dim]);
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        let Some((i, _)) = best else { return };
        counts[assignments[i]] -= 1;
        counts[empty] = 1;
        assignments[i] = empty;
        centroids[empty * dim..(empty + 1) * dim].copy_from_slice(&data[i * dim..(i + 1) * dim]);
    }
}
