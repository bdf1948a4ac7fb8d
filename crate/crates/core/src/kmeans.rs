//! Lloyd's k-means with seeded k-means++ initialisation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CrispError, Result};

pub const DEFAULT_MAX_ITER: usize = 300;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub max_iter: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    pub k: usize,
    pub dim: usize,
    /// `k * dim` row-major centroids; each is the mean of its members.
    pub centroids: Vec<f64>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// Within-cluster sum of squares after every centroid update.
    pub inertia_history: Vec<f64>,
}

impl KMeansFit {
    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = squared_distance(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(points: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n).map(|i| squared_distance(row(i), row(chosen[0]))).collect();

    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total weight has a positive entry")
        } else {
            // Every point coincides with a chosen centre.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, w) in d2.iter_mut().enumerate() {
            *w = w.min(squared_distance(row(i), row(next)));
        }
    }

    chosen.iter().flat_map(|&i| row(i).iter().copied()).collect()
}

/// Clusters `points` (row-major, `dim` columns) into `min(k, n)` groups.
pub fn kmeans(points: &[f64], dim: usize, params: KMeansParams) -> Result<KMeansFit> {
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(CrispError::DimMismatch {
            left: dim,
            right: points.len(),
        });
    }
    let n = points.len() / dim;
    if n == 0 {
        return Err(CrispError::EmptyInput("k-means on an empty point set"));
    }
    if params.k == 0 {
        return Err(CrispError::InvalidConfig(vec!["k must be at least 1".into()]));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(CrispError::InvalidDescriptor {
            patch_id: "<k-means input>".into(),
            reason: "non-finite component".into(),
        });
    }
    let k = params.k.min(n);
    let row = |i: usize| &points[i * dim..(i + 1) * dim];

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = plus_plus_init(points, dim, k, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let mut point_cost = vec![0.0; n];
    let mut inertia_history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < params.max_iter {
        let mut changed = false;
        for i in 0..n {
            let (c, d) = nearest(row(i), &centroids, dim);
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
            point_cost[i] = d;
        }
        if !changed {
            converged = true;
            break;
        }

        let mut sizes = vec![0usize; k];
        for &a in &assignments {
            sizes[a] += 1;
        }
        for empty in 0..k {
            if sizes[empty] > 0 {
                continue;
            }
            // Farthest point from its centroid, taken from a cluster that can spare it.
            let donor = (0..n)
                .filter(|&i| sizes[assignments[i]] > 1 && point_cost[i] > 0.0)
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if point_cost[b] >= point_cost[i] => Some(b),
                    _ => Some(i),
                });
            if let Some(i) = donor {
                sizes[assignments[i]] -= 1;
                sizes[empty] = 1;
                assignments[i] = empty;
                point_cost[i] = 0.0;
            }
        }

        let mut sums = vec![0.0; k * dim];
        for (i, &a) in assignments.iter().enumerate() {
            for (s, v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if sizes[c] == 0 {
                continue;
            }
            for (dst, s) in centroids[c * dim..(c + 1) * dim]
                .iter_mut()
                .zip(&sums[c * dim..(c + 1) * dim])
            {
                *dst = s / sizes[c] as f64;
            }
        }
        iterations += 1;
        let inertia = (0..n)
            .map(|i| squared_distance(row(i), &centroids[assignments[i] * dim..(assignments[i] + 1) * dim]))
            .sum();
        inertia_history.push(inertia);
    }

    Ok(KMeansFit {
        k,
        dim,
        centroids,
        assignments,
        iterations,
        converged,
        inertia_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn params(k: usize, seed: u64) -> KMeansParams {
        KMeansParams {
            k,
            max_iter: DEFAULT_MAX_ITER,
            seed,
        }
    }

    fn blobs(centres: &[[f64; 2]], per: usize, spread: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, spread).unwrap();
        centres
            .iter()
            .flat_map(|c| (0..per).map(|_| *c).collect::<Vec<_>>())
            .flat_map(|c| [c[0] + noise.sample(&mut rng), c[1] + noise.sample(&mut rng)])
            .collect()
    }

    #[test]
    fn recovers_separated_blobs() {
        let pts = blobs(&[[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]], 30, 0.3, 1);
        let fit = kmeans(&pts, 2, params(3, 724)).unwrap();
        assert!(fit.converged);
        for b in 0..3 {
            let first = fit.assignments[b * 30];
            assert!(fit.assignments[b * 30..(b + 1) * 30].iter().all(|&a| a == first));
        }
        let mut sizes = fit.cluster_sizes();
        sizes.sort();
        assert_eq!(sizes, [30, 30, 30]);
    }

    #[test]
    fn clamps_k_to_point_count() {
        let pts = [0.0, 1.0, 2.0, 3.0, 4.0];
        let fit = kmeans(&pts, 1, params(7, 0)).unwrap();
        assert_eq!(fit.k, 5);
        let mut a = fit.assignments.clone();
        a.sort();
        assert_eq!(a, [0, 1, 2, 3, 4]);
    }

    #[test]
    fn duplicate_points_do_not_loop() {
        let pts = [1.0; 8];
        let fit = kmeans(&pts, 2, params(3, 9)).unwrap();
        assert_eq!(fit.k, 3);
        assert!(fit.iterations < DEFAULT_MAX_ITER);
        let sizes = fit.cluster_sizes();
        assert_eq!(sizes.iter().sum::<usize>(), 4);
    }

    #[test]
    fn inertia_never_increases() {
        for seed in 0..20 {
            let pts = blobs(&[[0.0, 0.0], [3.0, 1.0], [1.0, 4.0], [5.0, 5.0]], 25, 1.5, seed);
            let fit = kmeans(&pts, 2, params(6, seed)).unwrap();
            for w in fit.inertia_history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "seed {seed}: {w:?}");
            }
        }
    }

    #[test]
    fn centroids_are_member_means() {
        let pts = blobs(&[[0.0, 0.0], [4.0, 4.0]], 10, 1.0, 3);
        let fit = kmeans(&pts, 2, params(2, 5)).unwrap();
        for c in 0..fit.k {
            let members: Vec<usize> = (0..20).filter(|&i| fit.assignments[i] == c).collect();
            for d in 0..2 {
                let mean = members.iter().map(|&i| pts[i * 2 + d]).sum::<f64>() / members.len() as f64;
                assert!((mean - fit.centroid(c)[d]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn seeded_runs_repeat() {
        let pts = blobs(&[[0.0, 0.0], [2.0, 2.0]], 40, 1.0, 11);
        assert_eq!(
            kmeans(&pts, 2, params(5, 724)).unwrap(),
            kmeans(&pts, 2, params(5, 724)).unwrap()
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert!(kmeans(&[], 2, params(2, 0)).is_err());
        assert!(kmeans(&[1.0, 2.0], 2, params(0, 0)).is_err());
        assert!(kmeans(&[1.0, f64::NAN], 2, params(1, 0)).is_err());
        assert!(kmeans(&[1.0, 2.0, 3.0], 2, params(1, 0)).is_err());
    }
}
