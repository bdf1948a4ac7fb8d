//! Brute-force reference implementations and random fixtures shared by the
//! integration and acceptance suites. Nothing here calls into the code
//! paths it checks.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Quadratic reference scan: full distance matrix, boolean active flags,
/// full sort per step and an integer nearest-rank.
pub fn reference_splice(desc: &[[f64; 6]], s_t: u32) -> Vec<usize> {
    let n = desc.len();
    let mut dist = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            #[allow(clippy::needless_range_loop)]
            for k in 0..6 {
                acc += (desc[i][k] - desc[j][k]) * (desc[i][k] - desc[j][k]);
            }
            dist[i][j] = acc.sqrt();
        }
    }
    let mut active = vec![true; n];
    let mut kept = Vec::new();
    for r in 0..n {
        if !active[r] {
            continue;
        }
        active[r] = false;
        kept.push(r);
        let others: Vec<usize> = (0..n).filter(|&j| active[j]).collect();
        if others.is_empty() {
            continue;
        }
        let mut sorted: Vec<f64> = others.iter().map(|&j| dist[r][j]).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let m = sorted.len();
        let rank = (s_t as usize * m).div_ceil(100);
        let threshold = sorted[rank.max(1) - 1];
        for j in others {
            if dist[r][j] < threshold || dist[r][j] == 0.0 {
                active[j] = false;
            }
        }
    }
    kept
}

/// Random descriptors, a share of them clumped or duplicated so the scan
/// meets ties and exact duplicates.
pub fn random_descriptors(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 6]> {
    let mut out: Vec<[f64; 6]> = Vec::with_capacity(n);
    for i in 0..n {
        let roll: f64 = rng.random();
        let d = if i > 0 && roll < 0.1 {
            out[rng.random_range(0..i)]
        } else if i > 0 && roll < 0.3 {
            let mut d = out[rng.random_range(0..i)];
            for (k, v) in d.iter_mut().enumerate() {
                let upper = if k < 3 { 1.0 } else { 0.5 };
                *v = (*v + rng.random_range(-0.01..0.01)).clamp(0.0, upper);
            }
            d
        } else {
            let mut d = [0.0; 6];
            for (k, v) in d.iter_mut().enumerate() {
                *v = rng.random::<f64>() * if k < 3 { 1.0 } else { 0.5 };
            }
            d
        };
        out.push(d);
    }
    out
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rows as plain f64 vectors.
pub type Rows = Vec<Vec<f64>>;

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Median over query rows of the nearest archive distance, by enumerating
/// every pair.
pub fn reference_median_min(q: &Rows, a: &Rows) -> f64 {
    let mut minima = Vec::new();
    for qr in q {
        let mut best = f64::INFINITY;
        for ar in a {
            let d = euclid(qr, ar);
            if d < best {
                best = d;
            }
        }
        minima.push(best);
    }
    minima.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let n = minima.len();
    if n % 2 == 1 {
        minima[n / 2]
    } else {
        0.5 * (minima[n / 2 - 1] + minima[n / 2])
    }
}

pub fn reference_sum_max_cosine(q: &Rows, a: &Rows) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut total = 0.0;
    for qr in q {
        let mut best = f64::NEG_INFINITY;
        for ar in a {
            let dot: f64 = qr.iter().zip(ar).map(|(x, y)| x * y).sum();
            let c = dot / (norm(qr) * norm(ar));
            if c > best {
                best = c;
            }
        }
        total += best;
    }
    total
}

/// Orders archive ids by repeated selection of the best remaining entry.
pub fn reference_ranking(scores: &[(String, f64)], lower_is_better: bool) -> Vec<String> {
    let mut remaining: Vec<(String, f64)> = scores.to_vec();
    let mut order = Vec::new();
    while !remaining.is_empty() {
        let mut best = 0;
        for i in 1..remaining.len() {
            let (ref id, s) = remaining[i];
            let (ref bid, bs) = remaining[best];
            let better = if lower_is_better { s < bs } else { s > bs };
            if better || (s == bs && id < bid) {
                best = i;
            }
        }
        order.push(remaining.remove(best).0);
    }
    order
}

/// Random case rows with values in [-1, 1], exactly representable in f32.
pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Rows {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0f32..1.0) as f64).collect())
        .collect()
}

/// Non-zero values on a 1/256 lattice, so sums with multiples of 1/4 and
/// products with powers of two stay exact in f32.
pub fn lattice_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Rows {
    (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let v = rng.random_range(1i32..=256) as f64 / 256.0;
                    if rng.random() {
                        v
                    } else {
                        -v
                    }
                })
                .collect()
        })
        .collect()
}
