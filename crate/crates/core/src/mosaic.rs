//! Case mosaics: k-means over a case's pooled collages, then the patches
//! nearest each centroid. Also the single-slide colour-cluster baseline.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::PatchRecord;
use crate::error::{CrispError, Result};
use crate::kmeans::{kmeans, squared_distance, KMeansFit, KMeansParams, DEFAULT_MAX_ITER};
use crate::splice::canonical_pool_order;

pub const DEFAULT_SEED: u64 = 724;
pub const YOTTIXEL_CLUSTERS: usize = 9;
pub const YOTTIXEL_PERCENT: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosaicConfig {
    pub k: usize,
    /// Percentage of each cluster to keep, in (0, 100].
    pub alpha: f64,
    pub seed: u64,
    pub max_iter: usize,
}

impl MosaicConfig {
    pub fn new(k: usize, alpha: f64, seed: u64) -> Result<Self> {
        let mut errs = Vec::new();
        if k < 1 {
            errs.push(format!("K = {k} must be at least 1"));
        }
        if !(alpha > 0.0 && alpha <= 100.0) {
            errs.push(format!("alpha = {alpha} must satisfy 0 < alpha <= 100"));
        }
        if !errs.is_empty() {
            return Err(CrispError::InvalidConfig(errs));
        }
        Ok(MosaicConfig {
            k,
            alpha,
            seed,
            max_iter: DEFAULT_MAX_ITER,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseMosaic {
    pub case_id: String,
    pub kept: Vec<String>,
    pub cluster_assignments: BTreeMap<String, usize>,
    pub per_cluster_kept: BTreeMap<usize, Vec<String>>,
}

/// `max(1, round_half_up(alpha% of size))`.
pub fn retention_count(alpha: f64, cluster_size: usize) -> usize {
    let exact = alpha * cluster_size as f64 / 100.0;
    ((exact + 0.5).floor() as usize).max(1)
}

/// A clustered pool, reusable across retention percentages.
#[derive(Clone, Debug)]
pub struct PoolClustering {
    pub case_id: String,
    /// Pool in canonical (slide id, raster) order.
    pub pool: Vec<PatchRecord>,
    pub fit: KMeansFit,
}

fn descriptor_matrix(pool: &[PatchRecord]) -> Vec<f64> {
    pool.iter().flat_map(|p| p.descriptor).collect()
}

/// Canonicalises the pool order and runs k-means on the descriptors.
pub fn cluster_pool(
    case_id: &str,
    pool: &[PatchRecord],
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<PoolClustering> {
    if pool.is_empty() {
        return Err(CrispError::EmptyInput("case contributed no tissue patches"));
    }
    let mut pool = pool.to_vec();
    canonical_pool_order(&mut pool);
    let fit = kmeans(&descriptor_matrix(&pool), 6, KMeansParams { k, max_iter, seed })?;
    Ok(PoolClustering {
        case_id: case_id.to_string(),
        pool,
        fit,
    })
}

impl PoolClustering {
    fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.fit.k];
        for (i, &c) in self.fit.assignments.iter().enumerate() {
            members[c].push(i);
        }
        members
    }

    fn mosaic_from(&self, per_cluster: Vec<(usize, Vec<usize>)>) -> CaseMosaic {
        let cluster_assignments = self
            .pool
            .iter()
            .zip(&self.fit.assignments)
            .map(|(p, &c)| (p.patch_id.clone(), c))
            .collect();
        let mut kept = Vec::new();
        let mut per_cluster_kept = BTreeMap::new();
        for (c, idx) in per_cluster {
            let ids: Vec<String> = idx.iter().map(|&i| self.pool[i].patch_id.clone()).collect();
            kept.extend(ids.iter().cloned());
            per_cluster_kept.insert(c, ids);
        }
        CaseMosaic {
            case_id: self.case_id.clone(),
            kept,
            cluster_assignments,
            per_cluster_kept,
        }
    }

    /// Keeps the `alpha`% of each cluster nearest its centroid (at least one).
    pub fn select_centroid_proximal(&self, alpha: f64) -> CaseMosaic {
        let per_cluster = self
            .members()
            .into_iter()
            .enumerate()
            .filter(|(_, m)| !m.is_empty())
            .map(|(c, mut m)| {
                let centroid = self.fit.centroid(c);
                let dist: Vec<f64> = m
                    .iter()
                    .map(|&i| squared_distance(&self.pool[i].descriptor, centroid))
                    .collect();
                let mut order: Vec<usize> = (0..m.len()).collect();
                // Pool indices already follow (slide id, raster), so they break ties.
                order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(m[a].cmp(&m[b])));
                let keep = retention_count(alpha, m.len());
                let chosen: Vec<usize> = order[..keep].iter().map(|&o| m[o]).collect();
                m.clear();
                (c, chosen)
            })
            .collect();
        self.mosaic_from(per_cluster)
    }

    /// Keeps a seeded uniform sample of `percent`% of each cluster.
    pub fn select_uniform(&self, percent: f64, seed: u64) -> CaseMosaic {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let per_cluster = self
            .members()
            .into_iter()
            .enumerate()
            .filter(|(_, m)| !m.is_empty())
            .map(|(c, m)| {
                let keep = retention_count(percent, m.len());
                let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, m.len(), keep)
                    .into_iter()
                    .map(|o| m[o])
                    .collect();
                picked.sort_unstable();
                (c, picked)
            })
            .collect();
        self.mosaic_from(per_cluster)
    }
}

/// Builds the case mosaic from the pooled collage patches of one case.
pub fn build_case_mosaic(case_id: &str, pool: &[PatchRecord], cfg: &MosaicConfig) -> Result<CaseMosaic> {
    Ok(cluster_pool(case_id, pool, cfg.k, cfg.seed, cfg.max_iter)?.select_centroid_proximal(cfg.alpha))
}

/// Single-slide baseline: nine colour clusters, 5% of each sampled uniformly.
pub fn build_yottixel_mosaic(id: &str, patches: &[PatchRecord], seed: u64) -> Result<CaseMosaic> {
    let clustering = cluster_pool(id, patches, YOTTIXEL_CLUSTERS, seed, DEFAULT_MAX_ITER)?;
    Ok(clustering.select_uniform(YOTTIXEL_PERCENT, seed))
}

/// Percentage reduction from `total_raw` to `kept`, rounded to one decimal.
pub fn reduction_stats(total_raw: f64, kept: f64) -> Result<f64> {
    if total_raw.is_nan() || total_raw <= 0.0 {
        return Err(CrispError::InvalidConfig(vec![format!(
            "total_raw = {total_raw} must be positive"
        )]));
    }
    if !(0.0..=total_raw).contains(&kept) {
        return Err(CrispError::InvalidConfig(vec![format!(
            "kept = {kept} must lie in [0, {total_raw}]"
        )]));
    }
    let pct = 100.0 * (1.0 - kept / total_raw);
    Ok((pct * 10.0).round() / 10.0)
}
