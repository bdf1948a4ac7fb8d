//! Sequential percentile-threshold pruning of colour-redundant patches.
//!
//! The scan walks patches in the given order. The first still-active patch
//! becomes the reference and is admitted to the collage; every other active
//! patch whose descriptor distance to the reference falls strictly below
//! the `s_t`-th nearest-rank percentile of those distances is deactivated,
//! as is any exact duplicate of the reference. The threshold is recomputed
//! from the remaining active set at every step.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::cohort::{Descriptor, PatchRecord};
use crate::error::{CrispError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpliceConfig {
    /// Percentile in [0, 100].
    pub s_t: f64,
}

impl SpliceConfig {
    pub fn new(s_t: f64) -> Result<Self> {
        if !(0.0..=100.0).contains(&s_t) {
            return Err(CrispError::InvalidConfig(vec![format!(
                "s_t = {s_t} must lie in [0, 100]"
            )]));
        }
        Ok(SpliceConfig { s_t })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlideCollage {
    pub slide_id: String,
    /// Admitted patch ids, in admission order.
    pub kept: Vec<String>,
    pub discarded_count: usize,
}

/// Zero-based index of the nearest-rank percentile among `m` sorted values.
pub fn nearest_rank_index(s_t: f64, m: usize) -> usize {
    debug_assert!(m > 0);
    // Multiply before dividing so integral percentiles give exact ranks.
    let rank = (s_t * m as f64 / 100.0).ceil() as isize - 1;
    rank.clamp(0, m as isize - 1) as usize
}

pub fn descriptor_distance(a: &Descriptor, b: &Descriptor) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Runs the scan over descriptors and returns the admitted indices.
pub fn splice_indices(descriptors: &[Descriptor], s_t: f64) -> Vec<usize> {
    let mut active: Vec<usize> = (0..descriptors.len()).collect();
    let mut kept = Vec::new();
    let mut dists: Vec<f64> = Vec::with_capacity(descriptors.len());
    let mut scratch: Vec<f64> = Vec::with_capacity(descriptors.len());

    while let Some((&reference, rest)) = active.split_first() {
        kept.push(reference);
        if rest.is_empty() {
            break;
        }
        let r = &descriptors[reference];
        dists.clear();
        dists.extend(rest.iter().map(|&j| descriptor_distance(r, &descriptors[j])));

        scratch.clear();
        scratch.extend_from_slice(&dists);
        let k = nearest_rank_index(s_t, scratch.len());
        let (_, threshold, _) = scratch.select_nth_unstable_by(k, |a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        let threshold = *threshold;

        let survivors: Vec<usize> = rest
            .iter()
            .zip(&dists)
            .filter(|&(_, &d)| !(d < threshold || d == 0.0))
            .map(|(&j, _)| j)
            .collect();
        active = survivors;
    }
    kept
}

fn check_finite(patches: &[PatchRecord]) -> Result<()> {
    for p in patches {
        if p.descriptor.iter().any(|v| !v.is_finite()) {
            return Err(CrispError::InvalidDescriptor {
                patch_id: p.patch_id.clone(),
                reason: "non-finite component".into(),
            });
        }
    }
    Ok(())
}

/// Builds the collage for one slide. `patches` must be in raster order.
pub fn splice_slide(slide_id: &str, patches: &[PatchRecord], cfg: SpliceConfig) -> Result<SlideCollage> {
    check_finite(patches)?;
    let descriptors: Vec<Descriptor> = patches.iter().map(|p| p.descriptor).collect();
    let kept_idx = splice_indices(&descriptors, cfg.s_t);
    Ok(SlideCollage {
        slide_id: slide_id.to_string(),
        discarded_count: patches.len() - kept_idx.len(),
        kept: kept_idx.into_iter().map(|i| patches[i].patch_id.clone()).collect(),
    })
}

/// Orders a pooled case by slide id, then raster position.
pub fn canonical_pool_order(pool: &mut [PatchRecord]) {
    pool.sort_by(|a, b| {
        a.slide_id
            .cmp(&b.slide_id)
            .then_with(|| a.raster_key().cmp(&b.raster_key()))
    });
}

/// Re-runs the scan over a pooled case (the ablation baseline to k-means).
pub fn splice_case_pool(case_id: &str, pool: &[PatchRecord], cfg: SpliceConfig) -> Result<SlideCollage> {
    let mut ordered = pool.to_vec();
    canonical_pool_order(&mut ordered);
    splice_slide(case_id, &ordered, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn on_axis(values: &[f64]) -> Vec<PatchRecord> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| PatchRecord::new("S", i as u32, 0, 1.0, [v, 0.0, 0.0, 0.0, 0.0, 0.0]))
            .collect()
    }

    fn cfg(s_t: f64) -> SpliceConfig {
        SpliceConfig::new(s_t).unwrap()
    }

    #[test]
    fn nearest_rank() {
        assert_eq!(nearest_rank_index(50.0, 3), 1);
        assert_eq!(nearest_rank_index(0.0, 5), 0);
        assert_eq!(nearest_rank_index(100.0, 5), 4);
        assert_eq!(nearest_rank_index(30.0, 10), 2);
        assert_eq!(nearest_rank_index(20.0, 5), 0);
        assert_eq!(nearest_rank_index(21.0, 5), 1);
    }

    #[test]
    fn single_patch() {
        let c = splice_slide("S", &on_axis(&[0.3]), cfg(37.0)).unwrap();
        assert_eq!(c.kept, ["S:0:0"]);
        assert_eq!(c.discarded_count, 0);
    }

    #[test]
    fn zero_percentile_keeps_distinct_patches() {
        let patches = on_axis(&[0.0, 0.4, 0.1, 0.9, 0.3]);
        let c = splice_slide("S", &patches, cfg(0.0)).unwrap();
        assert_eq!(c.kept.len(), 5);
    }

    #[test]
    fn worked_four_patch_example() {
        let patches = on_axis(&[0.0, 0.1, 0.2, 1.0]);
        let c = splice_slide("S", &patches, cfg(50.0)).unwrap();
        assert_eq!(c.kept, ["S:0:0", "S:2:0", "S:3:0"]);
        assert_eq!(c.discarded_count, 1);
    }

    #[test]
    fn duplicates_collapse_to_one() {
        for s_t in [0.0, 1.0, 20.0, 40.0, 100.0] {
            let c = splice_slide("S", &on_axis(&[0.25; 7]), cfg(s_t)).unwrap();
            assert_eq!(c.kept.len(), 1, "s_t = {s_t}");
            assert_eq!(c.discarded_count, 6);
        }
    }

    #[test]
    fn empty_and_invalid() {
        let c = splice_slide("S", &[], cfg(20.0)).unwrap();
        assert!(c.kept.is_empty());
        assert_eq!(c.discarded_count, 0);
        assert!(SpliceConfig::new(100.5).is_err());
        assert!(SpliceConfig::new(-1.0).is_err());
        let mut bad = on_axis(&[0.0, 0.5]);
        bad[1].descriptor[2] = f64::NAN;
        assert!(splice_slide("S", &bad, cfg(20.0)).is_err());
    }

    #[test]
    fn case_pool_of_one_slide_matches_slide() {
        let patches = on_axis(&[0.0, 0.3, 0.31, 0.7, 0.72, 0.9]);
        let a = splice_slide("S", &patches, cfg(30.0)).unwrap();
        let b = splice_case_pool("case", &patches, cfg(30.0)).unwrap();
        assert_eq!(a.kept, b.kept);
        assert!(splice_case_pool("case", &[], cfg(30.0)).unwrap().kept.is_empty());
    }

    #[test]
    fn case_pool_orders_by_slide_then_raster() {
        let d = |v: f64| [v, 0.0, 0.0, 0.0, 0.0, 0.0];
        let pool = vec![
            PatchRecord::new("B", 0, 0, 1.0, d(0.9)),
            PatchRecord::new("A", 1, 0, 1.0, d(0.5)),
            PatchRecord::new("A", 0, 0, 1.0, d(0.1)),
        ];
        let c = splice_case_pool("case", &pool, cfg(0.0)).unwrap();
        assert_eq!(c.kept, ["A:0:0", "A:1:0", "B:0:0"]);
    }
}
