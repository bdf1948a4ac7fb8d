//! Cohort-level composition of the two selection stages.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cohort::{Case, Cohort, LoadedCase, PatchRecord};
use crate::error::{CrispError, Result};
use crate::kmeans::DEFAULT_MAX_ITER;
use crate::mosaic::{cluster_pool, CaseMosaic, MosaicConfig, PoolClustering};
use crate::par;
use crate::retrieval::CaseSignature;
use crate::splice::{canonical_pool_order, splice_case_pool, splice_slide, SlideCollage, SpliceConfig};

/// Collages keyed by slide id.
pub type Collages = BTreeMap<String, SlideCollage>;

/// How a case's pooled collages are reduced to its final patch set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseReduction {
    /// k-means clustering with centroid-proximal sampling.
    #[default]
    #[serde(rename = "kmeans")]
    KMeans,
    /// A second percentile scan over the pooled case (ablation baseline).
    SpliceReselect,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrispParams {
    pub s_t: f64,
    pub k: usize,
    pub alpha: f64,
    pub seed: u64,
    #[serde(default)]
    pub reduction: CaseReduction,
}

impl CrispParams {
    pub fn new(s_t: f64, k: usize, alpha: f64, seed: u64) -> Self {
        CrispParams {
            s_t,
            k,
            alpha,
            seed,
            reduction: CaseReduction::KMeans,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if let Err(CrispError::InvalidConfig(e)) = SpliceConfig::new(self.s_t) {
            errs.extend(e);
        }
        if let Err(CrispError::InvalidConfig(e)) = MosaicConfig::new(self.k, self.alpha, self.seed) {
            errs.extend(e);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CrispError::InvalidConfig(errs))
        }
    }

    pub fn splice(&self) -> SpliceConfig {
        SpliceConfig { s_t: self.s_t }
    }

    pub fn mosaic(&self) -> MosaicConfig {
        MosaicConfig {
            k: self.k,
            alpha: self.alpha,
            seed: self.seed,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Runs the per-slide scan on every slide of every case.
pub fn splice_cohort<'a>(cases: impl IntoIterator<Item = &'a Case>, cfg: SpliceConfig) -> Result<Collages> {
    let slides: Vec<_> = cases.into_iter().flat_map(|c| c.slides.iter()).collect();
    let collages = par::map(&slides, |s| splice_slide(&s.slide_id, &s.patches, cfg));
    collages
        .into_iter()
        .map(|c| c.map(|c| (c.slide_id.clone(), c)))
        .collect()
}

/// The kept patches of every slide of `case`, in (slide id, raster) order.
pub fn case_pool(case: &Case, collages: &Collages) -> Result<Vec<PatchRecord>> {
    let mut pool = Vec::new();
    for slide in &case.slides {
        let collage = collages
            .get(&slide.slide_id)
            .ok_or_else(|| CrispError::MissingId(slide.slide_id.clone()))?;
        let by_id: BTreeMap<&str, &PatchRecord> = slide.patches.iter().map(|p| (p.patch_id.as_str(), p)).collect();
        for id in &collage.kept {
            let p = by_id
                .get(id.as_str())
                .ok_or_else(|| CrispError::MissingId(id.clone()))?;
            pool.push((*p).clone());
        }
    }
    canonical_pool_order(&mut pool);
    Ok(pool)
}

/// Per-case reduction outcome; failures carry a reason instead of aborting.
pub type Selection = std::result::Result<CaseMosaic, String>;

pub fn reduce_case(case_id: &str, pool: &[PatchRecord], params: &CrispParams) -> Selection {
    let out = match params.reduction {
        CaseReduction::KMeans => cluster_pool(case_id, pool, params.k, params.seed, DEFAULT_MAX_ITER)
            .map(|c| c.select_centroid_proximal(params.alpha)),
        CaseReduction::SpliceReselect => {
            if pool.is_empty() {
                Err(CrispError::EmptyInput("case contributed no tissue patches"))
            } else {
                splice_case_pool(case_id, pool, params.splice()).map(|c| CaseMosaic {
                    case_id: case_id.to_string(),
                    kept: c.kept,
                    cluster_assignments: BTreeMap::new(),
                    per_cluster_kept: BTreeMap::new(),
                })
            }
        }
    };
    out.map_err(|e| e.to_string())
}

/// Builds the case mosaic of every case from precomputed collages.
pub fn mosaic_cohort(cases: &[&Case], collages: &Collages, params: &CrispParams) -> Result<Vec<Selection>> {
    let pools = cases
        .iter()
        .map(|c| case_pool(c, collages))
        .collect::<Result<Vec<_>>>()?;
    Ok(par::map_range(cases.len(), |i| {
        reduce_case(&cases[i].case_id, &pools[i], params)
    }))
}

/// Clusters every case's pool once so several retention levels can reuse it.
pub fn cluster_cohort(
    cases: &[&Case],
    pools: &[Vec<PatchRecord>],
    k: usize,
    seed: u64,
) -> Vec<std::result::Result<PoolClustering, String>> {
    par::map_range(cases.len(), |i| {
        cluster_pool(&cases[i].case_id, &pools[i], k, seed, DEFAULT_MAX_ITER).map_err(|e| e.to_string())
    })
}

pub fn signature_for(case: &LoadedCase, kept: &[String]) -> Result<CaseSignature> {
    let rows = case.embeddings.select_rows(kept)?;
    CaseSignature::new(case.case.case_id.clone(), case.case.label.clone(), rows)
}

/// Selection summary for a cohort run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionStats {
    pub mean_raw: f64,
    pub mean_pool: f64,
    pub mean_kept: f64,
}

pub fn selection_stats(cohort: &Cohort, pools: &[Vec<PatchRecord>], selections: &[Selection]) -> SelectionStats {
    let n = cohort.cases.len().max(1) as f64;
    let mean_raw = cohort.cases.iter().map(|c| c.case.patch_count()).sum::<usize>() as f64 / n;
    let mean_pool = pools.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let ok: Vec<usize> = selections
        .iter()
        .filter_map(|s| s.as_ref().ok())
        .map(|m| m.kept.len())
        .collect();
    let mean_kept = if ok.is_empty() {
        0.0
    } else {
        ok.iter().sum::<usize>() as f64 / ok.len() as f64
    };
    SelectionStats {
        mean_raw,
        mean_pool,
        mean_kept,
    }
}

/// Both selection stages over a loaded cohort.
#[derive(Clone, Debug)]
pub struct CohortSelection {
    pub collages: Collages,
    pub pools: Vec<Vec<PatchRecord>>,
    pub mosaics: Vec<Selection>,
    pub stats: SelectionStats,
}

pub fn run_selection(cohort: &Cohort, params: &CrispParams) -> Result<CohortSelection> {
    params.validate()?;
    let cases: Vec<&Case> = cohort.cases.iter().map(|c| &c.case).collect();
    let collages = splice_cohort(cases.iter().copied(), params.splice())?;
    let pools = cases
        .iter()
        .map(|c| case_pool(c, &collages))
        .collect::<Result<Vec<_>>>()?;
    let mosaics = par::map_range(cases.len(), |i| reduce_case(&cases[i].case_id, &pools[i], params));
    let stats = selection_stats(cohort, &pools, &mosaics);
    Ok(CohortSelection {
        collages,
        pools,
        mosaics,
        stats,
    })
}

/// Signatures for every case; a case whose mosaic or embeddings fail is
/// carried as an error string.
pub fn signatures(cohort: &Cohort, mosaics: &[Selection]) -> Vec<std::result::Result<CaseSignature, String>> {
    par::map_range(cohort.cases.len(), |i| match &mosaics[i] {
        Ok(m) => signature_for(&cohort.cases[i], &m.kept).map_err(|e| e.to_string()),
        Err(e) => Err(e.clone()),
    })
}
