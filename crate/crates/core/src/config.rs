use serde::{Deserialize, Serialize};

use crate::error::{CrispError, Result};
use crate::mosaic::DEFAULT_SEED;
use crate::patchdesc::{DEFAULT_BG_THRESHOLD, DEFAULT_OCC_MIN, DEFAULT_TILE_SIZE};
use crate::pipeline::CrispParams;
use crate::retrieval::Metric;

/// Every stage parameter of a pipeline run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub occ_min: f64,
    pub bg_threshold: u32,
    pub tile_size: u32,
    pub s_t: f64,
    pub k: usize,
    pub alpha: f64,
    pub seed: u64,
    pub metric: Metric,
    pub k_set: Vec<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            occ_min: DEFAULT_OCC_MIN,
            bg_threshold: DEFAULT_BG_THRESHOLD as u32,
            tile_size: DEFAULT_TILE_SIZE,
            s_t: 25.0,
            k: 12,
            alpha: 3.5,
            seed: DEFAULT_SEED,
            metric: Metric::SumMaxCosine,
            k_set: vec![1, 3, 5],
        }
    }
}

impl PipelineConfig {
    /// Checks every field and reports all violations together.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(0.0..=1.0).contains(&self.occ_min) {
            errs.push(format!("occ_min = {} must lie in [0, 1]", self.occ_min));
        }
        if self.bg_threshold > 255 {
            errs.push(format!("bg_threshold = {} must lie in [0, 255]", self.bg_threshold));
        }
        if self.tile_size == 0 {
            errs.push("tile_size must be positive".to_string());
        }
        if !(0.0..=100.0).contains(&self.s_t) {
            errs.push(format!("s_t = {} must lie in [0, 100]", self.s_t));
        }
        if self.k < 1 {
            errs.push(format!("K = {} must be at least 1", self.k));
        }
        if !(self.alpha > 0.0 && self.alpha <= 100.0) {
            errs.push(format!("alpha = {} must satisfy 0 < alpha <= 100", self.alpha));
        }
        if self.k_set.is_empty() || self.k_set.contains(&0) {
            errs.push(format!("k_set = {:?} must be non-empty with every k >= 1", self.k_set));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CrispError::InvalidConfig(errs))
        }
    }

    pub fn params(&self) -> CrispParams {
        CrispParams::new(self.s_t, self.k, self.alpha, self.seed)
    }
}
