//! Parameter resolution. Precedence, highest first: command-line flag,
//! `[pipeline]` table of the config file, `CRISP_SEED`, built-in default.

use std::path::Path;

use crisp_core::config::PipelineConfig;
use crisp_core::retrieval::Metric;
use serde::Deserialize;

use crate::values::{parse_values, whole};
use crate::Failure;

pub const SEED_ENV: &str = "CRISP_SEED";

/// A scalar, an explicit list, or a range string such as "0.25..10:0.25".
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum ValueField {
    One(f64),
    Many(Vec<f64>),
    Spec(String),
}

impl ValueField {
    fn values(&self) -> Result<Vec<f64>, String> {
        match self {
            ValueField::One(v) => Ok(vec![*v]),
            ValueField::Many(v) => Ok(v.clone()),
            ValueField::Spec(s) => parse_values(s),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipelineTable {
    occ_min: Option<f64>,
    bg_threshold: Option<u32>,
    tile_size: Option<u32>,
    s_t: Option<ValueField>,
    k: Option<ValueField>,
    alpha: Option<ValueField>,
    seed: Option<u64>,
    metric: Option<String>,
    topk: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    pipeline: PipelineTable,
}

/// Fully layered settings. Stage parameters are lists so the grid search can
/// share them; single-run commands require exactly one value each.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub occ_min: f64,
    pub bg_threshold: u32,
    pub tile_size: u32,
    pub s_t: Vec<f64>,
    pub k: Vec<f64>,
    pub alpha: Vec<f64>,
    pub seed: u64,
    pub metrics: Vec<Metric>,
    /// `None` when neither the file nor a flag chose the vote sizes.
    pub topk: Option<Vec<usize>>,
}

pub fn parse_metrics(text: &str) -> Result<Vec<Metric>, String> {
    if text == "both" {
        Ok(Metric::ALL.to_vec())
    } else {
        text.parse().map(|m| vec![m])
    }
}

pub fn parse_topk(text: &str) -> Result<Vec<usize>, String> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| format!("topk entry `{s}` is not a count"))
        })
        .collect()
}

impl Settings {
    pub fn load(config: Option<&Path>, env_seed: Option<&str>) -> Result<Settings, Failure> {
        let d = PipelineConfig::default();
        let mut s = Settings {
            occ_min: d.occ_min,
            bg_threshold: d.bg_threshold,
            tile_size: d.tile_size,
            s_t: vec![d.s_t],
            k: vec![d.k as f64],
            alpha: vec![d.alpha],
            seed: d.seed,
            metrics: vec![d.metric],
            topk: None,
        };
        let mut errs = Vec::new();
        if let Some(v) = env_seed {
            match v.trim().parse() {
                Ok(seed) => s.seed = seed,
                Err(_) => errs.push(format!("{SEED_ENV} = `{v}` is not an unsigned integer")),
            }
        }
        if let Some(path) = config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
            let file: ConfigFile =
                toml::from_str(&text).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?;
            let p = file.pipeline;
            if let Some(v) = p.occ_min {
                s.occ_min = v;
            }
            if let Some(v) = p.bg_threshold {
                s.bg_threshold = v;
            }
            if let Some(v) = p.tile_size {
                s.tile_size = v;
            }
            for (field, target) in [(&p.s_t, &mut s.s_t), (&p.k, &mut s.k), (&p.alpha, &mut s.alpha)] {
                if let Some(f) = field {
                    match f.values() {
                        Ok(v) => *target = v,
                        Err(e) => errs.push(e),
                    }
                }
            }
            if let Some(v) = p.seed {
                s.seed = v;
            }
            if let Some(m) = &p.metric {
                match parse_metrics(m) {
                    Ok(m) => s.metrics = m,
                    Err(e) => errs.push(e),
                }
            }
            if p.topk.is_some() {
                s.topk = p.topk;
            }
        }
        if errs.is_empty() {
            Ok(s)
        } else {
            Err(Failure::Invalid(errs))
        }
    }

    /// Collapses the settings to one configuration and validates every field.
    pub fn single(&self) -> Result<PipelineConfig, Failure> {
        let mut errs = Vec::new();
        let mut one = |name: &str, v: &[f64]| match v {
            [x] => *x,
            _ => {
                errs.push(format!(
                    "{name} must be a single value for this command, got {} values",
                    v.len()
                ));
                f64::NAN
            }
        };
        let s_t = one("s_t", &self.s_t);
        let k = one("K", &self.k);
        let alpha = one("alpha", &self.alpha);
        let metric = match self.metrics.as_slice() {
            [m] => *m,
            _ => {
                errs.push("metric must name one metric for this command".to_string());
                Metric::SumMaxCosine
            }
        };
        let k = if k.is_nan() {
            0
        } else {
            match whole(&[k], "K") {
                Ok(v) => v[0],
                Err(e) => {
                    errs.push(e);
                    0
                }
            }
        };
        let cfg = PipelineConfig {
            occ_min: self.occ_min,
            bg_threshold: self.bg_threshold,
            tile_size: self.tile_size,
            s_t,
            k,
            alpha,
            seed: self.seed,
            metric,
            k_set: self.topk.clone().unwrap_or_else(|| PipelineConfig::default().k_set),
        };
        if !errs.is_empty() {
            return Err(Failure::Invalid(errs));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
