//! Seeded synthetic cohorts with controllable class separation, slide
//! counts and within-slide redundancy.
//!
//! Descriptors come from per-class Gaussian mixtures clamped to the valid
//! descriptor box. Embeddings are the class mean plus isotropic noise whose
//! expected norm is one, so `class_mode_separation` is measured in units of
//! intra-class spread. Redundant patches are copies of an earlier patch on
//! the same slide, perturbed by less than [`NEAR_DUPLICATE_EPS`] in
//! descriptor space.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cohort::{
    load_manifest, write_descriptors, write_embeddings, write_manifest, Case, Cohort, CohortManifest, Descriptor,
    EmbeddingMatrix, LoadedCase, ManifestCaseDoc, ManifestDoc, ManifestSlideDoc, PatchRecord, Slide,
};
use crate::error::{CrispError, Result};

pub const NEAR_DUPLICATE_EPS: f64 = 1e-3;
const MODES_PER_CLASS: usize = 3;
const DESCRIPTOR_SPREAD: f64 = 0.04;
const TIGHT_DESCRIPTOR_SPREAD: f64 = 0.01;
const TYPE_SPACING: f64 = 20.0;
const DUPLICATE_EMBED_NOISE: f64 = 0.01;

/// How tissue is arranged across a case's slides.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TissueLayout {
    /// Every slide draws from its class's descriptor mixture; embeddings
    /// carry the class signal everywhere.
    Homogeneous,
    /// A dominant tissue type shared by all classes fills `shared_fraction`
    /// of each slide and carries no class signal. Slide `j` of a case adds
    /// `modes_per_slide` tissue types of its own whose embeddings do carry
    /// the class signal.
    PerSlideModes {
        shared_fraction: f64,
        modes_per_slide: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub cases_per_class: usize,
    /// Inclusive range.
    pub slides_per_case: (usize, usize),
    /// Inclusive range.
    pub patches_per_slide: (usize, usize),
    pub class_mode_separation: f64,
    pub redundancy_rate: f64,
    pub embed_dim: usize,
    pub seed: u64,
    pub layout: TissueLayout,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_classes: 3,
            cases_per_class: 5,
            slides_per_case: (2, 4),
            patches_per_slide: (80, 160),
            class_mode_separation: 10.0,
            redundancy_rate: 0.8,
            embed_dim: 64,
            seed: 724,
            layout: TissueLayout::Homogeneous,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let (s0, s1) = self.slides_per_case;
        let (p0, p1) = self.patches_per_slide;
        if self.n_classes < 1 || self.cases_per_class < 1 || self.embed_dim < 1 {
            errs.push("classes, cases per class and dim must be at least 1".to_string());
        }
        if s0 < 1 || s1 < s0 {
            errs.push(format!("slides per case range {s0}..{s1} is invalid"));
        }
        if p0 < 1 || p1 < p0 {
            errs.push(format!("patches per slide range {p0}..{p1} is invalid"));
        }
        if !(self.class_mode_separation >= 0.0 && self.class_mode_separation.is_finite()) {
            errs.push(format!("separation {} must be >= 0", self.class_mode_separation));
        }
        if !(0.0..=1.0).contains(&self.redundancy_rate) {
            errs.push(format!("redundancy {} must lie in [0, 1]", self.redundancy_rate));
        }
        if let TissueLayout::PerSlideModes {
            shared_fraction,
            modes_per_slide,
        } = self.layout
        {
            if !(0.0..1.0).contains(&shared_fraction) || modes_per_slide < 1 {
                errs.push("per-slide layout needs shared_fraction in [0, 1) and at least one mode".into());
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CrispError::InvalidConfig(errs))
        }
    }
}

fn clamp_descriptor(mut d: Descriptor) -> Descriptor {
    for (i, v) in d.iter_mut().enumerate() {
        *v = v.clamp(0.0, if i < 3 { 1.0 } else { 0.5 });
    }
    d
}

fn random_centre(rng: &mut ChaCha8Rng) -> Descriptor {
    let mut d = [0.0; 6];
    for (i, v) in d.iter_mut().enumerate() {
        *v = if i < 3 {
            rng.random_range(0.1..0.9)
        } else {
            rng.random_range(0.02..0.3)
        };
    }
    d
}

/// Draws `n` centres, preferring ones at least `min_gap` apart.
fn spread_centres(rng: &mut ChaCha8Rng, n: usize, min_gap: f64) -> Vec<Descriptor> {
    let mut out: Vec<Descriptor> = Vec::with_capacity(n);
    while out.len() < n {
        let mut candidate = random_centre(rng);
        for _ in 0..1000 {
            let gap = out
                .iter()
                .map(|c| crate::splice::descriptor_distance(c, &candidate))
                .fold(f64::INFINITY, f64::min);
            if gap >= min_gap {
                break;
            }
            candidate = random_centre(rng);
        }
        out.push(candidate);
    }
    out
}

fn jitter(rng: &mut ChaCha8Rng, centre: &Descriptor, spread: f64) -> Descriptor {
    let noise = Normal::new(0.0, spread).expect("positive spread");
    let mut d = *centre;
    for v in &mut d {
        *v += noise.sample(rng);
    }
    clamp_descriptor(d)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| scale * normal(rng)).collect()
}

fn unit_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v = gaussian_vec(rng, dim, 1.0);
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    v.into_iter().map(|x| x / n).collect()
}

/// Class means with pairwise distance equal to the separation (exactly when
/// the dimension allows one axis per class).
fn class_offsets(rng: &mut ChaCha8Rng, n: usize, dim: usize, sep: f64) -> Vec<Vec<f64>> {
    let scale = sep / std::f64::consts::SQRT_2;
    (0..n)
        .map(|c| {
            if n <= dim {
                let mut v = vec![0.0; dim];
                v[c] = scale;
                v
            } else {
                unit_vec(rng, dim).into_iter().map(|x| x * scale).collect()
            }
        })
        .collect()
}

struct SlideData {
    slide: Slide,
    embeddings: EmbeddingMatrix,
}

struct CaseData {
    case_id: String,
    label: String,
    slides: Vec<SlideData>,
}

pub fn class_label(c: usize) -> String {
    format!("class{c}")
}

fn grid_position(i: usize, width: usize) -> (u32, u32) {
    ((i % width) as u32, (i / width) as u32)
}

/// Generates the cohort in memory.
fn synthesize(spec: &SynthSpec) -> Result<(Vec<String>, Vec<CaseData>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.embed_dim;
    let noise_scale = 1.0 / (dim as f64).sqrt();
    let dup_scale = DUPLICATE_EMBED_NOISE * noise_scale;

    let class_modes: Vec<Vec<Descriptor>> = (0..spec.n_classes)
        .map(|_| spread_centres(&mut rng, MODES_PER_CLASS, 0.15))
        .collect();
    let offsets = class_offsets(&mut rng, spec.n_classes, dim, spec.class_mode_separation);
    let (type_centres, type_bases) = match spec.layout {
        TissueLayout::Homogeneous => (Vec::new(), Vec::new()),
        TissueLayout::PerSlideModes { modes_per_slide, .. } => {
            let n_types = 1 + spec.slides_per_case.1 * modes_per_slide;
            let centres = spread_centres(&mut rng, n_types, 0.3);
            let bases: Vec<Vec<f64>> = (0..n_types)
                .map(|_| unit_vec(&mut rng, dim).into_iter().map(|x| x * TYPE_SPACING).collect())
                .collect();
            (centres, bases)
        }
    };

    let label_set: Vec<String> = (0..spec.n_classes).map(class_label).collect();
    let mut cases = Vec::new();
    for class in 0..spec.n_classes {
        for j in 0..spec.cases_per_class {
            let case_id = format!("case{:03}", class * spec.cases_per_class + j);
            let n_slides = rng.random_range(spec.slides_per_case.0..=spec.slides_per_case.1);
            let mut slides = Vec::with_capacity(n_slides);
            for s in 0..n_slides {
                let slide_id = format!("{case_id}_s{s}");
                let n = rng.random_range(spec.patches_per_slide.0..=spec.patches_per_slide.1);
                let width = (n as f64).sqrt().ceil() as usize;

                // Tissue type per patch position.
                let kinds: Vec<Option<usize>> = match spec.layout {
                    TissueLayout::Homogeneous => vec![None; n],
                    TissueLayout::PerSlideModes {
                        shared_fraction,
                        modes_per_slide,
                    } => {
                        let n_shared = ((shared_fraction * n as f64).round() as usize).min(n);
                        let mut kinds: Vec<Option<usize>> = (0..n)
                            .map(|i| {
                                if i < n_shared {
                                    Some(0)
                                } else {
                                    Some(1 + s * modes_per_slide + (i - n_shared) % modes_per_slide)
                                }
                            })
                            .collect();
                        // Scatter types across the grid.
                        for i in (1..n).rev() {
                            let k = rng.random_range(0..=i);
                            kinds.swap(i, k);
                        }
                        kinds
                    }
                };

                let n_dup = ((spec.redundancy_rate * n as f64).round() as usize).min(n - 1);
                let mut is_dup = vec![false; n];
                if n_dup > 0 {
                    for i in sample(&mut rng, n - 1, n_dup) {
                        is_dup[i + 1] = true;
                    }
                }

                let mut patches: Vec<PatchRecord> = Vec::with_capacity(n);
                let mut data: Vec<f32> = Vec::with_capacity(n * dim);
                let mut ids = Vec::with_capacity(n);
                for i in 0..n {
                    let (gx, gy) = grid_position(i, width);
                    let occupancy = rng.random_range(0.7..=1.0);
                    let (descriptor, embedding): (Descriptor, Vec<f64>) = if is_dup[i] {
                        let src = rng.random_range(0..i);
                        let dir = unit_vec(&mut rng, 6);
                        let radius = rng.random_range(0.0..0.99) * NEAR_DUPLICATE_EPS;
                        let mut d = patches[src].descriptor;
                        for (v, u) in d.iter_mut().zip(&dir) {
                            *v += u * radius;
                        }
                        let e: Vec<f64> = data[src * dim..(src + 1) * dim]
                            .iter()
                            .map(|&v| v as f64 + dup_scale * normal(&mut rng))
                            .collect();
                        (clamp_descriptor(d), e)
                    } else {
                        match kinds[i] {
                            None => {
                                let m = rng.random_range(0..MODES_PER_CLASS);
                                let d = jitter(&mut rng, &class_modes[class][m], DESCRIPTOR_SPREAD);
                                let e = offsets[class]
                                    .iter()
                                    .map(|o| o + noise_scale * normal(&mut rng))
                                    .collect();
                                (d, e)
                            }
                            Some(t) => {
                                let d = jitter(&mut rng, &type_centres[t], TIGHT_DESCRIPTOR_SPREAD);
                                let e = type_bases[t]
                                    .iter()
                                    .enumerate()
                                    .map(|(k, b)| {
                                        let signal = if t == 0 { 0.0 } else { offsets[class][k] };
                                        b + signal + noise_scale * normal(&mut rng)
                                    })
                                    .collect();
                                (d, e)
                            }
                        }
                    };
                    patches.push(PatchRecord::new(&slide_id, gx, gy, occupancy, descriptor));
                    ids.push(patches[i].patch_id.clone());
                    data.extend(embedding.into_iter().map(|v| v as f32));
                }
                slides.push(SlideData {
                    slide: Slide {
                        slide_id,
                        case_id: case_id.clone(),
                        patches,
                    },
                    embeddings: EmbeddingMatrix::new(dim, data, ids)?,
                });
            }
            cases.push(CaseData {
                case_id,
                label: class_label(class),
                slides,
            });
        }
    }
    Ok((label_set, cases))
}

/// Builds a synthetic cohort in memory without touching disk.
pub fn build(spec: &SynthSpec) -> Result<Cohort> {
    let (label_set, cases) = synthesize(spec)?;
    let cases = cases
        .into_iter()
        .map(|c| {
            let embeddings =
                EmbeddingMatrix::concat(&c.slides.iter().map(|s| s.embeddings.clone()).collect::<Vec<_>>())?;
            Ok(LoadedCase {
                case: Case {
                    case_id: c.case_id,
                    label: c.label,
                    slides: c.slides.into_iter().map(|s| s.slide).collect(),
                },
                embeddings,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Cohort {
        cohort_id: format!("synth-{}", spec.seed),
        label_set,
        cases,
    })
}

/// Writes manifest, descriptor CSVs and CEM1 files under `out_dir`, then
/// loads the manifest back through the validating reader.
pub fn generate(spec: &SynthSpec, out_dir: &Path) -> Result<CohortManifest> {
    let (label_set, cases) = synthesize(spec)?;
    for sub in ["descriptors", "embeddings"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| CrispError::io(&d, e))?;
    }
    let mut doc = ManifestDoc {
        cohort_id: format!("synth-{}", spec.seed),
        label_set,
        cases: Vec::new(),
    };
    for c in cases {
        let mut slides = Vec::new();
        for s in c.slides {
            let id = &s.slide.slide_id;
            let rel = ManifestSlideDoc {
                slide_id: id.clone(),
                descriptors: PathBuf::from(format!("descriptors/{id}.csv")),
                embeddings: PathBuf::from(format!("embeddings/{id}.cem1")),
                embedding_ids: PathBuf::from(format!("embeddings/{id}.ids")),
            };
            write_descriptors(&out_dir.join(&rel.descriptors), &s.slide.patches)?;
            write_embeddings(
                &out_dir.join(&rel.embeddings),
                &out_dir.join(&rel.embedding_ids),
                &s.embeddings,
            )?;
            slides.push(rel);
        }
        doc.cases.push(ManifestCaseDoc {
            case_id: c.case_id,
            label: c.label,
            slides,
        });
    }
    let manifest_path = out_dir.join("manifest.json");
    write_manifest(&manifest_path, &doc)?;
    load_manifest(&manifest_path)
}
