//! Case-level patch distillation and retrieval for multi-slide pathology
//! cases.
//!
//! Stage one prunes colour-redundant tiles on each slide with a sequential
//! percentile scan ([`splice`]). Stage two pools a case's surviving tiles,
//! clusters them with k-means and keeps the tiles nearest each centroid
//! ([`mosaic`]). Cases are compared as sets of patch embeddings
//! ([`retrieval`]) and evaluated leave-one-patient-out ([`evaluation`]).

pub mod cohort;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod kmeans;
pub mod mosaic;
pub mod par;
pub mod patchdesc;
pub mod pipeline;
pub mod report;
pub mod retrieval;
pub mod splice;
pub mod synthgen;

pub use error::{CrispError, Result};
