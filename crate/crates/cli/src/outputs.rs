//! On-disk document shapes written by the subcommands.

use std::collections::BTreeMap;

use crisp_core::retrieval::{Direction, Metric, RankedCase};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollageDoc {
    pub kept: Vec<String>,
    pub discarded: usize,
}

/// `collages.json`: slide id to collage.
pub type CollagesDoc = BTreeMap<String, CollageDoc>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterDoc {
    pub members: Vec<String>,
    pub kept: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MosaicDoc {
    pub kept: Vec<String>,
    pub clusters: BTreeMap<usize, ClusterDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// `mosaics.json`: case id to mosaic.
pub type MosaicsDoc = BTreeMap<String, MosaicDoc>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingDoc {
    pub query: String,
    pub label: String,
    pub metric: Metric,
    pub direction: Direction,
    pub archive_size: usize,
    pub entries: Vec<RankedCase>,
}
