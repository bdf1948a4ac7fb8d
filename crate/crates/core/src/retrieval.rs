//! Set-to-set case scoring and exhaustive archive ranking.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cohort::EmbeddingMatrix;
use crate::error::{CrispError, Result};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    MedianMinEuclidean,
    SumMaxCosine,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::MedianMinEuclidean, Metric::SumMaxCosine];

    pub fn direction(self) -> Direction {
        match self {
            Metric::MedianMinEuclidean => Direction::LowerIsBetter,
            Metric::SumMaxCosine => Direction::HigherIsBetter,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::MedianMinEuclidean => "median_min_euclidean",
            Metric::SumMaxCosine => "sum_max_cosine",
        }
    }

    pub fn score(self, q: &CaseSignature, a: &CaseSignature) -> Result<f64> {
        match self {
            Metric::MedianMinEuclidean => median_of_min_distance(q, a),
            Metric::SumMaxCosine => sum_of_max_cosine(q, a),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "median_min_euclidean" => Ok(Metric::MedianMinEuclidean),
            "sum_max_cosine" => Ok(Metric::SumMaxCosine),
            other => Err(format!(
                "unknown metric `{other}` (expected median_min_euclidean or sum_max_cosine)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LowerIsBetter,
    HigherIsBetter,
}

/// The embeddings of one case's mosaic, with row norms cached.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseSignature {
    pub case_id: String,
    pub label: String,
    embeddings: EmbeddingMatrix,
    norms: Vec<f64>,
}

impl CaseSignature {
    pub fn new(case_id: impl Into<String>, label: impl Into<String>, embeddings: EmbeddingMatrix) -> Result<Self> {
        let case_id = case_id.into();
        if embeddings.is_empty() {
            return Err(CrispError::EmptySignature(case_id));
        }
        let norms: Vec<f64> = embeddings
            .iter_rows()
            .map(|r| r.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt())
            .collect();
        Ok(CaseSignature {
            case_id,
            label: label.into(),
            embeddings,
            norms,
        })
    }

    pub fn rows(&self) -> usize {
        self.embeddings.rows()
    }

    /// Cosine scoring needs every row to have a non-zero norm.
    pub fn validate_for(&self, metric: Metric) -> Result<()> {
        if metric == Metric::SumMaxCosine {
            if let Some(row) = self.norms.iter().position(|&n| n == 0.0) {
                return Err(CrispError::ZeroNorm {
                    case_id: self.case_id.clone(),
                    row,
                });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim()
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }
}

fn check_dims(q: &CaseSignature, a: &CaseSignature) -> Result<()> {
    if q.dim() != a.dim() {
        return Err(CrispError::DimMismatch {
            left: q.dim(),
            right: a.dim(),
        });
    }
    Ok(())
}

fn squared_l2(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Median of the sorted values; even counts average the middle pair.
pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Median over query rows of the distance to the nearest archive row.
/// Not symmetric in its arguments.
pub fn median_of_min_distance(q: &CaseSignature, a: &CaseSignature) -> Result<f64> {
    check_dims(q, a)?;
    let mut minima: Vec<f64> = q
        .embeddings
        .iter_rows()
        .map(|qr| {
            a.embeddings
                .iter_rows()
                .map(|ar| squared_l2(qr, ar))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    Ok(median(&mut minima))
}

/// Sum over query rows of the best cosine similarity to any archive row.
pub fn sum_of_max_cosine(q: &CaseSignature, a: &CaseSignature) -> Result<f64> {
    check_dims(q, a)?;
    q.validate_for(Metric::SumMaxCosine)?;
    a.validate_for(Metric::SumMaxCosine)?;
    let total = q
        .embeddings
        .iter_rows()
        .zip(&q.norms)
        .map(|(qr, qn)| {
            a.embeddings
                .iter_rows()
                .zip(&a.norms)
                .map(|(ar, an)| dot(qr, ar) / (qn * an))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedCase {
    pub case_id: String,
    pub label: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub query: String,
    pub metric: Metric,
    pub direction: Direction,
    pub entries: Vec<RankedCase>,
}

impl Ranking {
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.label.as_str())
    }
}

/// Orders entries best-first, breaking score ties by case id.
pub fn sort_entries(entries: &mut [RankedCase], direction: Direction) {
    entries.sort_by(|x, y| {
        let by_score = match direction {
            Direction::LowerIsBetter => x.score.total_cmp(&y.score),
            Direction::HigherIsBetter => y.score.total_cmp(&x.score),
        };
        by_score.then_with(|| x.case_id.cmp(&y.case_id))
    });
}

/// Scores every archive case against `q` and ranks them.
pub fn rank_archive(q: &CaseSignature, archive: &[&CaseSignature], metric: Metric) -> Result<Ranking> {
    if archive.is_empty() {
        return Err(CrispError::EmptyInput("archive has no cases"));
    }
    if archive.iter().any(|a| a.case_id == q.case_id) {
        return Err(CrispError::Manifest(format!(
            "query case `{}` is present in its own archive",
            q.case_id
        )));
    }
    q.validate_for(metric)?;
    for a in archive {
        a.validate_for(metric)?;
        check_dims(q, a)?;
    }
    let scored = par::map(archive, |a| {
        metric.score(q, a).map(|score| RankedCase {
            case_id: a.case_id.clone(),
            label: a.label.clone(),
            score,
        })
    });
    let mut entries = scored.into_iter().collect::<Result<Vec<_>>>()?;
    sort_entries(&mut entries, metric.direction());
    Ok(Ranking {
        query: q.case_id.clone(),
        metric,
        direction: metric.direction(),
        entries,
    })
}
