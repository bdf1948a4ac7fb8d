//! Leave-one-patient-out evaluation, plurality voting, macro-F1 and the
//! hyperparameter grid engine.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::cohort::{Case, Cohort};
use crate::error::{CrispError, Result};
use crate::mosaic::MosaicConfig;
use crate::par;
use crate::pipeline::{
    case_pool, cluster_cohort, run_selection, selection_stats, signature_for, splice_cohort, CaseReduction,
    CrispParams, Selection, SelectionStats,
};
use crate::retrieval::{rank_archive, CaseSignature, Metric, RankedCase};
use crate::splice::SpliceConfig;

/// Vote sizes reported by a grid sweep unless others are requested.
pub const DEFAULT_K_SET: [usize; 4] = [1, 3, 5, 7];

static FOLDS_CHECKED: AtomicUsize = AtomicUsize::new(0);
static LEAKAGE_VIOLATIONS: AtomicUsize = AtomicUsize::new(0);

/// Number of folds whose archive was checked for the query case.
pub fn folds_checked() -> usize {
    FOLDS_CHECKED.load(Ordering::Relaxed)
}

/// Number of folds whose archive contained the query case. Always zero
/// unless the fold construction is broken.
pub fn leakage_violations() -> usize {
    LEAKAGE_VIOLATIONS.load(Ordering::Relaxed)
}

fn guard_leakage(query: &str, archive: &[&CaseSignature]) -> Result<()> {
    FOLDS_CHECKED.fetch_add(1, Ordering::Relaxed);
    if archive.iter().any(|a| a.case_id == query) {
        LEAKAGE_VIOLATIONS.fetch_add(1, Ordering::Relaxed);
        return Err(CrispError::Manifest(format!(
            "fold for `{query}` leaks the query into its archive"
        )));
    }
    Ok(())
}

/// Plurality label; a tie goes to the tied label ranked nearest.
pub fn majority_vote<S: AsRef<str>>(labels: &[S]) -> Result<String> {
    if labels.is_empty() {
        return Err(CrispError::EmptyInput("majority vote over no labels"));
    }
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for (rank, l) in labels.iter().enumerate() {
        counts.entry(l.as_ref()).or_insert((0, rank)).0 += 1;
    }
    let (label, _) = counts
        .into_iter()
        .max_by(|(_, (ca, fa)), (_, (cb, fb))| ca.cmp(cb).then(fb.cmp(fa)))
        .expect("non-empty");
    Ok(label.to_string())
}

/// Unweighted mean of per-class F1 over every class in `label_set`, in percent.
pub fn macro_f1<S: AsRef<str>>(pairs: &[(S, S)], label_set: &[String]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(CrispError::EmptyInput("macro-F1 over no predictions"));
    }
    if label_set.is_empty() {
        return Err(CrispError::EmptyInput("macro-F1 over an empty label set"));
    }
    let index: HashMap<&str, usize> = label_set.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let lookup = |l: &str| {
        index.get(l).copied().ok_or_else(|| CrispError::UnknownLabel {
            case_id: "<prediction>".into(),
            label: l.to_string(),
        })
    };
    let n = label_set.len();
    let (mut tp, mut fp, mut fneg) = (vec![0usize; n], vec![0usize; n], vec![0usize; n]);
    for (t, p) in pairs {
        let (t, p) = (lookup(t.as_ref())?, lookup(p.as_ref())?);
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fneg[t] += 1;
        }
    }
    let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
    let total: f64 = (0..n)
        .map(|c| {
            let p = ratio(tp[c], fp[c]);
            let r = ratio(tp[c], fneg[c]);
            if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        })
        .sum();
    Ok(100.0 * total / n as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub query: String,
    pub label: String,
    /// Best-first prefix of the ranking, as long as the largest k.
    pub ranking: Vec<RankedCase>,
    pub predictions: BTreeMap<usize, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldFailure {
    pub query: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LopoReport {
    pub metric: Metric,
    pub k_set: Vec<usize>,
    pub macro_f1: BTreeMap<usize, f64>,
    pub folds: Vec<FoldResult>,
    pub failures: Vec<FoldFailure>,
}

fn validate_k_set(k_set: &[usize]) -> Result<()> {
    if k_set.is_empty() || k_set.contains(&0) {
        return Err(CrispError::InvalidConfig(vec![format!(
            "top-k set {k_set:?} must be non-empty with every k >= 1"
        )]));
    }
    Ok(())
}

/// Leave-one-out over prepared signatures. Entries that failed to build are
/// reported as fold failures and left out of every archive.
pub fn lopo_on_signatures(
    signatures: &[std::result::Result<CaseSignature, String>],
    case_ids: &[&str],
    label_set: &[String],
    metric: Metric,
    k_set: &[usize],
) -> Result<LopoReport> {
    validate_k_set(k_set)?;
    if signatures.len() < 2 {
        return Err(CrispError::EmptyInput("leave-one-out needs at least two cases"));
    }
    let max_k = *k_set.iter().max().expect("non-empty");
    let checked: Vec<std::result::Result<&CaseSignature, String>> = signatures
        .iter()
        .map(|s| match s {
            Ok(sig) => sig.validate_for(metric).map(|_| sig).map_err(|e| e.to_string()),
            Err(e) => Err(e.clone()),
        })
        .collect();
    let usable: Vec<&CaseSignature> = checked.iter().filter_map(|s| s.as_ref().ok().copied()).collect();

    let folds = par::map_range(signatures.len(), |i| -> std::result::Result<FoldResult, FoldFailure> {
        let fail = |reason: String| FoldFailure {
            query: case_ids[i].to_string(),
            reason,
        };
        let q = *checked[i].as_ref().map_err(|e| fail(e.clone()))?;
        let archive: Vec<&CaseSignature> = usable.iter().copied().filter(|a| a.case_id != q.case_id).collect();
        guard_leakage(&q.case_id, &archive).map_err(|e| fail(e.to_string()))?;
        let ranking = rank_archive(q, &archive, metric).map_err(|e| fail(e.to_string()))?;
        let mut predictions = BTreeMap::new();
        for &k in k_set {
            let labels: Vec<&str> = ranking.labels().take(k).collect();
            predictions.insert(k, majority_vote(&labels).map_err(|e| fail(e.to_string()))?);
        }
        Ok(FoldResult {
            query: q.case_id.clone(),
            label: q.label.clone(),
            ranking: ranking.entries.into_iter().take(max_k).collect(),
            predictions,
        })
    });

    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for f in folds {
        match f {
            Ok(r) => ok.push(r),
            Err(e) => failures.push(e),
        }
    }
    let mut scores = BTreeMap::new();
    for &k in k_set {
        let pairs: Vec<(&str, &str)> = ok
            .iter()
            .map(|f| (f.label.as_str(), f.predictions[&k].as_str()))
            .collect();
        let score = if pairs.is_empty() {
            0.0
        } else {
            macro_f1(&pairs, label_set)?
        };
        scores.insert(k, score);
    }
    Ok(LopoReport {
        metric,
        k_set: k_set.to_vec(),
        macro_f1: scores,
        folds: ok,
        failures,
    })
}

/// A full evaluation run: selection, signatures and leave-one-out scoring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub params: CrispParams,
    pub stats: SelectionStats,
    pub report: LopoReport,
}

pub fn lopo_evaluate(cohort: &Cohort, params: &CrispParams, metric: Metric, k_set: &[usize]) -> Result<Evaluation> {
    let selection = run_selection(cohort, params)?;
    let sigs = crate::pipeline::signatures(cohort, &selection.mosaics);
    let ids: Vec<&str> = cohort.cases.iter().map(|c| c.case.case_id.as_str()).collect();
    let report = lopo_on_signatures(&sigs, &ids, &cohort.label_set, metric, k_set)?;
    Ok(Evaluation {
        params: *params,
        stats: selection.stats,
        report,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub s_t: Vec<f64>,
    pub k: Vec<usize>,
    pub alpha: Vec<f64>,
    pub metrics: Vec<Metric>,
    pub k_set: Vec<usize>,
    pub seed: u64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        for (name, empty) in [
            ("s_t", self.s_t.is_empty()),
            ("K", self.k.is_empty()),
            ("alpha", self.alpha.is_empty()),
            ("metric", self.metrics.is_empty()),
        ] {
            if empty {
                errs.push(format!("{name} value list is empty"));
            }
        }
        for &s in &self.s_t {
            if let Err(CrispError::InvalidConfig(e)) = SpliceConfig::new(s) {
                errs.extend(e);
            }
        }
        for &k in &self.k {
            for &a in &self.alpha {
                if let Err(CrispError::InvalidConfig(e)) = MosaicConfig::new(k, a, self.seed) {
                    errs.extend(e);
                }
            }
        }
        errs.dedup();
        if let Err(CrispError::InvalidConfig(e)) = validate_k_set(&self.k_set) {
            errs.extend(e);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CrispError::InvalidConfig(errs))
        }
    }

    /// Number of (s_t, K, alpha, metric) points.
    pub fn len(&self) -> usize {
        self.s_t.len() * self.k.len() * self.alpha.len() * self.metrics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub s_t: f64,
    pub k: usize,
    pub alpha: f64,
    pub metric: Metric,
    pub macro_f1: BTreeMap<usize, f64>,
    pub mean_kept: f64,
    pub mean_pool: f64,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestPoint {
    pub metric: Metric,
    pub k: usize,
    /// Index into `GridResult::points`.
    pub index: usize,
    pub macro_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub points: Vec<GridPoint>,
    pub best: Vec<BestPoint>,
}

/// Evaluates the Cartesian product of `spec` in (s_t, K, alpha, metric)
/// order. Collages are computed once per s_t and clusterings once per
/// (s_t, K); only the retention step depends on alpha.
pub fn grid_search(cohort: &Cohort, spec: &GridSpec) -> Result<GridResult> {
    spec.validate()?;
    if cohort.cases.len() < 2 {
        return Err(CrispError::EmptyInput("grid search needs at least two cases"));
    }
    let cases: Vec<&Case> = cohort.cases.iter().map(|c| &c.case).collect();
    let ids: Vec<&str> = cases.iter().map(|c| c.case_id.as_str()).collect();
    let mut points = Vec::with_capacity(spec.len());

    for &s_t in &spec.s_t {
        let collages = splice_cohort(cases.iter().copied(), SpliceConfig { s_t })?;
        let pools = cases
            .iter()
            .map(|c| case_pool(c, &collages))
            .collect::<Result<Vec<_>>>()?;
        let clusterings: Vec<_> = spec
            .k
            .iter()
            .map(|&k| cluster_cohort(&cases, &pools, k, spec.seed))
            .collect();

        let n_alpha = spec.alpha.len();
        let per_ka = par::map_range(spec.k.len() * n_alpha, |idx| -> Result<Vec<GridPoint>> {
            let (ki, ai) = (idx / n_alpha, idx % n_alpha);
            let alpha = spec.alpha[ai];
            let mosaics: Vec<Selection> = clusterings[ki]
                .iter()
                .map(|c| {
                    c.as_ref()
                        .map(|c| c.select_centroid_proximal(alpha))
                        .map_err(Clone::clone)
                })
                .collect();
            let stats = selection_stats(cohort, &pools, &mosaics);
            let sigs: Vec<_> = cohort
                .cases
                .iter()
                .zip(&mosaics)
                .map(|(case, m)| match m {
                    Ok(m) => signature_for(case, &m.kept).map_err(|e| e.to_string()),
                    Err(e) => Err(e.clone()),
                })
                .collect();
            spec.metrics
                .iter()
                .map(|&metric| {
                    let report = lopo_on_signatures(&sigs, &ids, &cohort.label_set, metric, &spec.k_set)?;
                    Ok(GridPoint {
                        s_t,
                        k: spec.k[ki],
                        alpha,
                        metric,
                        macro_f1: report.macro_f1,
                        mean_kept: stats.mean_kept,
                        mean_pool: stats.mean_pool,
                        failures: report.failures.len(),
                    })
                })
                .collect()
        });
        for group in per_ka {
            points.extend(group?);
        }
    }

    let mut best = Vec::new();
    for &metric in &spec.metrics {
        for &k in &spec.k_set {
            let winner = points.iter().enumerate().filter(|(_, p)| p.metric == metric).fold(
                None,
                |acc: Option<(usize, f64)>, (i, p)| {
                    let f = p.macro_f1[&k];
                    match acc {
                        Some((_, bf)) if bf >= f => acc,
                        _ => Some((i, f)),
                    }
                },
            );
            if let Some((index, macro_f1)) = winner {
                best.push(BestPoint {
                    metric,
                    k,
                    index,
                    macro_f1,
                });
            }
        }
    }
    Ok(GridResult { points, best })
}

/// Parameters for the case-level scan ablation, sharing the first stage.
pub fn splice_reselect_params(params: &CrispParams) -> CrispParams {
    CrispParams {
        reduction: CaseReduction::SpliceReselect,
        ..*params
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn vote_examples() {
        assert_eq!(majority_vote(&["A"]).unwrap(), "A");
        assert_eq!(majority_vote(&["A", "B", "A"]).unwrap(), "A");
        assert_eq!(majority_vote(&["B", "A"]).unwrap(), "B");
        assert_eq!(majority_vote(&["C", "A", "B", "A", "B"]).unwrap(), "A");
        assert!(majority_vote::<&str>(&[]).is_err());
    }

    #[test]
    fn macro_f1_examples() {
        let set = labels(&["A", "B"]);
        assert_eq!(macro_f1(&[("A", "A"), ("B", "B")], &set).unwrap(), 100.0);
        let f = macro_f1(&[("A", "A"), ("A", "B"), ("B", "B"), ("B", "B")], &set).unwrap();
        assert!((f - (2.0 / 3.0 + 0.8) / 2.0 * 100.0).abs() < 1e-12);
        assert!((f - 73.33).abs() < 0.005);

        let set3 = labels(&["A", "B", "C"]);
        let f = macro_f1(&[("A", "A"), ("B", "B")], &set3).unwrap();
        assert!((f - 200.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn macro_f1_errors() {
        let set = labels(&["A"]);
        assert!(macro_f1::<&str>(&[], &set).is_err());
        assert!(macro_f1(&[("A", "Z")], &set).is_err());
    }

    #[test]
    fn grid_spec_validation_lists_everything() {
        let spec = GridSpec {
            s_t: vec![120.0],
            k: vec![0],
            alpha: vec![0.0],
            metrics: vec![],
            k_set: vec![],
            seed: 1,
        };
        let Err(CrispError::InvalidConfig(errs)) = spec.validate() else {
            panic!("expected config errors")
        };
        assert!(errs.len() >= 5, "{errs:?}");
    }
}
