mod common;

use common::{lattice_rows, random_rows, reference_median_min, reference_ranking, reference_sum_max_cosine, rng, Rows};
use crisp_core::cohort::EmbeddingMatrix;
use crisp_core::retrieval::{median_of_min_distance, rank_archive, sum_of_max_cosine, CaseSignature, Metric};
use proptest::prelude::*;
use rand::Rng;

fn signature(id: &str, rows: &Rows) -> CaseSignature {
    let dim = rows[0].len();
    let data = rows.iter().flat_map(|r| r.iter().map(|&v| v as f32)).collect();
    let ids = (0..rows.len()).map(|i| format!("{id}:{i}:0")).collect();
    CaseSignature::new(id, "L", EmbeddingMatrix::new(dim, data, ids).unwrap()).unwrap()
}

#[test]
fn ranking_matches_brute_force() {
    let mut r = rng(8);
    for trial in 0..40 {
        let dim = r.random_range(1..12);
        let n_cases = r.random_range(2..50);
        let cases: Vec<(String, Rows)> = (0..n_cases)
            .map(|i| {
                let n = r.random_range(1..30);
                (format!("c{i:02}"), random_rows(&mut r, n, dim))
            })
            .collect();
        let sigs: Vec<CaseSignature> = cases.iter().map(|(id, rows)| signature(id, rows)).collect();
        let (q, archive) = sigs.split_first().unwrap();
        let archive: Vec<&CaseSignature> = archive.iter().collect();
        for metric in Metric::ALL {
            let got = rank_archive(q, &archive, metric).unwrap();
            let scores: Vec<(String, f64)> = cases[1..]
                .iter()
                .map(|(id, rows)| {
                    let s = match metric {
                        Metric::MedianMinEuclidean => reference_median_min(&cases[0].1, rows),
                        Metric::SumMaxCosine => reference_sum_max_cosine(&cases[0].1, rows),
                    };
                    (id.clone(), s)
                })
                .collect();
            let want = reference_ranking(&scores, metric == Metric::MedianMinEuclidean);
            let got_ids: Vec<String> = got.entries.iter().map(|e| e.case_id.clone()).collect();
            assert_eq!(got_ids, want, "trial {trial} {metric}");
            for e in &got.entries {
                let s = scores.iter().find(|(id, _)| *id == e.case_id).unwrap().1;
                assert!((e.score - s).abs() <= 1e-9 * (1.0 + s.abs()), "{} vs {s}", e.score);
            }
        }
    }
}

#[test]
fn median_min_zero_iff_contained() {
    let mut r = rng(3);
    let a = random_rows(&mut r, 10, 4);
    let subset: Rows = a[2..7].to_vec();
    assert_eq!(
        median_of_min_distance(&signature("q", &subset), &signature("a", &a)).unwrap(),
        0.0
    );
    let other = random_rows(&mut r, 5, 4);
    assert!(median_of_min_distance(&signature("q", &other), &signature("a", &a)).unwrap() > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn translation_invariance(seed in any::<u64>(), shift in -4i32..4) {
        let mut r = rng(seed);
        let dim = r.random_range(1..8);
        let (nq, na) = (r.random_range(1..10), r.random_range(1..10));
        let q = lattice_rows(&mut r, nq, dim);
        let a = lattice_rows(&mut r, na, dim);
        let c: Vec<f64> = (0..dim).map(|k| (shift + k as i32) as f64 * 0.25).collect();
        let move_rows = |rows: &Rows| -> Rows {
            rows.iter().map(|row| row.iter().zip(&c).map(|(v, s)| v + s).collect()).collect()
        };
        let base = median_of_min_distance(&signature("q", &q), &signature("a", &a)).unwrap();
        let moved = median_of_min_distance(&signature("q", &move_rows(&q)), &signature("a", &move_rows(&a))).unwrap();
        prop_assert!((base - moved).abs() <= 1e-9, "{} vs {}", base, moved);
    }

    #[test]
    fn cosine_ranking_ignores_positive_row_scaling(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dim = r.random_range(2..8);
        let q = lattice_rows(&mut r, 4, dim);
        let archive: Vec<(String, Rows)> = (0..6).map(|i| {
            let n = r.random_range(1..6);
            (format!("a{i}"), lattice_rows(&mut r, n, dim))
        }).collect();
        let scale = |rows: &Rows, r: &mut rand_chacha::ChaCha8Rng| -> Rows {
            rows.iter().map(|row| {
                let s = [0.5, 2.0, 4.0, 8.0][r.random_range(0..4)];
                row.iter().map(|v| v * s).collect()
            }).collect()
        };
        let qs = signature("q", &q);
        let sigs: Vec<CaseSignature> = archive.iter().map(|(id, rows)| signature(id, rows)).collect();
        let qs2 = signature("q", &scale(&q, &mut r));
        let sigs2: Vec<CaseSignature> = archive.iter().map(|(id, rows)| signature(id, &scale(rows, &mut r))).collect();
        let a = rank_archive(&qs, &sigs.iter().collect::<Vec<_>>(), Metric::SumMaxCosine).unwrap();
        let b = rank_archive(&qs2, &sigs2.iter().collect::<Vec<_>>(), Metric::SumMaxCosine).unwrap();
        for (x, y) in a.entries.iter().zip(&b.entries) {
            prop_assert_eq!(&x.case_id, &y.case_id);
            prop_assert!((x.score - y.score).abs() <= 1e-9);
        }
    }

    #[test]
    fn score_bounds(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dim = r.random_range(1..6);
        let (nq, na) = (r.random_range(1..8), r.random_range(1..8));
        let q = lattice_rows(&mut r, nq, dim);
        let a = lattice_rows(&mut r, na, dim);
        let (qs, as_) = (signature("q", &q), signature("a", &a));
        let cos = sum_of_max_cosine(&qs, &as_).unwrap();
        prop_assert!(cos <= q.len() as f64 + 1e-9);
        prop_assert!(median_of_min_distance(&qs, &as_).unwrap() >= 0.0);
    }
}
