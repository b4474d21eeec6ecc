mod common;

use std::collections::BTreeSet;

use finprint::curvature::{curvature_rows, integral_curvature_at};
use finprint::descriptors::{extract_descriptors, extract_keypoints, local_extrema};
use finprint::dtw::{align, dtw_cost, AlignmentConfig, Sequence};
use finprint::evaluation::{fused_accuracy, make_split, top_k_accuracy};
use finprint::lnbnn::{lnbnn_scores, IndexConfig, NnIndex};
use finprint::ranking::{QueryKey, RankedList, Rankings};
use finprint::weights::{bernstein_basis, evaluate_weights};
use finprint::{Axis, Contour, CurvatureMatrix, EncounterDatabase, ImageKey, ScaleSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn columns(max_len: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0..1.0f64, dim), 1..=max_len)
}

fn seq(cols: &[Vec<f64>]) -> Sequence {
    Sequence::from_columns(cols[0].len(), cols).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dtw_matches_path_enumeration(a in columns(6, 3), b in columns(6, 3)) {
        let cost = dtw_cost(&seq(&a), &seq(&b), None, None, None);
        prop_assert_eq!(cost, common::brute_force_dtw(&a, &b, None, None));
    }

    #[test]
    fn weighted_dtw_matches_path_enumeration(
        a in columns(5, 2),
        b in columns(5, 2),
        w in prop::collection::vec(0.0..2.0f64, 5),
    ) {
        let (wa, wb) = (&w[..a.len()], &w[..b.len()]);
        let cost = dtw_cost(&seq(&a), &seq(&b), None, Some(wa), Some(wb));
        prop_assert_eq!(cost, common::brute_force_dtw(&a, &b, Some(wa), Some(wb)));
    }

    #[test]
    fn dtw_is_symmetric(a in columns(12, 4), b in columns(12, 4), band in prop::option::of(0usize..6)) {
        prop_assert_eq!(
            dtw_cost(&seq(&a), &seq(&b), band, None, None),
            dtw_cost(&seq(&b), &seq(&a), band, None, None)
        );
    }

    #[test]
    fn widening_the_band_never_costs_more(a in columns(12, 2), b in columns(12, 2)) {
        let mut last = f64::INFINITY;
        for band in 0..12 {
            let c = dtw_cost(&seq(&a), &seq(&b), Some(band), None, None);
            prop_assert!(c <= last);
            last = c;
        }
        prop_assert_eq!(last, dtw_cost(&seq(&a), &seq(&b), None, None, None));
    }

    #[test]
    fn self_alignment_is_free(a in columns(20, 4), band in prop::option::of(0usize..4)) {
        prop_assert_eq!(dtw_cost(&seq(&a), &seq(&a), band, None, None), 0.0);
    }

    #[test]
    fn bernstein_positivity(c in prop::collection::vec(0.0..3.0f64, 1..15), n in 2usize..50) {
        prop_assert!(evaluate_weights(&c, n).unwrap().iter().all(|w| *w >= 0.0 && w.is_finite()));
    }

    #[test]
    fn bernstein_partition_of_unity(x in 0.0..=1.0f64, degree in 0usize..=30) {
        let s: f64 = (0..=degree).map(|i| bernstein_basis(i, degree, x).unwrap()).sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn curvature_stays_in_unit_interval(
        pts in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 3..40),
        r in 0.5..30.0f64,
    ) {
        let pts: Vec<[f64; 2]> = pts.into_iter().map(|(x, y)| [x, y]).collect();
        for i in 0..pts.len() {
            let v = integral_curvature_at(&pts, i, r);
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn descriptor_count_matches_keypoint_pairs(
        rows in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 40), 1..4),
        n_kp in 3usize..20,
    ) {
        let scales = ScaleSet::new((1..=rows.len()).map(|k| k as f64 * 0.1).collect(), Axis::Height).unwrap();
        let m = CurvatureMatrix::from_rows(scales, rows).unwrap();
        let kp = extract_keypoints(&m, n_kp).unwrap();
        let d = extract_descriptors(&m, &kp, 8, ImageKey { individual: "a".into(), encounter: "e".into(), image: "i".into() }).unwrap();
        let expected: usize = kp.per_scale.iter().map(|k| k.len() * (k.len() - 1) / 2).sum();
        prop_assert_eq!(d.len(), expected);
        for (k, row) in kp.per_scale.iter().zip(m.rows()) {
            prop_assert_eq!(k.len(), n_kp.min(local_extrema(row).len() + 2));
            prop_assert!(k.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!((k[0], *k.last().unwrap()), (0, 39));
        }
        for (_, v) in d.indexable() {
            let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn split_partitions_encounters(counts in prop::collection::vec(1usize..8, 1..8), m in 1usize..6, seed in 0u64..1000) {
        let mut db = EncounterDatabase::new();
        for (i, &n) in counts.iter().enumerate() {
            for e in 0..n {
                db.insert(Contour::new(format!("p{i}"), format!("e{e}"), "i", vec![[0.0, 0.0], [1.0, 1.0]]).unwrap()).unwrap();
            }
        }
        let s = make_split(&db, m, seed).unwrap();
        prop_assert_eq!(s.database.summary().images + s.queries.summary().images, db.summary().images);
        for (i, &n) in counts.iter().enumerate() {
            let id = format!("p{i}");
            let (d, q) = (s.database.encounters(&id).len(), s.queries.encounters(&id).len());
            prop_assert_eq!(d + q, n);
            let want_db = if n > m { m } else { (n - 1).max(1) };
            prop_assert_eq!(d, want_db);
            let dbs: BTreeSet<&str> = s.database.encounters(&id).into_iter().collect();
            prop_assert!(s.queries.encounters(&id).iter().all(|e| !dbs.contains(e)));
        }
    }

    #[test]
    fn accuracy_is_monotone_and_fusion_dominates(seed in 0u64..500, n_q in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<String> = (0..8).map(|i| format!("p{i}")).collect();
        let random_rankings = |rng: &mut ChaCha8Rng| -> Rankings {
            (0..n_q)
                .map(|q| {
                    let truth = &ids[q % ids.len()];
                    let scores = ids.iter().map(|id| (id.clone(), rng.random::<f64>()));
                    (QueryKey::new(truth.clone(), format!("e{q}")), RankedList::from_scores(scores))
                })
                .collect()
        };
        let (a, b) = (random_rankings(&mut rng), random_rankings(&mut rng));
        let keys: Vec<QueryKey> = a.keys().cloned().collect();
        let (acc_a, acc_b) = (top_k_accuracy(&a, &keys, 8).unwrap(), top_k_accuracy(&b, &keys, 8).unwrap());
        let fused = fused_accuracy(&a, &b, 8).unwrap();
        prop_assert!(acc_a.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(acc_a[7], 1.0);
        for k in 0..8 {
            prop_assert!(fused[k] >= acc_a[k].max(acc_b[k]));
        }
    }
}

#[test]
fn rigid_motion_at_fixed_radii() {
    let pts: Vec<[f64; 2]> = (0..300)
        .map(|i| {
            let t = i as f64 * 0.05;
            [t * 10.0, 8.0 * (t * 1.3).sin() + 3.0 * (t * 3.1).cos()]
        })
        .collect();
    let (s, c) = 0.7f64.sin_cos();
    let moved: Vec<[f64; 2]> = pts
        .iter()
        .map(|p| [2.5 * (c * p[0] - s * p[1]) + 40.0, 2.5 * (s * p[0] + c * p[1]) - 13.0])
        .collect();
    let a = curvature_rows(&pts, &[4.0, 9.0]);
    let b = curvature_rows(&moved, &[10.0, 22.5]);
    for (ra, rb) in a.iter().zip(&b) {
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() <= 1e-6, "{x} vs {y}");
        }
    }
}

#[test]
fn digitized_circle_matches_monte_carlo_area() {
    let big_r = 200.0;
    let pts = common::circle(big_r, 4000);
    let r = big_r / 4.0;
    let got = integral_curvature_at(&pts, pts.len() / 2, r);
    let want = common::monte_carlo_circle_ratio(big_r, r, 1_000_000, 17);
    assert!((got - want).abs() < 2e-3, "{got} vs {want}");
    assert!(got > 0.5);
}

#[test]
fn lnbnn_exact_mode_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let db: Vec<(String, Vec<f64>)> = (0..5)
        .flat_map(|p| common::unit_vectors(&mut rng, 20, 8).into_iter().map(move |v| (format!("p{p}"), v)))
        .collect();
    let individuals: Vec<String> = (0..5).map(|p| format!("p{p}")).collect();
    let owners = db.iter().map(|(id, _)| individuals.binary_search(id).unwrap() as u32).collect();
    let idx = NnIndex::from_parts(
        IndexConfig::exact(),
        8,
        db.iter().flat_map(|(_, v)| v.clone()).collect(),
        owners,
        individuals,
    )
    .unwrap();
    let queries = common::unit_vectors(&mut rng, 30, 8);
    let refs: Vec<&[f64]> = queries.iter().map(|q| q.as_slice()).collect();
    for k in [1, 3, 5] {
        let got = lnbnn_scores(&refs, &idx, k).unwrap().scores;
        let want = common::brute_force_lnbnn(&db, &queries, k);
        assert_eq!(got, want, "k = {k}");
    }
}

#[test]
fn adding_an_exact_copy_never_hurts() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let make = |rng: &mut ChaCha8Rng, extra: Option<&[f64]>| {
        let mut db: Vec<(String, Vec<f64>)> = (0..4)
            .flat_map(|p| common::unit_vectors(rng, 15, 6).into_iter().map(move |v| (format!("p{p}"), v)))
            .collect();
        if let Some(v) = extra {
            db.push(("p2".into(), v.to_vec()));
        }
        db
    };
    let queries = common::unit_vectors(&mut rng, 10, 6);
    let refs: Vec<&[f64]> = queries.iter().map(|q| q.as_slice()).collect();
    let rank = |db: &[(String, Vec<f64>)]| {
        let ids: Vec<String> = (0..4).map(|p| format!("p{p}")).collect();
        let owners = db.iter().map(|(id, _)| ids.binary_search(id).unwrap() as u32).collect();
        let idx = NnIndex::from_parts(IndexConfig::exact(), 6, db.iter().flat_map(|(_, v)| v.clone()).collect(), owners, ids)
            .unwrap();
        lnbnn_scores(&refs, &idx, 3).unwrap().ranking(&idx).rank_of("p2").unwrap()
    };
    let seed_rng = rng.clone();
    let before = rank(&make(&mut seed_rng.clone(), None));
    let after = rank(&make(&mut seed_rng.clone(), Some(&queries[0])));
    assert!(after <= before);
}

#[test]
fn forest_recall_against_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let vectors = common::unit_vectors(&mut rng, 500, 32);
    let idx = NnIndex::from_parts(
        IndexConfig::default(),
        32,
        vectors.concat(),
        vec![0; 500],
        vec!["a".into()],
    )
    .unwrap();
    let mut hits = 0;
    for q in common::unit_vectors(&mut rng, 100, 32) {
        let truth: BTreeSet<u32> = idx.knn_exact(&q, 10).iter().map(|n| n.id).collect();
        hits += idx.knn(&q, 10).iter().filter(|n| truth.contains(&n.id)).count();
    }
    assert!(hits as f64 / 1000.0 >= 0.95);
}

#[test]
fn align_on_equal_lengths_is_plain_dtw() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let len = rng.random_range(2..9);
        let (a, b) = (common::random_columns(&mut rng, len, 3), common::random_columns(&mut rng, len, 3));
        let to_matrix = |cols: &[Vec<f64>]| {
            let rows = (0..3).map(|k| cols.iter().map(|c| c[k]).collect()).collect();
            CurvatureMatrix::from_rows(ScaleSet::new(vec![0.1, 0.2, 0.3], Axis::Height).unwrap(), rows).unwrap()
        };
        let got = align(&to_matrix(&a), &to_matrix(&b), &AlignmentConfig::new(None, len)).unwrap().cost;
        assert_eq!(got, common::brute_force_dtw(&a, &b, None, None));
    }
}
