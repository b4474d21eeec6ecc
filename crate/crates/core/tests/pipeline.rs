use std::io::Cursor;

use finprint::contour::{parse_contours, resample_points, Format};
use finprint::curvature::curvature_matrix;
use finprint::descriptors::extract_keypoints;
use finprint::evaluation::{image_curvature, make_split, top_k_accuracy, FeatureConfig};
use finprint::lnbnn::build_index;
use finprint::ranking::{read_rankings, write_rankings};
use finprint::synthgen::{generate_dataset, generate_population, render_encounter, Mark, Polarity};
use finprint::{
    Axis, Contour, CurvatureMatrix, DatasetConfig, DistortionConfig, EncounterDatabase, Features, Matcher,
    MatcherKind, NnIndex, PipelineConfig, Profile, ScaleSet, SpatialWeights, WeightsFile,
};

fn small_mild(individuals: usize, seed: u64) -> EncounterDatabase {
    let mut cfg = DatasetConfig::mild(seed);
    cfg.population.individuals = individuals;
    generate_dataset(&cfg).unwrap()
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn contours(db: &EncounterDatabase) -> Vec<Contour> {
    db.contours().cloned().collect()
}

#[test]
fn jsonl_and_csv_round_trips() {
    let db = small_mild(3, 1);
    let mut jsonl = Vec::new();
    db.write_jsonl(&mut jsonl).unwrap();
    let back = parse_contours(Cursor::new(&jsonl), Format::Jsonl, true).unwrap();
    assert!(back.rejected.is_empty());
    assert_eq!(contours(&back.database), contours(&db));

    let mut csv = Vec::new();
    db.write_csv(&mut csv).unwrap();
    let back = parse_contours(Cursor::new(&csv), Format::Csv, true).unwrap();
    assert_eq!(contours(&back.database), contours(&db));
}

#[test]
fn curvature_and_index_binary_round_trips() {
    let db = small_mild(4, 2);
    let cfg = PipelineConfig::profile(Profile::Bottlenose);
    let features = Features::compute(&db, &cfg.features().unwrap()).unwrap();
    let m = features.curvature.values().next().unwrap();
    let mut buf = Vec::new();
    m.write_binary(&mut buf).unwrap();
    assert_eq!(&CurvatureMatrix::read_binary(&mut Cursor::new(&buf)).unwrap(), m);

    let matcher = Matcher::prepare(&cfg.matcher(MatcherKind::Lnbnn, None), &features).unwrap();
    let index = matcher.build_index(&db).unwrap();
    let mut buf = Vec::new();
    index.write_binary(&mut buf).unwrap();
    let loaded = NnIndex::read_binary(&mut Cursor::new(&buf)).unwrap();
    assert_eq!(loaded.len(), index.len());
    assert_eq!(loaded.individuals(), index.individuals());
    let q = index.vector(7).to_vec();
    assert_eq!(loaded.knn(&q, 10), index.knn(&q, 10));
    let ranks = matcher.rank_with(&db, Some(&index), &db).unwrap();
    assert_eq!(matcher.rank_with(&db, Some(&loaded), &db).unwrap(), ranks);
}

#[test]
fn rankings_dump_round_trip() {
    let db = small_mild(5, 3);
    let split = make_split(&db, 1, 0).unwrap();
    let cfg = PipelineConfig::profile(Profile::Bottlenose);
    let features = Features::compute(&db, &cfg.features().unwrap()).unwrap();
    let matcher = Matcher::prepare(&cfg.matcher(MatcherKind::Hocs, None), &features).unwrap();
    let rankings = matcher.rank(&split.database, &split.queries).unwrap();
    let mut buf = Vec::new();
    write_rankings(&rankings, &mut buf).unwrap();
    let back = read_rankings(Cursor::new(&buf)).unwrap();
    assert_eq!(back, rankings);
    let keys = split.query_keys();
    assert_eq!(top_k_accuracy(&back, &keys, 5).unwrap(), top_k_accuracy(&rankings, &keys, 5).unwrap());
}

#[test]
fn weights_file_round_trip() {
    let w = SpatialWeights::new(vec![0.5, 1.5, 2.0, 0.25]).unwrap();
    let file = WeightsFile::new(&w, 128);
    let json = serde_json::to_string(&file).unwrap();
    let back: WeightsFile = serde_json::from_str(&json).unwrap();
    assert_eq!(back.weights().unwrap().evaluate(128).unwrap(), w.evaluate(128).unwrap());
}

#[test]
fn keypoints_land_on_synthetic_marks() {
    let mut t = generate_population(1, 0, 4).unwrap().remove(0);
    t.marks = [0.3, 0.5, 0.7]
        .iter()
        .zip([Polarity::Notch, Polarity::Nick, Polarity::Notch])
        .map(|(&position, polarity)| Mark {
            position,
            depth: 0.012,
            width: 0.06,
            polarity,
        })
        .collect();
    let c = render_encounter(&t, &DistortionConfig::none(), "e", 1, 0).unwrap().remove(0);
    let features = FeatureConfig {
        edge_points: 1024,
        scales: ScaleSet::new(vec![0.04], Axis::Height).unwrap(),
    };
    let m = image_curvature(&c, &features).unwrap();
    let kp = extract_keypoints(&m, 8).unwrap();
    let template = t.sample().unwrap();
    let edge = resample_points(c.points(), m.n_points()).unwrap();
    for mark in &t.marks {
        let tip = template[(mark.position * (template.len() - 1) as f64).round() as usize];
        let centre = (0..edge.len())
            .min_by(|&a, &b| dist2(edge[a], tip).total_cmp(&dist2(edge[b], tip)))
            .unwrap();
        let nearest = kp.per_scale[0].iter().map(|&k| k.abs_diff(centre)).min().unwrap();
        assert!(nearest <= 5, "mark at {centre} missed, keypoints {:?}", kp.per_scale[0]);
    }
}

#[test]
fn exact_copy_of_a_database_encounter_ranks_first() {
    let db = small_mild(8, 5);
    let target = "ind003";
    let mut queries = EncounterDatabase::new();
    for c in db.encounter_images(target, "enc01") {
        queries
            .insert(Contour::new(target, "copy", c.image(), c.points().to_vec()).unwrap())
            .unwrap();
    }
    let mut all = db.clone();
    for c in queries.contours() {
        all.insert(c.clone()).unwrap();
    }
    let cfg = PipelineConfig::profile(Profile::Bottlenose);
    let features = Features::compute(&all, &cfg.features().unwrap()).unwrap();
    for kind in [MatcherKind::Dtw, MatcherKind::Lnbnn, MatcherKind::Hocs] {
        let mut cfg = cfg.clone();
        cfg.exact = true;
        let matcher = Matcher::prepare(&cfg.matcher(kind, None), &features).unwrap();
        let rankings = matcher.rank(&db, &queries).unwrap();
        let list = rankings.values().next().unwrap();
        assert_eq!(list.entries()[0].0, target, "{kind:?}");
        if kind == MatcherKind::Dtw {
            assert_eq!(list.entries()[0].1, 0.0);
        }
    }
}

#[test]
fn index_over_encounter_database_is_ordered() {
    let db = small_mild(3, 6);
    let cfg = PipelineConfig::profile(Profile::Bottlenose);
    let features = Features::compute(&db, &cfg.features().unwrap()).unwrap();
    let Matcher::Lnbnn { descriptors, .. } = Matcher::prepare(&cfg.matcher(MatcherKind::Lnbnn, None), &features).unwrap()
    else {
        unreachable!()
    };
    let index = build_index(descriptors.values(), cfg.index()).unwrap();
    assert_eq!(index.individuals(), ["ind000", "ind001", "ind002"]);
    let expected: usize = descriptors.values().map(|d| d.indexable_count()).sum();
    assert_eq!(index.len(), expected);
    let c = db.contours().next().unwrap();
    let direct = curvature_matrix(c, &ScaleSet::new(cfg.scales.clone(), cfg.axis).unwrap()).unwrap();
    assert_eq!(direct.n_scales(), 4);
}
