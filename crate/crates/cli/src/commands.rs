use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use finprint::evaluation::{config_hash, fused_accuracy, make_split, run_splits, EvalConfig};
use finprint::ranking::{read_rankings, write_rankings, Rankings};
use finprint::synthgen::generate_dataset;
use finprint::weights::{learn_weights, LearnConfig};
use finprint::{
    DatasetConfig, DistortionConfig, EncounterDatabase, Features, Matcher, MatcherConfig, MatcherKind, RunsReport,
    SpatialWeights, WeightsFile,
};
use serde::Serialize;

use crate::args::{BuildArgs, EvaluateArgs, IngestArgs, LearnArgs, MatcherArg, Preset, QueryArgs, SynthArgs};
use crate::error::{CliError, CliResult};
use crate::workspace::{read_contours, read_json, write_json, Workspace};

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn ingest(ws: &Workspace, args: &IngestArgs) -> CliResult<()> {
    let mut db = if args.append && ws.has_database() {
        ws.load_database()?.contours
    } else {
        EncounterDatabase::new()
    };
    let mut rejected = 0;
    for path in &args.paths {
        let (part, r) = read_contours(path, args.format.into(), args.strict)?;
        rejected += r;
        for c in part.into_contours() {
            db.insert(c)?;
        }
    }
    if db.is_empty() {
        return Err(CliError::Data("no records".into()));
    }
    ws.save_database(&db)?;
    println!("{}", db.summary());
    if rejected > 0 {
        println!("{rejected} records rejected");
    }
    Ok(())
}

pub fn synthgen(args: &SynthArgs) -> CliResult<()> {
    let mut cfg = match args.preset {
        Preset::None => DatasetConfig::benchmark(DistortionConfig::none(), args.seed),
        Preset::Mild => DatasetConfig::mild(args.seed),
        Preset::NoisyEndpoints => DatasetConfig::noisy_endpoints(args.seed),
        Preset::Occlusion => DatasetConfig::occlusion(args.seed),
    };
    let d = &mut cfg.distortion;
    macro_rules! set {
        ($($target:expr => $arg:ident),*) => {
            $(if let Some(v) = args.$arg { $target = v; })*
        };
    }
    set!(cfg.population.individuals => individuals, cfg.population.marks => marks, d.rotation => rotation,
         d.scale => scale, d.jitter => jitter, d.endpoint_noise => endpoint_noise,
         d.endpoint_span => endpoint_span, d.occlusion => occlusion);
    if let Some(t) = args.truncation {
        d.truncation = (0.0, t);
    }
    set!(cfg.encounters => encounters, cfg.images => images);
    let db = generate_dataset(&cfg)?;
    match &args.out {
        Some(path) => {
            let mut w = create(path)?;
            db.write_jsonl(&mut w)?;
            w.flush()?;
        }
        None => {
            let mut w = BufWriter::new(io::stdout().lock());
            db.write_jsonl(&mut w)?;
            w.flush()?;
        }
    }
    eprintln!("{}", db.summary());
    Ok(())
}

fn status(hit: bool) -> &'static str {
    if hit {
        "cache hit"
    } else {
        "built"
    }
}

pub fn build_index(ws: &Workspace, args: &BuildArgs) -> CliResult<()> {
    let cfg = args.tuning.config();
    let db = ws.load_database()?;
    let features = ws.curvature(&db, &cfg.features()?)?;
    println!(
        "curvature {}: {} images ({})",
        features.hash,
        features.value.curvature.len(),
        status(features.hit)
    );
    if args.matcher == MatcherArg::Lnbnn {
        let cached = ws.index(&features, cfg.keypoints, cfg.dim, cfg.index())?;
        let m = &cached.value.1;
        println!(
            "index {}: {} descriptors, {} indexable, over {} images ({})",
            cached.hash,
            m.descriptors,
            m.indexable,
            m.images,
            status(cached.hit)
        );
    }
    Ok(())
}

fn load_weights(path: Option<&PathBuf>) -> CliResult<Option<SpatialWeights>> {
    path.map(|p| read_json::<WeightsFile>(p)?.weights().map_err(CliError::from))
        .transpose()
}

pub fn learn(ws: &Workspace, args: &LearnArgs) -> CliResult<()> {
    let cfg = args.tuning.config();
    let db = ws.load_database()?;
    let features = ws.curvature(&db, &cfg.features()?)?;
    let align = cfg.alignment(None);
    let learn = LearnConfig {
        k_objective: args.k_objective,
        budget: args.budget,
        seed: cfg.seed,
        degree: args.degree.unwrap_or(cfg.degree),
        ..LearnConfig::default()
    };
    let split = make_split(&db.contours, usize::MAX, cfg.seed)?;
    let train = Matcher::training_set(&split, &features.value, &align)?;
    let outcome = learn_weights(&train, &learn, &align)?;
    let hash = config_hash(&("weights", &features.hash, &align, &learn))?;
    let mut file = WeightsFile::new(&outcome.weights, cfg.resample_to);
    file.config_hash = Some(hash.clone());
    let out = match &args.out {
        Some(p) => p.clone(),
        None => ws.reports()?.join(format!("weights-{hash}.json")),
    };
    write_json(&out, &file)?;
    println!(
        "top-{} objective: baseline {:.4}, learned {:.4} after {} evaluations",
        learn.k_objective, outcome.baseline, outcome.objective, outcome.evaluations
    );
    println!("weights written to {}", out.display());
    Ok(())
}

/// Database curvature merged with the query images' own. A query image may
/// reuse a database key only if its contour is identical.
fn merged_features(db: &EncounterDatabase, base: &Features, queries: &EncounterDatabase, extra: Features) -> CliResult<Features> {
    let mut curvature = base.curvature.clone();
    for (key, m) in extra.curvature {
        if let Some(existing) = db.get(&key.individual, &key.encounter, &key.image) {
            let q = queries.get(&key.individual, &key.encounter, &key.image);
            if q.map(|q| q.points()) != Some(existing.points()) {
                return Err(CliError::Data(format!("query image {key:?} differs from the database image with that id")));
            }
        }
        curvature.insert(key, m);
    }
    Ok(Features { curvature })
}

pub fn query(ws: &Workspace, args: &QueryArgs) -> CliResult<()> {
    let cfg = args.tuning.config();
    let kind: MatcherKind = args.matcher.into();
    let db = ws.load_database()?;
    let feature_cfg = cfg.features()?;
    let features = ws.curvature(&db, &feature_cfg)?;
    let (queries, _) = read_contours(&args.queries, args.format.into(), true)?;
    if queries.is_empty() {
        return Err(CliError::Data(format!("{}: no records", args.queries.display())));
    }
    let query_features = Features::compute(&queries, &feature_cfg)?;
    let mc = cfg.matcher(kind, load_weights(args.weights.as_ref())?);
    let rankings = if let MatcherConfig::Lnbnn { keypoints, dim, index, .. } = &mc {
        let cached = ws.index(&features, *keypoints, *dim, *index)?;
        let matcher = Matcher::prepare(&mc, &query_features)?;
        matcher.rank_with(&db.contours, Some(&cached.value.0), &queries)?
    } else {
        let all = merged_features(&db.contours, &features.value, &queries, query_features)?;
        Matcher::prepare(&mc, &all)?.rank_with(&db.contours, None, &queries)?
    };
    match &args.out {
        Some(path) => {
            let mut w = create(path)?;
            write_rankings(&rankings, &mut w)?;
            w.flush()?;
        }
        None => {
            let mut w = BufWriter::new(io::stdout().lock());
            write_rankings(&rankings, &mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Fused {
    with: String,
    accuracy: Vec<f64>,
}

#[derive(Serialize)]
struct EvaluateReport<'a> {
    config_hash: String,
    database: &'a str,
    matcher: &'static str,
    encounters: usize,
    seed: u64,
    #[serde(flatten)]
    runs: &'a RunsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    fused: Option<&'a Fused>,
}

pub fn evaluate(ws: &Workspace, args: &EvaluateArgs) -> CliResult<()> {
    let cfg = args.tuning.config();
    let db = ws.load_database()?;
    let feature_cfg = cfg.features()?;
    let features = ws.curvature(&db, &feature_cfg)?;
    let mc = cfg.matcher(args.matcher.into(), load_weights(args.weights.as_ref())?);
    let matcher = Matcher::prepare(&mc, &features.value)?;
    let name = mc.name();
    let eval = EvalConfig {
        features: feature_cfg,
        matcher: mc,
        encounters: args.encounters,
        k_max: args.k_max,
    };
    let report = run_splits(&db.contours, &matcher, &eval, args.runs, cfg.seed)?;
    let hash = config_hash(&(&report.config_hash, &db.digest, args.runs, cfg.seed))?;
    let dir = ws.reports()?;

    let fused = match &args.fuse {
        Some(path) => {
            let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            let other: Rankings = read_rankings(BufReader::new(file))?;
            Some(Fused {
                with: path.display().to_string(),
                accuracy: fused_accuracy(&report.runs[0].rankings, &other, args.k_max)?,
            })
        }
        None => None,
    };

    for (i, run) in report.runs.iter().enumerate() {
        let mut w = create(&dir.join(format!("rankings-{name}-{hash}-run{i}.jsonl")))?;
        write_rankings(&run.rankings, &mut w)?;
        w.flush()?;
    }
    let json_path = dir.join(format!("evaluate-{name}-{hash}.json"));
    write_json(
        &json_path,
        &EvaluateReport {
            config_hash: hash.clone(),
            database: &db.digest,
            matcher: name,
            encounters: args.encounters,
            seed: cfg.seed,
            runs: &report,
            fused: fused.as_ref(),
        },
    )?;
    let csv_path = dir.join(format!("evaluate-{name}-{hash}.csv"));
    write_curve(&csv_path, &report, fused.as_ref())?;

    let at = |v: &[f64], k: usize| v.get(k - 1).copied().unwrap_or(f64::NAN);
    for k in [1, 5, 10].into_iter().filter(|&k| k <= args.k_max) {
        print!("top-{k} {:.4} ± {:.4}", at(&report.mean, k), at(&report.stddev, k));
        if let Some(f) = &fused {
            print!(" (fused {:.4})", at(&f.accuracy, k));
        }
        println!();
    }
    println!("{} queries per run, {} runs", report.runs[0].queries, report.runs.len());
    println!("report {}", json_path.display());
    Ok(())
}

fn write_curve(path: &Path, report: &RunsReport, fused: Option<&Fused>) -> CliResult<()> {
    let to_data = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["k".to_string(), "mean".into(), "stddev".into()];
    header.extend((0..report.runs.len()).map(|i| format!("run{i}")));
    if fused.is_some() {
        header.push("fused".into());
    }
    w.write_record(&header).map_err(to_data)?;
    for k in 0..report.mean.len() {
        let mut row = vec![(k + 1).to_string(), report.mean[k].to_string(), report.stddev[k].to_string()];
        row.extend(report.runs.iter().map(|r| r.accuracy[k].to_string()));
        if let Some(f) = fused {
            row.push(f.accuracy[k].to_string());
        }
        w.write_record(&row).map_err(to_data)?;
    }
    w.flush()?;
    Ok(())
}
