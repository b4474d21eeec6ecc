//! Encounter splits, matchers over cached features, and top-k evaluation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contour::{resample_arclength, Contour, EncounterDatabase, ImageKey};
use crate::curvature::{curvature_matrix, hocs_feature, CurvatureMatrix, Hocs, ScaleSet};
use crate::descriptors::{extract_descriptors, extract_keypoints, DescriptorSet};
use crate::dtw::{rank_individuals, AlignmentConfig, Aligner, Sequence};
use crate::error::{Error, Result};
use crate::lnbnn::{build_index, encounter_query_lnbnn, IndexConfig, NnIndex};
use crate::ranking::{QueryKey, RankedList, Rankings};
use crate::weights::TrainingSet;

pub const DEFAULT_TOP_K: usize = 25;
pub const DEFAULT_EDGE_POINTS: usize = 1024;

/// Database encounters and held-out query encounters.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub database: EncounterDatabase,
    pub queries: EncounterDatabase,
    pub seed: u64,
}

impl Split {
    pub fn query_keys(&self) -> Vec<QueryKey> {
        self.queries
            .individuals()
            .flat_map(|ind| self.queries.encounters(ind).into_iter().map(move |e| QueryKey::new(ind, e)))
            .collect()
    }
}

/// Per individual with `n` encounters: `n > m` puts `m` random encounters in
/// the database and the rest in the queries; `2 <= n <= m` holds out one
/// random encounter; `n = 1` is database only.
pub fn make_split(db: &EncounterDatabase, m: usize, seed: u64) -> Result<Split> {
    if m == 0 {
        return Err(Error::Config("encounters per individual must be at least 1".into()));
    }
    if db.is_empty() {
        return Err(Error::EmptyInput("empty database".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut database = EncounterDatabase::new();
    let mut queries = EncounterDatabase::new();
    for ind in db.individuals() {
        let mut encs = db.encounters(ind);
        encs.shuffle(&mut rng);
        let n = encs.len();
        let keep = if n > m { m } else { n.saturating_sub(1).max(1) };
        for (i, enc) in encs.iter().enumerate() {
            let target = if i < keep { &mut database } else { &mut queries };
            for c in db.encounter_images(ind, enc) {
                target.insert(c.clone())?;
            }
        }
    }
    Ok(Split {
        database,
        queries,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Points the trailing edge is resampled to before curvature.
    pub edge_points: usize,
    pub scales: ScaleSet,
}

pub fn image_curvature(c: &Contour, cfg: &FeatureConfig) -> Result<CurvatureMatrix> {
    curvature_matrix(&resample_arclength(c, cfg.edge_points)?, &cfg.scales)
}

/// Curvature of every image, keyed by image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Features {
    pub curvature: BTreeMap<ImageKey, CurvatureMatrix>,
}

impl Features {
    pub fn compute(db: &EncounterDatabase, cfg: &FeatureConfig) -> Result<Self> {
        let contours: Vec<&Contour> = db.contours().collect();
        let curvature = contours
            .par_iter()
            .map(|c| Ok((c.key(), image_curvature(c, cfg)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Self { curvature })
    }

    pub fn get(&self, key: &ImageKey) -> Result<&CurvatureMatrix> {
        self.curvature
            .get(key)
            .ok_or_else(|| Error::Inconsistent(format!("no features for {key:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "matcher", rename_all = "lowercase")]
pub enum MatcherConfig {
    Dtw(AlignmentConfig),
    Lnbnn {
        keypoints: usize,
        dim: usize,
        k: usize,
        index: IndexConfig,
    },
    Hocs {
        bins: usize,
    },
}

impl MatcherConfig {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Dtw(_) => "dtw",
            Self::Lnbnn { .. } => "lnbnn",
            Self::Hocs { .. } => "hocs",
        }
    }
}

/// A matcher with its per-image representation precomputed.
pub enum Matcher {
    Dtw {
        aligner: Aligner,
        sequences: BTreeMap<ImageKey, Sequence>,
    },
    Lnbnn {
        k: usize,
        index: IndexConfig,
        descriptors: BTreeMap<ImageKey, DescriptorSet>,
    },
    Hocs {
        histograms: BTreeMap<ImageKey, Hocs>,
    },
}

pub fn image_descriptors(c: &CurvatureMatrix, keypoints: usize, dim: usize, key: ImageKey) -> Result<DescriptorSet> {
    extract_descriptors(c, &extract_keypoints(c, keypoints)?, dim, key)
}

impl Matcher {
    pub fn prepare(cfg: &MatcherConfig, features: &Features) -> Result<Self> {
        let items: Vec<(&ImageKey, &CurvatureMatrix)> = features.curvature.iter().collect();
        Ok(match cfg {
            MatcherConfig::Dtw(align) => {
                let aligner = Aligner::new(align)?;
                let sequences = items
                    .par_iter()
                    .map(|(k, m)| Ok(((*k).clone(), aligner.prepare(m)?)))
                    .collect::<Result<_>>()?;
                Self::Dtw { aligner, sequences }
            }
            MatcherConfig::Lnbnn {
                keypoints,
                dim,
                k,
                index,
            } => Self::Lnbnn {
                k: *k,
                index: *index,
                descriptors: items
                    .par_iter()
                    .map(|(key, m)| Ok(((*key).clone(), image_descriptors(m, *keypoints, *dim, (*key).clone())?)))
                    .collect::<Result<_>>()?,
            },
            MatcherConfig::Hocs { bins } => Self::Hocs {
                histograms: items
                    .par_iter()
                    .map(|(k, m)| Ok(((*k).clone(), hocs_feature(m, *bins)?)))
                    .collect::<Result<_>>()?,
            },
        })
    }

    fn lookup<'a, T>(map: &'a BTreeMap<ImageKey, T>, c: &Contour) -> Result<&'a T> {
        map.get(&c.key())
            .ok_or_else(|| Error::Inconsistent(format!("image {:?} was not prepared", c.key())))
    }

    /// Descriptor index over all images of `database`.
    pub fn build_index(&self, database: &EncounterDatabase) -> Result<NnIndex> {
        let Self::Lnbnn { index, descriptors, .. } = self else {
            return Err(Error::Config("only the lnbnn matcher uses an index".into()));
        };
        let sets = database.contours().map(|c| Self::lookup(descriptors, c)).collect::<Result<Vec<_>>>()?;
        build_index(sets, *index)
    }

    /// Ranks every database individual for each query encounter.
    pub fn rank(&self, database: &EncounterDatabase, queries: &EncounterDatabase) -> Result<Rankings> {
        let index = match self {
            Self::Lnbnn { .. } => Some(self.build_index(database)?),
            _ => None,
        };
        self.rank_with(database, index.as_ref(), queries)
    }

    /// As [`Matcher::rank`], reusing a prebuilt index for the lnbnn matcher.
    pub fn rank_with(
        &self,
        database: &EncounterDatabase,
        index: Option<&NnIndex>,
        queries: &EncounterDatabase,
    ) -> Result<Rankings> {
        let keys: Vec<QueryKey> = queries
            .individuals()
            .flat_map(|ind| queries.encounters(ind).into_iter().map(move |e| QueryKey::new(ind, e)))
            .collect();
        let images = |q: &QueryKey| queries.encounter_images(q.individual(), q.encounter());
        let ranked: Vec<RankedList> = match self {
            Self::Dtw { aligner, sequences } => {
                let gallery = database
                    .individuals()
                    .map(|ind| {
                        let seqs = database
                            .individual_images(ind)
                            .into_iter()
                            .map(|c| Self::lookup(sequences, c).cloned())
                            .collect::<Result<Vec<_>>>()?;
                        Ok((ind.to_string(), seqs))
                    })
                    .collect::<Result<Vec<_>>>()?;
                keys.par_iter()
                    .map(|q| {
                        let seqs = images(q)
                            .into_iter()
                            .map(|c| Self::lookup(sequences, c).cloned())
                            .collect::<Result<Vec<_>>>()?;
                        rank_individuals(aligner, &seqs, &gallery)
                    })
                    .collect::<Result<_>>()?
            }
            Self::Lnbnn { k, descriptors, .. } => {
                let index = index.ok_or_else(|| Error::Config("lnbnn ranking needs an index".into()))?;
                keys.iter()
                    .map(|q| {
                        let sets = images(q)
                            .into_iter()
                            .map(|c| Self::lookup(descriptors, c))
                            .collect::<Result<Vec<_>>>()?;
                        encounter_query_lnbnn(&sets, index, *k)
                    })
                    .collect::<Result<_>>()?
            }
            Self::Hocs { histograms } => keys
                .par_iter()
                .map(|q| {
                    let qh = images(q)
                        .into_iter()
                        .map(|c| Self::lookup(histograms, c))
                        .collect::<Result<Vec<_>>>()?;
                    let scores = database
                        .individuals()
                        .map(|ind| {
                            let mut best = f64::INFINITY;
                            for c in database.individual_images(ind) {
                                let h = Self::lookup(histograms, c)?;
                                for q in &qh {
                                    best = best.min(q.distance(h));
                                }
                            }
                            Ok((ind.to_string(), best))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(RankedList::from_scores(scores))
                })
                .collect::<Result<_>>()?,
        };
        Ok(keys.into_iter().zip(ranked).collect())
    }

    /// The weight-learning view of a split: database sequences per individual
    /// and query encounters labelled by individual.
    pub fn training_set(split: &Split, features: &Features, align: &AlignmentConfig) -> Result<TrainingSet> {
        let group = |db: &EncounterDatabase, per_encounter: bool| -> Result<Vec<(String, Vec<&CurvatureMatrix>)>> {
            let mut out = Vec::new();
            for ind in db.individuals() {
                if per_encounter {
                    for enc in db.encounters(ind) {
                        let ms = db
                            .encounter_images(ind, enc)
                            .into_iter()
                            .map(|c| features.get(&c.key()))
                            .collect::<Result<_>>()?;
                        out.push((ind.to_string(), ms));
                    }
                } else {
                    let ms = db
                        .individual_images(ind)
                        .into_iter()
                        .map(|c| features.get(&c.key()))
                        .collect::<Result<_>>()?;
                    out.push((ind.to_string(), ms));
                }
            }
            Ok(out)
        };
        TrainingSet::prepare(&group(&split.database, false)?, &group(&split.queries, true)?, align)
    }
}

/// Accuracy at `k = 1..=k_max`: the fraction of queries whose individual is
/// within the first `k` entries of its ranking.
pub fn top_k_accuracy(rankings: &Rankings, queries: &[QueryKey], k_max: usize) -> Result<Vec<f64>> {
    if queries.is_empty() {
        return Err(Error::EmptyInput("no queries".into()));
    }
    let mut hits = vec![0usize; k_max];
    for q in queries {
        let r = rankings
            .get(q)
            .ok_or_else(|| Error::Inconsistent(format!("no ranking for query {q:?}")))?;
        if let Some(rank) = r.rank_of(q.individual()) {
            for h in hits.iter_mut().skip(rank) {
                *h += 1;
            }
        }
    }
    Ok(hits.into_iter().map(|h| h as f64 / queries.len() as f64).collect())
}

/// Per query: is the truth within the top `k` of either ranking?
pub fn fuse_rankings(a: &Rankings, b: &Rankings, k: usize) -> Result<Vec<(QueryKey, bool)>> {
    if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
        return Err(Error::Inconsistent("fused rankings cover different queries".into()));
    }
    Ok(a.iter()
        .zip(b.values())
        .map(|((q, ra), rb)| (q.clone(), ra.in_top(q.individual(), k) || rb.in_top(q.individual(), k)))
        .collect())
}

/// Fused accuracy at `k = 1..=k_max`.
pub fn fused_accuracy(a: &Rankings, b: &Rankings, k_max: usize) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Err(Error::EmptyInput("no queries".into()));
    }
    (1..=k_max)
        .map(|k| {
            let f = fuse_rankings(a, b, k)?;
            Ok(f.iter().filter(|(_, ok)| *ok).count() as f64 / f.len() as f64)
        })
        .collect()
}

/// Hex SHA-256 prefix of the JSON form of `cfg`.
pub fn config_hash<T: Serialize>(cfg: &T) -> Result<String> {
    let digest = Sha256::digest(serde_json::to_vec(cfg)?);
    Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKReport {
    pub accuracy: Vec<f64>,
    pub queries: usize,
    pub seed: u64,
    pub config_hash: String,
    #[serde(skip)]
    pub rankings: Rankings,
}

impl TopKReport {
    pub fn at(&self, k: usize) -> f64 {
        self.accuracy[k - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub features: FeatureConfig,
    pub matcher: MatcherConfig,
    /// Database encounters per individual.
    pub encounters: usize,
    pub k_max: usize,
}

/// Evaluates one split.
pub fn evaluate_split(matcher: &Matcher, split: &Split, k_max: usize, config_hash: &str) -> Result<TopKReport> {
    let rankings = matcher.rank(&split.database, &split.queries)?;
    let queries = split.query_keys();
    Ok(TopKReport {
        accuracy: top_k_accuracy(&rankings, &queries, k_max)?,
        queries: queries.len(),
        seed: split.seed,
        config_hash: config_hash.to_string(),
        rankings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunsReport {
    pub config_hash: String,
    pub mean: Vec<f64>,
    /// Sample standard deviation; zero for a single run.
    pub stddev: Vec<f64>,
    pub runs: Vec<TopKReport>,
}

pub fn summarize(runs: Vec<TopKReport>, config_hash: &str) -> Result<RunsReport> {
    let Some(first) = runs.first() else {
        return Err(Error::EmptyInput("no runs".into()));
    };
    let k_max = first.accuracy.len();
    let n = runs.len() as f64;
    let mean: Vec<f64> = (0..k_max).map(|k| runs.iter().map(|r| r.accuracy[k]).sum::<f64>() / n).collect();
    let stddev = (0..k_max)
        .map(|k| {
            if runs.len() < 2 {
                return 0.0;
            }
            let ss: f64 = runs.iter().map(|r| (r.accuracy[k] - mean[k]).powi(2)).sum();
            (ss / (n - 1.0)).sqrt()
        })
        .collect();
    Ok(RunsReport {
        config_hash: config_hash.to_string(),
        mean,
        stddev,
        runs,
    })
}

/// Runs `n_runs` splits seeded `base_seed, base_seed + 1, ...`.
pub fn run_splits(
    db: &EncounterDatabase,
    matcher: &Matcher,
    cfg: &EvalConfig,
    n_runs: usize,
    base_seed: u64,
) -> Result<RunsReport> {
    if n_runs == 0 {
        return Err(Error::Config("need at least one run".into()));
    }
    let hash = config_hash(cfg)?;
    let runs = (0..n_runs as u64)
        .map(|i| {
            let split = make_split(db, cfg.encounters, base_seed.wrapping_add(i))?;
            evaluate_split(matcher, &split, cfg.k_max, &hash)
        })
        .collect::<Result<Vec<_>>>()?;
    summarize(runs, &hash)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub encounters: usize,
    pub accuracy: Vec<f64>,
}

/// One split per `m`, all drawn with `seed`.
pub fn sweep_encounters(
    db: &EncounterDatabase,
    matcher: &Matcher,
    m_values: &[usize],
    seed: u64,
    k_max: usize,
) -> Result<Vec<SweepRow>> {
    if m_values.is_empty() {
        return Err(Error::Config("no encounter counts to sweep".into()));
    }
    m_values
        .iter()
        .map(|&m| {
            let split = make_split(db, m, seed)?;
            let rankings = matcher.rank(&split.database, &split.queries)?;
            Ok(SweepRow {
                encounters: m,
                accuracy: top_k_accuracy(&rankings, &split.query_keys(), k_max)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::Contour;

    fn db(counts: &[usize]) -> EncounterDatabase {
        let mut db = EncounterDatabase::new();
        for (i, &n) in counts.iter().enumerate() {
            for e in 0..n {
                for img in 0..2 {
                    db.insert(
                        Contour::new(
                            format!("p{i}"),
                            format!("e{e:02}"),
                            format!("i{img}"),
                            vec![[0.0, 0.0], [1.0, e as f64 + 1.0]],
                        )
                        .unwrap(),
                    )
                    .unwrap();
                }
            }
        }
        db
    }

    fn ranking(order: &[&str]) -> RankedList {
        RankedList::from_ordered(order.iter().enumerate().map(|(i, s)| (s.to_string(), i as f64)).collect())
    }

    #[test]
    fn split_counts_follow_the_rule() {
        let s = make_split(&db(&[12, 3, 1]), 10, 0).unwrap();
        assert_eq!(s.database.encounters("p0").len(), 10);
        assert_eq!(s.queries.encounters("p0").len(), 2);
        assert_eq!(s.database.encounters("p1").len(), 2);
        assert_eq!(s.queries.encounters("p1").len(), 1);
        assert_eq!(s.database.encounters("p2").len(), 1);
        assert!(!s.queries.contains_individual("p2"));
        assert_eq!(s.database.encounter_images("p1", s.database.encounters("p1")[0]).len(), 2);
    }

    #[test]
    fn split_partitions_and_is_deterministic() {
        let all = db(&[5, 4, 2, 7]);
        for seed in 0..5 {
            let s = make_split(&all, 2, seed).unwrap();
            assert_eq!(s, make_split(&all, 2, seed).unwrap());
            let mut union: Vec<Contour> = s.database.contours().chain(s.queries.contours()).cloned().collect();
            union.sort_by_key(|c| c.key());
            assert_eq!(union, all.contours().cloned().collect::<Vec<_>>());
            for q in s.query_keys() {
                assert!(!s.database.encounters(q.individual()).contains(&q.encounter()));
                assert!(s.database.contains_individual(q.individual()));
            }
        }
        assert!(make_split(&EncounterDatabase::new(), 2, 0).is_err());
    }

    #[test]
    fn accuracy_counts() {
        let qs: Vec<QueryKey> = ["a", "b", "c"].iter().map(|i| QueryKey::new(*i, "e")).collect();
        let r: Rankings = [
            (qs[0].clone(), ranking(&["a", "b", "c"])),
            (qs[1].clone(), ranking(&["a", "c", "b"])),
            (qs[2].clone(), ranking(&["a", "c", "b"])),
        ]
        .into_iter()
        .collect();
        assert_eq!(top_k_accuracy(&r, &qs, 3).unwrap(), [1.0 / 3.0, 2.0 / 3.0, 1.0]);
        let mut missing = r.clone();
        missing.remove(&qs[1]);
        assert!(matches!(top_k_accuracy(&missing, &qs, 3), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn fusion_is_a_union() {
        let qs: Vec<QueryKey> = (1..=4).map(|i| QueryKey::new(format!("p{i}"), "e")).collect();
        let all = ["p1", "p2", "p3", "p4", "x"];
        let mk = |correct: &[usize]| -> Rankings {
            qs.iter()
                .enumerate()
                .map(|(i, q)| {
                    let mut order: Vec<&str> = all.iter().copied().filter(|s| *s != q.individual()).collect();
                    let pos = if correct.contains(&(i + 1)) { 0 } else { 4 };
                    order.insert(pos, q.individual());
                    (q.clone(), ranking(&order))
                })
                .collect()
        };
        let (a, b) = (mk(&[1, 2]), mk(&[2, 3]));
        assert_eq!(fused_accuracy(&a, &b, 1).unwrap()[0], 0.75);
        assert_eq!(fused_accuracy(&a, &a, 5).unwrap(), top_k_accuracy(&a, &qs, 5).unwrap());
        assert_eq!(fused_accuracy(&mk(&[1, 2]), &mk(&[3, 4]), 1).unwrap()[0], 1.0);
        let mut short = b.clone();
        short.pop_first();
        assert!(matches!(fuse_rankings(&a, &short, 1), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn summary_statistics() {
        let rep = |acc: Vec<f64>| TopKReport {
            accuracy: acc,
            queries: 1,
            seed: 0,
            config_hash: String::new(),
            rankings: Rankings::new(),
        };
        let one = summarize(vec![rep(vec![0.5, 1.0])], "h").unwrap();
        assert_eq!(one.mean, [0.5, 1.0]);
        assert_eq!(one.stddev, [0.0, 0.0]);
        let many = summarize(vec![rep(vec![1.0]); 5], "h").unwrap();
        assert_eq!((many.mean[0], many.stddev[0]), (1.0, 0.0));
        let two = summarize(vec![rep(vec![0.0]), rep(vec![1.0])], "h").unwrap();
        assert!((two.stddev[0] - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = MatcherConfig::Hocs { bins: 16 };
        let b = MatcherConfig::Hocs { bins: 8 };
        assert_eq!(config_hash(&a).unwrap(), config_hash(&a).unwrap());
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        assert_eq!(config_hash(&a).unwrap().len(), 16);
    }
}
