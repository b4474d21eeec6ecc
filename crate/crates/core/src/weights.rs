//! Spatial weight vectors generated by Bernstein polynomials, and a
//! budgeted derivative-free search for their coefficients.
//!
//! A coefficient vector `c` of length `degree + 1` defines
//! `f(x | c) = sum_i c_i * b_{i,degree}(x)` on `[0, 1]`; the weight of point
//! `k` of an `n`-point edge is `f(k / (n - 1) | c)`. Since the basis is a
//! partition of unity, `c = 1` gives uniform weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::CurvatureMatrix;
use crate::dtw::{rank_individuals, AlignmentConfig, Aligner, Sequence};
use crate::error::{Error, Result};

pub const DEFAULT_DEGREE: usize = 10;

/// `C(n, i) x^i (1 - x)^(n - i)`.
pub fn bernstein_basis(i: usize, degree: usize, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("bernstein argument {x} outside [0, 1]")));
    }
    if i > degree {
        return Err(Error::Domain(format!("basis index {i} > degree {degree}")));
    }
    Ok(binomial(degree, i) * x.powi(i as i32) * (1.0 - x).powi((degree - i) as i32))
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Evaluates `sum_i c_i b_{i,n}(x)` by de Casteljau's scheme, which returns
/// exactly 1 for all-ones coefficients.
fn de_casteljau(coefficients: &[f64], x: f64, buf: &mut Vec<f64>) -> f64 {
    buf.clear();
    buf.extend_from_slice(coefficients);
    let n = buf.len();
    for level in 1..n {
        for k in 0..n - level {
            buf[k] = (1.0 - x) * buf[k] + x * buf[k + 1];
        }
    }
    buf[0]
}

/// Weights at `n_points` uniformly spaced positions spanning `[0, 1]`.
pub fn evaluate_weights(coefficients: &[f64], n_points: usize) -> Result<Vec<f64>> {
    if n_points < 2 {
        return Err(Error::Domain(format!("weight vector length {n_points} < 2")));
    }
    if coefficients.is_empty() {
        return Err(Error::Config("empty coefficient vector".into()));
    }
    let mut buf = Vec::with_capacity(coefficients.len());
    Ok((0..n_points)
        .map(|k| {
            let x = k as f64 / (n_points - 1) as f64;
            de_casteljau(coefficients, x, &mut buf)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialWeights {
    coefficients: Vec<f64>,
}

impl SpatialWeights {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config(format!("bad coefficients {coefficients:?}")));
        }
        Ok(Self { coefficients })
    }

    pub fn uniform(degree: usize) -> Self {
        Self {
            coefficients: vec![1.0; degree + 1],
        }
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn evaluate(&self, n_points: usize) -> Result<Vec<f64>> {
        evaluate_weights(&self.coefficients, n_points)
    }
}

/// On-disk weights: `{"degree": int, "coefficients": [...], "n_points": int}`.
/// The weight vector itself is never stored; it is recomputed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub degree: usize,
    pub coefficients: Vec<f64>,
    pub n_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl WeightsFile {
    pub fn new(weights: &SpatialWeights, n_points: usize) -> Self {
        Self {
            degree: weights.degree(),
            coefficients: weights.coefficients.clone(),
            n_points,
            config_hash: None,
        }
    }

    pub fn weights(&self) -> Result<SpatialWeights> {
        if self.coefficients.len() != self.degree + 1 {
            return Err(Error::Dimension {
                expected: self.degree + 1,
                got: self.coefficients.len(),
            });
        }
        SpatialWeights::new(self.coefficients.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    /// The `k` of the top-k objective.
    pub k_objective: usize,
    /// Number of objective evaluations, including the initial `c = 1`.
    pub budget: usize,
    pub seed: u64,
    pub bounds: (f64, f64),
    pub degree: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            k_objective: 1,
            budget: 200,
            seed: 0,
            bounds: (0.0, 2.0),
            degree: DEFAULT_DEGREE,
        }
    }
}

impl LearnConfig {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bounds;
        if self.budget == 0 {
            return Err(Error::Config("budget must be at least 1".into()));
        }
        if self.k_objective == 0 {
            return Err(Error::Config("k_objective must be at least 1".into()));
        }
        if !(lo <= 1.0 && 1.0 <= hi) {
            return Err(Error::Config(format!("bounds [{lo}, {hi}] exclude the uniform start")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnOutcome {
    pub weights: SpatialWeights,
    pub objective: f64,
    /// Objective at `c = 1`.
    pub baseline: f64,
    pub evaluations: usize,
}

fn distance_to_uniform(c: &[f64]) -> f64 {
    c.iter().map(|v| (v - 1.0) * (v - 1.0)).sum::<f64>().sqrt()
}

struct Incumbent {
    c: Vec<f64>,
    value: f64,
    spread: f64,
}

impl Incumbent {
    /// Higher objective wins; equal objectives prefer the candidate closer to uniform.
    fn offer(&mut self, c: &[f64], value: f64) -> bool {
        let spread = distance_to_uniform(c);
        if value > self.value || (value == self.value && spread < self.spread) {
            self.c = c.to_vec();
            self.value = value;
            self.spread = spread;
            true
        } else {
            false
        }
    }
}

/// Budgeted maximization anchored at the all-ones vector.
///
/// The first evaluation is `c = 1`. About 40% of the remaining budget goes to
/// uniform random draws in the coefficient box; the rest is coordinate-wise
/// pattern search around the incumbent, halving the step after every sweep
/// that finds no improvement. The returned value is never below the start.
pub fn maximize_anchored<F>(cfg: &LearnConfig, mut objective: F) -> Result<LearnOutcome>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    cfg.validate()?;
    let dim = cfg.degree + 1;
    let (lo, hi) = cfg.bounds;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let start = vec![1.0; dim];
    let baseline = objective(&start)?;
    let mut best = Incumbent {
        c: start,
        value: baseline,
        spread: 0.0,
    };
    let mut used = 1;

    let n_random = (cfg.budget - 1) * 2 / 5;
    while used < 1 + n_random {
        let c: Vec<f64> = (0..dim).map(|_| rng.random_range(lo..=hi)).collect();
        let v = objective(&c)?;
        best.offer(&c, v);
        used += 1;
    }

    let mut step = (hi - lo) / 4.0;
    'search: while used < cfg.budget && step > 1e-6 {
        let mut improved = false;
        for k in 0..dim {
            for dir in [-1.0, 1.0] {
                if used >= cfg.budget {
                    break 'search;
                }
                let mut c = best.c.clone();
                c[k] = (c[k] + dir * step).clamp(lo, hi);
                if c[k] == best.c[k] {
                    continue;
                }
                let v = objective(&c)?;
                used += 1;
                if best.offer(&c, v) {
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }

    Ok(LearnOutcome {
        weights: SpatialWeights::new(best.c)?,
        objective: best.value,
        baseline,
        evaluations: used,
    })
}

/// Training data for weight learning: database sequences grouped by
/// individual, and query encounters labelled with their true individual.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub gallery: Vec<(String, Vec<Sequence>)>,
    pub queries: Vec<(String, Vec<Sequence>)>,
}

impl TrainingSet {
    /// Resamples all matrices for alignment at `align.resample_to` columns.
    pub fn prepare(
        database: &[(String, Vec<&CurvatureMatrix>)],
        queries: &[(String, Vec<&CurvatureMatrix>)],
        align: &AlignmentConfig,
    ) -> Result<Self> {
        let aligner = Aligner::new(&AlignmentConfig::new(align.band, align.resample_to))?;
        let prep = |group: &[(String, Vec<&CurvatureMatrix>)]| -> Result<Vec<(String, Vec<Sequence>)>> {
            group
                .iter()
                .map(|(id, ms)| {
                    let seqs = ms.iter().map(|m| aligner.prepare(m)).collect::<Result<_>>()?;
                    Ok((id.clone(), seqs))
                })
                .collect()
        };
        Ok(Self {
            gallery: prep(database)?,
            queries: prep(queries)?,
        })
    }

    /// Fraction of queries whose individual is ranked within the first `k`.
    pub fn top_k(&self, aligner: &Aligner, k: usize) -> Result<f64> {
        let hits = self
            .queries
            .par_iter()
            .map(|(truth, seqs)| Ok(rank_individuals(aligner, seqs, &self.gallery)?.in_top(truth, k)))
            .collect::<Result<Vec<bool>>>()?;
        Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
    }
}

/// Learns Bernstein coefficients that maximize the top-k accuracy of the
/// weighted time-warping ranker on `train`.
pub fn learn_weights(train: &TrainingSet, cfg: &LearnConfig, align: &AlignmentConfig) -> Result<LearnOutcome> {
    if train.queries.is_empty() {
        return Err(Error::EmptyInput("no training queries".into()));
    }
    if train.gallery.is_empty() {
        return Err(Error::EmptyInput("empty training database".into()));
    }
    let k = cfg.k_objective;
    maximize_anchored(cfg, |c| {
        let weighted = AlignmentConfig::new(align.band, align.resample_to)
            .with_weights(SpatialWeights::new(c.to_vec())?);
        train.top_k(&Aligner::new(&weighted)?, k)
    })
}
