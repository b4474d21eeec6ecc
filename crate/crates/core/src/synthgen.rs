//! Synthetic labelled trailing edges.
//!
//! An individual is a cubic Bézier arc plus a set of raised-cosine bumps
//! displaced along the arc normal. Rendering applies, in order: endpoint
//! noise, encounter occlusion, rotation, anisotropic scale, truncation and
//! point jitter. Every stage is skipped when its magnitude is zero, so a
//! zero-distortion render reproduces the sampled template bit for bit.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::contour::{arc_length, dist, resample_points, Contour, EncounterDatabase, Point};
use crate::error::{Error, Result};

pub const TEMPLATE_POINTS: usize = 600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// Bulges outward.
    Nick,
    /// Cuts into the fin.
    Notch,
}

/// Position, depth and width are fractions of the template's arc length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mark {
    pub position: f64,
    pub depth: f64,
    pub width: f64,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualTemplate {
    pub id: String,
    pub control: [Point; 4],
    pub marks: Vec<Mark>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub individuals: usize,
    pub marks: usize,
    /// Range of mark centres.
    pub position: (f64, f64),
    pub depth: (f64, f64),
    pub width: (f64, f64),
    /// Smallest allowed L1 distance between two individuals' sorted mark positions.
    pub min_separation: f64,
    /// Half-range of the random offsets added to the base control points, in pixels.
    pub shape_jitter: f64,
    pub seed: u64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            individuals: 50,
            marks: 3,
            position: (0.1, 0.9),
            depth: (0.012, 0.03),
            width: (0.03, 0.07),
            min_separation: 0.1,
            shape_jitter: 8.0,
            seed: 0,
        }
    }
}

const BASE_CONTROL: [Point; 4] = [[0.0, 0.0], [45.0, 90.0], [30.0, 200.0], [95.0, 300.0]];

fn bezier(c: &[Point; 4], t: f64) -> Point {
    let u = 1.0 - t;
    let b = [u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t];
    [
        b.iter().zip(c).map(|(w, p)| w * p[0]).sum(),
        b.iter().zip(c).map(|(w, p)| w * p[1]).sum(),
    ]
}

impl IndividualTemplate {
    pub fn validate(&self) -> Result<()> {
        let widest = self.marks.iter().map(|m| m.width).fold(0.0, f64::max);
        for (i, m) in self.marks.iter().enumerate() {
            for (what, v) in [("depth", m.depth), ("width", m.width)] {
                if !(v > 0.0 && v <= 0.2) {
                    return Err(Error::Generation(format!("mark {what} {v} outside (0, 0.2]")));
                }
            }
            if !(m.position > 0.0 && m.position < 1.0) {
                return Err(Error::Generation(format!("mark position {} outside (0, 1)", m.position)));
            }
            if self.marks[..i].iter().any(|o| (o.position - m.position).abs() < widest) {
                return Err(Error::Generation("marks closer than the widest mark".into()));
            }
        }
        Ok(())
    }

    /// The undistorted edge, uniformly resampled to `TEMPLATE_POINTS` points.
    pub fn sample(&self) -> Result<Vec<Point>> {
        self.validate()?;
        let dense: Vec<Point> = (0..=4 * TEMPLATE_POINTS)
            .map(|i| bezier(&self.control, i as f64 / (4 * TEMPLATE_POINTS) as f64))
            .collect();
        let base = resample_points(&dense, TEMPLATE_POINTS)?;
        let length = arc_length(&base);
        let n = base.len();
        let marked: Vec<Point> = (0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                let (a, b) = (base[i.saturating_sub(1)], base[(i + 1).min(n - 1)]);
                let (tx, ty) = (b[0] - a[0], b[1] - a[1]);
                let tl = tx.hypot(ty);
                let normal = [-ty / tl, tx / tl];
                let offset: f64 = self
                    .marks
                    .iter()
                    .map(|m| {
                        let half = 0.5 * m.width;
                        let d = (s - m.position).abs();
                        if d >= half {
                            return 0.0;
                        }
                        let sign = match m.polarity {
                            Polarity::Nick => 1.0,
                            Polarity::Notch => -1.0,
                        };
                        sign * m.depth * length * 0.5 * (1.0 + (PI * d / half).cos())
                    })
                    .sum();
                [base[i][0] + offset * normal[0], base[i][1] + offset * normal[1]]
            })
            .collect();
        Ok(marked)
    }
}

fn positions(t: &IndividualTemplate) -> Vec<f64> {
    let mut p: Vec<f64> = t.marks.iter().map(|m| m.position).collect();
    p.sort_by(f64::total_cmp);
    p
}

fn separation(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn generate_population(n_individuals: usize, marks: usize, seed: u64) -> Result<Vec<IndividualTemplate>> {
    generate_population_with(&PopulationConfig {
        individuals: n_individuals,
        marks,
        seed,
        ..PopulationConfig::default()
    })
}

pub fn generate_population_with(cfg: &PopulationConfig) -> Result<Vec<IndividualTemplate>> {
    if cfg.individuals == 0 {
        return Err(Error::Generation("need at least one individual".into()));
    }
    for (lo, hi) in [cfg.depth, cfg.width] {
        if !(lo > 0.0 && lo <= hi && hi <= 0.2) {
            return Err(Error::Generation(format!("range ({lo}, {hi}) outside (0, 0.2]")));
        }
    }
    let (lo, hi) = cfg.position;
    if !(lo > 0.0 && lo < hi && hi < 1.0) {
        return Err(Error::Generation(format!("position range ({lo}, {hi}) outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let width_digits = cfg.individuals.to_string().len().max(3);
    let mut out: Vec<IndividualTemplate> = Vec::with_capacity(cfg.individuals);
    for k in 0..cfg.individuals {
        let mut placed = None;
        for _ in 0..10_000 {
            let widths: Vec<f64> = (0..cfg.marks).map(|_| rng.random_range(cfg.width.0..=cfg.width.1)).collect();
            let widest = widths.iter().copied().fold(0.0, f64::max);
            let mut pos: Vec<f64> = Vec::with_capacity(cfg.marks);
            for _ in 0..cfg.marks {
                for _ in 0..200 {
                    let p = rng.random_range(cfg.position.0..cfg.position.1);
                    if pos.iter().all(|q| (q - p).abs() >= widest) {
                        pos.push(p);
                        break;
                    }
                }
            }
            if pos.len() < cfg.marks {
                continue;
            }
            let mut sorted = pos.clone();
            sorted.sort_by(f64::total_cmp);
            if out.iter().any(|t| separation(&positions(t), &sorted) < cfg.min_separation) {
                continue;
            }
            let marks = pos
                .iter()
                .zip(&widths)
                .map(|(&position, &width)| Mark {
                    position,
                    depth: rng.random_range(cfg.depth.0..=cfg.depth.1),
                    width,
                    polarity: if rng.random_bool(0.5) { Polarity::Nick } else { Polarity::Notch },
                })
                .collect();
            placed = Some(marks);
            break;
        }
        let Some(marks) = placed else {
            return Err(Error::Generation(format!(
                "could not place {} separated marks for individual {k}",
                cfg.marks
            )));
        };
        let mut control = BASE_CONTROL;
        if cfg.shape_jitter > 0.0 {
            for p in control.iter_mut().skip(1) {
                p[0] += rng.random_range(-cfg.shape_jitter..=cfg.shape_jitter);
                p[1] += rng.random_range(-cfg.shape_jitter..=cfg.shape_jitter);
            }
        }
        out.push(IndividualTemplate {
            id: format!("ind{k:0width_digits$}"),
            control,
            marks,
        });
    }
    Ok(out)
}

/// Ranges are symmetric half-widths unless stated otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionConfig {
    /// Degrees.
    pub rotation: f64,
    /// Each axis is scaled by an independent draw from `1 ± scale`.
    pub scale: f64,
    /// Fraction of arc length removed from the base end, drawn from `[lo, hi]`.
    pub truncation: (f64, f64),
    /// Gaussian sigma in pixels, per coordinate.
    pub jitter: f64,
    /// Amplitude in pixels of smooth random deformation confined to each end.
    pub endpoint_noise: f64,
    /// Fraction of arc length over which endpoint noise decays to zero.
    pub endpoint_span: f64,
    /// Per-encounter occlusion: up to this fraction of arc length is removed
    /// from one randomly chosen end, shared by all images of the encounter.
    pub occlusion: f64,
}

impl DistortionConfig {
    pub fn none() -> Self {
        Self {
            rotation: 0.0,
            scale: 0.0,
            truncation: (0.0, 0.0),
            jitter: 0.0,
            endpoint_noise: 0.0,
            endpoint_span: 0.2,
            occlusion: 0.0,
        }
    }

    pub fn mild() -> Self {
        Self {
            rotation: 10.0,
            scale: 0.05,
            truncation: (0.0, 0.05),
            jitter: 0.3,
            ..Self::none()
        }
    }

    pub fn noisy_endpoints() -> Self {
        Self {
            endpoint_noise: 25.0,
            endpoint_span: 0.25,
            ..Self::mild()
        }
    }

    pub fn occluded() -> Self {
        Self {
            occlusion: 0.25,
            ..Self::mild()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.truncation;
        let ok = [self.rotation, self.scale, self.jitter, self.endpoint_noise, self.occlusion, lo]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
            && lo <= hi
            && hi < 0.3
            && self.scale < 1.0
            && self.occlusion < 0.5
            && self.endpoint_span > 0.0
            && self.endpoint_span <= 0.5;
        if ok {
            Ok(())
        } else {
            Err(Error::Generation(format!("invalid distortion config {self:?}")))
        }
    }
}

/// Cuts `start` and `end` fractions of arc length off a polyline.
fn clip(points: &[Point], start: f64, end: f64) -> Result<Vec<Point>> {
    let total = arc_length(points);
    let (a, b) = (start * total, (1.0 - end) * total);
    let mut out = Vec::new();
    let mut acc = 0.0;
    for w in points.windows(2) {
        let seg = dist(w[0], w[1]);
        let (s0, s1) = (acc, acc + seg);
        let at = |s: f64| {
            let t = if seg > 0.0 { (s - s0) / seg } else { 0.0 };
            [w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])]
        };
        if s1 >= a && s0 <= b {
            if out.is_empty() {
                out.push(at(a.max(s0)));
            }
            out.push(at(b.min(s1)));
        }
        acc = s1;
    }
    resample_points(&out, points.len())
}

fn endpoint_noise(points: &mut [Point], amplitude: f64, span: f64, rng: &mut ChaCha8Rng) {
    let n = points.len();
    for end in 0..2 {
        let waves: Vec<(f64, f64, f64)> = (0..3)
            .map(|k| {
                (
                    rng.random_range(-1.0..=1.0) / (k + 1) as f64,
                    (k + 1) as f64 * rng.random_range(0.5..1.5),
                    rng.random_range(0.0..2.0 * PI),
                )
            })
            .collect();
        for (i, p) in points.iter_mut().enumerate() {
            let s = i as f64 / (n - 1) as f64;
            let s = if end == 0 { s } else { 1.0 - s };
            if s >= span {
                continue;
            }
            let u = s / span;
            let envelope = (1.0 - u) * (1.0 - u);
            let f = |phase_shift: f64| -> f64 {
                waves
                    .iter()
                    .map(|(a, freq, ph)| a * (2.0 * PI * freq * u + ph + phase_shift).sin())
                    .sum()
            };
            p[0] += amplitude * envelope * f(0.0);
            p[1] += amplitude * envelope * f(PI / 3.0);
        }
    }
}

/// One encounter of `images` independently distorted renders.
pub fn render_encounter(
    t: &IndividualTemplate,
    d: &DistortionConfig,
    encounter: &str,
    images: usize,
    seed: u64,
) -> Result<Vec<Contour>> {
    if images == 0 {
        return Err(Error::Generation("need at least one image".into()));
    }
    d.validate()?;
    let template = t.sample()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let occluded = if d.occlusion > 0.0 {
        let f = rng.random_range(0.0..=d.occlusion);
        if rng.random_bool(0.5) {
            (f, 0.0)
        } else {
            (0.0, f)
        }
    } else {
        (0.0, 0.0)
    };
    let jitter = Normal::new(0.0, d.jitter.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let width = images.to_string().len().max(2);
    (0..images)
        .map(|k| {
            let mut p = template.clone();
            if d.endpoint_noise > 0.0 {
                endpoint_noise(&mut p, d.endpoint_noise, d.endpoint_span, &mut rng);
            }
            if occluded != (0.0, 0.0) {
                p = clip(&p, occluded.0, occluded.1)?;
            }
            if d.rotation > 0.0 {
                let a = rng.random_range(-d.rotation..=d.rotation).to_radians();
                let (s, c) = a.sin_cos();
                p.iter_mut().for_each(|q| *q = [c * q[0] - s * q[1], s * q[0] + c * q[1]]);
            }
            if d.scale > 0.0 {
                let sx = 1.0 + rng.random_range(-d.scale..=d.scale);
                let sy = 1.0 + rng.random_range(-d.scale..=d.scale);
                p.iter_mut().for_each(|q| *q = [sx * q[0], sy * q[1]]);
            }
            if d.truncation.1 > 0.0 {
                let f = rng.random_range(d.truncation.0..=d.truncation.1);
                if f > 0.0 {
                    p = clip(&p, 0.0, f)?;
                }
            }
            if d.jitter > 0.0 {
                p.iter_mut().for_each(|q| {
                    q[0] += jitter.sample(&mut rng);
                    q[1] += jitter.sample(&mut rng);
                });
            }
            Contour::new(t.id.clone(), encounter.to_string(), format!("img{k:0width$}"), p)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub population: PopulationConfig,
    pub encounters: usize,
    pub images: usize,
    pub distortion: DistortionConfig,
    pub seed: u64,
}

impl DatasetConfig {
    /// 50 individuals, 3 marks, 3 encounters of 2 images.
    pub fn benchmark(distortion: DistortionConfig, seed: u64) -> Self {
        Self {
            population: PopulationConfig {
                seed,
                ..PopulationConfig::default()
            },
            encounters: 3,
            images: 2,
            distortion,
            seed,
        }
    }

    pub fn mild(seed: u64) -> Self {
        Self::benchmark(DistortionConfig::mild(), seed)
    }

    /// Marks confined to the middle of the edge, strong noise on both ends.
    pub fn noisy_endpoints(seed: u64) -> Self {
        let mut cfg = Self::benchmark(DistortionConfig::noisy_endpoints(), seed);
        cfg.population.position = (0.3, 0.7);
        cfg.population.min_separation = 0.04;
        cfg
    }

    /// Five encounters per individual, each missing part of one end.
    pub fn occlusion(seed: u64) -> Self {
        let mut cfg = Self::benchmark(DistortionConfig::occluded(), seed);
        cfg.encounters = 5;
        cfg
    }
}

pub fn generate_dataset(cfg: &DatasetConfig) -> Result<EncounterDatabase> {
    if cfg.encounters == 0 {
        return Err(Error::Generation("need at least one encounter".into()));
    }
    let population = generate_population_with(&cfg.population)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5e_ed0f_e4c0);
    let width = cfg.encounters.to_string().len().max(2);
    let mut db = EncounterDatabase::new();
    for t in &population {
        for e in 0..cfg.encounters {
            let seed = rng.random();
            for c in render_encounter(t, &cfg.distortion, &format!("enc{e:0width$}"), cfg.images, seed)? {
                db.insert(c)?;
            }
        }
    }
    Ok(db)
}
