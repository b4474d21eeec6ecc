//! Spatially weighted dynamic time warping over curvature columns.
//!
//! Each column of a curvature matrix is a point of a multi-dimensional
//! sequence. The cost of matching column `i` of `A` with column `j` of `B` is
//! `w_i * w_j * |a_i - b_j|_2`, and the alignment cost is the usual
//! three-step recursion
//!
//! ```text
//! c(0, 0) = d(0, 0)
//! c(i, j) = d(i, j) + min(c(i-1, j), c(i, j-1), c(i-1, j-1))
//! ```
//!
//! restricted to the Sakoe-Chiba band `|i - j| <= band`. Cells outside the band
//! are `+inf`. No normalization by path length is applied.

use serde::{Deserialize, Serialize};

use crate::curvature::{resample_curvature, CurvatureMatrix};
use crate::error::{Error, Result};
use crate::ranking::RankedList;
use crate::weights::SpatialWeights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentConfig {
    /// Sakoe-Chiba half-width in resampled columns; `None` is unconstrained.
    pub band: Option<usize>,
    pub weights: Option<SpatialWeights>,
    pub resample_to: usize,
}

impl AlignmentConfig {
    pub fn new(band: Option<usize>, resample_to: usize) -> Self {
        Self {
            band,
            weights: None,
            resample_to,
        }
    }

    pub fn with_weights(mut self, weights: SpatialWeights) -> Self {
        self.weights = Some(weights);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub cost: f64,
    pub path: Option<Vec<(usize, usize)>>,
}

/// A curvature matrix resampled for alignment, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    dim: usize,
    cols: Vec<f64>,
}

impl Sequence {
    pub fn from_matrix(m: &CurvatureMatrix) -> Self {
        Self {
            dim: m.n_scales(),
            cols: m.to_columns(),
        }
    }

    /// Columns given directly, each of length `dim`.
    pub fn from_columns(dim: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let mut cols = Vec::with_capacity(dim * columns.len());
        for c in columns {
            if c.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: c.len(),
                });
            }
            cols.extend_from_slice(c);
        }
        Ok(Self { dim, cols })
    }

    pub fn len(&self) -> usize {
        self.cols.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn col(&self, i: usize) -> &[f64] {
        &self.cols[i * self.dim..(i + 1) * self.dim]
    }
}

/// `wi * wj * |ci - cj|_2`.
pub fn point_distance(ci: &[f64], cj: &[f64], wi: f64, wj: f64) -> Result<f64> {
    if ci.len() != cj.len() {
        return Err(Error::Dimension {
            expected: ci.len(),
            got: cj.len(),
        });
    }
    if wi < 0.0 || wj < 0.0 {
        return Err(Error::Domain(format!("negative weight ({wi}, {wj})")));
    }
    Ok(weighted_distance(ci, cj, wi, wj))
}

#[inline]
fn weighted_distance(ci: &[f64], cj: &[f64], wi: f64, wj: f64) -> f64 {
    let mut s = 0.0;
    for (a, b) in ci.iter().zip(cj) {
        let d = a - b;
        s += d * d;
    }
    wi * wj * s.sqrt()
}

/// Alignment settings with the weight vector already evaluated.
#[derive(Debug, Clone)]
pub struct Aligner {
    band: Option<usize>,
    resample_to: usize,
    weights: Option<Vec<f64>>,
}

impl Aligner {
    pub fn new(cfg: &AlignmentConfig) -> Result<Self> {
        if cfg.resample_to < 2 {
            return Err(Error::Config(format!("resample_to {} < 2", cfg.resample_to)));
        }
        let weights = match &cfg.weights {
            Some(w) => Some(w.evaluate(cfg.resample_to)?),
            None => None,
        };
        Ok(Self {
            band: cfg.band,
            resample_to: cfg.resample_to,
            weights,
        })
    }

    pub fn prepare(&self, m: &CurvatureMatrix) -> Result<Sequence> {
        Ok(Sequence::from_matrix(&resample_curvature(m, self.resample_to)?))
    }

    /// Cost between two prepared sequences.
    pub fn cost(&self, a: &Sequence, b: &Sequence) -> Result<f64> {
        if a.dim != b.dim {
            return Err(Error::Dimension {
                expected: a.dim,
                got: b.dim,
            });
        }
        let w = self.weights.as_deref();
        Ok(dtw_cost(a, b, self.band, w, w))
    }
}

/// Rolling two-row DP; only cells inside the band are touched.
///
/// Returns `+inf` when the band admits no path. Weight vectors, when given,
/// must be as long as their sequences.
pub fn dtw_cost(
    a: &Sequence,
    b: &Sequence,
    band: Option<usize>,
    wa: Option<&[f64]>,
    wb: Option<&[f64]>,
) -> f64 {
    let (na, nb) = (a.len(), b.len());
    if na == 0 || nb == 0 {
        return f64::INFINITY;
    }
    let band = band.unwrap_or(usize::MAX);
    let wa_at = |i: usize| wa.map_or(1.0, |w| w[i]);
    let wb_at = |j: usize| wb.map_or(1.0, |w| w[j]);
    let range = |i: usize| -> (usize, usize) {
        let lo = i.saturating_sub(band);
        let hi = i.saturating_add(band).min(nb - 1);
        (lo, hi)
    };

    let mut prev = vec![f64::INFINITY; nb];
    let mut cur = vec![f64::INFINITY; nb];
    let (mut plo, mut phi) = (1, 0); // empty range for the virtual row -1

    for i in 0..na {
        let (lo, hi) = range(i);
        if lo > hi {
            return f64::INFINITY;
        }
        let wi = wa_at(i);
        let ai = a.col(i);
        for j in lo..=hi {
            let d = weighted_distance(ai, b.col(j), wi, wb_at(j));
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let up = if j >= plo && j <= phi { prev[j] } else { f64::INFINITY };
                let left = if j > lo { cur[j - 1] } else { f64::INFINITY };
                let diag = if j > plo && j - 1 <= phi {
                    prev[j - 1]
                } else {
                    f64::INFINITY
                };
                up.min(left).min(diag)
            };
            cur[j] = d + best;
        }
        std::mem::swap(&mut prev, &mut cur);
        plo = lo;
        phi = hi;
    }
    if nb > plo && nb - 1 <= phi {
        prev[nb - 1]
    } else {
        f64::INFINITY
    }
}

/// Full-matrix DP with backtracking. Ties prefer the diagonal step.
pub fn dtw_path(
    a: &Sequence,
    b: &Sequence,
    band: Option<usize>,
    wa: Option<&[f64]>,
    wb: Option<&[f64]>,
) -> AlignmentResult {
    let (na, nb) = (a.len(), b.len());
    let band = band.unwrap_or(usize::MAX);
    let mut c = vec![f64::INFINITY; na * nb];
    let at = |i: usize, j: usize| i * nb + j;
    for i in 0..na {
        let lo = i.saturating_sub(band);
        let hi = i.saturating_add(band).min(nb.saturating_sub(1));
        for j in lo..=hi.min(nb - 1) {
            let d = weighted_distance(
                a.col(i),
                b.col(j),
                wa.map_or(1.0, |w| w[i]),
                wb.map_or(1.0, |w| w[j]),
            );
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let up = if i > 0 { c[at(i - 1, j)] } else { f64::INFINITY };
                let left = if j > 0 { c[at(i, j - 1)] } else { f64::INFINITY };
                let diag = if i > 0 && j > 0 { c[at(i - 1, j - 1)] } else { f64::INFINITY };
                up.min(left).min(diag)
            };
            c[at(i, j)] = d + best;
        }
    }
    let cost = c[at(na - 1, nb - 1)];
    if !cost.is_finite() {
        return AlignmentResult { cost, path: None };
    }
    let mut path = vec![(na - 1, nb - 1)];
    let (mut i, mut j) = (na - 1, nb - 1);
    while i > 0 || j > 0 {
        let diag = if i > 0 && j > 0 { c[at(i - 1, j - 1)] } else { f64::INFINITY };
        let up = if i > 0 { c[at(i - 1, j)] } else { f64::INFINITY };
        let left = if j > 0 { c[at(i, j - 1)] } else { f64::INFINITY };
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        path.push((i, j));
    }
    path.reverse();
    AlignmentResult {
        cost,
        path: Some(path),
    }
}

fn check_scales(a: &CurvatureMatrix, b: &CurvatureMatrix) -> Result<()> {
    if a.n_scales() != b.n_scales() {
        return Err(Error::Dimension {
            expected: a.n_scales(),
            got: b.n_scales(),
        });
    }
    Ok(())
}

/// Alignment cost of two curvature matrices after resampling both to
/// `cfg.resample_to` columns.
pub fn align(a: &CurvatureMatrix, b: &CurvatureMatrix, cfg: &AlignmentConfig) -> Result<AlignmentResult> {
    check_scales(a, b)?;
    let aligner = Aligner::new(cfg)?;
    let (sa, sb) = (aligner.prepare(a)?, aligner.prepare(b)?);
    Ok(AlignmentResult {
        cost: aligner.cost(&sa, &sb)?,
        path: None,
    })
}

/// As [`align`], also recovering the optimal warping path.
pub fn align_with_path(
    a: &CurvatureMatrix,
    b: &CurvatureMatrix,
    cfg: &AlignmentConfig,
) -> Result<AlignmentResult> {
    check_scales(a, b)?;
    let aligner = Aligner::new(cfg)?;
    let (sa, sb) = (aligner.prepare(a)?, aligner.prepare(b)?);
    let w = aligner.weights.as_deref();
    Ok(dtw_path(&sa, &sb, aligner.band, w, w))
}

/// Minimum alignment cost over all (query image, database image) pairs.
pub fn encounter_score_dtw(aligner: &Aligner, query: &[Sequence], database: &[Sequence]) -> Result<f64> {
    if query.is_empty() || database.is_empty() {
        return Err(Error::EmptyInput("encounter score needs images on both sides".into()));
    }
    let mut best = f64::INFINITY;
    for q in query {
        for d in database {
            best = best.min(aligner.cost(q, d)?);
        }
    }
    Ok(best)
}

/// Ranks gallery individuals by their encounter score against `query`.
pub fn rank_individuals(
    aligner: &Aligner,
    query: &[Sequence],
    gallery: &[(String, Vec<Sequence>)],
) -> Result<RankedList> {
    let scores = gallery
        .iter()
        .map(|(id, seqs)| Ok((id.clone(), encounter_score_dtw(aligner, query, seqs)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RankedList::from_scores(scores))
}
