//! Keypoints at curvature extrema and descriptors over keypoint-pair subsections.
//!
//! Per scale, keypoints are the strongest interior local extrema of the
//! curvature row (strength is the deviation from the straight-line value
//! `0.5`, both polarities) plus the two end points. Every keypoint pair
//! `a < b` yields one descriptor: the row slice `[a, b]` linearly resampled to
//! a fixed dimension and scaled to unit Euclidean norm.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::contour::ImageKey;
use crate::curvature::{resample_row, CurvatureMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_KEYPOINTS: usize = 32;
pub const DEFAULT_DIM: usize = 32;

/// Sorted keypoint indices for each scale, always including both ends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeypointSet {
    pub per_scale: Vec<Vec<usize>>,
}

impl KeypointSet {
    /// Number of keypoint pairs summed over scales.
    pub fn pair_count(&self) -> usize {
        self.per_scale.iter().map(|k| k.len() * k.len().saturating_sub(1) / 2).sum()
    }
}

/// Interior local extrema. A plateau counts once, at its leftmost index, when
/// both of its outside neighbours lie on the same side of it.
pub fn local_extrema(row: &[f64]) -> Vec<usize> {
    let n = row.len();
    let mut out = Vec::new();
    let mut s = 1;
    while s + 1 < n {
        let v = row[s];
        let mut e = s;
        while e + 1 < n && row[e + 1] == v {
            e += 1;
        }
        if e + 1 < n {
            let (l, r) = (row[s - 1], row[e + 1]);
            if (l < v && r < v) || (l > v && r > v) {
                out.push(s);
            }
        }
        s = e + 1;
    }
    out
}

pub fn extract_keypoints(c: &CurvatureMatrix, n_kp: usize) -> Result<KeypointSet> {
    if n_kp < 3 {
        return Err(Error::Config(format!("keypoint count {n_kp} < 3")));
    }
    let n = c.n_points();
    if n < 3 {
        return Err(Error::Degenerate(format!("{n} curvature columns, need at least 3")));
    }
    let per_scale = c
        .rows()
        .map(|row| {
            let mut ext = local_extrema(row);
            ext.sort_by(|&a, &b| {
                let (da, db) = ((row[a] - 0.5).abs(), (row[b] - 0.5).abs());
                db.total_cmp(&da).then(a.cmp(&b))
            });
            ext.truncate(n_kp - 2);
            ext.push(0);
            ext.push(n - 1);
            ext.sort_unstable();
            ext
        })
        .collect();
    Ok(KeypointSet { per_scale })
}

/// Where a descriptor came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub scale: usize,
    pub start: usize,
    pub end: usize,
    /// False for the all-zero sentinel emitted in place of a zero-norm slice.
    pub indexable: bool,
}

/// All descriptors of one image, packed row-major with `dim` values each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorSet {
    pub key: ImageKey,
    pub dim: usize,
    pub spans: Vec<Span>,
    pub vectors: Vec<f64>,
}

impl DescriptorSet {
    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// `(span, vector)` pairs of indexable descriptors.
    pub fn indexable(&self) -> impl Iterator<Item = (&Span, &[f64])> {
        self.spans
            .iter()
            .enumerate()
            .filter(|(_, s)| s.indexable)
            .map(|(i, s)| (s, self.vector(i)))
    }

    pub fn indexable_count(&self) -> usize {
        self.spans.iter().filter(|s| s.indexable).count()
    }

    /// One JSON object per descriptor:
    /// `{"provenance": {individual, encounter, image, scale, start, end, indexable}, "vector": [...]}`.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        #[derive(Serialize)]
        struct Provenance<'a> {
            individual: &'a str,
            encounter: &'a str,
            image: &'a str,
            #[serde(flatten)]
            span: Span,
        }
        #[derive(Serialize)]
        struct Line<'a> {
            provenance: Provenance<'a>,
            vector: &'a [f64],
        }
        for (i, span) in self.spans.iter().enumerate() {
            let line = Line {
                provenance: Provenance {
                    individual: &self.key.individual,
                    encounter: &self.key.encounter,
                    image: &self.key.image,
                    span: *span,
                },
                vector: self.vector(i),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn extract_descriptors(
    c: &CurvatureMatrix,
    kp: &KeypointSet,
    dim: usize,
    key: ImageKey,
) -> Result<DescriptorSet> {
    if dim < 2 {
        return Err(Error::Config(format!("descriptor dimension {dim} < 2")));
    }
    if kp.per_scale.len() != c.n_scales() {
        return Err(Error::Dimension {
            expected: c.n_scales(),
            got: kp.per_scale.len(),
        });
    }
    let total = kp.pair_count();
    let mut spans = Vec::with_capacity(total);
    let mut vectors = Vec::with_capacity(total * dim);
    for (scale, (row, points)) in c.rows().zip(&kp.per_scale).enumerate() {
        for (ia, &a) in points.iter().enumerate() {
            for &b in &points[ia + 1..] {
                let start = vectors.len();
                vectors.extend(resample_row(&row[a..=b], dim));
                let v = &mut vectors[start..];
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                let indexable = norm > 0.0;
                if indexable {
                    v.iter_mut().for_each(|x| *x /= norm);
                } else {
                    v.iter_mut().for_each(|x| *x = 0.0);
                }
                spans.push(Span {
                    scale,
                    start: a,
                    end: b,
                    indexable,
                });
            }
        }
    }
    Ok(DescriptorSet {
        key,
        dim,
        spans,
        vectors,
    })
}
