//! Multi-scale integral curvature.
//!
//! For a point `p` on the trailing edge and a radius `r`, the local curve is
//! the maximal contiguous run of contour points around `p` that lies inside
//! the closed disk of radius `r`, extended by the two places where the
//! polyline leaves the disk. The run is rotated about `p` so that its two
//! ends sit on a horizontal line, clipped to the square of side `2r` centred
//! on `p`, and integrated against the bottom side of the square with the
//! trapezoidal rule. Outside the run's horizontal span the curve is taken to
//! continue flat at the height of the end chord. The curvature value is the
//! enclosed area divided by `(2r)^2`, so a straight line gives exactly `0.5`.
//! With "up" taken as the left of the tracing direction, the tip of a
//! protrusion scores below `0.5` and the floor of an indentation above it.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::binio;
use crate::contour::{extent, Axis, Contour, Point};
use crate::error::{Error, Result};

/// Relative circle radii, as fractions of the contour's extent along `axis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSet {
    relative: Vec<f64>,
    axis: Axis,
}

impl ScaleSet {
    pub fn new(relative: Vec<f64>, axis: Axis) -> Result<Self> {
        if relative.is_empty() {
            return Err(Error::Config("scale set is empty".into()));
        }
        if relative.iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
            return Err(Error::Config(format!("scales must lie in (0, 1]: {relative:?}")));
        }
        if relative.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("scales must be strictly increasing: {relative:?}")));
        }
        Ok(Self { relative, axis })
    }

    pub fn relative(&self) -> &[f64] {
        &self.relative
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn len(&self) -> usize {
        self.relative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relative.is_empty()
    }
}

/// `m x n` curvature values, one row per scale and one column per contour point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureMatrix {
    scales: ScaleSet,
    n_points: usize,
    /// Row-major.
    values: Vec<f64>,
}

impl CurvatureMatrix {
    pub fn from_rows(scales: ScaleSet, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != scales.len() {
            return Err(Error::Dimension {
                expected: scales.len(),
                got: rows.len(),
            });
        }
        let n_points = rows[0].len();
        let mut values = Vec::with_capacity(n_points * rows.len());
        for row in rows {
            if row.len() != n_points {
                return Err(Error::Dimension {
                    expected: n_points,
                    got: row.len(),
                });
            }
            values.extend(row);
        }
        Self::from_values(scales, n_points, values)
    }

    fn from_values(scales: ScaleSet, n_points: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_points * scales.len() {
            return Err(Error::Dimension {
                expected: n_points * scales.len(),
                got: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("curvature value {v} outside [0, 1]")));
        }
        Ok(Self {
            scales,
            n_points,
            values,
        })
    }

    pub fn scales(&self) -> &ScaleSet {
        &self.scales
    }

    pub fn n_scales(&self) -> usize {
        self.scales.len()
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_points..(k + 1) * self.n_points]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_points)
    }

    pub fn get(&self, scale: usize, point: usize) -> f64 {
        self.values[scale * self.n_points + point]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_scales()).map(|k| self.get(k, j)).collect()
    }

    /// Column-major copy: column `j` occupies `[j*m, (j+1)*m)`.
    pub fn to_columns(&self) -> Vec<f64> {
        let m = self.n_scales();
        let mut out = vec![0.0; self.values.len()];
        for k in 0..m {
            for (j, v) in self.row(k).iter().enumerate() {
                out[j * m + k] = *v;
            }
        }
        out
    }

    /// Binary layout, little endian:
    /// `u32 m, u32 n, u8 axis (0 height, 1 width), f64 x m scales, f64 x m*n values (row-major)`.
    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        binio::write_u32(w, binio::len_u32(self.n_scales())?)?;
        binio::write_u32(w, binio::len_u32(self.n_points)?)?;
        binio::write_u8(
            w,
            match self.scales.axis {
                Axis::Height => 0,
                Axis::Width => 1,
            },
        )?;
        binio::write_f64s(w, &self.scales.relative)?;
        binio::write_f64s(w, &self.values)
    }

    pub fn read_binary<R: Read>(r: &mut R) -> Result<Self> {
        let m = binio::read_u32(r)? as usize;
        let n = binio::read_u32(r)? as usize;
        let axis = match binio::read_u8(r)? {
            0 => Axis::Height,
            1 => Axis::Width,
            other => return Err(Error::Format(format!("bad axis tag {other}"))),
        };
        let scales = ScaleSet::new(binio::read_f64s(r, m)?, axis)?;
        let values = binio::read_f64s(r, m * n)?;
        Self::from_values(scales, n, values)
    }
}

/// Integral curvature of `points[i]` at pixel radius `r`.
///
/// Returns `0.5` when fewer than two contour points fall in the run.
pub fn integral_curvature_at(points: &[Point], i: usize, r: f64) -> f64 {
    let mut scratch = Vec::new();
    curvature_with_scratch(points, i, r, &mut scratch)
}

fn curvature_with_scratch(points: &[Point], i: usize, r: f64, run: &mut Vec<Point>) -> f64 {
    let n = points.len();
    let c = points[i];
    let r2 = r * r;
    let rel = |p: Point| [p[0] - c[0], p[1] - c[1]];
    let inside = |p: Point| {
        let d = rel(p);
        d[0] * d[0] + d[1] * d[1] <= r2
    };

    let mut lo = i;
    while lo > 0 && inside(points[lo - 1]) {
        lo -= 1;
    }
    let mut hi = i;
    while hi + 1 < n && inside(points[hi + 1]) {
        hi += 1;
    }
    if hi == lo {
        return 0.5;
    }

    run.clear();
    if lo > 0 {
        run.push(exit_point(rel(points[lo]), rel(points[lo - 1]), r));
    }
    run.extend(points[lo..=hi].iter().map(|&p| rel(p)));
    if hi + 1 < n {
        run.push(exit_point(rel(points[hi]), rel(points[hi + 1]), r));
    }

    let first = run[0];
    let last = run[run.len() - 1];
    let (dx, dy) = (last[0] - first[0], last[1] - first[1]);
    let chord = dx.hypot(dy);
    let (cos, sin) = if chord > 1e-12 * r {
        (dx / chord, dy / chord)
    } else {
        principal_direction(run, points, i)
    };

    // rotate by -theta so the chord points along +x
    for p in run.iter_mut() {
        let (x, y) = (p[0], p[1]);
        *p = [
            (x * cos + y * sin).clamp(-r, r),
            (y * cos - x * sin).clamp(-r, r),
        ];
    }
    let h = 0.5 * (run[0][1] + run[run.len() - 1][1]);

    // signed trapezoids of (y - h) along -r -> run -> +r; the flat
    // extensions at height h contribute nothing
    let mut integral = 0.0;
    let mut prev = [-r, h];
    for &p in run.iter().chain(std::iter::once(&[r, h])) {
        integral += (p[0] - prev[0]) * ((prev[1] - h) + (p[1] - h)) * 0.5;
        prev = p;
    }
    let side = 2.0 * r;
    let area = (h + r) * side + integral;
    (area / (side * side)).clamp(0.0, 1.0)
}

/// Point where the segment from `a` (inside the disk) towards `b` (outside)
/// crosses the circle of radius `r` about the origin.
fn exit_point(a: Point, b: Point, r: f64) -> Point {
    let d = [b[0] - a[0], b[1] - a[1]];
    let dd = d[0] * d[0] + d[1] * d[1];
    let ad = a[0] * d[0] + a[1] * d[1];
    let aa = a[0] * a[0] + a[1] * a[1];
    let disc = (ad * ad - dd * (aa - r * r)).max(0.0);
    let t = ((-ad + disc.sqrt()) / dd).clamp(0.0, 1.0);
    [a[0] + t * d[0], a[1] + t * d[1]]
}

/// Orientation for runs whose ends coincide: the principal axis of the run,
/// signed to agree with the local tracing direction.
fn principal_direction(run: &[Point], points: &[Point], i: usize) -> (f64, f64) {
    let k = run.len() as f64;
    let (mx, my) = run
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
    let (mx, my) = (mx / k, my / k);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in run {
        let (x, y) = (p[0] - mx, p[1] - my);
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let (mut cos, mut sin) = (theta.cos(), theta.sin());
    let a = points[i.saturating_sub(1)];
    let b = points[(i + 1).min(points.len() - 1)];
    if cos * (b[0] - a[0]) + sin * (b[1] - a[1]) < 0.0 {
        cos = -cos;
        sin = -sin;
    }
    (cos, sin)
}

/// Curvature rows at explicit pixel radii.
pub fn curvature_rows(points: &[Point], radii: &[f64]) -> Vec<Vec<f64>> {
    let mut scratch = Vec::new();
    radii
        .iter()
        .map(|&r| {
            (0..points.len())
                .map(|i| curvature_with_scratch(points, i, r, &mut scratch))
                .collect()
        })
        .collect()
}

/// Pixel radii for a contour: relative scale times the extent along the scale axis.
pub fn radii_for(c: &Contour, scales: &ScaleSet) -> Result<Vec<f64>> {
    let e = extent(c.points(), scales.axis())?;
    Ok(scales.relative().iter().map(|s| s * e).collect())
}

pub fn curvature_matrix(c: &Contour, scales: &ScaleSet) -> Result<CurvatureMatrix> {
    let radii = radii_for(c, scales)?;
    CurvatureMatrix::from_rows(scales.clone(), curvature_rows(c.points(), &radii))
}

/// Linear resampling of each row onto `n_out` uniformly spaced index positions.
pub fn resample_curvature(c: &CurvatureMatrix, n_out: usize) -> Result<CurvatureMatrix> {
    if n_out < 2 {
        return Err(Error::Domain(format!("resample count {n_out} < 2")));
    }
    if n_out == c.n_points {
        return Ok(c.clone());
    }
    let mut values = Vec::with_capacity(n_out * c.n_scales());
    for row in c.rows() {
        values.extend(resample_row(row, n_out));
    }
    CurvatureMatrix::from_values(c.scales.clone(), n_out, values)
}

/// Linear resampling of a sequence onto `n_out >= 2` uniform positions.
pub(crate) fn resample_row(row: &[f64], n_out: usize) -> impl Iterator<Item = f64> + '_ {
    let n = row.len();
    (0..n_out).map(move |j| {
        if n == 1 {
            return row[0];
        }
        let pos = j as f64 * (n - 1) as f64 / (n_out - 1) as f64;
        let i0 = (pos.floor() as usize).min(n - 2);
        let t = pos - i0 as f64;
        if t == 0.0 {
            row[i0]
        } else if t == 1.0 {
            row[i0 + 1]
        } else {
            row[i0] + t * (row[i0 + 1] - row[i0])
        }
    })
}

/// Histogram of curvature over scale: one L1-normalized histogram per scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hocs {
    pub histograms: Vec<Vec<f64>>,
}

pub const DEFAULT_HOCS_BINS: usize = 16;

/// Bins are `[k/bins, (k+1)/bins)` with the last one closed at 1.
pub fn hocs_feature(c: &CurvatureMatrix, bins: usize) -> Result<Hocs> {
    if bins < 2 {
        return Err(Error::Domain(format!("hocs bins {bins} < 2")));
    }
    let histograms = c
        .rows()
        .map(|row| {
            let mut h = vec![0.0; bins];
            for &v in row {
                let b = ((v * bins as f64).floor() as usize).min(bins - 1);
                h[b] += 1.0;
            }
            let total = row.len() as f64;
            h.iter_mut().for_each(|x| *x /= total);
            h
        })
        .collect();
    Ok(Hocs { histograms })
}

impl Hocs {
    /// Histogram intersection summed over scales; equals the scale count for identical features.
    pub fn intersection(&self, other: &Hocs) -> f64 {
        self.histograms
            .iter()
            .zip(&other.histograms)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x.min(*y)).sum::<f64>())
            .sum()
    }

    /// `m - intersection`; zero for identical features, lower is more similar.
    pub fn distance(&self, other: &Hocs) -> f64 {
        self.histograms.len() as f64 - self.intersection(other)
    }
}
