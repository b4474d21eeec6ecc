//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum over every monotone path from `(0, 0)` to `(n-1, m-1)` of the
/// path's cell costs summed from the start.
pub fn brute_force_dtw(a: &[Vec<f64>], b: &[Vec<f64>], wa: Option<&[f64]>, wb: Option<&[f64]>) -> f64 {
    fn cell(a: &[Vec<f64>], b: &[Vec<f64>], wa: Option<&[f64]>, wb: Option<&[f64]>, i: usize, j: usize) -> f64 {
        let s: f64 = a[i].iter().zip(&b[j]).map(|(x, y)| (x - y) * (x - y)).fold(0.0, |acc, v| acc + v);
        let (wi, wj) = (wa.map_or(1.0, |w| w[i]), wb.map_or(1.0, |w| w[j]));
        wi * wj * s.sqrt()
    }
    #[allow(clippy::too_many_arguments)]
    fn walk(
        a: &[Vec<f64>],
        b: &[Vec<f64>],
        wa: Option<&[f64]>,
        wb: Option<&[f64]>,
        i: usize,
        j: usize,
        acc: f64,
        best: &mut f64,
    ) {
        if i == a.len() - 1 && j == b.len() - 1 {
            *best = best.min(acc);
            return;
        }
        for (di, dj) in [(1, 0), (0, 1), (1, 1)] {
            let (ni, nj) = (i + di, j + dj);
            if ni < a.len() && nj < b.len() {
                walk(a, b, wa, wb, ni, nj, acc + cell(a, b, wa, wb, ni, nj), best);
            }
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, wa, wb, 0, 0, cell(a, b, wa, wb, 0, 0), &mut best);
    best
}

/// LNBNN totals from a fully sorted exact distance list. A background
/// neighbour whose distance ties the `k`-th is credited with 0.
pub fn brute_force_lnbnn(db: &[(String, Vec<f64>)], queries: &[Vec<f64>], k: usize) -> BTreeMap<String, f64> {
    let mut totals: BTreeMap<String, f64> = BTreeMap::new();
    for q in queries {
        let mut d: Vec<(f64, usize)> = db
            .iter()
            .enumerate()
            .map(|(i, (_, v))| {
                let s: f64 = q.iter().zip(v).map(|(x, y)| (x - y) * (x - y)).sum();
                (s.sqrt(), i)
            })
            .collect();
        d.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let k = k.min(db.len() - 1);
        if k == 0 {
            *totals.entry(db[d[0].1].0.clone()).or_insert(0.0) += 0.0;
            continue;
        }
        let background = d[k].0;
        let take = if d[k].0 == d[k - 1].0 { k + 1 } else { k };
        let mut seen: Vec<&str> = Vec::new();
        for &(dist, i) in &d[..take] {
            let id = db[i].0.as_str();
            if !seen.contains(&id) {
                seen.push(id);
                *totals.entry(id.to_string()).or_insert(0.0) += dist - background;
            }
        }
    }
    totals
}

/// Open counter-clockwise polygon approximating a circle of radius `big_r`
/// centred at the origin, starting and ending at the bottom.
pub fn circle(big_r: f64, n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64 - std::f64::consts::FRAC_PI_2;
            [big_r * t.cos(), big_r * t.sin()]
        })
        .collect()
}

/// Monte-Carlo estimate of the integral-curvature area ratio for a circle of
/// radius `big_r` at measurement radius `r`.
///
/// Frame: the measured point at the origin, the circle's centre at
/// `(0, big_r)`. The region is the part of the square `[-r, r]^2` below the
/// contour, which is the arc `y = R - sqrt(R^2 - x^2)` between its two exits
/// from the measurement circle and the horizontal chord through those exits
/// beyond them.
pub fn monte_carlo_circle_ratio(big_r: f64, r: f64, samples: usize, seed: u64) -> f64 {
    let h = r * r / (2.0 * big_r);
    let x_exit = (r * r - h * h).sqrt();
    let surface = |x: f64| {
        if x.abs() <= x_exit {
            big_r - (big_r * big_r - x * x).sqrt()
        } else {
            h
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut below = 0usize;
    for _ in 0..samples {
        let x = rng.random_range(-r..r);
        let y = rng.random_range(-r..r);
        if y < surface(x) {
            below += 1;
        }
    }
    below as f64 / samples as f64
}

pub fn random_columns(rng: &mut ChaCha8Rng, len: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..len).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect()
}

pub fn unit_vectors(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}
