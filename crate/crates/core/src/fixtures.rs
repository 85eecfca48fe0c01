//! Deterministic test-bed point sets with known homogeneity behavior.

use crate::error::{EmbedError, Result};
use crate::geometry::{kuratowski_embed, NormTag, Point, PointSet};
use crate::linalg::pow2;
use crate::rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// k x k uniform grid on [0,1]^2; localized covering counts grow like
/// scale^-2 over the resolved range.
pub fn grid(k: usize) -> Result<PointSet> {
    if k < 2 {
        return Err(EmbedError::InvalidParameter(format!(
            "grid needs k >= 2, got {k}"
        )));
    }
    let step = 1.0 / (k - 1) as f64;
    let mut pts = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            pts.push(Point(vec![i as f64 * step, j as f64 * step]));
        }
    }
    PointSet::new(pts, NormTag::L2, format!("grid-{k}"))
}

/// {2^-i e_i : i = 1..k} in R^k: exactly one point per dyadic layer
/// j = 0..k-1, in mutually orthogonal directions.
pub fn decaying_orthogonal(k: usize) -> Result<PointSet> {
    if k == 0 {
        return Err(EmbedError::InvalidParameter(
            "decaying_orthogonal needs k >= 1".into(),
        ));
    }
    let pts: Vec<Point> = (1..=k)
        .map(|i| {
            let mut v = vec![0.0; k];
            v[i - 1] = pow2(-(i as i64));
            Point(v)
        })
        .collect();
    PointSet::new(pts, NormTag::L2, format!("decay-{k}"))
}

/// Left endpoints of the 2^level middle-thirds intervals: a finite stand-in
/// for the Cantor set, dimension log 2 / log 3 over the resolved scales.
pub fn cantor_dust(level: u32) -> Result<PointSet> {
    if level == 0 || level > 20 {
        return Err(EmbedError::InvalidParameter(format!(
            "cantor_dust needs 1 <= level <= 20, got {level}"
        )));
    }
    let n = 1usize << level;
    let mut pts = Vec::with_capacity(n);
    for bits in 0..n {
        let mut x = 0.0;
        let mut w = 1.0 / 3.0;
        for m in 0..level {
            if bits >> m & 1 == 1 {
                x += 2.0 * w;
            }
            w /= 3.0;
        }
        pts.push(Point(vec![x]));
    }
    pts.sort_by(|a, b| a.0[0].partial_cmp(&b.0[0]).unwrap());
    PointSet::new(pts, NormTag::L2, format!("cantor-{level}"))
}

/// n points uniform on [0,1]^dim.
pub fn random_homogeneous(n: usize, dim: usize, seed: u64) -> Result<PointSet> {
    if n == 0 || dim == 0 {
        return Err(EmbedError::InvalidParameter(
            "random_homogeneous needs n >= 1 and dim >= 1".into(),
        ));
    }
    let mut rng = rng::stream(seed, 0);
    let pts: Vec<Point> = (0..n)
        .map(|_| Point((0..dim).map(|_| rng.random::<f64>()).collect()))
        .collect();
    PointSet::new(pts, NormTag::L2, format!("rand-{n}-d{dim}-s{seed}"))
}

/// Pairwise Euclidean distances of n random points in the unit square: a
/// generic finite metric for exercising the arbitrary-metric route.
pub(crate) fn random_planar_metric(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(seed, 1);
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
        .collect();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let dx = pts[i].0 - pts[j].0;
            let dy = pts[i].1 - pts[j].1;
            d[i][j] = (dx * dx + dy * dy).sqrt();
        }
    }
    d
}

/// A generic n-point metric space pushed through the Kuratowski embedding:
/// the image in (R^n, l_inf) carries the metric isometrically.
pub fn metric_kuratowski(n: usize, seed: u64) -> Result<PointSet> {
    if n < 2 {
        return Err(EmbedError::InvalidParameter(format!(
            "metric_kuratowski needs n >= 2, got {n}"
        )));
    }
    let d = random_planar_metric(n, seed);
    let set = kuratowski_embed(&d)?;
    Ok(PointSet {
        label: format!("kuratowski-{n}-s{seed}"),
        ..set
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FixtureSpec {
    Grid { k: usize },
    DecayingOrthogonal { k: usize },
    CantorDust { level: u32 },
    RandomHomogeneous { n: usize, dim: usize, seed: u64 },
    MetricKuratowski { n: usize, seed: u64 },
}

pub fn generate_fixture(spec: &FixtureSpec) -> Result<PointSet> {
    match *spec {
        FixtureSpec::Grid { k } => grid(k),
        FixtureSpec::DecayingOrthogonal { k } => decaying_orthogonal(k),
        FixtureSpec::CantorDust { level } => cantor_dust(level),
        FixtureSpec::RandomHomogeneous { n, dim, seed } => random_homogeneous(n, dim, seed),
        FixtureSpec::MetricKuratowski { n, seed } => metric_kuratowski(n, seed),
    }
}
