//! Ambient model: finite point sets in R^D under the Euclidean or sup norm,
//! their difference sets, the dyadic layer decomposition of a difference
//! set, and the Kuratowski embedding of a finite metric space into l_inf.
//!
//! Layer convention: z with ||z|| > 0 belongs to the unique layer j (an
//! integer, possibly negative) with 2^-(j+1) <= ||z|| < 2^-j. Zero vectors
//! belong to no layer and are counted separately.

use crate::error::{EmbedError, Result};
use crate::linalg::{self, pow2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::collections::HashSet;

/// Which norm the ambient space carries: `L2` is the Hilbert-space model,
/// `Linf` the Banach (l_inf) model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormTag {
    L2,
    Linf,
}

impl NormTag {
    pub fn norm(&self, v: &[f64]) -> f64 {
        match self {
            NormTag::L2 => linalg::norm2(v),
            NormTag::Linf => linalg::norm_inf(v),
        }
    }

    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            NormTag::L2 => {
                let mut s = 0.0;
                for (x, y) in a.iter().zip(b) {
                    let d = x - y;
                    s += d * d;
                }
                s.sqrt()
            }
            NormTag::Linf => {
                let mut m = 0.0f64;
                for (x, y) in a.iter().zip(b) {
                    m = m.max((x - y).abs());
                }
                m
            }
        }
    }
}

impl std::fmt::Display for NormTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NormTag::L2 => write!(f, "l2"),
            NormTag::Linf => write!(f, "linf"),
        }
    }
}

impl std::str::FromStr for NormTag {
    type Err = EmbedError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(NormTag::L2),
            "linf" => Ok(NormTag::Linf),
            other => Err(EmbedError::InvalidParameter(format!(
                "unknown norm tag {other:?} (expected \"l2\" or \"linf\")"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self, tag: NormTag) -> f64 {
        tag.norm(&self.0)
    }

    pub fn sub(&self, other: &Point) -> Point {
        Point(linalg::sub(&self.0, &other.0))
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|c| *c == 0.0)
    }
}

/// A finite set (stored as an ordered list) of points sharing one ambient
/// dimension and one norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub points: Vec<Point>,
    pub norm: NormTag,
    pub label: String,
}

impl PointSet {
    /// Validates finiteness and a consistent dimension: those are the only
    /// requirements; duplicates are allowed.
    pub fn new(points: Vec<Point>, norm: NormTag, label: impl Into<String>) -> Result<Self> {
        if let Some(first) = points.first() {
            let d = first.dim();
            if d == 0 {
                return Err(EmbedError::InvalidParameter(
                    "points must have dimension >= 1".into(),
                ));
            }
            for (i, p) in points.iter().enumerate() {
                if p.dim() != d {
                    return Err(EmbedError::DimensionMismatch {
                        expected: d,
                        got: p.dim(),
                    });
                }
                if p.0.iter().any(|c| !c.is_finite()) {
                    return Err(EmbedError::NonFinite { index: i });
                }
            }
        }
        Ok(PointSet {
            points,
            norm,
            label: label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map(|p| p.dim()).unwrap_or(0)
    }

    pub fn with_norm(mut self, norm: NormTag) -> Self {
        self.norm = norm;
        self
    }

    pub fn diameter(&self) -> f64 {
        let mut d = 0.0f64;
        for i in 0..self.points.len() {
            for j in (i + 1)..self.points.len() {
                d = d.max(self.norm.dist(&self.points[i].0, &self.points[j].0));
            }
        }
        d
    }

    pub fn scaled(&self, factor: f64) -> PointSet {
        PointSet {
            points: self
                .points
                .iter()
                .map(|p| Point(p.0.iter().map(|c| c * factor).collect()))
                .collect(),
            norm: self.norm,
            label: self.label.clone(),
        }
    }

    /// Scales the set down to diameter <= `target` when needed; smaller
    /// sets are returned unchanged. Returns (set, scale factor applied).
    pub fn normalized_to_diameter(&self, target: f64) -> (PointSet, f64) {
        let d = self.diameter();
        if d > target {
            let s = target / d;
            (self.scaled(s), s)
        } else {
            (self.clone(), 1.0)
        }
    }

    /// Scales the set down to diameter <= 1 when needed.
    pub fn normalized_to_unit_diameter(&self) -> (PointSet, f64) {
        self.normalized_to_diameter(1.0)
    }

    /// CSV: one point per row, coordinates comma-separated, no header.
    /// `f64` formatting is shortest-round-trip, so writing and re-reading is
    /// bit-exact.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            let row: Vec<String> = p.0.iter().map(|c| format!("{c}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, norm: NormTag, label: impl Into<String>) -> Result<Self> {
        let mut points = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let coords: Result<Vec<f64>> = line
                .split(',')
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|e| {
                        EmbedError::Parse(format!("line {}: {:?}: {}", lineno + 1, f, e))
                    })
                })
                .collect();
            points.push(Point(coords?));
        }
        PointSet::new(points, norm, label)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: PointSet = serde_json::from_str(text)?;
        PointSet::new(set.points, set.norm, set.label)
    }
}

/// The set X - X = {x - y : x, y in X}, with exact duplicates removed.
/// Always contains 0 and is closed under negation. Order is deterministic:
/// first occurrence in (i-major, j-minor) pair order.
pub fn difference_set(x: &PointSet) -> Result<PointSet> {
    if x.is_empty() {
        return Err(EmbedError::EmptySet("difference_set needs a non-empty set"));
    }
    let mut seen: HashSet<Vec<u64>> = HashSet::with_capacity(x.len() * x.len());
    let mut points = Vec::new();
    for a in &x.points {
        for b in &x.points {
            let z = a.sub(b);
            let key: Vec<u64> = z.0.iter().map(|c| c.to_bits()).collect();
            if seen.insert(key) {
                points.push(z);
            }
        }
    }
    PointSet::new(points, x.norm, format!("{}-diff", x.label))
}

/// Layer index of a positive norm value: the unique j with
/// 2^-(j+1) <= x < 2^-j. Exact on dyadic boundaries.
pub fn layer_index(x: f64) -> i32 {
    assert!(x > 0.0 && x.is_finite(), "layer_index needs 0 < x < inf");
    let mut j = (-(x.log2())).ceil() as i64 - 1;
    // Fix up against exact powers of two; at most a couple of steps.
    while x >= pow2(-j) {
        j -= 1;
    }
    while x < pow2(-(j + 1)) {
        j += 1;
    }
    j as i32
}

/// Dyadic decomposition of a point set: layer j holds the points with
/// 2^-(j+1) <= ||z|| < 2^-j; exact zero vectors are excluded and counted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerDecomposition {
    #[serde(with = "crate::serde_util")]
    pub layers: BTreeMap<i32, Vec<Point>>,
    pub zero_count: usize,
    pub norm: NormTag,
    pub dim: usize,
}

impl LayerDecomposition {
    pub fn j_min(&self) -> Option<i32> {
        self.layers.keys().next().copied()
    }

    pub fn j_max(&self) -> Option<i32> {
        self.layers.keys().next_back().copied()
    }

    pub fn total_points(&self) -> usize {
        self.layers.values().map(|v| v.len()).sum()
    }
}

pub fn dyadic_layers(z: &PointSet) -> LayerDecomposition {
    let mut layers: BTreeMap<i32, Vec<Point>> = BTreeMap::new();
    let mut zero_count = 0;
    for p in &z.points {
        let n = p.norm(z.norm);
        if n == 0.0 {
            zero_count += 1;
        } else {
            layers.entry(layer_index(n)).or_default().push(p.clone());
        }
    }
    LayerDecomposition {
        layers,
        zero_count,
        norm: z.norm,
        dim: z.dim(),
    }
}

/// Kuratowski embedding of a finite metric space given by its distance
/// matrix: point i maps to the i-th row of the matrix, viewed in l_inf.
/// This is an exact isometry. The matrix must be a genuine metric; the
/// first violated triangle (if any) is reported in the error.
pub fn kuratowski_embed(dist: &[Vec<f64>]) -> Result<PointSet> {
    let n = dist.len();
    if n == 0 {
        return Err(EmbedError::EmptySet("kuratowski_embed needs n >= 1"));
    }
    for (i, row) in dist.iter().enumerate() {
        if row.len() != n {
            return Err(EmbedError::DimensionMismatch {
                expected: n,
                got: row.len(),
            });
        }
        if row.iter().any(|d| !d.is_finite()) {
            return Err(EmbedError::NonFinite { index: i });
        }
    }
    for (i, row) in dist.iter().enumerate() {
        if row[i] != 0.0 {
            return Err(EmbedError::MetricDiagonal { i, value: row[i] });
        }
        for (j, &dij) in row.iter().enumerate() {
            if dij < 0.0 {
                return Err(EmbedError::MetricNegative { i, j, value: dij });
            }
            if dij != dist[j][i] {
                return Err(EmbedError::MetricAsymmetry {
                    i,
                    j,
                    dij,
                    dji: dist[j][i],
                });
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let lhs = dist[i][k];
                let rhs = dist[i][j] + dist[j][k];
                if lhs > rhs {
                    return Err(EmbedError::TriangleViolation { i, j, k, lhs, rhs });
                }
            }
        }
    }
    let points = dist.iter().map(|row| Point(row.clone())).collect();
    PointSet::new(points, NormTag::Linf, "kuratowski")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(coords: &[f64]) -> Point {
        Point(coords.to_vec())
    }

    #[test]
    fn difference_set_of_singleton_is_zero() {
        let x = PointSet::new(vec![pt(&[0.7, -0.2])], NormTag::L2, "a").unwrap();
        let z = difference_set(&x).unwrap();
        assert_eq!(z.len(), 1);
        assert!(z.points[0].is_zero());
    }

    #[test]
    fn difference_set_dedupes_and_is_symmetric() {
        let x = PointSet::new(vec![pt(&[0.0, 0.0]), pt(&[1.0, 0.0])], NormTag::L2, "x").unwrap();
        let z = difference_set(&x).unwrap();
        // 0, e1, -e1: the two zero differences collapse.
        assert_eq!(z.len(), 3);
        assert!(z.points.iter().any(|p| p.0 == vec![1.0, 0.0]));
        assert!(z.points.iter().any(|p| p.0 == vec![-1.0, 0.0]));
        assert!(z.points.iter().any(|p| p.is_zero()));
    }

    #[test]
    fn difference_set_matches_brute_force() {
        // Brute-force oracle: sort all n^2 differences lexicographically and
        // drop exact-equal neighbours.
        let mut rng = crate::rng::stream(42, 0);
        use rand::Rng;
        let pts: Vec<Point> = (0..17)
            .map(|_| Point((0..3).map(|_| rng.random::<f64>()).collect()))
            .collect();
        let x = PointSet::new(pts, NormTag::L2, "rand").unwrap();
        let z = difference_set(&x).unwrap();

        let mut oracle: Vec<Vec<f64>> = Vec::new();
        for a in &x.points {
            for b in &x.points {
                oracle.push(a.sub(b).0);
            }
        }
        oracle.sort_by(|a, b| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| *o != std::cmp::Ordering::Equal)
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        oracle.dedup();
        let mut got: Vec<Vec<f64>> = z.points.iter().map(|p| p.0.clone()).collect();
        got.sort_by(|a, b| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| *o != std::cmp::Ordering::Equal)
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        assert_eq!(got, oracle);
        assert!(z.len() <= x.len() * x.len());
        // Closed under negation.
        for p in &z.points {
            let neg: Vec<f64> = p.0.iter().map(|c| -c).collect();
            assert!(z.points.iter().any(|q| q.0 == neg));
        }
    }

    #[test]
    fn layer_index_examples() {
        // ||z|| = 0.3 lies in [1/4, 1/2) => j = 1.
        assert_eq!(layer_index(0.3), 1);
        // Boundary: ||z|| = 0.5 belongs to layer 0, not 1.
        assert_eq!(layer_index(0.5), 0);
        assert_eq!(layer_index(0.9999), 0);
        assert_eq!(layer_index(1.0), -1);
        // ||z|| > 1 gives negative layers.
        assert_eq!(layer_index(3.0), -2);
        assert_eq!(layer_index(0.25), 1);
        assert_eq!(layer_index(0.2499999), 2);
        for k in -8..40 {
            let x = pow2(-(k as i64 + 1));
            assert_eq!(layer_index(x), k, "exact boundary 2^-(j+1)");
            assert_eq!(layer_index(x * 1.5), k, "band interior");
        }
    }

    #[test]
    fn layers_partition_the_set() {
        let mut rng = crate::rng::stream(5, 0);
        use rand::Rng;
        let mut pts: Vec<Point> = (0..500)
            .map(|_| {
                Point(vec![
                    rng.random::<f64>() * 4.0 - 2.0,
                    rng.random::<f64>() - 0.5,
                ])
            })
            .collect();
        pts.push(pt(&[0.0, 0.0]));
        pts.push(pt(&[0.0, 0.0]));
        let set = PointSet::new(pts, NormTag::Linf, "p").unwrap();
        let dec = dyadic_layers(&set);
        assert_eq!(dec.zero_count, 2);
        assert_eq!(dec.total_points() + dec.zero_count, set.len());
        for (j, layer) in &dec.layers {
            assert!(!layer.is_empty(), "no empty layers stored");
            for p in layer {
                let n = p.norm(set.norm);
                assert!(pow2(-(*j as i64 + 1)) <= n && n < pow2(-(*j as i64)));
            }
        }
    }

    #[test]
    fn kuratowski_is_exact_isometry() {
        // Metric realized by points on a line: 0, 1, 3.5.
        let d = vec![
            vec![0.0, 1.0, 3.5],
            vec![1.0, 0.0, 2.5],
            vec![3.5, 2.5, 0.0],
        ];
        let e = kuratowski_embed(&d).unwrap();
        assert_eq!(e.norm, NormTag::Linf);
        assert_eq!(e.dim(), 3);
        for (i, row) in d.iter().enumerate() {
            for (j, &dij) in row.iter().enumerate() {
                let dist = e.norm.dist(&e.points[i].0, &e.points[j].0);
                assert!(
                    (dist - dij).abs() <= 1e-12,
                    "pair ({i},{j}): {dist} vs {dij}"
                );
            }
        }
    }

    #[test]
    fn kuratowski_on_random_euclidean_metric() {
        let mut rng = crate::rng::stream(8, 0);
        use rand::Rng;
        let pts: Vec<Vec<f64>> = (0..9)
            .map(|_| (0..4).map(|_| rng.random::<f64>()).collect())
            .collect();
        let n = pts.len();
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                d[i][j] = NormTag::L2.dist(&pts[i], &pts[j]);
            }
        }
        let e = kuratowski_embed(&d).unwrap();
        for (i, row) in d.iter().enumerate() {
            for (j, &dij) in row.iter().enumerate() {
                let dist = e.norm.dist(&e.points[i].0, &e.points[j].0);
                assert!((dist - dij).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn kuratowski_rejects_triangle_violation() {
        let d = vec![
            vec![0.0, 1.0, 5.0],
            vec![1.0, 0.0, 1.0],
            vec![5.0, 1.0, 0.0],
        ];
        match kuratowski_embed(&d) {
            Err(EmbedError::TriangleViolation { i, j, k, .. }) => {
                assert_eq!((i, j, k), (0, 1, 2));
            }
            other => panic!("expected triangle violation, got {other:?}"),
        }
    }

    #[test]
    fn kuratowski_degenerate_zero_metric() {
        let d = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let e = kuratowski_embed(&d).unwrap();
        assert_eq!(e.points[0], e.points[1]);
    }

    #[test]
    fn csv_roundtrip_is_bit_exact() {
        let x = PointSet::new(
            vec![pt(&[0.1, -3.0e-17]), pt(&[1.0 / 3.0, 2.0f64.sqrt()])],
            NormTag::L2,
            "t",
        )
        .unwrap();
        let csv = x.to_csv();
        let back = PointSet::from_csv(&csv, NormTag::L2, "t").unwrap();
        assert_eq!(x.points, back.points);
        let json = x.to_json().unwrap();
        let back2 = PointSet::from_json(&json).unwrap();
        assert_eq!(x, back2);
    }

    #[test]
    fn normalization_only_shrinks() {
        let x = PointSet::new(vec![pt(&[0.0]), pt(&[4.0])], NormTag::L2, "big").unwrap();
        let (nx, s) = x.normalized_to_unit_diameter();
        assert_eq!(s, 0.25);
        assert!((nx.diameter() - 1.0).abs() < 1e-15);
        let y = PointSet::new(vec![pt(&[0.0]), pt(&[0.5])], NormTag::L2, "small").unwrap();
        let (ny, s) = y.normalized_to_unit_diameter();
        assert_eq!(s, 1.0);
        assert_eq!(ny.points, y.points);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(PointSet::new(vec![pt(&[1.0]), pt(&[1.0, 2.0])], NormTag::L2, "x").is_err());
        assert!(PointSet::new(vec![pt(&[f64::NAN])], NormTag::L2, "x").is_err());
    }
}
