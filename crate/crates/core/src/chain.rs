//! Layerwise subspace chains.
//!
//! For each dyadic layer Z_j of a difference set, a greedy cover at radius
//! 2^-(j+2) yields centers whose spans stack into a chain. In the Hilbert
//! model the chain is orthogonalized incrementally: V_j is the orthogonal
//! complement of the earlier span inside span(centers up to layer j), so
//! the direct sums match and the projection Pi_n onto the first n blocks
//! satisfies ||Pi_n z|| >= 2^-(n+2) for every z in Z_n. In the l_inf model
//! each center u contributes the norming functional psi = sign(u_i*) e_i*
//! (i* the first coordinate of largest magnitude), which has dual norm 1
//! and |psi(z)| >= 2^-(n+3) for every z the center covers.
//!
//! Both inequalities are re-verified point by point at build time with no
//! tolerance; the margins are structural, not numerical.

use crate::covering::greedy_cover_indices;
use crate::error::{EmbedError, Result};
use crate::geometry::{LayerDecomposition, NormTag};
use crate::linalg::{self, pow2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Gram-Schmidt drop tolerance, relative to the candidate's norm.
const GS_DROP_TOL: f64 = 1e-10;

/// Orthonormal increment chain for the Hilbert model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrthoChain {
    pub dim: usize,
    /// j -> orthonormal basis of the increment V_j (row-major vectors).
    #[serde(with = "crate::serde_util")]
    pub layers: BTreeMap<i32, Vec<Vec<f64>>>,
    /// Largest realized layer dimension d_j.
    pub m_prime: usize,
}

/// A signed coordinate functional +/- e_i^* in l_inf; dual (l_1) norm 1 by
/// construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignedCoord {
    pub sign: f64,
    pub index: usize,
}

impl SignedCoord {
    pub fn apply(&self, z: &[f64]) -> f64 {
        self.sign * z[self.index]
    }
}

/// Norming-functional chain for the Banach (l_inf) model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionalChain {
    pub dim: usize,
    /// j -> norming functionals collected from the layer's cover centers.
    #[serde(with = "crate::serde_util")]
    pub layers: BTreeMap<i32, Vec<SignedCoord>>,
    /// Largest number of distinct coordinate indices in one layer.
    pub m_prime: usize,
}

/// Either chain kind, as stored on disk and consumed by the probe sampler.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Chain {
    Ortho(OrthoChain),
    Functional(FunctionalChain),
}

impl Chain {
    pub fn dim(&self) -> usize {
        match self {
            Chain::Ortho(c) => c.dim,
            Chain::Functional(c) => c.dim,
        }
    }

    pub fn m_prime(&self) -> usize {
        match self {
            Chain::Ortho(c) => c.m_prime,
            Chain::Functional(c) => c.m_prime,
        }
    }

    /// Layer index -> block dimension d_j.
    pub fn dims(&self) -> BTreeMap<i32, usize> {
        match self {
            Chain::Ortho(c) => c.layers.iter().map(|(j, b)| (*j, b.len())).collect(),
            Chain::Functional(c) => c
                .layers
                .iter()
                .map(|(j, f)| {
                    let mut idx: Vec<usize> = f.iter().map(|s| s.index).collect();
                    idx.sort_unstable();
                    idx.dedup();
                    (*j, idx.len())
                })
                .collect(),
        }
    }

    pub fn layer_indices(&self) -> Vec<i32> {
        match self {
            Chain::Ortho(c) => c.layers.keys().copied().collect(),
            Chain::Functional(c) => c.layers.keys().copied().collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Chain> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Builds the orthogonal chain of an L2 layer decomposition, layer by layer
/// in ascending j. Cover radius per layer is 2^-(j+2); twice-run
/// Gram-Schmidt with a relative drop tolerance of 1e-10 extracts each
/// increment. The projection inequality is verified for every layer point
/// before returning.
pub fn build_orthogonal_chain(dec: &LayerDecomposition) -> Result<OrthoChain> {
    if dec.norm != NormTag::L2 {
        return Err(EmbedError::ChainModeMismatch(
            "orthogonal chains require the l2 model",
        ));
    }
    if dec.layers.is_empty() {
        return Err(EmbedError::EmptySet("layer decomposition has no layers"));
    }
    let dim = dec.dim;
    let mut basis: Vec<Vec<f64>> = Vec::new(); // accumulated, all layers
    let mut layers: BTreeMap<i32, Vec<Vec<f64>>> = BTreeMap::new();
    for (&j, pts) in &dec.layers {
        let radius = pow2(-(j as i64 + 2));
        let centers = greedy_cover_indices(pts, NormTag::L2, radius);
        let mut block: Vec<Vec<f64>> = Vec::new();
        for &ci in &centers {
            let c = &pts[ci].0;
            let mut v = c.clone();
            for _ in 0..2 {
                for b in &basis {
                    let t = linalg::dot(&v, b);
                    linalg::axpy(&mut v, -t, b);
                }
            }
            let r = linalg::norm2(&v);
            if r > GS_DROP_TOL * linalg::norm2(c) {
                linalg::scale(&mut v, 1.0 / r);
                basis.push(v.clone());
                block.push(v);
            }
        }
        if !block.is_empty() {
            layers.insert(j, block);
        }
    }
    // Orthonormality: the drop tolerance plus re-orthogonalization keeps the
    // Gram matrix at identity to ~1e-14; 1e-10 is the contract.
    for (i, a) in basis.iter().enumerate() {
        if (linalg::norm2(a) - 1.0).abs() > 1e-12 {
            return Err(EmbedError::ChainInequality {
                lemma: "orthonormality",
                layer: 0,
                detail: format!("basis vector {i} is not unit"),
            });
        }
        for b in basis.iter().skip(i + 1) {
            let g = linalg::dot(a, b).abs();
            if g > 1e-10 {
                return Err(EmbedError::ChainInequality {
                    lemma: "orthonormality",
                    layer: 0,
                    detail: format!("off-diagonal Gram entry {g:e}"),
                });
            }
        }
    }
    let m_prime = layers.values().map(|b| b.len()).max().unwrap_or(0);
    let chain = OrthoChain {
        dim,
        layers,
        m_prime,
    };

    // Projection lower bound, exact comparison on every layer point.
    for (&j, pts) in &dec.layers {
        let thresh = pow2(-(j as i64 + 2));
        for (idx, z) in pts.iter().enumerate() {
            let p = project(&chain, j, &z.0);
            let n = linalg::norm2(&p);
            if !(n >= thresh) {
                return Err(EmbedError::ChainInequality {
                    lemma: "projection lower bound",
                    layer: j,
                    detail: format!("point {idx}: ||Pi_{j} z|| = {n:e} < {thresh:e}"),
                });
            }
        }
    }
    Ok(chain)
}

/// Pi_n z: orthogonal projection of z onto the direct sum of blocks with
/// layer index <= n.
pub fn project(chain: &OrthoChain, n: i32, z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    for (&j, block) in &chain.layers {
        if j > n {
            break;
        }
        for b in block {
            let t = linalg::dot(z, b);
            linalg::axpy(&mut out, t, b);
        }
    }
    out
}

/// Builds the functional chain of an l_inf layer decomposition. One
/// functional per cover center (deduplicated), sign and index taken from
/// the center's first largest-magnitude coordinate. The norming inequality
/// is verified for every layer point before returning.
pub fn build_functional_chain(dec: &LayerDecomposition) -> Result<FunctionalChain> {
    if dec.norm != NormTag::Linf {
        return Err(EmbedError::ChainModeMismatch(
            "functional chains require the linf model",
        ));
    }
    if dec.layers.is_empty() {
        return Err(EmbedError::EmptySet("layer decomposition has no layers"));
    }
    let dim = dec.dim;
    let mut layers: BTreeMap<i32, Vec<SignedCoord>> = BTreeMap::new();
    for (&j, pts) in &dec.layers {
        let radius = pow2(-(j as i64 + 2));
        let centers = greedy_cover_indices(pts, NormTag::Linf, radius);
        let mut block: Vec<SignedCoord> = Vec::new();
        for &ci in &centers {
            let u = &pts[ci].0;
            let mut best = 0usize;
            for (i, c) in u.iter().enumerate() {
                if c.abs() > u[best].abs() {
                    best = i;
                }
            }
            let psi = SignedCoord {
                sign: if u[best] > 0.0 { 1.0 } else { -1.0 },
                index: best,
            };
            if !block.contains(&psi) {
                block.push(psi);
            }
        }
        layers.insert(j, block);
    }
    let m_prime = layers
        .values()
        .map(|f| {
            let mut idx: Vec<usize> = f.iter().map(|s| s.index).collect();
            idx.sort_unstable();
            idx.dedup();
            idx.len()
        })
        .max()
        .unwrap_or(0);
    let chain = FunctionalChain {
        dim,
        layers,
        m_prime,
    };

    // Norming lower bound, exact comparison on every layer point.
    for (&j, pts) in &dec.layers {
        let thresh = pow2(-(j as i64 + 3));
        let block = &chain.layers[&j];
        for (idx, z) in pts.iter().enumerate() {
            let best = block
                .iter()
                .map(|psi| psi.apply(&z.0).abs())
                .fold(0.0f64, f64::max);
            if !(best >= thresh) {
                return Err(EmbedError::ChainInequality {
                    lemma: "norming lower bound",
                    layer: j,
                    detail: format!("point {idx}: max |psi(z)| = {best:e} < {thresh:e}"),
                });
            }
        }
    }
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{dyadic_layers, Point, PointSet};

    fn unit(dim: usize, i: usize, s: f64) -> Point {
        let mut v = vec![0.0; dim];
        v[i] = s;
        Point(v)
    }

    #[test]
    fn decaying_singletons_span_their_axes() {
        // Z = {2^-k e_k : k = 1..8}: each point sits alone in layer k-1 and
        // contributes exactly its own axis.
        let dim = 8;
        let pts: Vec<Point> = (1..=8)
            .map(|k| unit(dim, k - 1, pow2(-(k as i64))))
            .collect();
        let set = PointSet::new(pts, NormTag::L2, "z").unwrap();
        let dec = dyadic_layers(&set);
        assert_eq!(dec.j_min(), Some(0));
        assert_eq!(dec.j_max(), Some(7));
        let chain = build_orthogonal_chain(&dec).unwrap();
        assert_eq!(chain.m_prime, 1);
        for (j, block) in &chain.layers {
            assert_eq!(block.len(), 1);
            let axis = (*j) as usize; // layer k-1 holds 2^-k e_k
            assert!((block[0][axis].abs() - 1.0).abs() < 1e-12);
        }
        // Projection recovers each point entirely.
        for k in 1..=8usize {
            let z = unit(dim, k - 1, pow2(-(k as i64)));
            let p = project(&chain, (k - 1) as i32, &z.0);
            let diff: f64 = p.iter().zip(&z.0).map(|(a, b)| (a - b).abs()).sum();
            assert!(diff < 1e-14);
        }
    }

    #[test]
    fn two_separated_points_give_two_directions() {
        // Z_1 = {0.3 e1, 0.3 e2}: separation 0.3 sqrt(2) > 2^-3, so the
        // cover keeps both and V_1 is 2-dimensional.
        let set = PointSet::new(vec![unit(2, 0, 0.3), unit(2, 1, 0.3)], NormTag::L2, "z1").unwrap();
        let chain = build_orthogonal_chain(&dyadic_layers(&set)).unwrap();
        assert_eq!(chain.layers[&1].len(), 2);
        assert_eq!(chain.m_prime, 2);
    }

    #[test]
    fn dependent_directions_are_dropped() {
        // Three well-separated centers, only two independent directions.
        let set = PointSet::new(
            vec![unit(3, 0, 0.3), unit(3, 0, -0.3), unit(3, 1, 0.3)],
            NormTag::L2,
            "z",
        )
        .unwrap();
        let chain = build_orthogonal_chain(&dyadic_layers(&set)).unwrap();
        assert_eq!(chain.layers[&1].len(), 2, "rank cap holds");
    }

    #[test]
    fn projection_bound_on_random_sets() {
        use rand::Rng;
        for seed in 0..5u64 {
            let mut rng = crate::rng::stream(seed, 0);
            let pts: Vec<Point> = (0..120)
                .map(|_| Point((0..4).map(|_| rng.random::<f64>() - 0.5).collect()))
                .collect();
            let set = PointSet::new(pts, NormTag::L2, "rand").unwrap();
            let z = crate::geometry::difference_set(&set).unwrap();
            let dec = dyadic_layers(&z);
            // Build re-verifies the inequality internally; re-check here via
            // the public projector with an explicit scan.
            let chain = build_orthogonal_chain(&dec).unwrap();
            for (&j, pts) in &dec.layers {
                for p in pts {
                    let proj = project(&chain, j, &p.0);
                    assert!(linalg::norm2(&proj) >= pow2(-(j as i64 + 2)));
                }
            }
        }
    }

    #[test]
    fn projection_is_idempotent_and_contractive() {
        use rand::Rng;
        let mut rng = crate::rng::stream(77, 0);
        let pts: Vec<Point> = (0..60)
            .map(|_| Point((0..5).map(|_| rng.random::<f64>() - 0.5).collect()))
            .collect();
        let set = PointSet::new(pts, NormTag::L2, "r").unwrap();
        let dec = dyadic_layers(&crate::geometry::difference_set(&set).unwrap());
        let chain = build_orthogonal_chain(&dec).unwrap();
        let n = chain.layers.keys().last().copied().unwrap();
        for _ in 0..20 {
            let z: Vec<f64> = (0..5).map(|_| rng.random::<f64>() - 0.5).collect();
            let p = project(&chain, n, &z);
            let pp = project(&chain, n, &p);
            let drift: f64 = p.iter().zip(&pp).map(|(a, b)| (a - b).abs()).sum();
            assert!(drift < 1e-12);
            assert!(linalg::norm2(&p) <= linalg::norm2(&z) + 1e-12);
            // Residual is orthogonal to the projection.
            let res: Vec<f64> = z.iter().zip(&p).map(|(a, b)| a - b).collect();
            assert!(linalg::dot(&res, &p).abs() < 1e-12);
        }
    }

    #[test]
    fn project_below_first_layer_is_zero() {
        let set = PointSet::new(vec![unit(2, 0, 0.3)], NormTag::L2, "z").unwrap();
        let chain = build_orthogonal_chain(&dyadic_layers(&set)).unwrap();
        let p = project(&chain, 0, &[1.0, 1.0]);
        assert_eq!(p, vec![0.0, 0.0]);
    }

    #[test]
    fn norm_tag_mismatch_is_rejected() {
        let set = PointSet::new(vec![unit(2, 0, 0.3)], NormTag::Linf, "z").unwrap();
        assert!(matches!(
            build_orthogonal_chain(&dyadic_layers(&set)),
            Err(EmbedError::ChainModeMismatch(_))
        ));
        let set2 = PointSet::new(vec![unit(2, 0, 0.3)], NormTag::L2, "z").unwrap();
        assert!(matches!(
            build_functional_chain(&dyadic_layers(&set2)),
            Err(EmbedError::ChainModeMismatch(_))
        ));
    }

    #[test]
    fn functional_sign_and_tie_break() {
        // (0.3, -0.1): largest coordinate is +0.3 at index 0 -> +e_0.
        let set = PointSet::new(vec![Point(vec![0.3, -0.1])], NormTag::Linf, "z").unwrap();
        let chain = build_functional_chain(&dyadic_layers(&set)).unwrap();
        assert_eq!(
            chain.layers[&1],
            vec![SignedCoord {
                sign: 1.0,
                index: 0
            }]
        );
        // Tie (-0.3, -0.3): lowest index wins, sign follows the coordinate.
        let set = PointSet::new(vec![Point(vec![-0.3, -0.3])], NormTag::Linf, "z").unwrap();
        let chain = build_functional_chain(&dyadic_layers(&set)).unwrap();
        assert_eq!(
            chain.layers[&1],
            vec![SignedCoord {
                sign: -1.0,
                index: 0
            }]
        );
        let z = [-0.3, -0.3];
        assert!((chain.layers[&1][0].apply(&z) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn norming_bound_on_random_linf_sets() {
        use rand::Rng;
        for seed in 0..5u64 {
            let mut rng = crate::rng::stream(seed, 3);
            let pts: Vec<Point> = (0..120)
                .map(|_| Point((0..4).map(|_| rng.random::<f64>() - 0.5).collect()))
                .collect();
            let set = PointSet::new(pts, NormTag::Linf, "rand").unwrap();
            let z = crate::geometry::difference_set(&set).unwrap();
            let dec = dyadic_layers(&z);
            let chain = build_functional_chain(&dec).unwrap();
            // Explicit re-scan of the norming inequality.
            for (&j, pts) in &dec.layers {
                let thresh = pow2(-(j as i64 + 3));
                for p in pts {
                    let best = chain.layers[&j]
                        .iter()
                        .map(|psi| psi.apply(&p.0).abs())
                        .fold(0.0f64, f64::max);
                    assert!(best >= thresh);
                }
            }
            // Dual norms are 1 by construction; spot-check the structure.
            for block in chain.layers.values() {
                for psi in block {
                    assert!(psi.sign == 1.0 || psi.sign == -1.0);
                    assert!(psi.index < chain.dim);
                }
            }
        }
    }

    #[test]
    fn chain_json_roundtrip_with_negative_layers() {
        let set = PointSet::new(
            vec![unit(3, 0, 3.0), unit(3, 1, 0.3), unit(3, 2, 0.02)],
            NormTag::L2,
            "z",
        )
        .unwrap();
        let chain = Chain::Ortho(build_orthogonal_chain(&dyadic_layers(&set)).unwrap());
        let json = chain.to_json().unwrap();
        let back = Chain::from_json(&json).unwrap();
        assert_eq!(chain.layer_indices(), back.layer_indices());
        assert!(chain.layer_indices().contains(&-2));
        assert_eq!(chain.dims(), back.dims());
        let setf = PointSet::new(vec![Point(vec![0.3, -0.3])], NormTag::Linf, "z").unwrap();
        let fch = Chain::Functional(build_functional_chain(&dyadic_layers(&setf)).unwrap());
        let back = Chain::from_json(&fch.to_json().unwrap()).unwrap();
        assert_eq!(fch.dims(), back.dims());
    }
}
