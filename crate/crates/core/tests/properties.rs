//! Randomized invariants across modules. Each test pins one structural
//! guarantee; generated inputs shrink to minimal counterexamples on failure.

use proptest::prelude::*;
use std::collections::BTreeMap;

use embedlab::chain::{build_functional_chain, build_orthogonal_chain, project, Chain};
use embedlab::covering::greedy_cover;
use embedlab::cube_slice::{
    section_density, section_density_quadrature, slab_volume_exact, SliceQuery, BALL_BOUND,
};
use embedlab::distortion::{fit_gamma, DistortionProfile};
use embedlab::experiment::PROBE_DIAMETER;
use embedlab::fixtures::{decaying_orthogonal, random_homogeneous};
use embedlab::geometry::{
    difference_set, dyadic_layers, kuratowski_embed, layer_index, NormTag, Point, PointSet,
};
use embedlab::linalg::{norm2, pow2};
use embedlab::probe::{mu_bound_mc, sample_probe_map_trial, ProbeConfig, ProbeMode};

fn set_of(rows: Vec<Vec<f64>>, norm: NormTag) -> PointSet {
    PointSet::new(rows.into_iter().map(Point).collect(), norm, "prop").unwrap()
}

/// Point clouds with a shared dimension; coordinates stay in a tame range
/// so norms and distances never overflow or denormalize.
fn clouds(max_n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=4).prop_flat_map(move |dim| {
        proptest::collection::vec(proptest::collection::vec(-8.0f64..8.0, dim..=dim), 1..max_n)
    })
}

/// Euclidean unit normals with no near-zero coordinate, keeping the slice
/// integrand away from its degenerate single-coordinate discontinuity.
fn unit_normal(max_dim: usize) -> impl Strategy<Value = Vec<f64>> {
    unit_normal_from(2, max_dim)
}

fn unit_normal_from(min_dim: usize, max_dim: usize) -> impl Strategy<Value = Vec<f64>> {
    (min_dim..=max_dim)
        .prop_flat_map(|d| proptest::collection::vec((0.1f64..1.0, proptest::bool::ANY), d..=d))
        .prop_map(|vs| {
            let mut v: Vec<f64> = vs
                .into_iter()
                .map(|(m, s)| if s { m } else { -m })
                .collect();
            let n = norm2(&v);
            for c in &mut v {
                *c /= n;
            }
            v
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    // Layer j is the half-open shell [2^-(j+1), 2^-j).
    #[test]
    fn layer_index_membership(m in 0.5f64..1.0, e in -200i64..200) {
        let x = m * pow2(e);
        let j = i64::from(layer_index(x));
        prop_assert!(pow2(-(j + 1)) <= x && x < pow2(-j), "x {x} landed outside layer {j}");
    }

    // Exact powers of two sit on the inclusive end: 2^-m opens layer m - 1.
    #[test]
    fn layer_index_dyadic_boundary(m in -200i64..200) {
        prop_assert_eq!(i64::from(layer_index(pow2(-m))), m - 1);
    }

    // X - X contains 0, is closed under negation, and has at most
    // n^2 - n + 1 distinct elements.
    #[test]
    fn difference_set_structure(rows in clouds(10)) {
        let set = set_of(rows, NormTag::L2);
        let n = set.len();
        let diffs = difference_set(&set).unwrap();
        prop_assert!(diffs.points.iter().any(|p| p.is_zero()));
        prop_assert!(diffs.len() <= n * n - n + 1);
        for z in &diffs.points {
            let neg: Vec<f64> = z.coords().iter().map(|c| -c).collect();
            prop_assert!(
                diffs.points.iter().any(|w| w.coords() == &neg[..]),
                "missing -z for z = {:?}",
                z.coords()
            );
        }
    }

    // A greedy cover covers at its radius, its centers form a packing at
    // the same radius, and (the farthest-point order being radius-free)
    // center counts are monotone in the radius.
    #[test]
    fn greedy_cover_soundness(rows in clouds(12), r1 in 0.05f64..4.0, r2 in 0.05f64..4.0) {
        let set = set_of(rows, NormTag::L2);
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let fine = greedy_cover(&set, lo).unwrap();
        let coarse = greedy_cover(&set, hi).unwrap();
        for p in &set.points {
            let d = fine
                .centers
                .iter()
                .map(|c| NormTag::L2.dist(c.coords(), p.coords()))
                .fold(f64::INFINITY, f64::min);
            prop_assert!(d <= lo, "point {d} beyond cover radius {lo}");
        }
        for (i, a) in fine.centers.iter().enumerate() {
            for b in &fine.centers[i + 1..] {
                prop_assert!(NormTag::L2.dist(a.coords(), b.coords()) > lo);
            }
        }
        prop_assert!(fine.centers.len() >= coarse.centers.len());
    }

    // The exact piecewise-polynomial density is nonnegative, symmetric in
    // the offset, and obeys the central bound.
    #[test]
    fn slice_density_symmetry_and_bound(a in unit_normal(10), t in -1.5f64..1.5) {
        let exact = section_density(&a, t).unwrap();
        let mirror = section_density(&a, -t).unwrap();
        prop_assert!((exact - mirror).abs() <= 1e-9);
        prop_assert!(exact >= 0.0);
        let central = section_density(&a, 0.0).unwrap();
        prop_assert!(central <= BALL_BOUND + 1e-9, "central density {central}");
    }

    // Exact evaluation agrees with the oscillatory-integral fallback. The
    // integrand tail decays like u^-d, so the comparison starts at d = 4;
    // below that the quadrature cannot certify tight tolerances.
    #[test]
    fn slice_exact_matches_quadrature(a in unit_normal_from(4, 10), t in -1.5f64..1.5) {
        let exact = section_density(&a, t).unwrap();
        let quad = section_density_quadrature(&a, t, 1e-8).unwrap();
        prop_assert!((exact - quad).abs() <= 1e-6, "exact {exact} vs quadrature {quad}");
    }

    // Slab volumes are probabilities and monotone in the half-width.
    #[test]
    fn slab_volume_monotone(
        a in unit_normal(6),
        y in -2.0f64..2.0,
        e1 in 0.0f64..1.5,
        e2 in 0.0f64..1.5,
    ) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let small = slab_volume_exact(&SliceQuery { a: a.clone(), y, eps: lo }).unwrap().value;
        let big = slab_volume_exact(&SliceQuery { a, y, eps: hi }).unwrap().value;
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&small));
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&big));
        prop_assert!(small <= big + 1e-12, "slab volume shrank: {small} > {big}");
    }

    // Star metrics d(i,j) = a_i + a_j are genuine metrics with enough
    // triangle slack that the distance-matrix rows reproduce every distance
    // bit-for-bit in l_inf.
    #[test]
    fn kuratowski_is_an_isometry(arms in proptest::collection::vec(0.01f64..8.0, 2..8)) {
        let n = arms.len();
        let dist: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { 0.0 } else { arms[i] + arms[j] })
                    .collect()
            })
            .collect();
        let em = kuratowski_embed(&dist).unwrap();
        for (i, row) in dist.iter().enumerate() {
            for (j, &dij) in row.iter().enumerate() {
                let got = NormTag::Linf.dist(em.points[i].coords(), em.points[j].coords());
                prop_assert!(
                    got.to_bits() == dij.to_bits(),
                    "d({i},{j}) = {dij} embedded as {got}"
                );
            }
        }
    }

    // OLS on an exact power law r_j = c j^-g recovers both parameters.
    #[test]
    fn fit_gamma_recovers_power_law(g in 0.0f64..3.0, c in 0.05f64..5.0) {
        let mut ratios = BTreeMap::new();
        let mut counts = BTreeMap::new();
        for j in 1..=10i32 {
            ratios.insert(j, c * f64::from(j).powf(-g));
            counts.insert(j, 1usize);
        }
        let prof = DistortionProfile {
            ratios,
            points_per_layer: counts,
            gamma_hat: None,
            c_fit: None,
            rho_fit: None,
        };
        let fit = fit_gamma(&prof, 1, 10).unwrap();
        prop_assert!((fit.gamma_hat - g).abs() <= 1e-6, "gamma {g} fitted as {}", fit.gamma_hat);
        prop_assert!((fit.c_fit - c).abs() <= 1e-6 * c, "c {c} fitted as {}", fit.c_fit);
    }
}

proptest! {
    // Chain construction and probe sampling rebuild decompositions per
    // case, so these run with a smaller budget.
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    // Every stored layer point keeps at least 2^-(n+2) of its length under
    // the cumulative projection of its own layer, with no tolerance.
    #[test]
    fn projection_chain_inequality(n in 4usize..24, dim in 2usize..5, seed in any::<u64>()) {
        let set = random_homogeneous(n, dim, seed).unwrap();
        let dec = dyadic_layers(&difference_set(&set).unwrap());
        let chain = build_orthogonal_chain(&dec).unwrap();
        for (&j, pts) in &dec.layers {
            for z in pts {
                let p = project(&chain, j, z.coords());
                prop_assert!(
                    norm2(&p) >= pow2(-(i64::from(j) + 2)),
                    "layer {j}: ||Pi z|| = {}",
                    norm2(&p)
                );
            }
        }
    }

    // Functional version in l_inf: unit dual norm, and some functional in
    // the point's layer block sees at least 2^-(n+3) of it.
    #[test]
    fn functional_chain_inequality(n in 4usize..24, dim in 2usize..5, seed in any::<u64>()) {
        let set = random_homogeneous(n, dim, seed).unwrap().with_norm(NormTag::Linf);
        let dec = dyadic_layers(&difference_set(&set).unwrap());
        let chain = build_functional_chain(&dec).unwrap();
        for (&j, pts) in &dec.layers {
            let block = &chain.layers[&j];
            prop_assert!(block.iter().all(|psi| psi.sign.abs() == 1.0));
            for z in pts {
                let best = block
                    .iter()
                    .map(|psi| psi.apply(z.coords()).abs())
                    .fold(0.0, f64::max);
                prop_assert!(
                    best >= pow2(-(i64::from(j) + 3)),
                    "layer {j}: max |psi(z)| = {best}"
                );
            }
        }
    }

    // The same (seed, trial) pair always yields the same matrix, and the
    // certified operator-norm bound dominates every observed image.
    #[test]
    fn probe_map_determinism_and_norm_bound(seed in any::<u64>(), s in 0.55f64..1.6) {
        // Scale into probed range: all pairwise gaps <= 1/4 puts every
        // difference layer at j >= 1.
        let set = random_homogeneous(12, 3, seed ^ 0x9e37_79b9)
            .unwrap()
            .normalized_to_diameter(PROBE_DIAMETER)
            .0;
        let diffs = difference_set(&set).unwrap();
        let dec = dyadic_layers(&diffs);
        let chain = Chain::Ortho(build_orthogonal_chain(&dec).unwrap());
        let cfg = ProbeConfig {
            n_out: 3,
            s_decay: s,
            mode: ProbeMode::Hilbert,
            j_max: dec.j_max().unwrap().max(1),
            seed,
        };
        let a = sample_probe_map_trial(&chain, &cfg, 1).unwrap();
        let b = sample_probe_map_trial(&chain, &cfg, 1).unwrap();
        prop_assert_eq!(&a.matrix_sha256, &b.matrix_sha256);
        prop_assert!(a.matrix.iter().zip(&b.matrix).all(|(x, y)| x.to_bits() == y.to_bits()));
        let other = sample_probe_map_trial(&chain, &cfg, 2).unwrap();
        prop_assert!(a.matrix_sha256 != other.matrix_sha256);

        let bound = a.op_norm_bound(NormTag::L2);
        for z in &diffs.points {
            let img = norm2(&a.apply(z.coords()).unwrap());
            let zn = norm2(z.coords());
            prop_assert!(img <= bound * zn * (1.0 + 1e-12) + 1e-300);
        }
    }

    // One sampled map serves the whole eps grid per trial, so the hit
    // probabilities are exactly monotone in eps and the Wilson interval
    // brackets each estimate.
    #[test]
    fn mu_hat_monotone_in_eps(seed in any::<u64>()) {
        let set = decaying_orthogonal(6).unwrap();
        let dec = dyadic_layers(&difference_set(&set).unwrap());
        let chain = Chain::Ortho(build_orthogonal_chain(&dec).unwrap());
        let cfg = ProbeConfig {
            n_out: 2,
            s_decay: 0.8,
            mode: ProbeMode::Hilbert,
            j_max: dec.j_max().unwrap().max(1),
            seed,
        };
        // The reference curve eps^N j^{sN} needs a probed layer, i.e. j >= 1.
        let (&layer, pts) = dec.layers.iter().find(|(j, _)| **j >= 1).unwrap();
        let z = pts[0].coords();
        let grid = [1e-3, 1e-2, 1e-1, 1.0, 10.0];
        let table = mu_bound_mc(&chain, &cfg, None, z, layer, &grid, 300).unwrap();
        for w in table.rows.windows(2) {
            prop_assert!(w[0].p_hat <= w[1].p_hat);
        }
        for r in &table.rows {
            prop_assert!(r.ci_low <= r.p_hat && r.p_hat <= r.ci_high);
            prop_assert!(r.reference > 0.0);
        }
    }
}
