//! Distortion profiles and failure-set statistics for probe maps.
//!
//! The quantity tracked per dyadic layer is the normalized modulus
//! ratio_j = min_{z in Z_j} |Lz| * 2^j. A log-Lipschitz lower inverse
//! corresponds to ratio_j >~ j^{-gamma}; the fit of -log ratio against
//! log j estimates the achieved exponent. `failure_measure` estimates the
//! probability of the bad events
//!
//!   Q_j = { L : some z in Z_j has |(f+L)z| < j^{-gamma} 2^{-j} }
//!
//! over independent probe draws, tabulating per-layer rates with Wilson
//! intervals against the homogeneity heuristic j^{gamma d - N(gamma - s)},
//! whose summability in j is exactly what a Borel-Cantelli argument needs.

use crate::chain::Chain;
use crate::covering::greedy_cover_indices;
use crate::error::{EmbedError, Result};
use crate::geometry::{LayerDecomposition, NormTag, Point, PointSet};
use crate::linalg::{self, pow2};
use crate::probe::{self, ProbeConfig, ProbeMap};
use crate::stats;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistortionProfile {
    /// j -> min_{z in Z_j} |Lz| * 2^j over the stored layer points.
    #[serde(with = "crate::serde_util")]
    pub ratios: BTreeMap<i32, f64>,
    #[serde(with = "crate::serde_util")]
    pub points_per_layer: BTreeMap<i32, usize>,
    /// Filled once a fit has been applied (see [`DistortionProfile::apply_fit`]).
    pub gamma_hat: Option<f64>,
    pub c_fit: Option<f64>,
    /// The radius 2^-j_L below which the fitted bound is claimed.
    pub rho_fit: Option<f64>,
}

impl DistortionProfile {
    pub fn apply_fit(&mut self, fit: &GammaFit, rho_fit: f64) {
        self.gamma_hat = Some(fit.gamma_hat);
        self.c_fit = Some(fit.c_fit);
        self.rho_fit = Some(rho_fit);
    }
}

/// Profiles one fixed map over every stored layer (including j <= 0).
pub fn layer_min_ratio(map: &ProbeMap, dec: &LayerDecomposition) -> Result<DistortionProfile> {
    if dec.dim != map.dim {
        return Err(EmbedError::DimensionMismatch {
            expected: map.dim,
            got: dec.dim,
        });
    }
    if dec.layers.is_empty() {
        return Err(EmbedError::EmptySet("layer decomposition"));
    }
    let mut ratios = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for (&j, pts) in &dec.layers {
        let scale = pow2(j as i64);
        let mut m = f64::INFINITY;
        for z in pts {
            let v = map.apply(z.coords())?;
            m = m.min(linalg::norm2(&v) * scale);
        }
        ratios.insert(j, m);
        counts.insert(j, pts.len());
    }
    Ok(DistortionProfile {
        ratios,
        points_per_layer: counts,
        gamma_hat: None,
        c_fit: None,
        rho_fit: None,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaFit {
    pub gamma_hat: f64,
    /// Lower-envelope constant: ratio_j >= c_fit * j^-gamma_hat on every
    /// fitted layer.
    pub c_fit: f64,
    pub residual: f64,
    pub j_lo: i32,
    pub j_hi: i32,
    pub layers_used: usize,
}

/// Fits ratio_j ~ c j^-gamma on layers j in [j_lo, j_hi] (j >= 1 only; the
/// log weight is meaningless at j <= 0).
pub fn fit_gamma(profile: &DistortionProfile, j_lo: i32, j_hi: i32) -> Result<GammaFit> {
    if j_lo > j_hi {
        return Err(EmbedError::InvalidParameter(format!(
            "empty fit window [{j_lo}, {j_hi}]"
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut js = Vec::new();
    for (&j, &r) in &profile.ratios {
        if j < 1 || j < j_lo || j > j_hi {
            continue;
        }
        if !(r > 0.0) {
            return Err(EmbedError::InjectivityFailure { layer: j });
        }
        xs.push((j as f64).ln());
        ys.push(r.ln());
        js.push(j);
    }
    if js.len() < 3 {
        return Err(EmbedError::TooFewLayers {
            need: 3,
            got: js.len(),
        });
    }
    let (slope, _icept, residual) = stats::ols(&xs, &ys);
    // Normalize -0.0 (flat profiles) so artifacts print a plain zero.
    let gamma_hat = if slope == 0.0 { 0.0 } else { -slope };
    // Envelope constant so the bound is exact on the fitted data, not just
    // in least squares.
    let mut c_fit = f64::INFINITY;
    for (&j, &r) in &profile.ratios {
        if js.contains(&j) {
            c_fit = c_fit.min(r * (j as f64).powf(gamma_hat));
        }
    }
    Ok(GammaFit {
        gamma_hat,
        c_fit,
        residual,
        j_lo: *js.first().unwrap(),
        j_hi: *js.last().unwrap(),
        layers_used: js.len(),
    })
}

/// Fits over three standard windows (full, first half, second half) to make
/// exponent drift visible.
pub fn fit_gamma_windows(profile: &DistortionProfile) -> Vec<GammaFit> {
    let js: Vec<i32> = profile.ratios.keys().copied().filter(|&j| j >= 1).collect();
    let mut out = Vec::new();
    if let (Some(&lo), Some(&hi)) = (js.first(), js.last()) {
        let mid = lo + (hi - lo) / 2;
        for (a, b) in [(lo, hi), (lo, mid), (mid, hi)] {
            if let Ok(fit) = fit_gamma(profile, a, b) {
                out.push(fit);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BilipWitness {
    pub i: usize,
    pub j: usize,
    pub dist: f64,
    pub image_dist: f64,
    pub side: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BilipCheck {
    pub ok: bool,
    pub pairs_checked: usize,
    pub witness: Option<BilipWitness>,
}

/// Checks the two-sided estimate on all pairs x_i, x_j of `x` with
/// 0 < ||x_i - x_j|| <= rho_l:
///
///   |L(x_i - x_j)| <= c_l ||x_i - x_j||                  (upper)
///   c_l |L(x_i - x_j)| |ln ||x_i - x_j|||^gamma >= ||x_i - x_j||  (lower)
///
/// Stops at the first violating pair and reports it.
pub fn verify_almost_bilip(
    map: &ProbeMap,
    x: &PointSet,
    gamma: f64,
    c_l: f64,
    rho_l: f64,
) -> Result<BilipCheck> {
    if !(rho_l > 0.0) || rho_l >= 1.0 {
        return Err(EmbedError::InvalidParameter(format!(
            "rho_l must lie in (0, 1), got {rho_l}"
        )));
    }
    if !(c_l > 0.0) || !c_l.is_finite() {
        return Err(EmbedError::InvalidParameter(format!(
            "c_l must be positive and finite, got {c_l}"
        )));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(EmbedError::InvalidParameter(format!(
            "gamma must be >= 0 and finite, got {gamma}"
        )));
    }
    if x.dim() != map.dim {
        return Err(EmbedError::DimensionMismatch {
            expected: map.dim,
            got: x.dim(),
        });
    }
    let mut pairs_checked = 0usize;
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            let z = x.points[i].sub(&x.points[j]);
            let d = z.norm(x.norm);
            if d == 0.0 || d > rho_l {
                continue;
            }
            pairs_checked += 1;
            let img = linalg::norm2(&map.apply(z.coords())?);
            if img > c_l * d {
                return Ok(BilipCheck {
                    ok: false,
                    pairs_checked,
                    witness: Some(BilipWitness {
                        i,
                        j,
                        dist: d,
                        image_dist: img,
                        side: "upper".into(),
                    }),
                });
            }
            // d < 1 here, so ln d < 0 and the weight is positive.
            let weight = (-d.ln()).powf(gamma);
            if c_l * img * weight < d {
                return Ok(BilipCheck {
                    ok: false,
                    pairs_checked,
                    witness: Some(BilipWitness {
                        i,
                        j,
                        dist: d,
                        image_dist: img,
                        side: "lower".into(),
                    }),
                });
            }
        }
    }
    Ok(BilipCheck {
        ok: true,
        pairs_checked,
        witness: None,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerFailure {
    pub layer: i32,
    /// Size of the greedy net of Z_j at radius j^-gamma 2^-j.
    pub net_size: usize,
    pub threshold: f64,
    pub failures: u32,
    pub mu_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Homogeneity heuristic j^{gamma d - N(gamma - s)}.
    pub reference: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailureReport {
    pub gamma: f64,
    pub d_fit: f64,
    pub n_out: usize,
    pub s_decay: f64,
    pub trials: u32,
    pub layers: Vec<LayerFailure>,
    /// sum_j mu_hat(Q_j) over the computed layers.
    pub tail_sum: f64,
    /// max mu_hat / reference over layers with hits.
    pub c_prime_hat: f64,
    /// Per-map j_L = 1 + deepest failing layer (or the lowest computed
    /// layer for maps that never fail), keyed by j_L value.
    #[serde(with = "crate::serde_util")]
    pub j_l_histogram: BTreeMap<i32, u32>,
    pub j_min_computed: i32,
    /// A histogram entry at j_max_computed + 1 means that map was failing
    /// at the deepest computed layer and has no certified clean range.
    pub j_max_computed: i32,
    /// Whether (gamma, d_fit, N, s) sit in the regime where the reference
    /// series is summable: d_fit < N and gamma > (s N + 1)/(N - d_fit).
    pub summable_regime: bool,
    /// Earliest computed layer from which every later mu_hat is smaller
    /// than its own confidence width (an empirical Cauchy tail signal);
    /// None when the deepest layer still violates that.
    pub cauchy_from: Option<i32>,
    /// max over trials of the certified operator-norm bound of f + L.
    pub k_bound: f64,
}

impl FailureReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("layer,net_size,threshold,failures,mu_hat,ci_low,ci_high,reference\n");
        for l in &self.layers {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                l.layer,
                l.net_size,
                l.threshold,
                l.failures,
                l.mu_hat,
                l.ci_low,
                l.ci_high,
                l.reference
            ));
        }
        out
    }
}

struct LayerPrep {
    layer: i32,
    threshold: f64,
    points: Vec<Point>,
    /// Index into `points` of each point's nearest net center.
    assignment: Vec<usize>,
    net: Vec<usize>,
}

fn prep_layers(dec: &LayerDecomposition, norm: NormTag, gamma: f64, j_max: i32) -> Vec<LayerPrep> {
    let mut out = Vec::new();
    for (&j, pts) in &dec.layers {
        if j < 1 || j > j_max {
            continue;
        }
        let threshold = (j as f64).powf(-gamma) * pow2(-(j as i64));
        let net = greedy_cover_indices(pts, norm, threshold);
        let assignment: Vec<usize> = pts
            .iter()
            .map(|p| {
                let mut best = net[0];
                let mut best_d = f64::INFINITY;
                for &c in &net {
                    let d = norm.dist(&p.0, &pts[c].0);
                    if d < best_d {
                        best_d = d;
                        best = c;
                    }
                }
                best
            })
            .collect();
        out.push(LayerPrep {
            layer: j,
            threshold,
            points: pts.clone(),
            assignment,
            net,
        });
    }
    out
}

/// Estimates mu(Q_j) per layer over `trials` independent probe maps drawn
/// from (chain, cfg), with optional fixed part `f` (row-major n_out x dim).
///
/// A trial fails at layer j when min_z |(f+L)z| < j^-gamma 2^-j over the
/// stored layer points. While scanning, the net-soundness triangle bound
/// |(f+L)z| >= |(f+L)u| - K ||z - u|| (u the assigned net center, K the
/// certified operator-norm bound) is asserted for every point; a violation
/// aborts with an assertion-class error since it would invalidate any
/// net-based extrapolation from the stored points.
pub fn failure_measure(
    chain: &Chain,
    cfg: &ProbeConfig,
    f: Option<&[f64]>,
    dec: &LayerDecomposition,
    gamma: f64,
    d_fit: f64,
    trials: u32,
) -> Result<FailureReport> {
    cfg.validate()?;
    probe::check_mode(chain, cfg)?;
    probe::truncation_report(chain, cfg)?;
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(EmbedError::InvalidParameter(format!(
            "gamma must be >= 0 and finite, got {gamma}"
        )));
    }
    if !(d_fit >= 0.0) || !d_fit.is_finite() {
        return Err(EmbedError::InvalidParameter(format!(
            "d_fit must be >= 0 and finite, got {d_fit}"
        )));
    }
    if trials == 0 {
        return Err(EmbedError::InvalidParameter("trials must be >= 1".into()));
    }
    let dim = chain.dim();
    if dec.dim != dim {
        return Err(EmbedError::DimensionMismatch {
            expected: dim,
            got: dec.dim,
        });
    }
    if let Some(fm) = f {
        if fm.len() != cfg.n_out * dim {
            return Err(EmbedError::DimensionMismatch {
                expected: cfg.n_out * dim,
                got: fm.len(),
            });
        }
    }
    let tag = match chain {
        Chain::Ortho(_) => NormTag::L2,
        Chain::Functional(_) => NormTag::Linf,
    };
    let preps = prep_layers(dec, tag, gamma, cfg.j_max);
    if preps.is_empty() {
        return Err(EmbedError::InvalidParameter(
            "no layers with index in the probed range 1..=j_max".into(),
        ));
    }
    let n_out = cfg.n_out;

    // Per trial: which layers failed, plus the operator-norm bound.
    let per_trial: Result<Vec<(Vec<bool>, f64)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (mut matrix, _) = probe::sample_matrix(chain, cfg, t);
            if let Some(fm) = f {
                for (a, b) in matrix.iter_mut().zip(fm) {
                    *a += b;
                }
            }
            let k_bound = probe::op_norm_bound_matrix(n_out, dim, &matrix, tag);
            let mut fails = Vec::with_capacity(preps.len());
            for prep in &preps {
                let vals: Vec<f64> = prep
                    .points
                    .iter()
                    .map(|p| linalg::norm2(&linalg::mat_vec(n_out, dim, &matrix, &p.0)))
                    .collect();
                for (i, p) in prep.points.iter().enumerate() {
                    let u = prep.assignment[i];
                    let d = tag.dist(&p.0, &prep.points[u].0);
                    let lhs = vals[i];
                    let rhs = vals[u] - k_bound * d;
                    // Tiny relative guard absorbs the rounding of the two
                    // evaluations; the mathematical inequality is strict.
                    if lhs < rhs - 1e-9 * (vals[u] + k_bound * d) {
                        return Err(EmbedError::NetSoundness {
                            layer: prep.layer,
                            detail: format!("|Lz| = {lhs} < {rhs} = |Lu| - K|z-u| (trial {t})"),
                        });
                    }
                }
                let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
                fails.push(min < prep.threshold);
            }
            Ok((fails, k_bound))
        })
        .collect();
    let per_trial = per_trial?;

    let mut fail_counts = vec![0u32; preps.len()];
    let mut histogram: BTreeMap<i32, u32> = BTreeMap::new();
    let j_min_computed = preps.first().unwrap().layer;
    let j_max_computed = preps.last().unwrap().layer;
    let mut k_bound = 0.0f64;
    for (fails, kb) in &per_trial {
        k_bound = k_bound.max(*kb);
        let mut deepest: Option<i32> = None;
        for (prep, &failed) in preps.iter().zip(fails) {
            if failed {
                deepest = Some(prep.layer);
            }
        }
        for (c, &failed) in fail_counts.iter_mut().zip(fails) {
            *c += u32::from(failed);
        }
        let j_l = match deepest {
            Some(j) => j + 1,
            None => j_min_computed,
        };
        *histogram.entry(j_l).or_insert(0) += 1;
    }

    let nf = n_out as f64;
    let mut layers = Vec::with_capacity(preps.len());
    let mut tail_sum = 0.0;
    let mut c_prime_hat = 0.0f64;
    for (prep, &k) in preps.iter().zip(&fail_counts) {
        let mu = k as f64 / trials as f64;
        let (lo, hi) = stats::wilson_interval(k as u64, trials as u64);
        let jf = prep.layer as f64;
        let reference = jf.powf(gamma * d_fit - nf * (gamma - cfg.s_decay));
        if mu > 0.0 && reference > 0.0 {
            c_prime_hat = c_prime_hat.max(mu / reference);
        }
        tail_sum += mu;
        layers.push(LayerFailure {
            layer: prep.layer,
            net_size: prep.net.len(),
            threshold: prep.threshold,
            failures: k,
            mu_hat: mu,
            ci_low: lo,
            ci_high: hi,
            reference,
        });
    }

    let mut cauchy_from = None;
    for l in layers.iter().rev() {
        let width = l.ci_high - l.ci_low;
        if l.mu_hat < width {
            cauchy_from = Some(l.layer);
        } else {
            break;
        }
    }

    let summable_regime = d_fit < nf && gamma > (cfg.s_decay * nf + 1.0) / (nf - d_fit);

    Ok(FailureReport {
        gamma,
        d_fit,
        n_out,
        s_decay: cfg.s_decay,
        trials,
        layers,
        tail_sum,
        c_prime_hat,
        j_l_histogram: histogram,
        j_min_computed,
        j_max_computed,
        summable_regime,
        cauchy_from,
        k_bound,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalWitness {
    pub index: usize,
    pub norm: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalCheck {
    pub ok: bool,
    pub checked: usize,
    pub skipped: usize,
    pub witness: Option<FinalWitness>,
}

/// Verifies the closed-form lower estimate
///
///   |Lz| >= 2^-(1+gamma) ||z|| / |ln ||z|||^gamma
///
/// on every stored z with 0 < ||z|| <= 2^-j_l (norm taken from the set's
/// own tag, which must match the map's domain).
pub fn final_constant_check(
    map: &ProbeMap,
    z_set: &PointSet,
    gamma: f64,
    j_l: i32,
) -> Result<FinalCheck> {
    if j_l < 1 {
        return Err(EmbedError::InvalidParameter(format!(
            "j_l must be >= 1, got {j_l}"
        )));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(EmbedError::InvalidParameter(format!(
            "gamma must be >= 0 and finite, got {gamma}"
        )));
    }
    if z_set.dim() != map.dim {
        return Err(EmbedError::DimensionMismatch {
            expected: map.dim,
            got: z_set.dim(),
        });
    }
    let cut = pow2(-(j_l as i64));
    let coeff = 2f64.powf(-(1.0 + gamma));
    let mut checked = 0usize;
    let mut skipped = 0usize;
    for (idx, p) in z_set.points.iter().enumerate() {
        let d = p.norm(z_set.norm);
        if d == 0.0 || d > cut {
            skipped += 1;
            continue;
        }
        checked += 1;
        let lhs = linalg::norm2(&map.apply(p.coords())?);
        // d <= 2^-j_l <= 1/2, so |ln d| >= ln 2 > 0.
        let rhs = coeff * d / (-d.ln()).powf(gamma);
        if lhs < rhs {
            return Ok(FinalCheck {
                ok: false,
                checked,
                skipped,
                witness: Some(FinalWitness {
                    index: idx,
                    norm: d,
                    lhs,
                    rhs,
                }),
            });
        }
    }
    Ok(FinalCheck {
        ok: true,
        checked,
        skipped,
        witness: None,
    })
}
