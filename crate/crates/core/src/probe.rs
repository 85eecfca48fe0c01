//! Random probe maps L : R^D -> R^N built from a subspace chain.
//!
//! Row n of L is an independent sample of the series sum_{j>=1} j^{-s}
//! phi_{nj}, where phi_{nj} lives in the layer-j block of the chain:
//!
//! * Hilbert model: phi_{nj} = sum_i c_i b_i with (b_i) the orthonormal
//!   block basis and c uniform on the cube [-1/2, 1/2]^{d_j}. Needs
//!   s > 1/2 so the row norm is square-summable.
//! * Banach model: phi_{nj} = sum_i t_i psi_i over the distinct-index
//!   norming functionals, with t uniform on the l_1 unit ball (the dual
//!   unit ball in these coordinates). Needs s > 1 for absolute
//!   convergence in operator norm.
//!
//! Layers j <= 0 carry no probe weight (the series starts at j = 1); they
//! stay in the chain for the projection guarantees and are reported as
//! unprobed. The sum is truncated at j_max, which must leave a relative
//! tail below 1e-6 of the retained mass (trivially satisfied by taking
//! j_max at least the chain depth, since real chains are finite).
//!
//! Sampling is keyed by (seed, trial, row): one ChaCha stream per row, so
//! matrices are reproducible bit for bit under any parallel schedule.

use crate::chain::{Chain, FunctionalChain, OrthoChain, SignedCoord};
use crate::error::{EmbedError, Result};
use crate::geometry::{layer_index, NormTag};
use crate::linalg::{self, pow2};
use crate::rng;
use crate::stats;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeMode {
    Hilbert,
    Banach,
}

impl std::fmt::Display for ProbeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProbeMode::Hilbert => write!(f, "hilbert"),
            ProbeMode::Banach => write!(f, "banach"),
        }
    }
}

impl std::str::FromStr for ProbeMode {
    type Err = EmbedError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hilbert" => Ok(ProbeMode::Hilbert),
            "banach" => Ok(ProbeMode::Banach),
            other => Err(EmbedError::InvalidParameter(format!(
                "unknown probe mode {other:?} (expected \"hilbert\" or \"banach\")"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub n_out: usize,
    pub s_decay: f64,
    pub mode: ProbeMode,
    pub j_max: i32,
    pub seed: u64,
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_out == 0 {
            return Err(EmbedError::InvalidParameter("n_out must be >= 1".into()));
        }
        if !self.s_decay.is_finite() {
            return Err(EmbedError::InvalidParameter(
                "s_decay must be finite".into(),
            ));
        }
        match self.mode {
            ProbeMode::Hilbert => {
                if self.s_decay <= 0.5 {
                    return Err(EmbedError::DecayTooSlow {
                        mode: "hilbert",
                        condition: "s_decay > 1/2 (the layer series must be square-summable)",
                        s_decay: self.s_decay,
                    });
                }
            }
            ProbeMode::Banach => {
                if self.s_decay <= 1.0 {
                    return Err(EmbedError::DecayTooSlow {
                        mode: "banach",
                        condition: "s_decay > 1 (the layer series must be absolutely summable)",
                        s_decay: self.s_decay,
                    });
                }
            }
        }
        if self.j_max < 1 {
            return Err(EmbedError::InvalidParameter(format!(
                "j_max must be >= 1, got {}",
                self.j_max
            )));
        }
        Ok(())
    }
}

/// What the truncation at j_max actually dropped, in the mode's natural
/// summability scale (sum j^-s for Banach, sqrt(sum j^-2s) for Hilbert).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruncationReport {
    pub j_probe_min: i32,
    pub j_probe_max: i32,
    /// Chain layers with j >= 1 beyond j_max that were dropped.
    pub dropped_layers: Vec<i32>,
    /// Chain layers with j <= 0; these never carry probe weight.
    pub unprobed_low_layers: Vec<i32>,
    /// Dropped mass relative to retained mass (0 when nothing is dropped).
    pub neglected_tail_rel: f64,
    /// Tail of the idealized infinite series beyond j_max, relative to the
    /// retained mass: a diagnostic upper bound, not a constraint.
    pub idealized_tail_rel: f64,
}

fn series_mass(mode: ProbeMode, s: f64, js: &[i32]) -> f64 {
    match mode {
        ProbeMode::Banach => js.iter().map(|&j| (j as f64).powf(-s)).sum(),
        ProbeMode::Hilbert => js
            .iter()
            .map(|&j| (j as f64).powf(-2.0 * s))
            .sum::<f64>()
            .sqrt(),
    }
}

fn idealized_tail(mode: ProbeMode, s: f64, j_max: i32) -> f64 {
    let j = j_max as f64;
    match mode {
        ProbeMode::Banach => j.powf(1.0 - s) / (s - 1.0),
        ProbeMode::Hilbert => (j.powf(1.0 - 2.0 * s) / (2.0 * s - 1.0)).sqrt(),
    }
}

/// Computes the truncation report and enforces the tail contract: the
/// dropped mass must stay below 1e-6 of the retained mass.
pub fn truncation_report(chain: &Chain, cfg: &ProbeConfig) -> Result<TruncationReport> {
    let all = chain.layer_indices();
    let unprobed_low: Vec<i32> = all.iter().copied().filter(|&j| j <= 0).collect();
    let probed: Vec<i32> = all
        .iter()
        .copied()
        .filter(|&j| j >= 1 && j <= cfg.j_max)
        .collect();
    let dropped: Vec<i32> = all.iter().copied().filter(|&j| j > cfg.j_max).collect();
    if probed.is_empty() {
        return Err(EmbedError::InvalidParameter(format!(
            "no chain layers in the probed range 1..={}",
            cfg.j_max
        )));
    }
    let retained = series_mass(cfg.mode, cfg.s_decay, &probed);
    let neglected = series_mass(cfg.mode, cfg.s_decay, &dropped);
    let rel = if neglected == 0.0 {
        0.0
    } else {
        neglected / retained
    };
    if rel >= 1e-6 {
        return Err(EmbedError::InvalidParameter(format!(
            "j_max = {} drops a relative tail of {rel:e} (>= 1e-6); raise j_max to at least {}",
            cfg.j_max,
            all.iter().max().unwrap()
        )));
    }
    Ok(TruncationReport {
        j_probe_min: *probed.first().unwrap(),
        j_probe_max: *probed.last().unwrap(),
        dropped_layers: dropped,
        unprobed_low_layers: unprobed_low,
        neglected_tail_rel: rel,
        idealized_tail_rel: idealized_tail(cfg.mode, cfg.s_decay, cfg.j_max) / retained,
    })
}

/// Coefficients of one phi_{nj} in its block basis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhiRecord {
    pub row: usize,
    pub layer: i32,
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeMap {
    pub n_out: usize,
    pub dim: usize,
    /// Row-major n_out x dim matrix; stored out of band (binary sidecar)
    /// when serialized to JSON.
    #[serde(skip)]
    pub matrix: Vec<f64>,
    pub config: ProbeConfig,
    pub phis: Vec<PhiRecord>,
    pub truncation: TruncationReport,
    /// SHA-256 of the matrix bytes (little-endian f64s), for sidecar
    /// integrity.
    pub matrix_sha256: String,
}

pub(crate) fn matrix_bytes(m: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(m.len() * 8);
    for v in m {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub(crate) fn matrix_digest(m: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update(matrix_bytes(m));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl ProbeMap {
    pub fn row(&self, n: usize) -> &[f64] {
        &self.matrix[n * self.dim..(n + 1) * self.dim]
    }

    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dim {
            return Err(EmbedError::DimensionMismatch {
                expected: self.dim,
                got: z.len(),
            });
        }
        Ok(linalg::mat_vec(self.n_out, self.dim, &self.matrix, z))
    }

    /// Certified upper bound for the operator norm (domain norm -> l_2):
    /// Frobenius for an l_2 domain, sqrt(sum of squared row l_1 norms) for
    /// an l_inf domain.
    pub fn op_norm_bound(&self, domain: NormTag) -> f64 {
        op_norm_bound_matrix(self.n_out, self.dim, &self.matrix, domain)
    }

    /// Writes metadata JSON plus a little-endian f64 binary matrix sidecar.
    pub fn save(&self, json_path: &Path, bin_path: &Path) -> Result<()> {
        std::fs::write(bin_path, matrix_bytes(&self.matrix))?;
        std::fs::write(json_path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(json_path: &Path, bin_path: &Path) -> Result<ProbeMap> {
        let mut map: ProbeMap = serde_json::from_str(&std::fs::read_to_string(json_path)?)?;
        let bytes = std::fs::read(bin_path)?;
        if bytes.len() != map.n_out * map.dim * 8 {
            return Err(EmbedError::Parse(format!(
                "matrix sidecar has {} bytes, expected {}",
                bytes.len(),
                map.n_out * map.dim * 8
            )));
        }
        map.matrix = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let digest = matrix_digest(&map.matrix);
        if digest != map.matrix_sha256 {
            return Err(EmbedError::Parse(format!(
                "matrix sidecar digest mismatch: {digest} vs recorded {}",
                map.matrix_sha256
            )));
        }
        Ok(map)
    }
}

pub fn op_norm_bound_matrix(n: usize, d: usize, m: &[f64], domain: NormTag) -> f64 {
    match domain {
        NormTag::L2 => linalg::norm2(m),
        NormTag::Linf => (0..n)
            .map(|r| {
                let l1 = linalg::norm1(&m[r * d..(r + 1) * d]);
                l1 * l1
            })
            .sum::<f64>()
            .sqrt(),
    }
}

/// Distinct-index functionals of a block in first-occurrence order: the
/// sampling basis of V_j in the Banach model.
fn functional_basis(block: &[SignedCoord]) -> Vec<SignedCoord> {
    let mut out: Vec<SignedCoord> = Vec::new();
    for psi in block {
        if !out.iter().any(|q| q.index == psi.index) {
            out.push(*psi);
        }
    }
    out
}

fn sample_row_hilbert<R: Rng>(
    rng: &mut R,
    chain: &OrthoChain,
    cfg: &ProbeConfig,
    row: &mut [f64],
    row_idx: usize,
    phis: &mut Vec<PhiRecord>,
) {
    for (&j, block) in &chain.layers {
        if j < 1 || j > cfg.j_max {
            continue;
        }
        let weight = (j as f64).powf(-cfg.s_decay);
        let coeffs: Vec<f64> = block.iter().map(|_| rng::unit_centered(rng)).collect();
        for (c, b) in coeffs.iter().zip(block) {
            linalg::axpy(row, weight * c, b);
        }
        phis.push(PhiRecord {
            row: row_idx,
            layer: j,
            coeffs,
        });
    }
}

fn sample_row_banach<R: Rng>(
    rng: &mut R,
    chain: &FunctionalChain,
    cfg: &ProbeConfig,
    row: &mut [f64],
    row_idx: usize,
    phis: &mut Vec<PhiRecord>,
) {
    for (&j, block) in &chain.layers {
        if j < 1 || j > cfg.j_max {
            continue;
        }
        let weight = (j as f64).powf(-cfg.s_decay);
        let basis = functional_basis(block);
        let d = basis.len();
        // Uniform on the l_1 unit ball: Dirichlet(1,...,1) spacings over
        // d+1 exponentials give the simplex, independent signs unfold it.
        let g: Vec<f64> = (0..=d).map(|_| rng::exponential(rng)).collect();
        let total: f64 = g.iter().sum();
        let mut coeffs = Vec::with_capacity(d);
        for gi in g.iter().take(d) {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            coeffs.push(sign * gi / total);
        }
        for (t, psi) in coeffs.iter().zip(&basis) {
            row[psi.index] += weight * t * psi.sign;
        }
        phis.push(PhiRecord {
            row: row_idx,
            layer: j,
            coeffs,
        });
    }
}

/// Sampler core without per-call validation; `trial` selects the stream
/// family so repeated draws stay independent yet reproducible.
pub(crate) fn sample_matrix(
    chain: &Chain,
    cfg: &ProbeConfig,
    trial: u32,
) -> (Vec<f64>, Vec<PhiRecord>) {
    let dim = chain.dim();
    let mut matrix = vec![0.0; cfg.n_out * dim];
    let mut phis = Vec::new();
    for row_idx in 0..cfg.n_out {
        let mut rng = rng::trial_stream(cfg.seed, trial, row_idx as u32);
        let row = &mut matrix[row_idx * dim..(row_idx + 1) * dim];
        match chain {
            Chain::Ortho(c) => sample_row_hilbert(&mut rng, c, cfg, row, row_idx, &mut phis),
            Chain::Functional(c) => sample_row_banach(&mut rng, c, cfg, row, row_idx, &mut phis),
        }
    }
    (matrix, phis)
}

pub(crate) fn check_mode(chain: &Chain, cfg: &ProbeConfig) -> Result<()> {
    match (chain, cfg.mode) {
        (Chain::Ortho(_), ProbeMode::Hilbert) => Ok(()),
        (Chain::Functional(_), ProbeMode::Banach) => Ok(()),
        (Chain::Ortho(_), ProbeMode::Banach) => Err(EmbedError::ChainModeMismatch(
            "banach mode needs a functional chain, got an orthogonal chain",
        )),
        (Chain::Functional(_), ProbeMode::Hilbert) => Err(EmbedError::ChainModeMismatch(
            "hilbert mode needs an orthogonal chain, got a functional chain",
        )),
    }
}

/// Samples trial 0 of the probe map family.
pub fn sample_probe_map(chain: &Chain, cfg: &ProbeConfig) -> Result<ProbeMap> {
    sample_probe_map_trial(chain, cfg, 0)
}

/// Samples the `trial`-th independent probe map of the family keyed by
/// `cfg.seed`.
pub fn sample_probe_map_trial(chain: &Chain, cfg: &ProbeConfig, trial: u32) -> Result<ProbeMap> {
    cfg.validate()?;
    check_mode(chain, cfg)?;
    let truncation = truncation_report(chain, cfg)?;
    let (matrix, phis) = sample_matrix(chain, cfg, trial);
    let matrix_sha256 = matrix_digest(&matrix);
    Ok(ProbeMap {
        n_out: cfg.n_out,
        dim: chain.dim(),
        matrix,
        config: cfg.clone(),
        phis,
        truncation,
        matrix_sha256,
    })
}

/// Checks the block-coefficient bounds that uniform sampling guarantees:
/// sup-norm <= 1/2 per block in the Hilbert model, l_1 norm <= 1 in the
/// Banach model.
pub fn check_coefficient_bounds(map: &ProbeMap) -> bool {
    map.phis.iter().all(|p| match map.config.mode {
        ProbeMode::Hilbert => p.coeffs.iter().all(|c| c.abs() <= 0.5),
        ProbeMode::Banach => linalg::norm1(&p.coeffs) <= 1.0 + 1e-12,
    })
}

/// One row of the small-ball table: empirical P(|(f+L)z| < eps 2^-j) with a
/// 95% Wilson interval against the reference curve eps^N j^{sN}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MuBoundRow {
    pub eps: f64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MuBoundTable {
    pub layer: i32,
    pub n_out: usize,
    pub s_decay: f64,
    pub trials: u32,
    pub rows: Vec<MuBoundRow>,
    /// max p_hat / reference over rows with hits; the empirical constant in
    /// front of the reference curve.
    pub c_hat: f64,
}

impl MuBoundTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,p_hat,ci_low,ci_high,reference\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.eps, r.p_hat, r.ci_low, r.ci_high, r.reference
            ));
        }
        out
    }
}

/// Estimates the small-ball probabilities mu{L : |(f+L)z| < eps 2^-j} for a
/// fixed z in layer j over a grid of eps values, from `trials` independent
/// probe maps. `f` is an optional fixed n_out x dim row-major matrix.
pub fn mu_bound_mc(
    chain: &Chain,
    cfg: &ProbeConfig,
    f: Option<&[f64]>,
    z: &[f64],
    layer: i32,
    eps_grid: &[f64],
    trials: u32,
) -> Result<MuBoundTable> {
    cfg.validate()?;
    check_mode(chain, cfg)?;
    truncation_report(chain, cfg)?;
    let dim = chain.dim();
    if z.len() != dim {
        return Err(EmbedError::DimensionMismatch {
            expected: dim,
            got: z.len(),
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
    if eps_grid.is_empty() || eps_grid.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(EmbedError::InvalidParameter(
            "eps grid must be non-empty and strictly positive".into(),
        ));
    }
    if trials == 0 {
        return Err(EmbedError::InvalidParameter("trials must be >= 1".into()));
    }
    let tag = match chain {
        Chain::Ortho(_) => NormTag::L2,
        Chain::Functional(_) => NormTag::Linf,
    };
    let zn = tag.norm(z);
    if zn == 0.0 || layer_index(zn) != layer {
        return Err(EmbedError::InvalidParameter(format!(
            "z has norm {zn}, which is not in layer {layer}"
        )));
    }
    let scale = pow2(-(layer as i64));
    let thresholds: Vec<f64> = eps_grid.iter().map(|e| e * scale).collect();
    let counts: Vec<u64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (matrix, _) = sample_matrix(chain, cfg, t);
            let mut v = linalg::mat_vec(cfg.n_out, dim, &matrix, z);
            if let Some(fm) = f {
                let fv = linalg::mat_vec(cfg.n_out, dim, fm, z);
                for (a, b) in v.iter_mut().zip(fv) {
                    *a += b;
                }
            }
            let m = linalg::norm2(&v);
            thresholds
                .iter()
                .map(|th| u64::from(m < *th))
                .collect::<Vec<u64>>()
        })
        .reduce(
            || vec![0u64; thresholds.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    let n = cfg.n_out as f64;
    let js = layer as f64;
    let mut rows = Vec::with_capacity(eps_grid.len());
    let mut c_hat = 0.0f64;
    for (e, k) in eps_grid.iter().zip(&counts) {
        let p = *k as f64 / trials as f64;
        let (lo, hi) = stats::wilson_interval(*k, trials as u64);
        let reference = e.powf(n) * js.powf(cfg.s_decay * n);
        if p > 0.0 && reference > 0.0 {
            c_hat = c_hat.max(p / reference);
        }
        rows.push(MuBoundRow {
            eps: *e,
            p_hat: p,
            ci_low: lo,
            ci_high: hi,
            reference,
        });
    }
    Ok(MuBoundTable {
        layer,
        n_out: cfg.n_out,
        s_decay: cfg.s_decay,
        trials,
        rows,
        c_hat,
    })
}
