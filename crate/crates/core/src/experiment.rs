//! Config-driven experiment runs: one JSON config in, a directory of
//! artifacts out.
//!
//! A run executes the whole pipeline — fixture, difference set, dyadic
//! layers, homogeneity fit, chain, probe sampling, distortion profile,
//! failure measure, small-ball table, final bound — and persists every
//! stage. Outputs are a pure function of the (effective) config: the
//! canonical serialization of the config is hashed with SHA-256 and that
//! hash is recorded in every artifact, so any file can be traced back to
//! the exact run that produced it. Wall-clock timings go to a separate
//! `timings.log` (the one file excluded from the byte-identity contract).

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chain::{build_functional_chain, build_orthogonal_chain, Chain};
use crate::covering::{assouad_estimate, HomogeneityFit};
use crate::distortion::{
    failure_measure, fit_gamma_windows, layer_min_ratio, verify_almost_bilip, BilipCheck,
    DistortionProfile, FailureReport, GammaFit,
};
use crate::distortion::{final_constant_check, FinalCheck};
use crate::error::{EmbedError, Result};
use crate::fixtures::{generate_fixture, FixtureSpec};
use crate::geometry::{difference_set, dyadic_layers, layer_index, NormTag};
use crate::linalg::pow2;
use crate::probe::{
    matrix_bytes, matrix_digest, mu_bound_mc, sample_probe_map_trial, truncation_report,
    MuBoundTable, ProbeConfig, ProbeMap, ProbeMode, TruncationReport,
};
use crate::svg::{render_plot, PlotSpec, Series};

/// Environment variable that overrides the config's output directory (the
/// only environment input the harness reads).
pub const OUT_ENV: &str = "EMBEDLAB_OUT";

/// Target diameter for fixtures entering the probe pipeline: with all
/// pairwise distances <= 1/4, every dyadic layer of the difference set has
/// index j >= 1, i.e. lies in the probed range.
pub const PROBE_DIAMETER: f64 = 0.25;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub label: String,
    pub fixture: FixtureSpec,
    /// Output dimension N of the sampled maps.
    pub n_out: usize,
    pub mode: ProbeMode,
    pub s_decay: f64,
    /// Log exponent for the failure thresholds j^-gamma 2^-j. `None` picks
    /// gamma = (s_decay n_out + 1)/(n_out - d_used) + 0.1, the smallest
    /// summable choice with margin.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// (r, rho) pairs for the homogeneity fit of the difference set; empty
    /// selects a dyadic grid from the difference-set diameter.
    #[serde(default)]
    pub scale_grid: Vec<(f64, f64)>,
    /// Independent probe maps drawn for the failure measure.
    pub trials: u32,
    pub seed: u64,
    /// Trials for the small-ball (mu bound) table.
    pub mu_trials: u32,
    /// eps grid for the small-ball table; empty selects 10^-3 .. 10^0.
    #[serde(default)]
    pub eps_grid: Vec<f64>,
    /// Deepest probed layer; `None` uses the deepest occupied layer.
    #[serde(default)]
    pub j_max: Option<i32>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.label.is_empty() {
            return Err(EmbedError::Config("label must be non-empty".into()));
        }
        // Probe-side parameters get the probe module's own validation so
        // convergence conditions are quoted verbatim at config time.
        ProbeConfig {
            n_out: self.n_out,
            s_decay: self.s_decay,
            mode: self.mode,
            j_max: self.j_max.unwrap_or(1).max(1),
            seed: self.seed,
        }
        .validate()?;
        if self.trials == 0 {
            return Err(EmbedError::Config("trials must be >= 1".into()));
        }
        if self.mu_trials == 0 {
            return Err(EmbedError::Config("mu_trials must be >= 1".into()));
        }
        if let Some(g) = self.gamma {
            if !(g >= 0.0) || !g.is_finite() {
                return Err(EmbedError::Config(format!(
                    "gamma must be >= 0 and finite, got {g}"
                )));
            }
        }
        if let Some(j) = self.j_max {
            if j < 1 {
                return Err(EmbedError::Config(format!("j_max must be >= 1, got {j}")));
            }
        }
        for &e in &self.eps_grid {
            if !(e > 0.0) || !e.is_finite() {
                return Err(EmbedError::Config(format!(
                    "eps grid entries must be positive and finite, got {e}"
                )));
            }
        }
        for &(r, rho) in &self.scale_grid {
            if !(rho > 0.0) || !(r > rho) || !r.is_finite() {
                return Err(EmbedError::Config(format!(
                    "scale grid needs finite r > rho > 0, got ({r}, {rho})"
                )));
            }
        }
        Ok(())
    }

    /// Canonical serialization (pretty JSON of the parsed struct) and its
    /// SHA-256. Hashing the re-serialized form makes the hash a function of
    /// the config *content*, not of the user's file formatting.
    pub fn canonical(&self) -> Result<(String, String)> {
        let text = serde_json::to_string_pretty(self)?;
        Ok((sha256_hex(text.as_bytes()), text))
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Output directory precedence: explicit flag, then EMBEDLAB_OUT, then the
/// config's own `out_dir`.
pub fn resolve_out_dir(cfg: &ExperimentConfig, flag: Option<&Path>) -> Result<PathBuf> {
    if let Some(p) = flag {
        return Ok(p.to_path_buf());
    }
    if let Ok(v) = std::env::var(OUT_ENV) {
        if !v.is_empty() {
            return Ok(PathBuf::from(v));
        }
    }
    cfg.out_dir.clone().ok_or_else(|| {
        EmbedError::Config(format!(
            "no output directory: pass --out, set {OUT_ENV}, or set out_dir in the config"
        ))
    })
}

/// JSON artifact wrapper so every file carries the config hash.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub config_sha256: String,
    pub kind: String,
    pub payload: T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub name: String,
    pub sha256: String,
}

/// Everything a run derived, in one place. Every constant reported in the
/// CSV/SVG artifacts appears here with the stage that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool_version: String,
    pub config_sha256: String,
    pub label: String,

    pub fixture_label: String,
    pub norm: NormTag,
    pub n_points: usize,
    pub dim: usize,
    /// Factor applied to bring the fixture to diameter <= 1/4 (1.0 if
    /// already small enough); see [`PROBE_DIAMETER`].
    pub normalization_scale: f64,
    /// Size of the difference set including the zero vector.
    pub n_diffs: usize,
    pub zero_diffs: usize,
    pub layer_span: (i32, i32),

    /// Covering fit of the difference set: m_hat, s_hom_hat.
    pub homogeneity: HomogeneityFit,
    /// Homogeneity exponent fed to the failure reference (fit + 0.1).
    pub d_used: f64,
    /// Largest per-layer chain dimension.
    pub m_prime: usize,

    pub probe: ProbeConfig,
    pub truncation: TruncationReport,

    pub gamma_used: f64,
    pub gamma_auto: bool,
    /// Log-log fits of the trial-0 profile over full/early/late windows.
    pub gamma_fits: Vec<GammaFit>,
    /// Trial-0 distortion profile with the full-window fit applied.
    pub profile: DistortionProfile,

    /// Aggregate over `trials` maps: per-layer failure measure, C',
    /// j_L histogram, K bound, summability flags.
    pub failure: FailureReport,

    /// Layer probed by the small-ball table (median probed layer; the
    /// witness z is that layer's first stored point).
    pub mu_layer: i32,
    pub mu_table: MuBoundTable,

    /// Threshold layer of the trial-0 map: 1 + its deepest failing layer.
    pub j_l_used: i32,
    /// max over trials of the certified operator-norm bound.
    pub k_bound: f64,
    /// Bi-Lipschitz constant max(2^(1+gamma), k_bound).
    pub c_l: f64,
    /// Radius 2^-j_L below which the log-inverse bound is claimed.
    pub rho_l: f64,
    pub bilip: BilipCheck,
    pub final_check: FinalCheck,

    pub artifacts: Vec<ArtifactRecord>,
    /// Wall-clock step timings live here, outside the determinism contract.
    pub timings_file: String,
}

/// Smallest-with-margin gamma: (s N + 1)/(N - d) + 0.1, the boundary of the
/// summable regime pushed strictly inside.
pub fn auto_gamma(s_decay: f64, n_out: usize, d_used: f64) -> Result<f64> {
    let n = n_out as f64;
    if d_used >= n {
        return Err(EmbedError::Config(format!(
            "auto gamma needs d_used < n_out, got d_used = {d_used:.3} with n_out = {n_out}; \
             set gamma explicitly"
        )));
    }
    Ok((s_decay * n + 1.0) / (n - d_used) + 0.1)
}

/// Dyadic (r, rho) grid spanning ratios 4..32 below the set diameter.
pub fn auto_scale_grid(diameter: f64) -> Vec<(f64, f64)> {
    let r0 = diameter;
    vec![
        (r0, r0 / 4.0),
        (r0, r0 / 8.0),
        (r0, r0 / 16.0),
        (r0, r0 / 32.0),
        (r0 / 2.0, r0 / 8.0),
        (r0 / 2.0, r0 / 16.0),
        (r0 / 4.0, r0 / 16.0),
        (r0 / 4.0, r0 / 32.0),
    ]
}

pub fn default_eps_grid() -> Vec<f64> {
    (0..=12)
        .map(|k| 10f64.powf(-3.0 + 0.25 * k as f64))
        .collect()
}

/// Run-level threshold layer from one map's profile: 1 + the deepest layer
/// j >= 1 with ratio_j < j^-gamma; the lowest probed layer when the map is
/// clean everywhere.
pub fn j_l_from_profile(profile: &DistortionProfile, gamma: f64) -> i32 {
    let mut deepest_fail = None;
    let mut first = None;
    for (&j, &r) in &profile.ratios {
        if j < 1 {
            continue;
        }
        if first.is_none() {
            first = Some(j);
        }
        if r < (j as f64).powf(-gamma) {
            deepest_fail = Some(j);
        }
    }
    match (deepest_fail, first) {
        (Some(j), _) => j + 1,
        (None, Some(j)) => j,
        (None, None) => 1,
    }
}

struct Emitter {
    dir: PathBuf,
    hash: String,
    records: Vec<ArtifactRecord>,
}

impl Emitter {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.records.push(ArtifactRecord {
            name: name.into(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// Text artifact that supports `#` comments: hash goes on line one.
    fn write_csv(&mut self, name: &str, body: &str) -> Result<()> {
        let text = format!("# config_sha256={}\n{}", self.hash, body);
        self.write(name, text.as_bytes())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, kind: &str, payload: &T) -> Result<()> {
        let env = Envelope {
            config_sha256: self.hash.clone(),
            kind: kind.into(),
            payload,
        };
        let mut text = serde_json::to_string_pretty(&env)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn write_svg(&mut self, name: &str, svg: &str) -> Result<()> {
        let text = format!("<!-- config_sha256={} -->\n{}", self.hash, svg);
        self.write(name, text.as_bytes())
    }
}

struct Timings {
    start: Instant,
    lines: Vec<String>,
}

impl Timings {
    fn new() -> Self {
        Timings {
            start: Instant::now(),
            lines: Vec::new(),
        }
    }

    fn mark(&mut self, step: &str) {
        let ms = self.start.elapsed().as_secs_f64() * 1e3;
        self.lines.push(format!("{step},{ms:.3}"));
        self.start = Instant::now();
    }
}

/// Executes the full pipeline for `cfg` and writes all artifacts into
/// `out`. Returns the manifest that was written to `manifest.json`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let (hash, canonical) = cfg.canonical()?;
    std::fs::create_dir_all(out)?;
    let mut em = Emitter {
        dir: out.to_path_buf(),
        hash: hash.clone(),
        records: Vec::new(),
    };
    let mut tm = Timings::new();

    // Fixture, re-tagged with the norm of the model space the mode lives in.
    let norm = match cfg.mode {
        ProbeMode::Hilbert => NormTag::L2,
        ProbeMode::Banach => NormTag::Linf,
    };
    let raw = generate_fixture(&cfg.fixture)?.with_norm(norm);
    // Diameter <= 1/4 puts every nonzero difference in a layer j >= 1, so
    // the probe (which sums blocks with j >= 1) sees the whole chain. A
    // larger set would leave its shallowest block invisible to every
    // sampled map, and points aligned with that block would sit in the
    // kernel of all of them.
    let (x, scale) = raw.normalized_to_diameter(PROBE_DIAMETER);
    let diffs = difference_set(&x)?;
    let dec = dyadic_layers(&diffs);
    let (j_lo, j_hi) = match (dec.j_min(), dec.j_max()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(EmbedError::EmptySet("difference set has no nonzero points")),
    };
    tm.mark("fixture");

    let grid = if cfg.scale_grid.is_empty() {
        auto_scale_grid(diffs.diameter())
    } else {
        cfg.scale_grid.clone()
    };
    let homogeneity = assouad_estimate(&diffs, &grid)?;
    let d_used = homogeneity.s_hom_hat + 0.1;
    let (gamma_used, gamma_auto) = match cfg.gamma {
        Some(g) => (g, false),
        None => (auto_gamma(cfg.s_decay, cfg.n_out, d_used)?, true),
    };
    tm.mark("homogeneity");

    let chain = match cfg.mode {
        ProbeMode::Hilbert => Chain::Ortho(build_orthogonal_chain(&dec)?),
        ProbeMode::Banach => Chain::Functional(build_functional_chain(&dec)?),
    };
    let m_prime = chain.m_prime();
    tm.mark("chain");

    let probe_cfg = ProbeConfig {
        n_out: cfg.n_out,
        s_decay: cfg.s_decay,
        mode: cfg.mode,
        j_max: cfg.j_max.unwrap_or_else(|| j_hi.max(1)),
        seed: cfg.seed,
    };
    let truncation = truncation_report(&chain, &probe_cfg)?;
    let map0 = sample_probe_map_trial(&chain, &probe_cfg, 0)?;
    tm.mark("sample");

    let mut profile = layer_min_ratio(&map0, &dec)?;
    let gamma_fits = fit_gamma_windows(&profile);
    let j_l_used = j_l_from_profile(&profile, gamma_used);
    let rho_l = pow2(-(j_l_used as i64));
    if let Some(fit) = gamma_fits.first() {
        profile.apply_fit(fit, rho_l);
    }
    tm.mark("profile");

    let failure = failure_measure(
        &chain, &probe_cfg, None, &dec, gamma_used, d_used, cfg.trials,
    )?;
    let k_bound = failure.k_bound;
    let c_l = 2f64.powf(1.0 + gamma_used).max(k_bound);
    tm.mark("failure");

    let bilip = verify_almost_bilip(&map0, &x, gamma_used, c_l, rho_l)?;

    // Small-ball table on the median probed layer's first stored point.
    let probed: Vec<i32> = dec
        .layers
        .keys()
        .copied()
        .filter(|&j| j >= 1 && j <= probe_cfg.j_max)
        .collect();
    let mu_layer = *probed
        .get(probed.len() / 2)
        .ok_or(EmbedError::EmptySet("no probed layers with j >= 1"))?;
    let z0 = dec.layers[&mu_layer][0].coords().to_vec();
    let eps_grid = if cfg.eps_grid.is_empty() {
        default_eps_grid()
    } else {
        cfg.eps_grid.clone()
    };
    let mu_table = mu_bound_mc(
        &chain,
        &probe_cfg,
        None,
        &z0,
        mu_layer,
        &eps_grid,
        cfg.mu_trials,
    )?;
    tm.mark("mu");

    let final_check = final_constant_check(&map0, &diffs, gamma_used, j_l_used)?;
    if let Some(w) = &final_check.witness {
        // Any witness strictly inside the clean range j >= j_L contradicts
        // the layer predicate the run just certified for trial 0.
        let wl = layer_index(w.norm);
        if wl >= j_l_used {
            return Err(EmbedError::FinalConstantViolation {
                layer: wl,
                detail: format!(
                    "|Lz| = {:.6e} < {:.6e} at ||z|| = {:.6e} despite clean layers from {}",
                    w.lhs, w.rhs, w.norm, j_l_used
                ),
            });
        }
    }
    tm.mark("final");

    em.write("config.json", canonical.as_bytes())?;
    em.write_csv("points.csv", &x.to_csv())?;
    em.write_csv("diffs.csv", &diffs.to_csv())?;
    em.write_json("chain.json", "chain", &chain)?;
    em.write_json("map0.json", "probe_map", &map0)?;
    em.write("map0.bin", &matrix_bytes(&map0.matrix))?;
    em.write_csv("profile.csv", &profile_csv(&profile, gamma_fits.first()))?;
    em.write_svg("profile.svg", &profile_svg(&profile, gamma_fits.first())?)?;
    em.write_csv("failure.csv", &failure.to_csv())?;
    em.write_svg("failure.svg", &failure_svg(&failure)?)?;
    em.write_csv(
        "mu.csv",
        &format!(
            "# layer={} trials={}\n{}",
            mu_layer,
            cfg.mu_trials,
            mu_table.to_csv()
        ),
    )?;

    let manifest = RunManifest {
        format_version: 1,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: hash.clone(),
        label: cfg.label.clone(),
        fixture_label: x.label.clone(),
        norm,
        n_points: x.len(),
        dim: x.dim(),
        normalization_scale: scale,
        n_diffs: diffs.len(),
        zero_diffs: dec.zero_count,
        layer_span: (j_lo, j_hi),
        homogeneity,
        d_used,
        m_prime,
        probe: probe_cfg,
        truncation,
        gamma_used,
        gamma_auto,
        gamma_fits,
        profile,
        failure,
        mu_layer,
        mu_table,
        j_l_used,
        k_bound,
        c_l,
        rho_l,
        bilip,
        final_check,
        artifacts: em.records.clone(),
        timings_file: "timings.log".into(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(out.join("manifest.json"), text)?;

    tm.mark("emit");
    let timings = format!("# config_sha256={hash}\nstep,ms\n{}\n", tm.lines.join("\n"));
    std::fs::write(out.join("timings.log"), timings)?;
    Ok(manifest)
}

fn profile_csv(profile: &DistortionProfile, fit: Option<&GammaFit>) -> String {
    let mut out = String::new();
    if let Some(f) = fit {
        out.push_str(&format!(
            "# fit: c={} gamma={} window=[{},{}]\n",
            f.c_fit, f.gamma_hat, f.j_lo, f.j_hi
        ));
    }
    out.push_str("layer,points,min_ratio,fit\n");
    for (&j, &r) in &profile.ratios {
        let n = profile.points_per_layer.get(&j).copied().unwrap_or(0);
        let fitted = match fit {
            Some(f) if j >= 1 => format!("{}", f.c_fit * (j as f64).powf(-f.gamma_hat)),
            _ => String::new(),
        };
        out.push_str(&format!("{j},{n},{r},{fitted}\n"));
    }
    out
}

fn profile_svg(profile: &DistortionProfile, fit: Option<&GammaFit>) -> Result<String> {
    let measured: Vec<(f64, f64)> = profile
        .ratios
        .iter()
        .filter(|&(&j, &r)| j >= 1 && r > 0.0)
        .map(|(&j, &r)| (j as f64, r))
        .collect();
    let mut series = vec![Series {
        label: "min ratio".into(),
        points: measured.clone(),
        line: false,
    }];
    if let Some(f) = fit {
        series.push(Series {
            label: format!("fit c j^-{:.3}", f.gamma_hat),
            points: measured
                .iter()
                .map(|&(j, _)| (j, f.c_fit * j.powf(-f.gamma_hat)))
                .collect(),
            line: true,
        });
    }
    render_plot(
        &PlotSpec {
            title: "layer min ratio".into(),
            x_label: "layer j".into(),
            y_label: "min |Lz| 2^j".into(),
            log_x: true,
            log_y: true,
        },
        &series,
    )
}

fn failure_svg(failure: &FailureReport) -> Result<String> {
    let mu: Vec<(f64, f64)> = failure
        .layers
        .iter()
        .map(|l| (l.layer as f64, l.mu_hat))
        .collect();
    let ci: Vec<(f64, f64)> = failure
        .layers
        .iter()
        .map(|l| (l.layer as f64, l.ci_high))
        .collect();
    let reference: Vec<(f64, f64)> = failure
        .layers
        .iter()
        .map(|l| (l.layer as f64, failure.c_prime_hat * l.reference))
        .collect();
    render_plot(
        &PlotSpec {
            title: "per-layer failure measure".into(),
            x_label: "layer j".into(),
            y_label: "mu_hat(Q_j)".into(),
            log_x: false,
            log_y: false,
        },
        &[
            Series {
                label: "mu_hat".into(),
                points: mu,
                line: true,
            },
            Series {
                label: "ci_high".into(),
                points: ci,
                line: false,
            },
            Series {
                label: "c' reference".into(),
                points: reference,
                line: true,
            },
        ],
    )
}

/// Loads a probe map from either the bare two-file format written by
/// [`ProbeMap::save`] or the enveloped `map0.json` an experiment emits.
pub fn load_probe_artifact(json_path: &Path, bin_path: &Path) -> Result<ProbeMap> {
    let text = std::fs::read_to_string(json_path)?;
    let mut map: ProbeMap = match serde_json::from_str::<Envelope<ProbeMap>>(&text) {
        Ok(env) => env.payload,
        Err(_) => serde_json::from_str(&text)?,
    };
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

/// Re-runs of the same effective config must agree byte for byte on every
/// artifact except `timings.log`.
pub fn compare_runs(a: &Path, b: &Path) -> Result<Vec<String>> {
    let manifest: RunManifest =
        serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json"))?)?;
    let mut diffs = Vec::new();
    let mut names: Vec<String> = manifest.artifacts.iter().map(|r| r.name.clone()).collect();
    names.push("manifest.json".into());
    for name in names {
        let x = std::fs::read(a.join(&name))?;
        let y = std::fs::read(b.join(&name))?;
        if x != y {
            diffs.push(name);
        }
    }
    Ok(diffs)
}
