//! Command-line front end. Every subcommand is a thin wrapper over the
//! library; all numerical policy lives there. Exit codes: 0 success,
//! 2 validation error, 3 violated mathematical guarantee, 1 I/O trouble.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use embedlab::chain::{build_functional_chain, build_orthogonal_chain, Chain};
use embedlab::covering::assouad_estimate;
use embedlab::cube_slice::{
    queries_from_csv, results_to_csv, section_density, slab_volume_exact, slab_volume_mc,
    verify_ball_bound, SliceQuery,
};
use embedlab::distortion::{
    final_constant_check, fit_gamma_windows, layer_min_ratio, FinalCheck, GammaFit,
};
use embedlab::error::{EmbedError, Result};
use embedlab::experiment::{
    auto_scale_grid, default_eps_grid, j_l_from_profile, load_probe_artifact, resolve_out_dir,
    run_experiment, Envelope, ExperimentConfig,
};
use embedlab::geometry::{difference_set, dyadic_layers, NormTag, PointSet};
use embedlab::linalg::pow2;
use embedlab::probe::{
    mu_bound_mc, sample_probe_map_trial, truncation_report, ProbeConfig, ProbeMode,
};

#[derive(Parser)]
#[command(
    name = "embedlab",
    version,
    about = "Covering geometry, cube sections, and random linear maps with log-Lipschitz inverses"
)]
struct Cli {
    /// Seed override (applies before hashing an experiment config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for file artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; affects speed only, never output bytes.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Cube section densities and slab volumes (Ball's bound).
    Slice {
        /// Unit normal, comma-separated coordinates.
        #[arg(
            long,
            conflicts_with = "queries",
            required_unless_present_any = ["queries", "sweep"]
        )]
        normal: Option<String>,
        /// Rescale the given normal to unit length first.
        #[arg(long)]
        normalize: bool,
        /// Offset along the normal.
        #[arg(long, default_value_t = 0.0)]
        offset: f64,
        /// Slab half-width; 0 asks for the section density only.
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        /// Monte-Carlo samples for a slab estimate (needs eps > 0).
        #[arg(long)]
        mc: Option<u64>,
        /// Batch CSV of queries: a_1,...,a_D,y,eps per row.
        #[arg(long)]
        queries: Option<PathBuf>,
        /// Sweep this many random unit normals instead, checking sqrt(2).
        #[arg(long, conflicts_with_all = ["normal", "queries"])]
        sweep: Option<u64>,
        /// Dimension for --sweep.
        #[arg(long, default_value_t = 5)]
        dim: usize,
    },
    /// Homogeneity (covering) fit of a point set.
    Cover {
        #[arg(long)]
        points: PathBuf,
        /// Ambient norm: l2 or linf.
        #[arg(long, value_parser = parse_norm, default_value = "l2")]
        norm: NormTag,
        /// r:rho pairs, comma-separated; default derives a dyadic grid.
        #[arg(long)]
        grid: Option<String>,
        /// Fit the difference set instead of the set itself.
        #[arg(long)]
        diffs: bool,
    },
    /// Build the layer chain of a point set's difference set.
    Chain {
        #[arg(long)]
        points: PathBuf,
        /// hilbert (orthogonal chain, l2) or banach (functionals, linf).
        #[arg(long, value_parser = parse_mode)]
        mode: ProbeMode,
        /// Chain the set itself rather than its difference set.
        #[arg(long)]
        raw_set: bool,
    },
    /// Draw one probe map over a stored chain.
    Sample {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        n_out: usize,
        #[arg(long)]
        s_decay: f64,
        #[arg(long)]
        j_max: Option<i32>,
        /// Trial index within the seed's stream family.
        #[arg(long, default_value_t = 0)]
        trial: u32,
    },
    /// Small-ball probability table on one dyadic layer.
    Mubound {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        n_out: usize,
        #[arg(long)]
        s_decay: f64,
        #[arg(long)]
        j_max: Option<i32>,
        /// Layer to probe; default is the median probed layer.
        #[arg(long)]
        layer: Option<i32>,
        /// Comma-separated eps grid; default 1e-3..1.
        #[arg(long)]
        eps_grid: Option<String>,
        #[arg(long, default_value_t = 10_000)]
        trials: u32,
    },
    /// Distortion profile of a stored map over a point set's layers.
    Distort {
        /// Map metadata JSON (bare or experiment envelope).
        #[arg(long)]
        map: PathBuf,
        /// Matrix sidecar written next to the JSON.
        #[arg(long)]
        bin: PathBuf,
        #[arg(long)]
        points: PathBuf,
        /// With gamma set, also derive j_L, rho_L and run the final bound.
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Config-driven end-to-end runs.
    Experiment {
        #[command(subcommand)]
        action: ExperimentCmd,
    },
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Execute a JSON config and write all artifacts.
    Run { config: PathBuf },
}

fn parse_norm(s: &str) -> std::result::Result<NormTag, String> {
    match s {
        "l2" => Ok(NormTag::L2),
        "linf" => Ok(NormTag::Linf),
        other => Err(format!("unknown norm {other:?}; use l2 or linf")),
    }
}

fn parse_mode(s: &str) -> std::result::Result<ProbeMode, String> {
    match s {
        "hilbert" => Ok(ProbeMode::Hilbert),
        "banach" => Ok(ProbeMode::Banach),
        other => Err(format!("unknown mode {other:?}; use hilbert or banach")),
    }
}

fn parse_f64_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|e| EmbedError::Parse(format!("{what}: {f:?}: {e}")))
        })
        .collect()
}

fn parse_grid(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(',')
        .map(|pair| {
            let (r, rho) = pair
                .split_once(':')
                .ok_or_else(|| EmbedError::Parse(format!("grid pair {pair:?}: want r:rho")))?;
            Ok((
                r.trim()
                    .parse::<f64>()
                    .map_err(|e| EmbedError::Parse(format!("grid r {r:?}: {e}")))?,
                rho.trim()
                    .parse::<f64>()
                    .map_err(|e| EmbedError::Parse(format!("grid rho {rho:?}: {e}")))?,
            ))
        })
        .collect()
}

fn load_points(path: &Path, norm: NormTag) -> Result<PointSet> {
    let text = std::fs::read_to_string(path)?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "points".into());
    PointSet::from_csv(&text, norm, label)
}

fn load_chain(path: &Path) -> Result<Chain> {
    let text = std::fs::read_to_string(path)?;
    if let Ok(env) = serde_json::from_str::<Envelope<Chain>>(&text) {
        return Ok(env.payload);
    }
    Chain::from_json(&text)
}

fn mode_norm(mode: ProbeMode) -> NormTag {
    match mode {
        ProbeMode::Hilbert => NormTag::L2,
        ProbeMode::Banach => NormTag::Linf,
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_out(dir: &Option<PathBuf>, name: &str, text: &str) -> Result<()> {
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
        std::fs::write(d.join(name), text)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SliceOut {
    dim: usize,
    normal: Vec<f64>,
    offset: f64,
    density: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    slab_volume: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc_volume: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc_stderr: Option<f64>,
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        // Ignore "already initialized": only possible in-process, not here.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let seed = cli.seed.unwrap_or(0);
    match cli.cmd {
        Cmd::Slice {
            normal,
            normalize,
            offset,
            eps,
            mc,
            queries,
            sweep,
            dim,
        } => {
            if let Some(trials) = sweep {
                let rep = verify_ball_bound(dim, trials, seed)?;
                write_out(&cli.out, "sweep.json", &serde_json::to_string_pretty(&rep)?)?;
                return print_json(&rep);
            }
            if let Some(qpath) = queries {
                let qs = queries_from_csv(&std::fs::read_to_string(qpath)?)?;
                let results = qs
                    .iter()
                    .map(slab_volume_exact)
                    .collect::<Result<Vec<_>>>()?;
                let csv = results_to_csv(&results);
                write_out(&cli.out, "slices.csv", &csv)?;
                print!("{csv}");
                return Ok(());
            }
            let mut a = parse_f64_list(&normal.expect("clap guarantees one source"), "normal")?;
            if normalize {
                let n = embedlab::linalg::norm2(&a);
                if n > 0.0 {
                    for c in &mut a {
                        *c /= n;
                    }
                }
            }
            let density = section_density(&a, offset)?;
            let mut out = SliceOut {
                dim: a.len(),
                normal: a.clone(),
                offset,
                density,
                slab_volume: None,
                mc_volume: None,
                mc_stderr: None,
            };
            if eps > 0.0 {
                let q = SliceQuery {
                    a: a.clone(),
                    y: offset,
                    eps,
                };
                out.slab_volume = Some(slab_volume_exact(&q)?.value);
                if let Some(samples) = mc {
                    let r = slab_volume_mc(&q, samples, seed)?;
                    out.mc_volume = Some(r.value);
                    out.mc_stderr = Some(r.stderr);
                }
            } else if mc.is_some() {
                return Err(EmbedError::InvalidParameter(
                    "--mc needs a slab: set --eps > 0".into(),
                ));
            }
            write_out(&cli.out, "slice.json", &serde_json::to_string_pretty(&out)?)?;
            print_json(&out)
        }
        Cmd::Cover {
            points,
            norm,
            grid,
            diffs,
        } => {
            let set = load_points(&points, norm)?;
            let target = if diffs { difference_set(&set)? } else { set };
            let g = match grid {
                Some(s) => parse_grid(&s)?,
                None => auto_scale_grid(target.diameter()),
            };
            let fit = assouad_estimate(&target, &g)?;
            write_out(&cli.out, "cover.json", &serde_json::to_string_pretty(&fit)?)?;
            print_json(&fit)
        }
        Cmd::Chain {
            points,
            mode,
            raw_set,
        } => {
            let set = load_points(&points, mode_norm(mode))?;
            let target = if raw_set { set } else { difference_set(&set)? };
            let dec = dyadic_layers(&target);
            let chain = match mode {
                ProbeMode::Hilbert => Chain::Ortho(build_orthogonal_chain(&dec)?),
                ProbeMode::Banach => Chain::Functional(build_functional_chain(&dec)?),
            };
            let text = chain.to_json()?;
            write_out(&cli.out, "chain.json", &text)?;
            println!("{text}");
            Ok(())
        }
        Cmd::Sample {
            chain,
            n_out,
            s_decay,
            j_max,
            trial,
        } => {
            let chain = load_chain(&chain)?;
            let j_hi = chain.layer_indices().last().copied().unwrap_or(1).max(1);
            let cfg = ProbeConfig {
                n_out,
                s_decay,
                mode: match &chain {
                    Chain::Ortho(_) => ProbeMode::Hilbert,
                    Chain::Functional(_) => ProbeMode::Banach,
                },
                j_max: j_max.unwrap_or(j_hi),
                seed,
            };
            let map = sample_probe_map_trial(&chain, &cfg, trial)?;
            let dir = cli.out.clone().ok_or_else(|| {
                EmbedError::Config("sample writes a binary sidecar: pass --out <dir>".into())
            })?;
            std::fs::create_dir_all(&dir)?;
            map.save(&dir.join("map.json"), &dir.join("map.bin"))?;
            #[derive(Serialize)]
            struct SampleOut<'a> {
                n_out: usize,
                dim: usize,
                mode: ProbeMode,
                j_max: i32,
                matrix_sha256: &'a str,
                op_norm_l2: f64,
                op_norm_linf: f64,
            }
            print_json(&SampleOut {
                n_out: map.n_out,
                dim: map.dim,
                mode: cfg.mode,
                j_max: cfg.j_max,
                matrix_sha256: &map.matrix_sha256,
                op_norm_l2: map.op_norm_bound(NormTag::L2),
                op_norm_linf: map.op_norm_bound(NormTag::Linf),
            })
        }
        Cmd::Mubound {
            chain,
            points,
            n_out,
            s_decay,
            j_max,
            layer,
            eps_grid,
            trials,
        } => {
            let chain = load_chain(&chain)?;
            let mode = match &chain {
                Chain::Ortho(_) => ProbeMode::Hilbert,
                Chain::Functional(_) => ProbeMode::Banach,
            };
            let set = load_points(&points, mode_norm(mode))?;
            let dec = dyadic_layers(&difference_set(&set)?);
            let j_hi = dec.j_max().unwrap_or(1).max(1);
            let cfg = ProbeConfig {
                n_out,
                s_decay,
                mode,
                j_max: j_max.unwrap_or(j_hi),
                seed,
            };
            truncation_report(&chain, &cfg)?;
            let probed: Vec<i32> = dec
                .layers
                .keys()
                .copied()
                .filter(|&j| j >= 1 && j <= cfg.j_max)
                .collect();
            let j = match layer {
                Some(j) => j,
                None => *probed
                    .get(probed.len() / 2)
                    .ok_or(EmbedError::EmptySet("no probed layers with j >= 1"))?,
            };
            let z = dec
                .layers
                .get(&j)
                .and_then(|pts| pts.first())
                .ok_or(EmbedError::EmptySet("requested layer has no points"))?
                .coords()
                .to_vec();
            let grid = match eps_grid {
                Some(s) => parse_f64_list(&s, "eps grid")?,
                None => default_eps_grid(),
            };
            let table = mu_bound_mc(&chain, &cfg, None, &z, j, &grid, trials)?;
            write_out(&cli.out, "mu.csv", &table.to_csv())?;
            print_json(&table)
        }
        Cmd::Distort {
            map,
            bin,
            points,
            gamma,
        } => {
            let map = load_probe_artifact(&map, &bin)?;
            let set = load_points(&points, mode_norm(map.config.mode))?;
            let dec = dyadic_layers(&difference_set(&set)?);
            let mut profile = layer_min_ratio(&map, &dec)?;
            let fits = fit_gamma_windows(&profile);
            #[derive(Serialize)]
            struct DistortOut {
                fits: Vec<GammaFit>,
                #[serde(skip_serializing_if = "Option::is_none")]
                j_l: Option<i32>,
                #[serde(skip_serializing_if = "Option::is_none")]
                rho_l: Option<f64>,
                #[serde(skip_serializing_if = "Option::is_none")]
                final_check: Option<FinalCheck>,
                profile: embedlab::distortion::DistortionProfile,
            }
            let mut out = DistortOut {
                fits,
                j_l: None,
                rho_l: None,
                final_check: None,
                profile: profile.clone(),
            };
            if let Some(g) = gamma {
                let j_l = j_l_from_profile(&profile, g);
                let rho_l = pow2(-(j_l as i64));
                if let Some(fit) = out.fits.first() {
                    profile.apply_fit(fit, rho_l);
                    out.profile = profile.clone();
                }
                out.j_l = Some(j_l);
                out.rho_l = Some(rho_l);
                let diffs = difference_set(&load_points(&points, mode_norm(map.config.mode))?)?;
                out.final_check = Some(final_constant_check(&map, &diffs, g, j_l)?);
            }
            write_out(
                &cli.out,
                "distort.json",
                &serde_json::to_string_pretty(&out)?,
            )?;
            print_json(&out)
        }
        Cmd::Experiment { action } => match action {
            ExperimentCmd::Run { config } => {
                let text = std::fs::read_to_string(&config)?;
                let mut cfg: ExperimentConfig = serde_json::from_str(&text)
                    .map_err(|e| EmbedError::Config(format!("{}: {e}", config.display())))?;
                if let Some(s) = cli.seed {
                    cfg.seed = s;
                }
                let out_dir = resolve_out_dir(&cfg, cli.out.as_deref())?;
                let manifest = run_experiment(&cfg, &out_dir)?;
                #[derive(Serialize)]
                struct RunOut<'a> {
                    out_dir: String,
                    config_sha256: &'a str,
                    s_hom_hat: f64,
                    m_prime: usize,
                    gamma_used: f64,
                    j_l_used: i32,
                    c_l: f64,
                    rho_l: f64,
                    k_bound: f64,
                    c_hat: f64,
                    c_prime_hat: f64,
                    tail_sum: f64,
                    bilip_ok: bool,
                    final_ok: bool,
                }
                print_json(&RunOut {
                    out_dir: out_dir.display().to_string(),
                    config_sha256: &manifest.config_sha256,
                    s_hom_hat: manifest.homogeneity.s_hom_hat,
                    m_prime: manifest.m_prime,
                    gamma_used: manifest.gamma_used,
                    j_l_used: manifest.j_l_used,
                    c_l: manifest.c_l,
                    rho_l: manifest.rho_l,
                    k_bound: manifest.k_bound,
                    c_hat: manifest.mu_table.c_hat,
                    c_prime_hat: manifest.failure.c_prime_hat,
                    tail_sum: manifest.failure.tail_sum,
                    bilip_ok: manifest.bilip.ok,
                    final_ok: manifest.final_check.ok,
                })
            }
        },
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("embedlab: {e}");
        std::process::exit(e.exit_code());
    }
}
