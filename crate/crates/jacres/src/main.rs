//! Command-line driver: band structure, state catalogs, scattering grids,
//! GLM inversion, resonance reconstruction, and round-trip checks, all
//! emitted as schema-versioned artifacts.

use clap::{Parser, Subcommand, ValueEnum};
use jacres::background::Background;
use jacres::io::{
    self, free_carriers, glm_invert, perturbation_error, BandsArtifact, DrawReport, GlmReport,
    ReconstructionFile, RoundtripReport, RunConfig, ScatteringArtifact, StatesArtifact,
};
use jacres::perturbed::{Perturbation, Perturbed};
use jacres::scattering::{assemble_scattering_data, check_hypothesis1, pole_split, ScatteringData};
use jacres::states::{states, StateList};
use jacres::{JacError, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "jacres",
    version,
    about = "Direct and inverse resonance problems for perturbed periodic Jacobi operators"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Input document: run config, or the artifact consumed by
    /// invert/reconstruct.
    #[arg(long, global = true, default_value = "config.json")]
    config: PathBuf,
    /// Output directory for all artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Override the config's grid size (>= 16).
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Override the config's quadrature tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Override the config's RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// json: canonical artifacts only; csv: also emit CSV companions.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Also emit the SVG figures.
    #[arg(long, global = true)]
    plot: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Band structure of the background: bands.json (+ bands.svg).
    Bands,
    /// State catalog with the law report: states.json + states.svg.
    States,
    /// S-matrix grid and scattering data: scattering.json + scattering.csv.
    Scatter,
    /// Solve the GLM system from a scattering.json document: glm_report.json.
    Invert,
    /// Recover scattering data and the perturbation from a
    /// reconstruction_input.json document: glm_report.json.
    Reconstruct,
    /// Direct -> scattering -> inverse identity check: roundtrip.json.
    Roundtrip,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match cli.command {
        Cmd::Bands => cmd_bands(cli),
        Cmd::States => cmd_states(cli),
        Cmd::Scatter => cmd_scatter(cli),
        Cmd::Invert => cmd_invert(cli),
        Cmd::Reconstruct => cmd_reconstruct(cli),
        Cmd::Roundtrip => cmd_roundtrip(cli),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(grid) = cli.grid {
        cfg.grid = grid;
    }
    if let Some(tol) = cli.tol {
        cfg.tolerances.quadrature_tol = tol;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit_json<T: serde::Serialize>(out: &Path, name: &str, value: &T) -> Result<()> {
    let path = out.join(name);
    io::write_json(&path, value)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn emit_text(out: &Path, name: &str, body: &str) -> Result<()> {
    let path = out.join(name);
    io::write_atomic(&path, body.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_bands(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let back = cfg.build_background()?;
    let art = BandsArtifact::new(&back);
    emit_json(&cli.out, "bands.json", &art)?;
    if cli.format == Format::Csv {
        let mut csv = String::from("j,band_lo,band_hi,gap_hi,mu,alpha,h,closed\n");
        let q = back.bands.n_bands();
        for j in 1..=q {
            let (lo, hi) = back.bands.band(j);
            let (gap_hi, mu, alpha, h, closed) = if j < q {
                (
                    io::fmt_f64(back.bands.edges[2 * j]),
                    io::fmt_f64(back.bands.mu[j - 1]),
                    io::fmt_f64(back.bands.alpha[j - 1]),
                    io::fmt_f64(back.bands.h[j - 1]),
                    back.bands.closed[j - 1].to_string(),
                )
            } else {
                Default::default()
            };
            csv.push_str(&format!(
                "{j},{},{},{gap_hi},{mu},{alpha},{h},{closed}\n",
                io::fmt_f64(lo),
                io::fmt_f64(hi)
            ));
        }
        emit_text(&cli.out, "bands.csv", &csv)?;
    }
    if cli.plot {
        emit_text(&cli.out, "bands.svg", &jacres::plot::bands_svg(&back))?;
    }
    Ok(())
}

fn cmd_states(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let op = cfg.build_perturbed()?;
    let list = states(&op)?;
    let art = StatesArtifact::new(&op, &list);
    let pass = art.laws.pass;
    let detail = art.laws.detail.clone();
    emit_json(&cli.out, "states.json", &art)?;
    emit_text(&cli.out, "states.svg", &jacres::plot::states_svg(&op.back, &list))?;
    if cli.format == Format::Csv {
        let mut csv = String::from("lambda_re,lambda_im,sheet,kind,multiplicity\n");
        for st in &list.states {
            csv.push_str(&format!(
                "{},{},{:?},{:?},{}\n",
                io::fmt_f64(st.lambda[0]),
                io::fmt_f64(st.lambda[1]),
                st.sheet,
                st.kind,
                st.multiplicity
            ));
        }
        emit_text(&cli.out, "states.csv", &csv)?;
    }
    if pass {
        Ok(())
    } else {
        Err(JacError::HypothesisViolation(format!(
            "state laws violated: {}",
            detail.unwrap_or_default()
        )))
    }
}

/// The operator pair behind cmd_scatter: the configured perturbation, or the
/// unperturbed V = 0 operator (empty catalog, zero reflection) without one.
fn scatter_operator(cfg: &RunConfig) -> Result<(jacres::perturbed::Carriers, ScatteringData)> {
    match &cfg.perturbation {
        Some(_) => {
            let op = cfg.build_perturbed()?;
            let list = states(&op)?;
            let sd = assemble_scattering_data(&op, &list)?;
            Ok(((*op).clone(), sd))
        }
        None => {
            let op = free_carriers(cfg.build_background()?);
            let degree = op.f_poly.degree().unwrap_or(0);
            let sd = ScatteringData {
                split: pole_split(&op.back)?,
                states: StateList {
                    states: Vec::new(),
                    degree,
                },
                norming: jacres::scattering::NormingConstants {
                    rho: Vec::new(),
                    gamma_plus: Vec::new(),
                    gamma_minus: Vec::new(),
                },
            };
            Ok((op, sd))
        }
    }
}

fn cmd_scatter(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let (op, sd) = scatter_operator(&cfg)?;
    let art = ScatteringArtifact::from_parts(&op, &sd, cfg.side_sign(), cfg.grid)?;
    emit_json(&cli.out, "scattering.json", &art)?;
    emit_text(&cli.out, "scattering.csv", &art.csv())?;
    if cli.plot {
        emit_text(&cli.out, "bands.svg", &jacres::plot::bands_svg(&op.back))?;
    }
    Ok(())
}

fn cmd_invert(cli: &Cli) -> Result<()> {
    let art: ScatteringArtifact = io::read_json(&cli.config)?;
    let (op, sd) = art.to_operator()?;
    let report = glm_invert(&op, &sd, art.side_sign())?;
    emit_json(&cli.out, "glm_report.json", &report)
}

fn cmd_reconstruct(cli: &Cli) -> Result<()> {
    let file: ReconstructionFile = io::read_json(&cli.config)?;
    let back = file.build_background()?;
    let (op, sd) = jacres::reconstruct::reconstruct_scattering(&file.input, &back)?;
    let report = glm_invert(&op, &sd, 1)?;
    emit_json(&cli.out, "glm_report.json", &report)
}

/// Recover (u, v) from both sides and report the worst coefficient error.
fn round_trip(op: &Perturbed) -> Result<(f64, f64, GlmReport)> {
    let list = states(op)?;
    check_hypothesis1(op, &list)?;
    let sd = assemble_scattering_data(op, &list)?;
    let plus = glm_invert(op, &sd, 1)?;
    let minus = glm_invert(op, &sd, -1)?;
    let err_plus = perturbation_error(&plus.recovered, &op.pert);
    let err_minus = perturbation_error(&minus.recovered, &op.pert);
    let mut report = plus;
    report.reference = Some(op.pert.clone());
    report.max_error = Some(err_plus.max(err_minus));
    Ok((err_plus, err_minus, report))
}

/// Draw a perturbation in the admissible class over `back`, rejecting draws
/// that violate the inversion hypotheses.
fn random_perturbation(rng: &mut ChaCha8Rng, back: &Background) -> Result<Perturbed> {
    for _ in 0..500 {
        let p = rng.gen_range(1..=3usize);
        let mut u: Vec<f64> = (0..=p).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let mut v: Vec<f64> = (0..=p).map(|_| rng.gen_range(-0.8..0.8)).collect();
        if v[0].abs() < 0.2 {
            v[0] = if v[0] >= 0.0 { 0.2 } else { -0.2 };
        }
        if u[p].abs() < 0.1 && v[p].abs() < 0.1 {
            u[p] = if u[p] >= 0.0 { 0.15 } else { -0.15 };
        }
        for (n, un) in u.iter_mut().enumerate() {
            let floor = 0.11 - back.bg.a0(n as i64);
            if *un < floor {
                *un = floor;
            }
        }
        let pert = Perturbation::new(u, v)?;
        let op = match Perturbed::new(back.clone(), pert) {
            Ok(op) => op,
            Err(_) => continue,
        };
        let list = match states(&op) {
            Ok(l) => l,
            Err(_) => continue,
        };
        // states hugging a band edge make the reflection coefficient too
        // spiky for the kernel quadrature
        let near_edge = list.states.iter().any(|s| {
            let z = num_complex::Complex64::new(s.lambda[0], s.lambda[1]);
            op.back.bands.edges.iter().any(|&e| (z - e).norm() < 0.02)
        });
        if !near_edge && check_hypothesis1(&op, &list).is_ok() {
            return Ok(op);
        }
    }
    Err(JacError::Numerical(
        "no admissible perturbation found in 500 draws".into(),
    ))
}

fn cmd_roundtrip(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    if cfg.perturbation.is_none() && cfg.draws == 0 {
        return Err(JacError::Schema(
            "roundtrip needs a perturbation block or draws >= 1".into(),
        ));
    }
    let tolerance = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut draws = Vec::new();
    let mut max_error = 0.0f64;
    let mut index = 0;
    if cfg.perturbation.is_some() {
        let op = cfg.build_perturbed()?;
        let (ep, em, _) = round_trip(&op)?;
        max_error = max_error.max(ep).max(em);
        draws.push(DrawReport {
            index,
            perturbation: op.pert.clone(),
            err_plus: ep,
            err_minus: em,
            pass: ep < tolerance && em < tolerance,
        });
        index += 1;
    }
    let back = cfg.build_background()?;
    for _ in 0..cfg.draws {
        let op = random_perturbation(&mut rng, &back)?;
        let (ep, em, _) = round_trip(&op)?;
        max_error = max_error.max(ep).max(em);
        draws.push(DrawReport {
            index,
            perturbation: op.pert.clone(),
            err_plus: ep,
            err_minus: em,
            pass: ep < tolerance && em < tolerance,
        });
        index += 1;
    }
    let pass = draws.iter().all(|d| d.pass);
    let report = RoundtripReport {
        schema: io::schema_tag("roundtrip"),
        seed: cfg.seed,
        tolerance,
        draws,
        max_error,
        pass,
    };
    emit_json(&cli.out, "roundtrip.json", &report)?;
    if pass {
        Ok(())
    } else {
        Err(JacError::Numerical(format!(
            "round trip error {max_error:.3e} exceeds {tolerance:.1e}"
        )))
    }
}
