//! Command-line frontend.
//!
//! Exit statuses: 0 success, 1 i/o failure, 2 usage or configuration error,
//! 3 data-validation error, 4 numerical failure under `--strict`.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::decompose::{square_decompose, clip_to_hardware, decompose, decompose_clip_evaluate};
use crate::error::{Error, Result};
use crate::experiments::{
    self, fidelity_sweep, fourier_reflectivity_profile, optimization_benchmark, reflectivity_statistics, Region,
};
use crate::io;
use crate::mesh::{mesh_unitary, sample_hardware, square_layout, HardwareSample, LayoutKind};
use crate::optimize::{enhancement_ratio, format_enhancement, initial_guess_redundant, optimize_settings};
use crate::par;
use crate::unitary::{fidelity, fourier_matrix, haar_random_unitary};

/// Build identifier printed by `--version` and embedded in every sidecar.
pub const BUILD_ID: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Parser)]
#[command(name = "photomesh", version, about = "Compile and simulate imperfect photonic interferometer meshes")]
pub struct Cli {
    /// Worker threads for experiment trials (outputs do not depend on it).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a unitary matrix file.
    Generate(GenerateArgs),
    /// Compile a unitary into mesh settings.
    Decompose(DecomposeArgs),
    /// Compile onto sampled imperfect hardware and report the fidelity.
    Simulate(SimulateArgs),
    /// Optimize settings on sampled hardware, optionally with redundant layers.
    Optimize(OptimizeArgs),
    /// Run a Monte-Carlo harness and write a CSV table plus a JSON sidecar.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MatrixKind {
    Haar,
    Fourier,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Square,
    Triangular,
}

impl From<KindArg> for LayoutKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Square => LayoutKind::Square,
            KindArg::Triangular => LayoutKind::Triangular,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExperimentName {
    Fig2,
    Fig3,
    Fig4,
    Fourier,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    pub kind: MatrixKind,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    pub matrix: PathBuf,
    #[arg(long, value_enum, default_value_t = KindArg::Square)]
    pub kind: KindArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Rebuild the unitary from the written settings and print the max deviation.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub matrix: PathBuf,
    #[arg(long, value_enum, default_value_t = KindArg::Square)]
    pub kind: KindArg,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub report: PathBuf,
    /// Also write the sampled hardware.
    #[arg(long)]
    pub hardware_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    pub matrix: PathBuf,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub extra_layers: usize,
    #[arg(long)]
    pub report: PathBuf,
    /// Also write the optimized settings.
    #[arg(long)]
    pub settings_out: Option<PathBuf>,
    #[arg(long, default_value_t = experiments::BENCH_MAX_ITERS)]
    pub max_iters: usize,
    #[arg(long, default_value_t = experiments::BENCH_TOL)]
    pub tol: f64,
    /// Exit with status 4 if the optimizer does not converge.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    pub name: ExperimentName,
    /// JSON configuration; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Override the master seed of the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the trial (or sample) count of the configuration.
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug)]
pub enum Failure {
    Error(Error),
    NotConverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Error(e) => e.fmt(f),
            Failure::NotConverged(m) => f.write_str(m),
        }
    }
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::NotConverged(_) => 4,
            Failure::Error(Error::Io { .. }) => 1,
            Failure::Error(Error::Format { .. }) => 2,
            Failure::Error(_) => 3,
        }
    }
}

/// Parse the process arguments, run, and map the outcome to an exit status.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
    };
    match run(cli) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}

/// Execute a parsed command and return the one-line summary.
pub fn run(cli: Cli) -> std::result::Result<String, Failure> {
    let jobs = cli.jobs.map(|j| j as usize);
    match cli.command {
        Command::Generate(a) => generate(a).map_err(Failure::from),
        Command::Decompose(a) => decompose_cmd(a).map_err(Failure::from),
        Command::Simulate(a) => simulate(a).map_err(Failure::from),
        Command::Optimize(a) => optimize(a),
        Command::Experiment(a) => par::with_jobs(jobs, || experiment(a)).map_err(Failure::from),
    }
}

fn generate(a: GenerateArgs) -> Result<String> {
    let n = a.n as usize;
    let u = match a.kind {
        MatrixKind::Haar => haar_random_unitary(n, a.seed)?,
        MatrixKind::Fourier => fourier_matrix(n)?,
    };
    io::write_matrix(&a.out, &u)?;
    Ok(format!("wrote {}x{} matrix to {}", n, n, a.out.display()))
}

fn decompose_cmd(a: DecomposeArgs) -> Result<String> {
    let u = io::read_matrix(&a.matrix)?;
    let settings = decompose(&u, a.kind.into())?;
    io::write_settings(&a.out, &settings)?;
    let mut line = format!("wrote {} nodes to {}", settings.per_node().len(), a.out.display());
    if a.verify {
        let back = io::read_settings(&a.out)?;
        let dev = mesh_unitary(&back).max_abs_diff(&u)?;
        line.push_str(&format!("; max deviation {dev:.3e}"));
    }
    Ok(line)
}

#[derive(Serialize)]
struct SimulateReport {
    fidelity: f64,
    affected: bool,
    n_clipped: usize,
    mean_rel_deviation: f64,
    max_rel_deviation: f64,
    sigma: f64,
    seed: u64,
}

fn simulate(a: SimulateArgs) -> Result<String> {
    let u = io::read_matrix(&a.matrix)?;
    let kind: LayoutKind = a.kind.into();
    let layout = experiments::layout_for(kind, u.dim())?;
    let hw = sample_hardware(&layout, a.sigma, a.seed)?;
    let ev = decompose_clip_evaluate(&u, kind, &hw)?;
    let report = SimulateReport {
        fidelity: ev.fidelity,
        affected: ev.affected,
        n_clipped: ev.n_clipped,
        mean_rel_deviation: ev.deviation.mean_rel,
        max_rel_deviation: ev.deviation.max_rel,
        sigma: a.sigma,
        seed: a.seed,
    };
    io::write_json(&a.report, &report)?;
    if let Some(p) = &a.hardware_out {
        io::write_hardware(p, &hw)?;
    }
    Ok(format!(
        "fidelity {:.12} ({} of {} nodes clipped)",
        ev.fidelity,
        ev.n_clipped,
        layout.len()
    ))
}

#[derive(Serialize)]
struct OptimizeReport {
    n: usize,
    extra_layers: usize,
    sigma: f64,
    seed: u64,
    /// Clipped decomposition on the base mesh, no optimization.
    fidelity_direct: f64,
    /// Starting point of the optimizer.
    fidelity_before: f64,
    fidelity_after: f64,
    enhancement: serde_json::Value,
    iterations: usize,
    converged: bool,
}

fn optimize(a: OptimizeArgs) -> std::result::Result<String, Failure> {
    let u = io::read_matrix(&a.matrix)?;
    let n = u.dim();
    let extended = square_layout(n, a.extra_layers)?;
    let base = square_layout(n, 0)?;
    let hw = sample_hardware(&extended, a.sigma, a.seed)?;
    let hw_base = HardwareSample::from_parts(base, a.sigma, a.seed, hw.nodes()[..n * (n - 1) / 2].to_vec())?;
    let (direct, _) = clip_to_hardware(&square_decompose(&u)?, &hw_base)?;
    let fidelity_direct = fidelity(&u, &mesh_unitary(&direct))?;
    let start = initial_guess_redundant(&u, &extended, &hw)?;
    let result = optimize_settings(&u, &extended, &hw, &start, a.max_iters, a.tol)?;
    let ratio = enhancement_ratio(fidelity_direct, result.fidelity_after);
    let report = OptimizeReport {
        n,
        extra_layers: a.extra_layers,
        sigma: a.sigma,
        seed: a.seed,
        fidelity_direct,
        fidelity_before: result.fidelity_before,
        fidelity_after: result.fidelity_after,
        enhancement: enhancement_json(ratio),
        iterations: result.iterations,
        converged: result.converged,
    };
    io::write_json(&a.report, &report)?;
    if let Some(p) = &a.settings_out {
        io::write_settings(p, &result.settings)?;
    }
    let line = format!(
        "fidelity {:.12} -> {:.12}, enhancement {}, {} iterations",
        fidelity_direct,
        result.fidelity_after,
        format_enhancement(ratio),
        result.iterations
    );
    if a.strict && !result.converged {
        return Err(Failure::NotConverged(format!("optimizer did not converge: {line}")));
    }
    Ok(line)
}

/// Finite ratios as numbers, infinity as the string "∞".
fn enhancement_json(ratio: f64) -> serde_json::Value {
    if ratio.is_finite() {
        serde_json::json!(ratio)
    } else {
        serde_json::json!(format_enhancement(ratio))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig2Config {
    pub sizes: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
}

impl Default for Fig2Config {
    fn default() -> Self {
        Fig2Config {
            sizes: vec![20],
            samples: 5000,
            seed: 2024,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig3Config {
    pub sizes: Vec<usize>,
    pub sigmas: Vec<f64>,
    pub trials: usize,
    pub kinds: Vec<LayoutKind>,
    pub seed: u64,
}

impl Default for Fig3Config {
    fn default() -> Self {
        Fig3Config {
            sizes: vec![5, 10, 20, 50],
            sigmas: vec![0.005, 0.01, 0.025, 0.05, 0.1],
            trials: 500,
            kinds: vec![LayoutKind::Square, LayoutKind::Triangular],
            seed: 2024,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig4Config {
    pub sizes: Vec<usize>,
    pub sigma: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for Fig4Config {
    fn default() -> Self {
        Fig4Config {
            sizes: vec![2, 3, 4, 5, 6, 8],
            sigma: 0.05,
            trials: 100,
            seed: 2024,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FourierConfig {
    pub sizes: Vec<usize>,
    pub threshold: f64,
    pub haar_samples: usize,
    pub seed: u64,
}

impl Default for FourierConfig {
    fn default() -> Self {
        FourierConfig {
            sizes: vec![8, 16, 32],
            threshold: 0.1,
            haar_samples: 100,
            seed: 2024,
        }
    }
}

#[derive(Serialize)]
struct Sidecar<C: Serialize> {
    experiment: &'static str,
    version: &'static str,
    seed: u64,
    config: C,
    csv: String,
    summary: serde_json::Value,
}

#[derive(Serialize)]
struct Fig2Row {
    n_modes: usize,
    layer: usize,
    slot: usize,
    top_mode: usize,
    mean_reflectivity: f64,
}

#[derive(Serialize)]
struct LowNode {
    n_modes: usize,
    layer: usize,
    top_mode: usize,
    reflectivity: f64,
    on_diagonal: bool,
}

fn load_config<C: Default + for<'de> Deserialize<'de>>(path: Option<&Path>) -> Result<C> {
    match path {
        Some(p) => io::read_json(p),
        None => Ok(C::default()),
    }
}

fn experiment(a: ExperimentArgs) -> Result<String> {
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let config = a.config.as_deref();
    match a.name {
        ExperimentName::Fig2 => {
            let mut c: Fig2Config = load_config(config)?;
            override_with(&mut c.seed, a.seed);
            override_with(&mut c.samples, a.trials);
            let mut rows = Vec::new();
            let mut stats = Vec::new();
            let mut line = "fig2: no sizes requested".to_string();
            for &n in &c.sizes {
                let s = reflectivity_statistics(n, c.samples, c.seed)?;
                rows.extend(s.mean_reflectivity_map.iter().map(|m| Fig2Row {
                    n_modes: n,
                    layer: m.layer,
                    slot: m.slot,
                    top_mode: m.top_mode,
                    mean_reflectivity: m.mean_reflectivity,
                }));
                if stats.is_empty() {
                    line = format!("fig2: overall mean reflectivity {:.4} at n = {n}", s.overall_mean);
                }
                stats.push(serde_json::json!({
                    "n_modes": s.n_modes,
                    "samples": s.samples,
                    "overall_mean": s.overall_mean,
                    "histograms": s.histograms,
                }));
            }
            let summary = serde_json::json!({
                "bin_width": experiments::HIST_BIN_WIDTH,
                "regions": Region::ALL.iter().map(|r| r.as_str()).collect::<Vec<_>>(),
                "stats": stats,
            });
            write_outputs(&a.out_dir, "fig2", c.seed, &c, &rows, summary)?;
            Ok(line)
        }
        ExperimentName::Fig3 => {
            let mut c: Fig3Config = load_config(config)?;
            override_with(&mut c.seed, a.seed);
            override_with(&mut c.trials, a.trials);
            let mut rows = Vec::new();
            for &kind in &c.kinds {
                rows.extend(fidelity_sweep(&c.sizes, &c.sigmas, c.trials, kind, c.seed)?);
            }
            let line = format!("fig3: {} cells, {} trials each", rows.len(), c.trials);
            let summary = serde_json::json!({ "cells": rows.len() });
            write_outputs(&a.out_dir, "fig3", c.seed, &c, &rows, summary)?;
            Ok(line)
        }
        ExperimentName::Fig4 => {
            let mut c: Fig4Config = load_config(config)?;
            override_with(&mut c.seed, a.seed);
            override_with(&mut c.trials, a.trials);
            let rows = optimization_benchmark(&c.sizes, c.sigma, c.trials, c.seed)?;
            let summary = serde_json::json!({
                "enhancement": rows
                    .iter()
                    .map(|r| serde_json::json!({
                        "n_modes": r.n_modes,
                        "variant": r.variant,
                        "mean_enhancement": enhancement_json(r.mean_enhancement),
                        "pooled_enhancement": enhancement_json(r.pooled_enhancement),
                    }))
                    .collect::<Vec<_>>(),
            });
            let line = format!("fig4: {} rows, {} trials each", rows.len(), c.trials);
            write_outputs(&a.out_dir, "fig4", c.seed, &c, &rows, summary)?;
            Ok(line)
        }
        ExperimentName::Fourier => {
            let mut c: FourierConfig = load_config(config)?;
            override_with(&mut c.seed, a.seed);
            override_with(&mut c.haar_samples, a.trials);
            let rows = fourier_reflectivity_profile(&c.sizes, c.threshold, c.haar_samples, c.seed)?;
            let mut lows = Vec::new();
            for &n in &c.sizes {
                let f = fourier_matrix(n)?;
                for (id, r) in experiments::low_reflectivity_nodes(&f, c.threshold)? {
                    lows.push(LowNode {
                        n_modes: n,
                        layer: id.layer,
                        top_mode: id.top_mode,
                        reflectivity: r,
                        on_diagonal: experiments::on_main_diagonal(&id, n),
                    });
                }
            }
            let line = format!(
                "fourier: low-reflectivity counts {:?}",
                rows.iter().map(|r| r.n_low_nodes).collect::<Vec<_>>()
            );
            let summary = serde_json::json!({ "low_nodes": lows });
            write_outputs(&a.out_dir, "fourier", c.seed, &c, &rows, summary)?;
            Ok(line)
        }
    }
}

fn override_with<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn write_outputs<C: Serialize, R: Serialize>(
    dir: &Path,
    name: &'static str,
    seed: u64,
    config: &C,
    rows: &[R],
    summary: serde_json::Value,
) -> Result<()> {
    let csv_name = format!("{name}.csv");
    let csv_path = dir.join(&csv_name);
    io::write_text(&csv_path, &to_csv(rows, &csv_path)?)?;
    let sidecar = Sidecar {
        experiment: name,
        version: BUILD_ID,
        seed,
        config,
        csv: csv_name,
        summary,
    };
    io::write_json(&dir.join(format!("{name}.json")), &sidecar)
}

fn to_csv<R: Serialize>(rows: &[R], path: &Path) -> Result<String> {
    let fail = |e: &dyn Display| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| fail(&e))?;
    }
    let bytes = w.into_inner().map_err(|e| fail(&e))?;
    String::from_utf8(bytes).map_err(|e| fail(&e))
}
