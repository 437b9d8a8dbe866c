//! `coulomb-sectors`: decompositions, sector classification, kernel and Gram
//! exports, and the verification suite.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 numerical boundary, 3 check failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use coulomb_sectors::format::sci;
use coulomb_sectors::geometry::sample_points;
use coulomb_sectors::kernel::{gram, kernel_at, psi, KernelParams};
use coulomb_sectors::spectral::{classify_sectors, decompose, SpectralError};
use coulomb_sectors::verify::run_suite;

use config::{FileConfig, RunConfig, OUTPUT_ENV};

#[derive(Parser, Debug)]
#[command(name = "coulomb-sectors", version, about = "Charge sectors of the coherent overlap kernel on hyperbolic velocity space")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML file with any of the flag values (flags win).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for sampled point sets and random test vectors (default 1)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dimensionless coupling e² (default 1/137.035999).
    #[arg(long, global = true)]
    e_squared: Option<f64>,
    /// Largest |m| classified.
    #[arg(long, global = true)]
    m_max: Option<i32>,
    /// Sector parameter z = e² m² / π.
    #[arg(long, global = true)]
    z: Option<f64>,
    /// Charge m; gives z = e² m² / π when --z is absent.
    #[arg(long, global = true, allow_negative_numbers = true)]
    charge: Option<i32>,
    /// Upper end of the λ range.
    #[arg(long, global = true)]
    lmax_lambda: Option<f64>,
    /// Density grid as max:points.
    #[arg(long, global = true)]
    rho_grid: Option<String>,
    /// Overrides check tolerances.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// Output directory (else $COULOMB_SECTORS_OUT, else the working directory).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify charge sectors |m| ≤ m_max and write classification.csv.
    Classify,
    /// Spectral decomposition of one sector, written to decomposition.json.
    Decompose,
    /// Tabulate ψ and K_z on [0, lmax-lambda] into kernel.csv.
    Kernel {
        #[arg(long, default_value_t = 201)]
        points: usize,
    },
    /// Gram matrix of seeded random points into gram.csv and points.csv.
    Gram {
        #[arg(long, default_value_t = 10)]
        points: usize,
        #[arg(long, default_value_t = 2.0)]
        max_rapidity: f64,
    },
    /// Run the full check suite and write verify.json.
    Verify,
    /// Decompose over a range of z and write sweep.csv.
    Sweep {
        #[arg(long, default_value_t = 0.1)]
        z_min: f64,
        #[arg(long, default_value_t = 3.0)]
        z_max: f64,
        #[arg(long, default_value_t = 30)]
        steps: usize,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Boundary(String),
    Check(String),
    Io(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Io(_) => 1,
            Failure::Boundary(_) => 2,
            Failure::Check(_) => 3,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Io(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.into())
    }
}

fn spectral_failure(e: SpectralError) -> Failure {
    match e {
        SpectralError::Boundary { .. } => Failure::Boundary(e.to_string()),
        SpectralError::Domain(_) | SpectralError::Range { .. } => Failure::Usage(e.to_string()),
        other => Failure::Check(other.to_string()),
    }
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn resolve(global: &GlobalArgs) -> Result<RunConfig, Failure> {
    let file = match &global.config {
        Some(p) => FileConfig::load(p).map_err(Failure::Usage)?,
        None => FileConfig::default(),
    };
    let flags = FileConfig {
        seed: global.seed,
        e_squared: global.e_squared,
        m_max: global.m_max,
        z: global.z,
        charge: global.charge,
        lmax_lambda: global.lmax_lambda,
        rho_grid: global.rho_grid.clone(),
        tolerance: global.tolerance,
        output_dir: global.output_dir.clone(),
    };
    let env = std::env::var_os(OUTPUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    RunConfig::resolve(file.overlay(flags), env).map_err(Failure::Usage)
}

fn classify(cfg: &RunConfig) -> Result<(), Failure> {
    let c = classify_sectors(cfg.e_squared, cfg.m_max).map_err(spectral_failure)?;
    let mut csv = Vec::new();
    c.write_csv(&mut csv)?;
    write_file(&cfg.output_dir, "classification.csv", &csv)?;
    let summary = c.summary();
    write_file(&cfg.output_dir, "classification.txt", summary.as_bytes())?;
    print!("{summary}");
    Ok(())
}

fn decompose_cmd(cfg: &RunConfig) -> Result<(), Failure> {
    let z = cfg.sector_z().map_err(Failure::Usage)?;
    let d = decompose(z, &cfg.decompose_options()).map_err(spectral_failure)?;
    let mut json = d.to_json();
    json.push('\n');
    let path = write_file(&cfg.output_dir, "decomposition.json", json.as_bytes())?;
    match d.discrete {
        Some(c) => println!(
            "z = {}: supplementary component rho0 = {}, weight = {}, casimir = {}",
            sci(z),
            sci(c.rho0),
            sci(c.weight),
            sci(c.casimir)
        ),
        None => println!("z = {}: principal series only", sci(z)),
    }
    println!("reconstruction error = {} -> {}", sci(d.reconstruction_error), path.display());
    let tol = cfg.tolerance.unwrap_or(1e-5);
    if !(d.reconstruction_error <= tol) {
        return Err(Failure::Check(format!(
            "reconstruction error {} exceeds tolerance {}",
            sci(d.reconstruction_error),
            sci(tol)
        )));
    }
    Ok(())
}

fn kernel_cmd(cfg: &RunConfig, points: usize) -> Result<(), Failure> {
    if points < 2 {
        return Err(Failure::Usage("--points must be at least 2".into()));
    }
    let z = cfg.sector_z().map_err(Failure::Usage)?;
    let mut csv = Vec::new();
    writeln!(csv, "lambda,psi,kernel")?;
    for k in 0..points {
        let l = cfg.lambda_max * k as f64 / (points - 1) as f64;
        let p = psi(l).map_err(|e| Failure::Usage(e.to_string()))?;
        let v = kernel_at(z, l).map_err(|e| Failure::Usage(e.to_string()))?;
        writeln!(csv, "{},{},{}", sci(l), sci(p), sci(v))?;
    }
    let path = write_file(&cfg.output_dir, "kernel.csv", &csv)?;
    println!("z = {}: {points} samples on [0, {}] -> {}", sci(z), sci(cfg.lambda_max), path.display());
    Ok(())
}

fn gram_cmd(cfg: &RunConfig, points: usize, max_rapidity: f64) -> Result<(), Failure> {
    let z = cfg.sector_z().map_err(Failure::Usage)?;
    let pts = sample_points(points, max_rapidity, cfg.seed).map_err(|e| Failure::Usage(e.to_string()))?;
    let params = KernelParams::from_z(z).map_err(|e| Failure::Usage(e.to_string()))?;
    let g = gram(&params, &pts).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut csv = Vec::new();
    g.write_csv(&mut csv)?;
    write_file(&cfg.output_dir, "gram.csv", &csv)?;
    let mut pcsv = Vec::new();
    writeln!(pcsv, "t,x,y,z")?;
    for p in &pts {
        let v = p.vector();
        writeln!(pcsv, "{},{},{},{}", sci(v.t), sci(v.x), sci(v.y), sci(v.z))?;
    }
    write_file(&cfg.output_dir, "points.csv", &pcsv)?;
    let min = g.min_eigenvalue();
    println!("{points} points, z = {}: min eigenvalue {}, trace {}", sci(z), sci(min), sci(g.trace()));
    for (i, j) in g.duplicates() {
        eprintln!("warning: points {i} and {j} coincide; the Gram matrix is singular");
    }
    if !g.is_positive_semidefinite() {
        return Err(Failure::Check(format!("Gram matrix not positive semidefinite (min eigenvalue {})", sci(min))));
    }
    Ok(())
}

fn verify_cmd(cfg: &RunConfig) -> Result<(), Failure> {
    let report = run_suite(&cfg.suite());
    let path = write_file(&cfg.output_dir, "verify.json", report.to_json().as_bytes())?;
    for c in &report.checks {
        println!(
            "{} {:<28} max_deviation = {:<24} tolerance = {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.check,
            sci(c.max_deviation),
            sci(c.tolerance)
        );
    }
    println!("report -> {}", path.display());
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Check(format!("failed checks: {}", report.failed.join(", "))))
    }
}

fn sweep_cmd(cfg: &RunConfig, z_min: f64, z_max: f64, steps: usize) -> Result<(), Failure> {
    if !(z_min > 0.0 && z_max >= z_min && z_max.is_finite()) || steps == 0 {
        return Err(Failure::Usage("sweep needs 0 < z-min ≤ z-max and steps ≥ 1".into()));
    }
    let opts = cfg.decompose_options();
    let mut csv = Vec::new();
    writeln!(csv, "z,status,rho0,weight,casimir,min_density,reconstruction_error")?;
    for k in 0..steps {
        let z = if steps == 1 { z_min } else { z_min + (z_max - z_min) * k as f64 / (steps - 1) as f64 };
        match decompose(z, &opts) {
            Ok(d) => {
                let (rho0, weight, casimir) = match d.discrete {
                    Some(c) => (sci(c.rho0), sci(c.weight), sci(c.casimir)),
                    None => (String::new(), String::new(), String::new()),
                };
                let status = if d.discrete.is_some() { "supplementary" } else { "principal" };
                writeln!(
                    csv,
                    "{},{status},{rho0},{weight},{casimir},{},{}",
                    sci(z),
                    sci(d.min_density()),
                    sci(d.reconstruction_error)
                )?;
            }
            Err(SpectralError::Boundary { .. }) => writeln!(csv, "{},boundary,,,,,", sci(z))?,
            Err(e) => {
                eprintln!("z = {}: {e}", sci(z));
                writeln!(csv, "{},error,,,,,", sci(z))?;
            }
        }
    }
    let path = write_file(&cfg.output_dir, "sweep.csv", &csv)?;
    println!("{steps} decompositions on [{}, {}] -> {}", sci(z_min), sci(z_max), path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = resolve(&cli.global)?;
    match cli.command {
        Command::Classify => classify(&cfg),
        Command::Decompose => decompose_cmd(&cfg),
        Command::Kernel { points } => kernel_cmd(&cfg, points),
        Command::Gram { points, max_rapidity } => gram_cmd(&cfg, points, max_rapidity),
        Command::Verify => verify_cmd(&cfg),
        Command::Sweep { z_min, z_max, steps } => sweep_cmd(&cfg, z_min, z_max, steps),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            match f {
                Failure::Usage(m) => eprintln!("usage error: {m}"),
                Failure::Boundary(m) => eprintln!("numerical boundary: {m}"),
                Failure::Check(m) => eprintln!("check failed: {m}"),
                Failure::Io(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(code)
        }
    }
}
