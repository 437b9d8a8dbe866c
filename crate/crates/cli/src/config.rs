//! Run configuration: defaults, an optional TOML file, then flags.

use std::path::{Path, PathBuf};

use coulomb_sectors::spectral::{DecomposeOptions, RhoGrid, RECONSTRUCT_MIN_LAMBDA};
use coulomb_sectors::verify::{SuiteConfig, FINE_STRUCTURE};
use serde::Deserialize;

/// Default output directory when neither flag nor config file sets one.
pub const OUTPUT_ENV: &str = "COULOMB_SECTORS_OUT";

/// Keys accepted in a `--config` TOML file; all optional.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub e_squared: Option<f64>,
    pub m_max: Option<i32>,
    pub z: Option<f64>,
    pub charge: Option<i32>,
    pub lmax_lambda: Option<f64>,
    pub rho_grid: Option<String>,
    pub tolerance: Option<f64>,
    pub output_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
    }

    /// Fields of `over` replace those of `self`.
    pub fn overlay(self, over: FileConfig) -> FileConfig {
        FileConfig {
            seed: over.seed.or(self.seed),
            e_squared: over.e_squared.or(self.e_squared),
            m_max: over.m_max.or(self.m_max),
            z: over.z.or(self.z),
            charge: over.charge.or(self.charge),
            lmax_lambda: over.lmax_lambda.or(self.lmax_lambda),
            rho_grid: over.rho_grid.or(self.rho_grid),
            tolerance: over.tolerance.or(self.tolerance),
            output_dir: over.output_dir.or(self.output_dir),
        }
    }
}

/// Validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Dimensionless coupling `e²` (in other units, `e²/ħc`).
    pub e_squared: f64,
    pub m_max: i32,
    pub z: Option<f64>,
    pub charge: Option<i32>,
    pub lambda_max: f64,
    pub rho_grid: RhoGrid,
    pub tolerance: Option<f64>,
    pub output_dir: PathBuf,
}

/// `"max:points"`, e.g. `"20:400"`.
pub fn parse_rho_grid(s: &str) -> Result<RhoGrid, String> {
    let (max, points) = s.split_once(':').ok_or_else(|| format!("rho grid '{s}' is not of the form max:points"))?;
    let max: f64 = max.trim().parse().map_err(|_| format!("rho grid maximum '{max}' is not a number"))?;
    let points: usize = points.trim().parse().map_err(|_| format!("rho grid point count '{points}' is not an integer"))?;
    RhoGrid::new(max, points).map_err(|e| e.to_string())
}

impl RunConfig {
    pub fn resolve(merged: FileConfig, env_output: Option<PathBuf>) -> Result<Self, String> {
        let e_squared = merged.e_squared.unwrap_or(FINE_STRUCTURE);
        if !(e_squared > 0.0) || !e_squared.is_finite() {
            return Err(format!("--e-squared must be positive and finite, got {e_squared}"));
        }
        let m_max = merged.m_max.unwrap_or(25);
        if m_max < 1 {
            return Err(format!("--m-max must be at least 1, got {m_max}"));
        }
        if let Some(z) = merged.z {
            if !(z > 0.0) || !z.is_finite() {
                return Err(format!("--z must be positive and finite, got {z}"));
            }
        }
        if merged.charge == Some(0) {
            return Err("--charge 0 is the trivial sector; use a nonzero charge".into());
        }
        let lambda_max = merged.lmax_lambda.unwrap_or(10.0);
        if !(lambda_max > RECONSTRUCT_MIN_LAMBDA) || !lambda_max.is_finite() {
            return Err(format!("--lmax-lambda must exceed {RECONSTRUCT_MIN_LAMBDA}, got {lambda_max}"));
        }
        let rho_grid = match merged.rho_grid.as_deref() {
            Some(s) => parse_rho_grid(s)?,
            None => RhoGrid::default(),
        };
        if let Some(t) = merged.tolerance {
            if !(t > 0.0) || !t.is_finite() {
                return Err(format!("--tolerance must be positive, got {t}"));
            }
        }
        let output_dir = merged.output_dir.or(env_output).unwrap_or_else(|| PathBuf::from("."));
        Ok(Self {
            seed: merged.seed.unwrap_or(1),
            e_squared,
            m_max,
            z: merged.z,
            charge: merged.charge,
            lambda_max,
            rho_grid,
            tolerance: merged.tolerance,
            output_dir,
        })
    }

    /// `--z`, else `e² m² / π` from `--charge`.
    pub fn sector_z(&self) -> Result<f64, String> {
        match (self.z, self.charge) {
            (Some(z), _) => Ok(z),
            (None, Some(m)) => Ok(self.e_squared * f64::from(m).powi(2) / std::f64::consts::PI),
            (None, None) => Err("need --z or --charge".into()),
        }
    }

    pub fn decompose_options(&self) -> DecomposeOptions {
        DecomposeOptions { grid: self.rho_grid, lambda_max: self.lambda_max, ..DecomposeOptions::default() }
    }

    pub fn suite(&self) -> SuiteConfig {
        SuiteConfig {
            seed: self.seed,
            e_squared: self.e_squared,
            m_max: self.m_max,
            decompose: self.decompose_options(),
            tolerance: self.tolerance,
            ..SuiteConfig::default()
        }
    }
}
