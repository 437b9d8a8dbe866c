//! Spherical (zonal) harmonic analysis of the overlap kernel.
//!
//! For `0 < z < 1` the kernel `K_z` carries a discrete component along the
//! supplementary spherical function `φ_{ρ₀}` with `ρ₀ = 1 - z`; the rest, and
//! all of `K_z` for `z > 1`, is a continuous superposition of principal
//! spherical functions `φ_ρ`, `ρ > 0`.
//!
//! Transform pair used here, with `h(λ) = g(λ) sinh λ`:
//!
//! ```text
//! ĝ(ρ)       = ∫₀^∞ g(λ) φ_ρ(λ) sinh²λ dλ = (1/ρ) ∫₀^∞ h(λ) sin(ρλ) dλ
//! density(ρ) = (2/π) ρ² ĝ(ρ)
//! g(λ)       = ∫₀^∞ density(ρ) φ_ρ(λ) dρ
//! ```
//!
//! so `density` is the spectral density against Lebesgue measure `dρ`.

use std::f64::consts::{LN_2, PI};
use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::format::sci;
use crate::kernel::{kernel_at, log_kernel, KernelError};
use crate::quadrature::{integrate_panels, QuadratureBudget, QuadratureError};

/// Below this angle spherical functions return their limit value 1.
pub const SMALL_ANGLE: f64 = 1e-6;
/// `growth_rate` and `decompose` refuse `|z - 1|` at or below this.
pub const BOUNDARY_BAND: f64 = 1e-6;
/// `classify_sectors` tags `|z_m - 1|` at or below this as boundary sectors.
pub const SECTOR_BOUNDARY_BAND: f64 = 1e-9;
/// Window of the asymptotic least-squares fits.
pub const FIT_WINDOW: (f64, f64) = (20.0, 40.0);
const FIT_SAMPLES: usize = 201;
/// Allowed disagreement between the fitted and closed-form asymptotics.
pub const FIT_TOLERANCE: f64 = 1e-3;
/// Smallest admissible density value.
pub const DENSITY_FLOOR: f64 = -1e-8;
/// The remainder integrand is cut where its envelope falls below this
/// fraction of its peak.
pub const TAIL_FRACTION: f64 = 1e-14;
/// Lower end of the range on which `reconstruct` is validated.
pub const RECONSTRUCT_MIN_LAMBDA: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("parameter out of range: {0}")]
    Domain(String),
    #[error("z = {z} lies within the boundary band around z = 1; neither decomposition branch applies")]
    Boundary { z: f64 },
    #[error("asymptotic fit disagrees with the kernel: residual growth rate {residual_growth_rate:e}")]
    FitMismatch { residual_growth_rate: f64 },
    #[error("remainder does not decay (residual growth rate {growth_rate:e}); quadrature cannot converge")]
    NonConvergent { growth_rate: f64 },
    #[error("negative principal density {value:e} at rho = {rho}")]
    NegativeDensity { rho: f64, value: f64 },
    #[error("lambda = {lambda} outside the validated range [{min}, {max}]")]
    Range { lambda: f64, min: f64, max: f64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Zonal spherical function of a class-one unitary representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SphericalFunction {
    /// `sin(ρλ) / (ρ sinh λ)`, `ρ > 0`.
    Principal { rho: f64 },
    /// `sinh(ρ₀λ) / (ρ₀ sinh λ)`, `0 < ρ₀ < 1`.
    Supplementary { rho0: f64 },
}

impl SphericalFunction {
    pub fn principal(rho: f64) -> Result<Self, SpectralError> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(SpectralError::Domain(format!("principal parameter rho = {rho} must be > 0")));
        }
        Ok(Self::Principal { rho })
    }

    pub fn supplementary(rho0: f64) -> Result<Self, SpectralError> {
        if !(rho0 > 0.0 && rho0 < 1.0) {
            return Err(SpectralError::Domain(format!(
                "supplementary parameter rho0 = {rho0} must lie in (0, 1)"
            )));
        }
        Ok(Self::Supplementary { rho0 })
    }

    pub fn eval(&self, lambda: f64) -> Result<f64, SpectralError> {
        spherical_function(self, lambda)
    }
}

/// `1 / sinh λ` without overflow.
fn inv_sinh(lambda: f64) -> f64 {
    2.0 * (-lambda).exp() / -(-2.0 * lambda).exp_m1()
}

/// `log sinh λ` for `λ > 0`, finite for arbitrarily large `λ`.
pub fn log_sinh(lambda: f64) -> f64 {
    lambda + (-(-2.0 * lambda).exp_m1()).ln() - LN_2
}

pub fn spherical_function(sf: &SphericalFunction, lambda: f64) -> Result<f64, SpectralError> {
    if !(lambda >= 0.0) {
        return Err(SpectralError::Domain(format!("negative angle {lambda}")));
    }
    match *sf {
        SphericalFunction::Principal { rho } => {
            if !(rho > 0.0) {
                return Err(SpectralError::Domain(format!("principal parameter rho = {rho}")));
            }
            if lambda < SMALL_ANGLE {
                return Ok(1.0);
            }
            Ok((rho * lambda).sin() / rho * inv_sinh(lambda))
        }
        SphericalFunction::Supplementary { rho0 } => {
            if !(rho0 > 0.0 && rho0 < 1.0) {
                return Err(SpectralError::Domain(format!("supplementary parameter rho0 = {rho0}")));
            }
            if lambda < SMALL_ANGLE {
                return Ok(1.0);
            }
            // e^{(ρ₀-1)λ} (1 - e^{-2ρ₀λ}) / (ρ₀ (1 - e^{-2λ}))
            let ratio = (-2.0 * rho0 * lambda).exp_m1() / (-2.0 * lambda).exp_m1();
            Ok(((rho0 - 1.0) * lambda).exp() * ratio / rho0)
        }
    }
}

fn check_z(z: f64) -> Result<(), SpectralError> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(SpectralError::Domain(format!("z = {z} must be positive and finite")));
    }
    if (z - 1.0).abs() <= BOUNDARY_BAND {
        return Err(SpectralError::Boundary { z });
    }
    Ok(())
}

fn fit_grid(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    let step = (hi - lo) / (FIT_SAMPLES - 1) as f64;
    (0..FIT_SAMPLES).map(move |i| lo + step * i as f64)
}

/// Least-squares slope of `log(K_z(λ) sinh λ)` over [`FIT_WINDOW`].
///
/// The slope tends to `1 - z`; it is positive exactly when a supplementary
/// component is present.
pub fn growth_rate(z: f64) -> Result<f64, SpectralError> {
    growth_rate_over(z, FIT_WINDOW.0, FIT_WINDOW.1)
}

pub fn growth_rate_over(z: f64, lambda_min: f64, lambda_max: f64) -> Result<f64, SpectralError> {
    check_z(z)?;
    if !(lambda_min > 0.0 && lambda_max > lambda_min) {
        return Err(SpectralError::Domain("fit window must satisfy 0 < min < max".into()));
    }
    let samples = fit_grid(lambda_min, lambda_max)
        .map(|l| Ok((l, log_kernel(z, l)? + log_sinh(l))))
        .collect::<Result<Vec<_>, KernelError>>()?;
    Ok(ls_slope(&samples))
}

fn ls_slope(samples: &[(f64, f64)]) -> f64 {
    let n = samples.len() as f64;
    let mx = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sxy: f64 = samples.iter().map(|s| (s.0 - mx) * (s.1 - my)).sum();
    let sxx: f64 = samples.iter().map(|s| (s.0 - mx) * (s.0 - mx)).sum();
    sxy / sxx
}

/// Least-squares constant fit of `2ρ₀ K_z(λ) sinh λ e^{-ρ₀λ}` over
/// [`FIT_WINDOW`], i.e. the weight of `φ_{ρ₀}` in the large-λ asymptote.
pub fn discrete_weight(z: f64, rho0: f64) -> Result<f64, SpectralError> {
    let values = fit_grid(FIT_WINDOW.0, FIT_WINDOW.1)
        .map(|l| Ok(((2.0 * rho0).ln() + log_kernel(z, l)? + log_sinh(l) - rho0 * l).exp()))
        .collect::<Result<Vec<_>, KernelError>>()?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Uniform grid `ρ_k = k·max/(points-1)`, `k = 0..points`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoGrid {
    pub max: f64,
    pub points: usize,
}

impl Default for RhoGrid {
    fn default() -> Self {
        Self { max: 20.0, points: 400 }
    }
}

impl RhoGrid {
    pub fn new(max: f64, points: usize) -> Result<Self, SpectralError> {
        if !(max > 0.0) || !max.is_finite() || points < 2 {
            return Err(SpectralError::Domain(format!("rho grid needs max > 0 and ≥ 2 points, got {max}:{points}")));
        }
        Ok(Self { max, points })
    }

    pub fn step(&self) -> f64 {
        self.max / (self.points - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.points).map(|k| h * k as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecomposeOptions {
    pub grid: RhoGrid,
    pub budget: QuadratureBudget,
    /// Upper end of the validated reconstruction range.
    pub lambda_max: f64,
    /// Range and sample count of the reconstruction-error scan.
    pub check_range: (f64, f64),
    pub check_points: usize,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        Self {
            grid: RhoGrid::default(),
            budget: QuadratureBudget::default(),
            lambda_max: 10.0,
            check_range: (0.1, 5.0),
            check_points: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscreteComponent {
    pub rho0: f64,
    pub weight: f64,
    pub casimir: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub z: f64,
    pub discrete: Option<DiscreteComponent>,
    pub rho: Vec<f64>,
    pub density: Vec<f64>,
    pub reconstruction_error: f64,
    pub lambda_max: f64,
}

#[derive(Serialize)]
struct DecompositionRecord<'a> {
    z: f64,
    discrete: Option<&'a DiscreteComponent>,
    density: Vec<[f64; 2]>,
    reconstruction_error: f64,
}

impl SpectralDecomposition {
    pub fn min_density(&self) -> f64 {
        self.density.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Value of the reconstruction at `λ = 0`, where every spherical function is 1.
    pub fn origin_value(&self) -> f64 {
        let w0 = self.discrete.map_or(0.0, |d| d.weight);
        w0 + self.trapezoid(|_| 1.0)
    }

    fn trapezoid<F: Fn(f64) -> f64>(&self, phi: F) -> f64 {
        let n = self.rho.len();
        let h = if n > 1 { self.rho[1] - self.rho[0] } else { 0.0 };
        let mut acc = 0.0;
        for (k, (&rho, &d)) in self.rho.iter().zip(&self.density).enumerate() {
            if d == 0.0 {
                continue;
            }
            let w = if k == 0 || k + 1 == n { 0.5 * h } else { h };
            acc += w * d * phi(rho);
        }
        acc
    }

    /// JSON record `{z, discrete, density: [[rho, value], …], reconstruction_error}`.
    pub fn to_json(&self) -> String {
        let record = DecompositionRecord {
            z: self.z,
            discrete: self.discrete.as_ref(),
            density: self.rho.iter().zip(&self.density).map(|(&r, &d)| [r, d]).collect(),
            reconstruction_error: self.reconstruction_error,
        };
        serde_json::to_string_pretty(&record).expect("plain data serializes")
    }
}

/// `m(λ) = exp(-z·ε(λ)) (1 - e^{-2λ}) - 1` with `ε(λ) = λ coth λ - λ`.
///
/// `K_z(λ) sinh λ = ½ e^{z} e^{-zλ} e^{λ} (1 + m(λ))`, and `m` decays like
/// `(2zλ + 1) e^{-2λ}`.
fn asymptotic_defect(z: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return -1.0;
    }
    let eps = 2.0 * lambda / (2.0 * lambda).exp_m1();
    (-z * eps + ln_one_minus_exp(-2.0 * lambda)).exp_m1()
}

/// `ln(1 - e^{x})` for `x < 0`, accurate at both ends.
fn ln_one_minus_exp(x: f64) -> f64 {
    if x > -LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// From here on the remainder `K_z sinh λ` decays at least like `e^{-λ}` and is
/// transformed directly; splitting off `e^{z} e^{-aλ}` would cancel
/// catastrophically for large `z`.
pub const DIRECT_TRANSFORM_FROM_Z: f64 = 2.0;

/// Numerically integrated part of `h(λ) = g(λ) sinh λ`.
///
/// Below [`DIRECT_TRANSFORM_FROM_Z`] this is `e^{±aλ} m(λ)` with `a = |1 - z|`
/// (`+` when a discrete term was removed); above it, `K_z(λ) sinh λ` itself.
fn remainder_tail(z: f64, lambda: f64) -> f64 {
    if z >= DIRECT_TRANSFORM_FROM_Z {
        if lambda == 0.0 {
            return 0.0;
        }
        return (-z * crate::kernel::psi(lambda).unwrap_or(f64::NAN) + log_sinh(lambda)).exp();
    }
    let a = (1.0 - z).abs();
    let sign = if z < 1.0 { 1.0 } else { -1.0 };
    (sign * a * lambda).exp() * asymptotic_defect(z, lambda)
}

/// Where the remainder envelope drops below [`TAIL_FRACTION`] of its peak.
fn tail_cut(z: f64) -> Result<f64, SpectralError> {
    const STEP: f64 = 0.05;
    let mut peak: f64 = 0.0;
    let mut below = 0;
    let mut history = Vec::new();
    let mut k = 1;
    loop {
        let lambda = STEP * f64::from(k);
        if lambda > 700.0 {
            break;
        }
        let e = remainder_tail(z, lambda).abs();
        if !e.is_finite() {
            break;
        }
        peak = peak.max(e);
        history.push((lambda, e.max(f64::MIN_POSITIVE).ln()));
        if e < TAIL_FRACTION * peak {
            below += 1;
            if below == 40 {
                return Ok(lambda);
            }
        } else {
            below = 0;
        }
        k += 1;
    }
    let tail = &history[history.len().saturating_sub(400)..];
    Err(SpectralError::NonConvergent { growth_rate: ls_slope(tail) })
}

/// `ĝ(ρ)` of the remainder `g = K_z - w₀ φ_{ρ₀}` (or `K_z` for `z > 1`).
///
/// For `z < 2`, `h(λ) = g(λ) sinh λ = ½ e^{z} [e^{-aλ} + e^{±aλ} m(λ)]`; the
/// first term transforms in closed form,
/// `∫₀^∞ e^{-aλ} sin(ρλ) dλ = ρ / (ρ² + a²)`, so the slow decay near `z = 1`
/// never reaches the quadrature.
pub fn principal_transform(z: f64, rho: f64, budget: &QuadratureBudget) -> Result<f64, SpectralError> {
    check_z(z)?;
    if !(rho > 0.0) {
        return Err(SpectralError::Domain(format!("rho = {rho} must be > 0")));
    }
    let cut = tail_cut(z)?;
    Ok(remainder_transform(z, rho, cut, budget)? / rho)
}

/// `density(ρ) = (2/π) ρ² ĝ(ρ)` at a single `ρ > 0`.
pub fn principal_density(z: f64, rho: f64, budget: &QuadratureBudget) -> Result<f64, SpectralError> {
    Ok((2.0 / PI) * rho * rho * principal_transform(z, rho, budget)?)
}

/// `ρ ĝ(ρ)`.
fn remainder_transform(z: f64, rho: f64, cut: f64, budget: &QuadratureBudget) -> Result<f64, SpectralError> {
    let width = (PI / rho).min(1.0).min(cut / 8.0);
    let panels = (cut / width).ceil() as usize;
    let breaks: Vec<f64> = (0..=panels).map(|k| (k as f64 * width).min(cut)).collect();
    let tail = integrate_panels(|l| remainder_tail(z, l) * (rho * l).sin(), &breaks, budget)?;
    if z >= DIRECT_TRANSFORM_FROM_Z {
        return Ok(tail.value);
    }
    let a = (1.0 - z).abs();
    Ok(0.5 * z.exp() * (rho / (rho * rho + a * a) + tail.value))
}

/// Splits `K_z` into its discrete supplementary term (if any) and the
/// principal-series density sampled on `opts.grid`.
pub fn decompose(z: f64, opts: &DecomposeOptions) -> Result<SpectralDecomposition, SpectralError> {
    check_z(z)?;
    if !(opts.lambda_max > RECONSTRUCT_MIN_LAMBDA) {
        return Err(SpectralError::Domain("lambda_max must exceed the validated minimum".into()));
    }
    let rate = growth_rate(z)?;
    let closed_form_rate = 1.0 - z;
    let residual = rate - closed_form_rate;
    if residual.abs() > FIT_TOLERANCE {
        return Err(SpectralError::FitMismatch { residual_growth_rate: residual });
    }

    let discrete = if rate > 0.0 {
        let weight = discrete_weight(z, rate)?;
        let expected = closed_form_rate * z.exp();
        if (weight - expected).abs() > FIT_TOLERANCE * expected.max(1.0) {
            return Err(SpectralError::FitMismatch { residual_growth_rate: (weight / expected).ln() / FIT_WINDOW.1 });
        }
        Some(DiscreteComponent { rho0: rate, weight, casimir: z * (2.0 - z) })
    } else {
        None
    };
    if discrete.is_some() != (z < 1.0) {
        return Err(SpectralError::FitMismatch { residual_growth_rate: residual });
    }

    // The subtraction itself uses the closed-form asymptote: fitted values carry
    // O(1e-16) noise that e^{ρ₀λ} would amplify without bound in the tail.
    let cut = tail_cut(z)?;
    let rho = opts.grid.values();
    let density = rho
        .iter()
        .map(|&r| {
            if r == 0.0 {
                Ok(0.0)
            } else {
                Ok((2.0 / PI) * r * remainder_transform(z, r, cut, &opts.budget)?)
            }
        })
        .collect::<Result<Vec<f64>, SpectralError>>()?;

    if let Some((&r, &d)) = rho.iter().zip(&density).find(|(_, &d)| d < DENSITY_FLOOR) {
        return Err(SpectralError::NegativeDensity { rho: r, value: d });
    }

    let mut out = SpectralDecomposition {
        z,
        discrete,
        rho,
        density,
        reconstruction_error: f64::NAN,
        lambda_max: opts.lambda_max,
    };
    let (lo, hi) = opts.check_range;
    let n = opts.check_points.max(2);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let l = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let err = (reconstruct(&out, l)? - kernel_at(z, l)?).abs();
        worst = worst.max(err);
    }
    out.reconstruction_error = worst;
    Ok(out)
}

/// `w₀ φ_{ρ₀}(λ) + ∫ density(ρ) φ_ρ(λ) dρ`, the integral by the trapezoid
/// rule on the decomposition grid (spectrally accurate: the integrand is
/// even and analytic in `ρ` and decays exponentially).
pub fn reconstruct(d: &SpectralDecomposition, lambda: f64) -> Result<f64, SpectralError> {
    if !(lambda >= RECONSTRUCT_MIN_LAMBDA && lambda <= d.lambda_max) {
        return Err(SpectralError::Range { lambda, min: RECONSTRUCT_MIN_LAMBDA, max: d.lambda_max });
    }
    let discrete = match d.discrete {
        Some(c) => c.weight * spherical_function(&SphericalFunction::Supplementary { rho0: c.rho0 }, lambda)?,
        None => 0.0,
    };
    let s = inv_sinh(lambda);
    Ok(discrete + d.trapezoid(|rho| (rho * lambda).sin() / rho * s))
}

/// Representation content of one charge sector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "content")]
pub enum SectorContent {
    /// `m = 0`: the kernel is identically 1.
    Trivial,
    WithSupplementary { rho0: f64 },
    PrincipalOnly,
    Boundary,
}

impl SectorContent {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::Trivial => "trivial",
            Self::WithSupplementary { .. } => "with-supplementary",
            Self::PrincipalOnly => "principal-only",
            Self::Boundary => "boundary",
        }
    }

    pub fn rho0(&self) -> Option<f64> {
        match self {
            Self::WithSupplementary { rho0 } => Some(*rho0),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sector {
    pub m: i32,
    pub z: f64,
    pub content: SectorContent,
    pub class_id: String,
}

pub const PRINCIPAL_CLASS: &str = "principal";
pub const TRIVIAL_CLASS: &str = "trivial";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectorClassification {
    pub e_squared: f64,
    pub m_max: i32,
    /// `√(π/e²)`.
    pub threshold: f64,
    /// Least natural number `n` with `threshold ≤ n`.
    pub integer_part: u64,
    pub sectors: Vec<Sector>,
}

/// Least natural number `n ≥ 1` with `x ≤ n`. Values within `1e-9` relative
/// of an integer are treated as that integer.
pub fn least_natural_at_least(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        return (r as u64).max(1);
    }
    (x.ceil() as u64).max(1)
}

/// Assigns every sector `|m| ≤ m_max` its content and equivalence class.
pub fn classify_sectors(e_squared: f64, m_max: i32) -> Result<SectorClassification, SpectralError> {
    if !(e_squared > 0.0) || !e_squared.is_finite() {
        return Err(SpectralError::Domain(format!("e² = {e_squared} must be positive")));
    }
    if m_max < 1 {
        return Err(SpectralError::Domain(format!("m_max = {m_max} must be ≥ 1")));
    }
    let threshold = (PI / e_squared).sqrt();
    let sectors = (-m_max..=m_max)
        .map(|m| {
            let mf = f64::from(m);
            let z = e_squared * mf * mf / PI;
            let abs = m.unsigned_abs();
            let (content, class_id) = if m == 0 {
                (SectorContent::Trivial, TRIVIAL_CLASS.to_string())
            } else if (z - 1.0).abs() <= SECTOR_BOUNDARY_BAND {
                (SectorContent::Boundary, format!("boundary-{abs}"))
            } else if z < 1.0 {
                (SectorContent::WithSupplementary { rho0: 1.0 - z }, format!("supplementary-{abs}"))
            } else {
                (SectorContent::PrincipalOnly, PRINCIPAL_CLASS.to_string())
            };
            Sector { m, z, content, class_id }
        })
        .collect();
    Ok(SectorClassification {
        e_squared,
        m_max,
        threshold,
        integer_part: least_natural_at_least(threshold),
        sectors,
    })
}

impl SectorClassification {
    pub fn sector(&self, m: i32) -> Option<&Sector> {
        self.sectors.iter().find(|s| s.m == m)
    }

    pub fn equivalent(&self, m1: i32, m2: i32) -> Option<bool> {
        Some(self.sector(m1)?.class_id == self.sector(m2)?.class_id)
    }

    /// Classes in order of first appearance over `|m| = 0, 1, 2, …`, each with its `|m|` values.
    pub fn classes(&self) -> Vec<(String, Vec<u32>)> {
        let mut out: Vec<(String, Vec<u32>)> = Vec::new();
        for abs in 0..=self.m_max.unsigned_abs() {
            let s = self.sector(abs as i32).expect("every |m| ≤ m_max is present");
            match out.iter_mut().find(|(id, _)| *id == s.class_id) {
                Some((_, ms)) => ms.push(abs),
                None => out.push((s.class_id.clone(), vec![abs])),
            }
        }
        out
    }

    /// `|m|` values with `√(π/e²) < |m| ≤ IntegerPart(√(π/e²))`, covered by
    /// neither literal branch of the equivalence statement.
    pub fn literal_gap(&self) -> Vec<u32> {
        (1..=self.m_max.unsigned_abs())
            .filter(|&a| f64::from(a) > self.threshold && u64::from(a) <= self.integer_part)
            .collect()
    }

    /// Columns `m,z_m,content,rho0,class_id`; `rho0` is empty where not applicable.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "m,z_m,content,rho0,class_id")?;
        for s in &self.sectors {
            let rho0 = s.content.rho0().map(sci).unwrap_or_default();
            writeln!(w, "{},{},{},{},{}", s.m, sci(s.z), s.content.tag(), rho0, s.class_id)?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("e^2 = {}\n", sci(self.e_squared)));
        out.push_str(&format!("threshold sqrt(pi/e^2) = {}\n", sci(self.threshold)));
        out.push_str(&format!(
            "integer part (least natural n with threshold <= n) = {}\n",
            self.integer_part
        ));
        out.push_str("equivalence classes over |m| <= m_max:\n");
        for (id, ms) in self.classes() {
            let list: Vec<String> = ms.iter().map(u32::to_string).collect();
            let rho0 = self
                .sector(ms[0] as i32)
                .and_then(|s| s.content.rho0())
                .map(|r| format!(" rho0 = {}", sci(r)))
                .unwrap_or_default();
            out.push_str(&format!("  {id}: |m| in {{{}}}{rho0}\n", list.join(",")));
        }
        let gap = self.literal_gap();
        if !gap.is_empty() {
            let list: Vec<String> = gap.iter().map(u32::to_string).collect();
            out.push_str(&format!(
                "sectors with threshold < |m| <= integer part (classified by z_m > 1): {{{}}}\n",
                list.join(",")
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn spherical_function_values() {
        let p = SphericalFunction::principal(1.0).unwrap();
        assert_eq!(p.eval(0.0).unwrap(), 1.0);
        assert_eq!(p.eval(5e-7).unwrap(), 1.0);
        assert_abs_diff_eq!(p.eval(PI).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.eval(1e-4).unwrap(), 1.0, epsilon = 1e-8);

        let s = SphericalFunction::supplementary(0.5).unwrap();
        // sinh(1) / (0.5 sinh 2), mpmath 50 digits.
        assert_abs_diff_eq!(s.eval(2.0).unwrap(), 0.648_054_273_663_885_4, epsilon = 1e-15);
        assert_eq!(s.eval(0.0).unwrap(), 1.0);
        // Finite far past sinh overflow.
        let far = s.eval(1000.0).unwrap();
        assert!(far > 0.0 && far.is_finite());
    }

    #[test]
    fn spherical_function_domain() {
        assert!(SphericalFunction::principal(0.0).is_err());
        assert!(SphericalFunction::supplementary(1.0).is_err());
        assert!(SphericalFunction::supplementary(0.0).is_err());
        let bogus = SphericalFunction::Supplementary { rho0: 1.5 };
        assert!(spherical_function(&bogus, 1.0).is_err());
        assert!(spherical_function(&SphericalFunction::Principal { rho: 1.0 }, -1.0).is_err());
    }

    #[test]
    fn growth_rates() {
        assert_abs_diff_eq!(growth_rate(0.5).unwrap(), 0.5, epsilon = 1e-3);
        assert_abs_diff_eq!(growth_rate(2.0).unwrap(), -1.0, epsilon = 1e-3);
        assert_eq!(growth_rate(1.0 + 1e-9), Err(SpectralError::Boundary { z: 1.0 + 1e-9 }));
        assert!(matches!(growth_rate(-0.5), Err(SpectralError::Domain(_))));
    }

    #[test]
    fn discrete_weight_matches_asymptote() {
        // 0.5 e^{0.5}, mpmath.
        assert_abs_diff_eq!(discrete_weight(0.5, 0.5).unwrap(), 0.824_360_635_350_064_1, epsilon = 1e-12);
    }

    #[test]
    fn defect_small_and_large() {
        assert_eq!(asymptotic_defect(0.7, 0.0), -1.0);
        let l: f64 = 15.0;
        let approx = -(2.0 * 0.7 * l + 1.0) * (-2.0 * l).exp();
        assert!((asymptotic_defect(0.7, l) / approx - 1.0).abs() < 1e-10);
    }

    #[test]
    fn density_matches_direct_transform() {
        // Direct oscillatory quadrature of the unsplit remainder, mpmath at 30 digits.
        let oracle = [
            (0.5, 0.05, 0.003_868_789_763_718_549_347_4),
            (0.5, 1.0, 0.119_130_901_333_040_103_86),
            (0.5, 5.0, 1.247_947_397_617_107_187_3e-5),
            (0.5, 12.5, 1.821_804_048_172_218_045_4e-14),
            (1.5, 0.05, 0.012_449_534_600_958_016_862),
            (1.5, 1.0, 0.628_844_237_692_445_562_04),
            (1.5, 5.0, 8.343_856_805_833_001_177_5e-4),
            (1.5, 12.5, 1.621_353_296_557_947_354_2e-11),
            (0.1, 1.0, 0.003_891_921_576_723_334_442_7),
            (0.1, 5.0, 1.205_119_087_042_567_846_6e-7),
            (3.0, 1.0, 0.331_433_782_552_704_901_52),
            (3.0, 12.5, 4.311_665_108_446_579_402_5e-9),
        ];
        let budget = DecomposeOptions::default().budget;
        for (z, rho, want) in oracle {
            let got = principal_density(z, rho, &budget).unwrap();
            // Cancellation against the closed-form e^{-aλ} term sets an absolute floor.
            let a = (1.0 - z).abs();
            let floor = 8.0 * f64::EPSILON * z.exp() / PI * rho * rho / (rho * rho + a * a);
            assert!(
                (got - want).abs() <= 1e-10 * want.abs() + floor,
                "z={z} rho={rho}: {got:e} vs {want:e}"
            );
        }
    }

    #[test]
    fn boundary_refused() {
        assert_eq!(decompose(1.0, &DecomposeOptions::default()), Err(SpectralError::Boundary { z: 1.0 }));
    }

    #[test]
    fn reconstruct_range() {
        let d = decompose(1.5, &DecomposeOptions::default()).unwrap();
        assert!(matches!(reconstruct(&d, 0.01), Err(SpectralError::Range { .. })));
        assert!(matches!(reconstruct(&d, 11.0), Err(SpectralError::Range { .. })));
        assert_abs_diff_eq!(d.origin_value(), 1.0, epsilon = 1e-4);
    }

    #[test]
    fn integer_part_convention() {
        assert_eq!(least_natural_at_least(20.7), 21);
        assert_eq!(least_natural_at_least(2.0), 2);
        assert_eq!(least_natural_at_least(2.000_000_000_000_000_4), 2);
        assert_eq!(least_natural_at_least(0.3), 1);
    }

    #[test]
    fn quarter_pi_coupling() {
        let c = classify_sectors(PI / 4.0, 4).unwrap();
        assert_eq!(c.integer_part, 2);
        assert_eq!(c.sector(1).unwrap().content.tag(), "with-supplementary");
        assert_abs_diff_eq!(c.sector(1).unwrap().content.rho0().unwrap(), 0.75, epsilon = 1e-15);
        assert_eq!(c.sector(2).unwrap().content, SectorContent::Boundary);
        assert_eq!(c.sector(-3).unwrap().content, SectorContent::PrincipalOnly);
        assert_eq!(c.sector(0).unwrap().content, SectorContent::Trivial);
        assert_eq!(c.equivalent(3, -4), Some(true));
        assert_eq!(c.equivalent(1, -1), Some(true));
        assert_eq!(c.equivalent(1, 3), Some(false));
        let classes = c.classes();
        assert_eq!(classes[0], ("trivial".to_string(), vec![0]));
        assert_eq!(classes[1], ("supplementary-1".to_string(), vec![1]));
        assert_eq!(classes[2], ("boundary-2".to_string(), vec![2]));
        assert_eq!(classes[3], ("principal".to_string(), vec![3, 4]));
        assert!(c.literal_gap().is_empty());
    }

    #[test]
    fn classification_errors() {
        assert!(classify_sectors(0.0, 3).is_err());
        assert!(classify_sectors(0.1, 0).is_err());
    }

    #[test]
    fn classification_csv() {
        let c = classify_sectors(PI / 4.0, 2).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "m,z_m,content,rho0,class_id");
        assert_eq!(lines.len(), 6);
        assert!(lines[3].starts_with("0,0.0000000000000000e0,trivial,,trivial"));
        assert!(lines[5].ends_with(",boundary,,boundary-2"));
    }
}
