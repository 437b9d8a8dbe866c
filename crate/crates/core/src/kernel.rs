//! The invariant overlap kernel `K_z(λ) = exp{-z(λ coth λ - 1)}` on the
//! hyperboloid, Gram matrices over finite point sets and their Cholesky-based
//! orthonormalization.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::format::sci;
use crate::geometry::{hyperbolic_angle, GeometryError, LobachevskyPoint, LorentzBoost};

/// Below this angle `ψ` is evaluated by its Taylor series.
pub const PSI_SERIES_CUTOFF: f64 = 1e-2;
/// Scale-free positive semidefiniteness bound: `λ_min ≥ -PSD_TOLERANCE · tr G`.
pub const PSD_TOLERANCE: f64 = 1e-10;
/// Gram–Schmidt refuses matrices with `λ_min ≤ SINGULAR_TOLERANCE · tr G`.
pub const SINGULAR_TOLERANCE: f64 = 1e-12;
/// Pairs closer than this are reported as duplicates.
pub const DUPLICATE_ANGLE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("negative hyperbolic angle {0}")]
    NegativeAngle(f64),
    #[error("coupling e² must be positive and finite, got {0}")]
    BadCoupling(f64),
    #[error("empty point set")]
    Empty,
    #[error("Gram matrix is numerically singular (λ_min = {min_eigenvalue:e}); offending pivot {pivot}")]
    NearSingular { pivot: usize, min_eigenvalue: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// `λ coth λ - 1`, the exponent of the kernel per unit `z`.
pub fn psi(lambda: f64) -> Result<f64, KernelError> {
    if !(lambda >= 0.0) {
        return Err(KernelError::NegativeAngle(lambda));
    }
    if lambda < PSI_SERIES_CUTOFF {
        let l2 = lambda * lambda;
        return Ok(l2 * (1.0 / 3.0 - l2 * (1.0 / 45.0 - l2 * (2.0 / 945.0))));
    }
    Ok(lambda / lambda.tanh() - 1.0)
}

/// `λ coth λ - 1` evaluated directly, no series branch. Exposed for
/// comparison with [`psi`] near the origin.
pub fn psi_direct(lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    lambda / lambda.tanh() - 1.0
}

/// Coupling and charge of a sector; the kernel depends on them only through
/// `z = e² m² / π`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub e_squared: f64,
    pub charge_m: i32,
}

impl KernelParams {
    pub fn new(e_squared: f64, charge_m: i32) -> Result<Self, KernelError> {
        if !(e_squared > 0.0) || !e_squared.is_finite() {
            return Err(KernelError::BadCoupling(e_squared));
        }
        Ok(Self { e_squared, charge_m })
    }

    /// Parameters realizing a given `z` in the unit-charge sector.
    pub fn from_z(z: f64) -> Result<Self, KernelError> {
        Self::new(z * PI, 1)
    }

    pub fn z(&self) -> f64 {
        let m = f64::from(self.charge_m);
        self.e_squared * m * m / PI
    }
}

pub fn kernel_value(params: &KernelParams, lambda: f64) -> Result<f64, KernelError> {
    kernel_at(params.z(), lambda)
}

/// `exp(-z ψ(λ))` for a bare `z ≥ 0`.
pub fn kernel_at(z: f64, lambda: f64) -> Result<f64, KernelError> {
    Ok((-z * psi(lambda)?).exp())
}

/// `log K_z(λ)`, finite for every `λ`.
pub fn log_kernel(z: f64, lambda: f64) -> Result<f64, KernelError> {
    Ok(-z * psi(lambda)?)
}

/// Kernel matrix of a point set together with the points it was built from.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    matrix: DMatrix<f64>,
    points: Vec<LobachevskyPoint>,
    params: KernelParams,
    duplicates: Vec<(usize, usize)>,
}

impl GramMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn points(&self) -> &[LobachevskyPoint] {
        &self.points
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index pairs `(i, j)`, `i < j`, whose angle is below [`DUPLICATE_ANGLE`].
    /// A non-empty list means the kernel sections are linearly dependent.
    pub fn duplicates(&self) -> &[(usize, usize)] {
        &self.duplicates
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.matrix)
    }

    pub fn is_positive_semidefinite(&self) -> bool {
        self.min_eigenvalue() >= -PSD_TOLERANCE * self.trace()
    }

    /// Full matrix, row-major, 17 significant digits, header `c0,c1,…`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.matrix.nrows();
        let header: Vec<String> = (0..n).map(|j| format!("c{j}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| sci(self.matrix[(i, j)])).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `G_ij = K(λ(u_i, u_j))`. Entries are written independently, so the
/// result does not depend on evaluation order.
pub fn gram(params: &KernelParams, points: &[LobachevskyPoint]) -> Result<GramMatrix, KernelError> {
    if points.is_empty() {
        return Err(KernelError::Empty);
    }
    let n = points.len();
    let z = params.z();
    let mut matrix = DMatrix::identity(n, n);
    let mut duplicates = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let lambda = hyperbolic_angle(&points[i], &points[j])?;
            if lambda < DUPLICATE_ANGLE {
                duplicates.push((i, j));
            }
            let k = kernel_at(z, lambda)?;
            matrix[(i, j)] = k;
            matrix[(j, i)] = k;
        }
    }
    Ok(GramMatrix { matrix, points: points.to_vec(), params: *params, duplicates })
}

/// Coefficients `b` of the orthonormal system `e_k = Σ_i b_ik |u_i⟩`.
/// Column `k` holds the expansion of `e_k`; `b` is upper triangular with a
/// positive diagonal and `bᵀ G b = I`.
#[derive(Debug, Clone)]
pub struct OrthonormalSystem {
    coefficients: DMatrix<f64>,
    points: Vec<LobachevskyPoint>,
}

impl OrthonormalSystem {
    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn points(&self) -> &[LobachevskyPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `max |bᵀ G b - I|` against an arbitrary Gram matrix.
    pub fn orthonormality_deviation(&self, g: &DMatrix<f64>) -> f64 {
        let b = &self.coefficients;
        let n = b.ncols();
        (b.transpose() * g * b - DMatrix::<f64>::identity(n, n)).abs().max()
    }
}

/// Schmidt orthonormalization of the kernel sections, carried out through
/// the Cholesky factor `G = L Lᵀ`, `b = L⁻ᵀ`.
pub fn gram_schmidt(g: &GramMatrix) -> Result<OrthonormalSystem, KernelError> {
    let a = g.matrix();
    let n = a.nrows();
    let min_eigenvalue = g.min_eigenvalue();
    let threshold = SINGULAR_TOLERANCE * g.trace();

    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut weakest = (0usize, f64::INFINITY);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < weakest.1 {
            weakest = (j, d);
        }
        if d <= threshold {
            return Err(KernelError::NearSingular { pivot: j, min_eigenvalue });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    if min_eigenvalue <= threshold {
        return Err(KernelError::NearSingular { pivot: weakest.0, min_eigenvalue });
    }

    // Invert the lower-triangular factor column by column.
    let mut inv = DMatrix::<f64>::zeros(n, n);
    for c in 0..n {
        inv[(c, c)] = 1.0 / l[(c, c)];
        for i in (c + 1)..n {
            let mut s = 0.0;
            for k in c..i {
                s -= l[(i, k)] * inv[(k, c)];
            }
            inv[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(OrthonormalSystem { coefficients: inv.transpose(), points: g.points().to_vec() })
}

/// `max_ij |G(points)_ij - G(Λ points)_ij|`.
pub fn invariance_check(
    params: &KernelParams,
    points: &[LobachevskyPoint],
    boost: &LorentzBoost,
) -> Result<f64, KernelError> {
    let before = gram(params, points)?;
    let after = gram(params, &boost.apply_all(points))?;
    Ok((before.matrix() - after.matrix()).abs().max())
}
