//! Finite model of the charged coherent states: a charge label times a
//! truncated boson Fock space over `M` abstract modes, with frame-dependent
//! displaced operators
//!
//! ```text
//! ⁱc_α = √κ (a_α - q d_{i,α}),   κ = 4π e²,
//! ```
//!
//! acting on the charge-`q` sector. The coherent state `|q, u_i⟩` has
//! amplitude `β = q d_i` and is annihilated by every `ⁱc_α`.
//!
//! Displacements `d_i` come from classical multidimensional scaling of the
//! half squared distances `(e²/π) ψ(λ_ij)`, so that
//! `⟨q, u_i | q, u_j⟩ = exp{-(e² q²/π) ψ(λ_ij)}`.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{hyperbolic_angle, GeometryError, LobachevskyPoint, LorentzBoost};
use crate::kernel::{psi, KernelError, OrthonormalSystem};

/// Default charge window `[-3, 3]`.
pub const DEFAULT_CHARGE_WINDOW: i32 = 3;
/// Largest admissible Poisson tail mass lost to the photon cutoff.
pub const TRUNCATION_TAIL: f64 = 1e-10;
/// Negative eigenvalues of the centered distance matrix tolerated relative to its trace.
pub const EMBEDDING_TOLERANCE: f64 = 1e-10;

const NONE: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoherentError {
    #[error("centered distance matrix not positive semidefinite: eigenvalue {eigenvalue:e} (trace {trace:e})")]
    Embedding { eigenvalue: f64, trace: f64 },
    #[error("{modes} modes cannot embed {points} points; need at least {}", points.saturating_sub(1))]
    TooFewModes { modes: usize, points: usize },
    #[error("photon cutoff N_max = {n_max} too small; need at least {required} (truncation tail {tail:e})")]
    Cutoff { n_max: usize, required: usize, tail: f64 },
    #[error("charge {charge} outside the window [-{window}, {window}]")]
    Charge { charge: i32, window: i32 },
    #[error("frame index {0} out of range")]
    Frame(usize),
    #[error("mode index {0} out of range")]
    Mode(usize),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// CCR quantum `κ = 4π e²`.
pub fn kappa(e_squared: f64) -> f64 {
    4.0 * PI * e_squared
}

/// Smallest photon cutoff for displacement norm `d`: `d² + 10d + 20`.
pub fn cutoff_rule(d: f64) -> usize {
    (d * d + 10.0 * d + 20.0).ceil() as usize
}

/// Per-unit-charge displacement vectors of a set of frames.
#[derive(Debug, Clone)]
pub struct DisplacementEmbedding {
    points: Vec<LobachevskyPoint>,
    e_squared: f64,
    vectors: Vec<Vec<f64>>,
    /// `(e²/π) ψ(λ_ij)`.
    half_sq_dist: DMatrix<f64>,
}

impl DisplacementEmbedding {
    pub fn points(&self) -> &[LobachevskyPoint] {
        &self.points
    }

    pub fn e_squared(&self) -> f64 {
        self.e_squared
    }

    pub fn modes(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn displacement(&self, i: usize) -> &[f64] {
        &self.vectors[i]
    }

    pub fn max_norm(&self) -> f64 {
        self.vectors.iter().map(|v| norm(v)).fold(0.0, f64::max)
    }

    /// `max_ij |‖d_i - d_j‖²/2 - (e²/π) ψ(λ_ij)|`.
    pub fn constraint_deviation(&self) -> f64 {
        let n = self.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d2: f64 = self.vectors[i].iter().zip(&self.vectors[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                worst = worst.max((0.5 * d2 - self.half_sq_dist[(i, j)]).abs());
            }
        }
        worst
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Classical multidimensional scaling of `(e²/π) ψ(λ_ij)` into `modes` dimensions.
///
/// Eigenvalues are taken in descending order, each eigenvector signed so its
/// largest-magnitude component (first on ties) is positive; unused
/// dimensions are zero.
pub fn embed(
    points: &[LobachevskyPoint],
    e_squared: f64,
    modes: usize,
) -> Result<DisplacementEmbedding, CoherentError> {
    let n = points.len();
    if n == 0 {
        return Err(KernelError::Empty.into());
    }
    if !(e_squared > 0.0) || !e_squared.is_finite() {
        return Err(KernelError::BadCoupling(e_squared).into());
    }
    if modes == 0 || modes + 1 < n {
        return Err(CoherentError::TooFewModes { modes, points: n });
    }
    let mut dist = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = e_squared / PI * psi(hyperbolic_angle(&points[i], &points[j])?)?;
            dist[(i, j)] = v;
            dist[(j, i)] = v;
        }
    }
    let row: Vec<f64> = (0..n).map(|i| dist.row(i).sum() / n as f64).collect();
    let all = row.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -(dist[(i, j)] - row[i] - row[j] + all));
    let trace = b.trace();

    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[q].total_cmp(&eig.eigenvalues[p]).then(p.cmp(&q)));
    let floor = -EMBEDDING_TOLERANCE * trace.abs().max(f64::MIN_POSITIVE);
    if let Some(&worst) = order.last() {
        let e = eig.eigenvalues[worst];
        if e < floor {
            return Err(CoherentError::Embedding { eigenvalue: e, trace });
        }
    }

    let mut vectors = vec![vec![0.0; modes]; n];
    for (col, &k) in order.iter().take(modes.min(n)).enumerate() {
        let lambda = eig.eigenvalues[k].max(0.0);
        if lambda == 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        let mut pivot = 0;
        for r in 1..n {
            if v[r].abs() > v[pivot].abs() {
                pivot = r;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        let s = lambda.sqrt() * sign;
        for (r, vec) in vectors.iter_mut().enumerate() {
            vec[col] = s * v[r];
        }
    }
    Ok(DisplacementEmbedding { points: points.to_vec(), e_squared, vectors, half_sq_dist: dist })
}

/// Occupation-number basis `{n ∈ ℕ^M : Σ n_α ≤ N_max}`, ordered by total
/// occupation and then lexicographically (largest first in mode 0).
#[derive(Debug, Clone)]
pub struct ModeBasis {
    modes: usize,
    n_max: usize,
    kappa: f64,
    occupations: Vec<u16>,
    raise: Vec<Vec<u32>>,
    lower: Vec<Vec<u32>>,
}

fn compositions(modes: usize, total: usize, out: &mut Vec<u16>) {
    fn rec(prefix: &mut Vec<u16>, left: usize, modes: usize, out: &mut Vec<u16>) {
        if prefix.len() + 1 == modes {
            prefix.push(left as u16);
            out.extend_from_slice(prefix);
            prefix.pop();
            return;
        }
        for k in (0..=left).rev() {
            prefix.push(k as u16);
            rec(prefix, left - k, modes, out);
            prefix.pop();
        }
    }
    rec(&mut Vec::with_capacity(modes), total, modes, out);
}

impl ModeBasis {
    pub fn new(modes: usize, n_max: usize, e_squared: f64) -> Result<Self, CoherentError> {
        if modes == 0 || n_max == 0 {
            return Err(CoherentError::Invalid("need M ≥ 1 and N_max ≥ 1".into()));
        }
        if !(e_squared > 0.0) || !e_squared.is_finite() {
            return Err(KernelError::BadCoupling(e_squared).into());
        }
        if n_max > u16::MAX as usize {
            return Err(CoherentError::Invalid(format!("N_max = {n_max} too large")));
        }
        let mut occupations = Vec::new();
        for total in 0..=n_max {
            compositions(modes, total, &mut occupations);
        }
        let dim = occupations.len() / modes;
        if dim >= NONE as usize {
            return Err(CoherentError::Invalid("basis dimension overflows the index type".into()));
        }
        let index: HashMap<&[u16], u32> =
            occupations.chunks_exact(modes).enumerate().map(|(k, occ)| (occ, k as u32)).collect();
        let mut raise = vec![vec![NONE; dim]; modes];
        let mut lower = vec![vec![NONE; dim]; modes];
        let mut key = vec![0u16; modes];
        for (k, occ) in occupations.chunks_exact(modes).enumerate() {
            let total: usize = occ.iter().map(|&x| x as usize).sum();
            for a in 0..modes {
                key.copy_from_slice(occ);
                if total < n_max {
                    key[a] += 1;
                    raise[a][k] = index[key.as_slice()];
                    key[a] -= 1;
                }
                if occ[a] > 0 {
                    key[a] -= 1;
                    lower[a][k] = index[key.as_slice()];
                }
            }
        }
        Ok(Self { modes, n_max, kappa: kappa(e_squared), occupations, raise, lower })
    }

    /// Basis sized by [`cutoff_rule`] for charges up to `max_charge` on
    /// `emb`, plus `headroom` extra quanta for creator monomials.
    pub fn for_embedding(
        emb: &DisplacementEmbedding,
        max_charge: i32,
        headroom: usize,
    ) -> Result<Self, CoherentError> {
        let d = f64::from(max_charge.unsigned_abs()) * emb.max_norm();
        Self::new(emb.modes(), cutoff_rule(d) + headroom, emb.e_squared())
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn dim(&self) -> usize {
        self.occupations.len() / self.modes
    }

    pub fn occupation(&self, k: usize) -> &[u16] {
        &self.occupations[k * self.modes..(k + 1) * self.modes]
    }

    pub fn total(&self, k: usize) -> usize {
        self.occupation(k).iter().map(|&x| x as usize).sum()
    }

    /// `a_α⁺ v`, dropping amplitude pushed past `N_max`.
    pub fn raise(&self, alpha: usize, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (k, &t) in self.raise[alpha].iter().enumerate() {
            if t != NONE && v[k] != 0.0 {
                let n = f64::from(self.occupations[k * self.modes + alpha]);
                out[t as usize] += (n + 1.0).sqrt() * v[k];
            }
        }
        out
    }

    /// `a_α v`.
    pub fn lower(&self, alpha: usize, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (k, &t) in self.lower[alpha].iter().enumerate() {
            if t != NONE && v[k] != 0.0 {
                let n = f64::from(self.occupations[k * self.modes + alpha]);
                out[t as usize] += n.sqrt() * v[k];
            }
        }
        out
    }
}

/// A vector of sharp charge in the truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorState {
    pub charge: i32,
    pub coeffs: Vec<f64>,
}

impl SectorState {
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Inner product; states of different charge are orthogonal.
    pub fn dot(&self, other: &SectorState) -> f64 {
        if self.charge != other.charge {
            return 0.0;
        }
        dot(&self.coeffs, &other.coeffs)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `⟨0| c_{β…} c⁺_{α…} |0⟩` for a single frame: `κⁿ Π mult!` when the index
/// multisets agree, otherwise 0.
pub fn fock_moment(kappa: f64, betas: &[usize], alphas: &[usize]) -> f64 {
    let mut a = alphas.to_vec();
    let mut b = betas.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    if a != b {
        return 0.0;
    }
    kappa.powi(a.len() as i32) * multiplicity_factorial(&a)
}

fn multiplicity_factorial(sorted: &[usize]) -> f64 {
    let mut prod = 1.0;
    let mut run = 0.0;
    for (k, x) in sorted.iter().enumerate() {
        run = if k > 0 && sorted[k - 1] == *x { run + 1.0 } else { 1.0 };
        prod *= run;
    }
    prod
}

/// Nondecreasing index lists of length `0..=degree` over `modes` modes.
pub fn multisets(modes: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut layer = vec![Vec::new()];
    for _ in 0..degree {
        let mut next = Vec::new();
        for m in &layer {
            let start = m.last().copied().unwrap_or(0);
            for a in start..modes {
                let mut v: Vec<usize> = m.clone();
                v.push(a);
                next.push(v);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// `⟨j, m| ʲc_{β…} ⁱc⁺_{α…} |i, m⟩` with its single-frame factorization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedMoment {
    pub value: f64,
    pub fock_moment: f64,
    pub overlap: f64,
    /// `|value - fock_moment · overlap|`.
    pub deviation: f64,
}

/// Coherent states and frame operators on a fixed embedding and basis.
#[derive(Debug, Clone)]
pub struct CoherentModel {
    emb: DisplacementEmbedding,
    basis: ModeBasis,
    charge_window: i32,
}

impl CoherentModel {
    pub fn new(emb: DisplacementEmbedding, basis: ModeBasis) -> Result<Self, CoherentError> {
        if emb.modes() != basis.modes() {
            return Err(CoherentError::Invalid(format!(
                "embedding has {} modes, basis {}",
                emb.modes(),
                basis.modes()
            )));
        }
        Ok(Self { emb, basis, charge_window: DEFAULT_CHARGE_WINDOW })
    }

    /// Embedding of `points` in `modes` modes with a basis sized for charges
    /// up to `max_charge` and `headroom` extra quanta.
    pub fn build(
        points: &[LobachevskyPoint],
        e_squared: f64,
        modes: usize,
        max_charge: i32,
        headroom: usize,
    ) -> Result<Self, CoherentError> {
        let emb = embed(points, e_squared, modes)?;
        let basis = ModeBasis::for_embedding(&emb, max_charge, headroom)?;
        let mut model = Self::new(emb, basis)?;
        model.charge_window = model.charge_window.max(max_charge.abs());
        Ok(model)
    }

    pub fn with_charge_window(mut self, window: i32) -> Self {
        self.charge_window = window.abs();
        self
    }

    pub fn embedding(&self) -> &DisplacementEmbedding {
        &self.emb
    }

    pub fn basis(&self) -> &ModeBasis {
        &self.basis
    }

    pub fn kappa(&self) -> f64 {
        self.basis.kappa
    }

    fn check_frame(&self, i: usize) -> Result<(), CoherentError> {
        if i >= self.emb.len() {
            return Err(CoherentError::Frame(i));
        }
        Ok(())
    }

    fn check_charge(&self, q: i32) -> Result<(), CoherentError> {
        if q.abs() > self.charge_window {
            return Err(CoherentError::Charge { charge: q, window: self.charge_window });
        }
        Ok(())
    }

    fn check_modes(&self, idx: &[usize]) -> Result<(), CoherentError> {
        match idx.iter().find(|&&a| a >= self.basis.modes) {
            Some(&a) => Err(CoherentError::Mode(a)),
            None => Ok(()),
        }
    }

    /// Quanta left above the cutoff rule for charge `q`.
    pub fn headroom(&self, q: i32) -> usize {
        let d = f64::from(q.unsigned_abs()) * self.emb.max_norm();
        self.basis.n_max.saturating_sub(cutoff_rule(d))
    }

    fn check_degree(&self, q: i32, degree: usize) -> Result<(), CoherentError> {
        let d = f64::from(q.unsigned_abs()) * self.emb.max_norm();
        let required = cutoff_rule(d) + degree;
        if required > self.basis.n_max {
            return Err(CoherentError::Cutoff { n_max: self.basis.n_max, required, tail: f64::NAN });
        }
        Ok(())
    }

    /// Normalized `|q, u_i⟩`, amplitude `β = q d_i`.
    pub fn coherent_state(&self, i: usize, q: i32) -> Result<SectorState, CoherentError> {
        self.check_frame(i)?;
        self.check_charge(q)?;
        let m = self.basis.modes;
        let nm = self.basis.n_max;
        let beta: Vec<f64> = self.emb.displacement(i).iter().map(|d| f64::from(q) * d).collect();
        // table[α][n] = β_α^n / √n!
        let table: Vec<Vec<f64>> = beta
            .iter()
            .map(|&b| {
                let mut t = Vec::with_capacity(nm + 1);
                t.push(1.0);
                for n in 1..=nm {
                    let prev = t[n - 1];
                    t.push(prev * b / (n as f64).sqrt());
                }
                t
            })
            .collect();
        let scale = (-0.5 * beta.iter().map(|b| b * b).sum::<f64>()).exp();
        let coeffs: Vec<f64> = self
            .basis
            .occupations
            .chunks_exact(m)
            .map(|occ| scale * occ.iter().zip(&table).map(|(&n, t)| t[n as usize]).product::<f64>())
            .collect();
        let mass: f64 = coeffs.iter().map(|c| c * c).sum();
        let tail = 1.0 - mass;
        if tail > TRUNCATION_TAIL {
            let d = norm(&beta);
            return Err(CoherentError::Cutoff { n_max: nm, required: cutoff_rule(d), tail });
        }
        let inv = 1.0 / mass.sqrt();
        Ok(SectorState { charge: q, coeffs: coeffs.into_iter().map(|c| c * inv).collect() })
    }

    /// `ⁱc⁺_α ψ = √κ (a⁺_α - q d_{i,α}) ψ`.
    pub fn create(&self, i: usize, alpha: usize, psi: &SectorState) -> Result<SectorState, CoherentError> {
        self.check_frame(i)?;
        self.check_modes(&[alpha])?;
        let shift = f64::from(psi.charge) * self.emb.displacement(i)[alpha];
        let sk = self.basis.kappa.sqrt();
        let mut out = self.basis.raise(alpha, &psi.coeffs);
        for (o, c) in out.iter_mut().zip(&psi.coeffs) {
            *o = sk * (*o - shift * c);
        }
        Ok(SectorState { charge: psi.charge, coeffs: out })
    }

    /// `ⁱc_α ψ = √κ (a_α - q d_{i,α}) ψ`.
    pub fn annihilate(&self, i: usize, alpha: usize, psi: &SectorState) -> Result<SectorState, CoherentError> {
        self.check_frame(i)?;
        self.check_modes(&[alpha])?;
        let shift = f64::from(psi.charge) * self.emb.displacement(i)[alpha];
        let sk = self.basis.kappa.sqrt();
        let mut out = self.basis.lower(alpha, &psi.coeffs);
        for (o, c) in out.iter_mut().zip(&psi.coeffs) {
            *o = sk * (*o - shift * c);
        }
        Ok(SectorState { charge: psi.charge, coeffs: out })
    }

    /// `ⁱc⁺_{α₁} … ⁱc⁺_{αₙ} ψ` (rightmost applied first).
    pub fn create_all(&self, i: usize, alphas: &[usize], psi: &SectorState) -> Result<SectorState, CoherentError> {
        let mut v = psi.clone();
        for &a in alphas.iter().rev() {
            v = self.create(i, a, &v)?;
        }
        Ok(v)
    }

    /// `ⁱc⁺_{α…} |q, u_i⟩`, after checking the monomial fits under the cutoff.
    pub fn excited_state(&self, i: usize, q: i32, alphas: &[usize]) -> Result<SectorState, CoherentError> {
        self.check_modes(alphas)?;
        self.check_degree(q, alphas.len())?;
        let coh = self.coherent_state(i, q)?;
        self.create_all(i, alphas, &coh)
    }

    /// `⟨N(u_i)⟩_ψ` with `N(u_i) = κ⁻¹ Σ_α ⁱc⁺_α ⁱc_α`.
    pub fn number_expectation(&self, i: usize, psi: &SectorState) -> Result<f64, CoherentError> {
        let mut acc = 0.0;
        for a in 0..self.basis.modes {
            let v = self.annihilate(i, a, psi)?;
            acc += dot(&v.coeffs, &v.coeffs);
        }
        Ok(acc / self.basis.kappa / psi.dot(psi))
    }

    /// `⟨q, u_j | q, u_i⟩` in the truncated model.
    pub fn overlap(&self, j: usize, i: usize, q: i32) -> Result<f64, CoherentError> {
        Ok(self.coherent_state(j, q)?.dot(&self.coherent_state(i, q)?))
    }

    /// `⟨q, u_j| ʲc_{β₁} … ʲc_{β_p} · ⁱc⁺_{α₁} … ⁱc⁺_{αₙ} |q, u_i⟩`, computed as
    /// the inner product of `ʲc⁺_{β_p} … ʲc⁺_{β₁}|q, u_j⟩` with the ket.
    pub fn mixed_moment(
        &self,
        bra: (usize, &[usize]),
        ket: (usize, &[usize]),
        q: i32,
    ) -> Result<MixedMoment, CoherentError> {
        let (j, betas) = bra;
        let (i, alphas) = ket;
        let reversed: Vec<usize> = betas.iter().rev().copied().collect();
        let left = self.excited_state(j, q, &reversed)?;
        let right = self.excited_state(i, q, alphas)?;
        let value = left.dot(&right);
        let fock = fock_moment(self.basis.kappa, betas, alphas);
        let overlap = self.overlap(j, i, q)?;
        Ok(MixedMoment { value, fock_moment: fock, overlap, deviation: (value - fock * overlap).abs() })
    }

    /// `max ‖ⁱc_α |q, u_i⟩‖` over frames and modes.
    pub fn own_frame_vacuum_deviation(&self, q: i32) -> Result<f64, CoherentError> {
        let mut worst: f64 = 0.0;
        for i in 0..self.emb.len() {
            let coh = self.coherent_state(i, q)?;
            for a in 0..self.basis.modes {
                worst = worst.max(self.annihilate(i, a, &coh)?.norm());
            }
        }
        Ok(worst)
    }

    /// Largest deviation of `[ⁱc_α, ʲc⁺_β] = κ δ_αβ` and `[ⁱc_α, ʲc_β] = 0`
    /// over all frame and mode pairs, on a random charge-`q` vector supported
    /// two quanta below the cutoff.
    pub fn ccr_deviation(&self, q: i32, seed: u64) -> Result<f64, CoherentError> {
        self.check_charge(q)?;
        if self.basis.n_max < 2 {
            return Err(CoherentError::Cutoff { n_max: self.basis.n_max, required: 2, tail: f64::NAN });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let band = self.basis.n_max - 2;
        let coeffs: Vec<f64> = (0..self.basis.dim())
            .map(|k| {
                let r = 2.0 * rng.random::<f64>() - 1.0;
                if self.basis.total(k) <= band { r } else { 0.0 }
            })
            .collect();
        let psi = SectorState { charge: q, coeffs };
        let n = self.emb.len();
        let m = self.basis.modes;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for a in 0..m {
                    for b in 0..m {
                        let ab = self.annihilate(i, a, &self.create(j, b, &psi)?)?;
                        let ba = self.create(j, b, &self.annihilate(i, a, &psi)?)?;
                        let delta = if a == b { self.basis.kappa } else { 0.0 };
                        for k in 0..psi.coeffs.len() {
                            worst = worst.max((ab.coeffs[k] - ba.coeffs[k] - delta * psi.coeffs[k]).abs());
                        }
                        let aa = self.annihilate(i, a, &self.annihilate(j, b, &psi)?)?;
                        let bb = self.annihilate(j, b, &self.annihilate(i, a, &psi)?)?;
                        for k in 0..psi.coeffs.len() {
                            worst = worst.max((aa.coeffs[k] - bb.coeffs[k]).abs());
                        }
                    }
                }
            }
        }
        Ok(worst)
    }

    /// Gram matrix of `{ⁱc⁺_{α_a} |q, u_i⟩}` indexed by `(a, i)` with `a`
    /// running over `multisets(M, degree)` (outer) and frames (inner).
    pub fn family_gram(&self, q: i32, degree: usize) -> Result<DMatrix<f64>, CoherentError> {
        let monomials = multisets(self.basis.modes, degree);
        let n = self.emb.len();
        let mut family = Vec::with_capacity(monomials.len() * n);
        for mono in &monomials {
            for i in 0..n {
                family.push(self.excited_state(i, q, mono)?);
            }
        }
        Ok(gram_of(&family))
    }
}

fn gram_of(vs: &[SectorState]) -> DMatrix<f64> {
    let n = vs.len();
    let mut g = DMatrix::<f64>::zeros(n, n);
    for r in 0..n {
        for c in r..n {
            let v = vs[r].dot(&vs[c]);
            g[(r, c)] = v;
            g[(c, r)] = v;
        }
    }
    g
}

/// Maximum deviation within each `(n, n')` degree block, together with the
/// overall maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDeviation {
    pub max_deviation: f64,
    pub blocks: Vec<((usize, usize), f64)>,
}

fn block_deviation(g: &DMatrix<f64>, expected: &DMatrix<f64>, degrees: &[usize]) -> BlockDeviation {
    let mut blocks: Vec<((usize, usize), f64)> = Vec::new();
    let mut max_deviation: f64 = 0.0;
    for r in 0..g.nrows() {
        for c in 0..g.ncols() {
            let d = (g[(r, c)] - expected[(r, c)]).abs();
            max_deviation = max_deviation.max(d);
            let key = (degrees[r], degrees[c]);
            match blocks.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => *v = v.max(d),
                None => blocks.push((key, d)),
            }
        }
    }
    blocks.sort_by_key(|b| b.0);
    BlockDeviation { max_deviation, blocks }
}

/// Gram of `Σ_i b_ik ⁱc⁺_{α…} |1, u_i⟩` over `k` and multisets of degree
/// `≤ degree`, compared with `κⁿ Π mult! · δ_sk δ_{nn'} δ_{multiset}`.
pub fn orthogonality_check(
    model: &CoherentModel,
    system: &OrthonormalSystem,
    degree: usize,
) -> Result<BlockDeviation, CoherentError> {
    let n = model.emb.len();
    if system.len() != n {
        return Err(CoherentError::Invalid("orthonormal system and embedding differ in size".into()));
    }
    for (u, v) in system.points().iter().zip(model.emb.points()) {
        if hyperbolic_angle(u, v)? > 1e-12 {
            return Err(CoherentError::Invalid("orthonormal system built on different points".into()));
        }
    }
    let b = system.coefficients();
    let monomials = multisets(model.basis.modes, degree);
    let mut vectors = Vec::new();
    let mut degrees = Vec::new();
    let mut labels = Vec::new();
    for mono in &monomials {
        let excited = (0..n).map(|i| model.excited_state(i, 1, mono)).collect::<Result<Vec<_>, _>>()?;
        for k in 0..n {
            let mut acc = vec![0.0; model.basis.dim()];
            for (i, e) in excited.iter().enumerate() {
                let w = b[(i, k)];
                for (a, x) in acc.iter_mut().zip(&e.coeffs) {
                    *a += w * x;
                }
            }
            vectors.push(SectorState { charge: 1, coeffs: acc });
            degrees.push(mono.len());
            labels.push((k, mono.clone()));
        }
    }
    let g = gram_of(&vectors);
    let kappa = model.kappa();
    let expected = DMatrix::from_fn(g.nrows(), g.ncols(), |r, c| {
        let ((k, a), (s, bm)) = (&labels[r], &labels[c]);
        if k == s { fock_moment(kappa, a, bm) } else { 0.0 }
    });
    Ok(block_deviation(&g, &expected, &degrees))
}

/// Outcome of [`lemma_factorization_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct LemmaReport {
    /// `max |G - F ⊗ C|` over the whole family.
    pub factorization: BlockDeviation,
    /// Smallest eigenvalue of the unit-diagonal family Gram; positive iff
    /// `Σ c_{ai} x_a ⊗ y_i = 0` forces every `c_{ai} = 0`.
    pub min_eigenvalue: f64,
    /// Relative residual of solving `G c' = G c` for seeded random `c`.
    pub disjointness_residual: f64,
    /// `max |c' - c|`; grows with the condition number of the family.
    pub coefficient_error: f64,
}

/// Compares the Gram of `{ⁱc⁺_{α_a} |q, u_i⟩}` with the Kronecker product of
/// the Fock-monomial Gram `F_ab = ⟨0|c_a c⁺_b|0⟩` and the coherent Gram
/// `C_ij = ⟨q, u_i|q, u_j⟩`, and checks that the family is linearly
/// independent by recovering seeded random coefficients.
pub fn lemma_factorization_check(
    model: &CoherentModel,
    q: i32,
    degree: usize,
    seed: u64,
) -> Result<LemmaReport, CoherentError> {
    let n = model.emb.len();
    let monomials = multisets(model.basis.modes, degree);
    let g = model.family_gram(q, degree)?;
    let states = (0..n).map(|i| model.coherent_state(i, q)).collect::<Result<Vec<_>, _>>()?;
    let c = gram_of(&states);
    let kappa = model.kappa();
    let expected = DMatrix::from_fn(g.nrows(), g.ncols(), |r, col| {
        let (a, i) = (r / n, r % n);
        let (b, j) = (col / n, col % n);
        fock_moment(kappa, &monomials[a], &monomials[b]) * c[(i, j)]
    });
    let degrees: Vec<usize> = (0..g.nrows()).map(|r| monomials[r / n].len()).collect();
    let factorization = block_deviation(&g, &expected, &degrees);

    // Unit-diagonal scaling: the family mixes norms 1 … κ^degree.
    let scale = DVector::from_fn(g.nrows(), |r, _| 1.0 / g[(r, r)].sqrt());
    let scaled = DMatrix::from_fn(g.nrows(), g.ncols(), |r, c| g[(r, c)] * scale[r] * scale[c]);
    let min_eigenvalue = SymmetricEigen::new(scaled.clone()).eigenvalues.min();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = DVector::from_fn(g.nrows(), |_, _| 2.0 * rng.random::<f64>() - 1.0);
    let projections = &scaled * &coeffs;
    let (disjointness_residual, coefficient_error) = match scaled.clone().lu().solve(&projections) {
        Some(sol) => {
            let residual = (&scaled * &sol - &projections).abs().max() / projections.abs().max();
            (residual, (sol - coeffs).abs().max())
        }
        None => (f64::INFINITY, f64::INFINITY),
    };
    Ok(LemmaReport { factorization, min_eigenvalue, disjointness_residual, coefficient_error })
}

/// `max |G - G'|` between the family Grams built on `points` and on the
/// boosted points.
pub fn relabel_invariance(
    points: &[LobachevskyPoint],
    e_squared: f64,
    modes: usize,
    boost: &LorentzBoost,
    q: i32,
    degree: usize,
) -> Result<f64, CoherentError> {
    let before = CoherentModel::build(points, e_squared, modes, q, degree)?;
    let after = CoherentModel::build(&boost.apply_all(points), e_squared, modes, q, degree)?;
    let g0 = before.family_gram(q, degree)?;
    let g1 = after.family_gram(q, degree)?;
    if g0.shape() != g1.shape() {
        return Err(CoherentError::Invalid("relabelled model has a different family size".into()));
    }
    Ok((g0 - g1).abs().max())
}
