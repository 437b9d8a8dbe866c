//! The full invariant suite over all modules, as a list of [`CheckReport`]s.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::coherent::{
    embed, lemma_factorization_check, orthogonality_check, relabel_invariance, CoherentModel,
};
use crate::geometry::{sample_points, LobachevskyPoint, LorentzBoost};
use crate::kernel::{gram, gram_schmidt, invariance_check, kernel_value, psi, psi_direct, KernelParams, PSI_SERIES_CUTOFF};
use crate::report::{CheckReport, SuiteReport};
use crate::spectral::{classify_sectors, decompose, growth_rate, DecomposeOptions, SectorContent};

/// `1/137.035999`.
pub const FINE_STRUCTURE: f64 = 1.0 / 137.035_999;
/// `exp(-(coth 1 - 1))`, mpmath at 50 digits.
pub const KERNEL_AT_ONE: f64 = 0.731_224_110_505_803_053_120_931_897_1;
/// `√(π · 137.035999)`, mpmath at 50 digits.
pub const PHYSICAL_THRESHOLD: f64 = 20.748_765_932_838_951_678_5;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Coupling used for the sector classification.
    pub e_squared: f64,
    pub m_max: i32,
    /// Coupling of the coherent-model checks; `π/2` puts the `m = 1` sector at `z = 1/2`.
    pub coherent_e_squared: f64,
    pub decompose: DecomposeOptions,
    /// Replaces every per-check tolerance when set.
    pub tolerance: Option<f64>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            e_squared: FINE_STRUCTURE,
            m_max: 25,
            coherent_e_squared: PI / 2.0,
            decompose: DecomposeOptions::default(),
            tolerance: None,
        }
    }
}

impl SuiteConfig {
    fn tol(&self, default: f64) -> f64 {
        self.tolerance.unwrap_or(default)
    }
}

fn check_or_error<F>(name: &str, tolerance: f64, f: F) -> CheckReport
where
    F: FnOnce() -> Result<CheckReport, Box<dyn std::error::Error>>,
{
    f().unwrap_or_else(|e| CheckReport::errored(name, tolerance, e))
}

fn random_boost(rng: &mut ChaCha8Rng, max_rapidity: f64) -> Result<LorentzBoost, Box<dyn std::error::Error>> {
    let axis = [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5];
    Ok(LorentzBoost::new(axis, max_rapidity * rng.random::<f64>())?)
}

pub fn kernel_value_check(cfg: &SuiteConfig) -> CheckReport {
    let tol = cfg.tol(1e-12);
    check_or_error("kernel_value", tol, || {
        let k = kernel_value(&KernelParams::from_z(1.0)?, 1.0)?;
        Ok(CheckReport::new("kernel_value", (k - KERNEL_AT_ONE).abs(), tol)
            .param("z", 1.0)
            .param("lambda", 1.0)
            .param("value", k))
    })
}

/// Series branch of `ψ` against direct evaluation on a log grid over `[1e-8, 1e-2]`.
pub fn psi_series_check(cfg: &SuiteConfig) -> CheckReport {
    let tol = cfg.tol(1e-12);
    check_or_error("psi_series", tol, || {
        let n = 121;
        let mut worst: f64 = 0.0;
        for k in 0..n {
            // Keep the top sample on the series side of the branch point.
            let l = 10f64.powf(-8.0 + 6.0 * k as f64 / (n - 1) as f64).min(PSI_SERIES_CUTOFF * (1.0 - f64::EPSILON));
            worst = worst.max((psi(l)? - psi_direct(l)).abs());
        }
        Ok(CheckReport::new("psi_series", worst, tol).param("lambda_min", 1e-8).param("lambda_max", 1e-2).param("samples", n))
    })
}

/// 20 seeded point sets, each under a random common boost with `χ ≤ 5`.
pub fn kernel_invariance_check(cfg: &SuiteConfig) -> CheckReport {
    let tol = cfg.tol(1e-10);
    check_or_error("kernel_invariance", tol, || {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let params = KernelParams::from_z(0.5)?;
        let mut worst: f64 = 0.0;
        for set in 0..20 {
            let pts = sample_points(8, 2.0, cfg.seed.wrapping_add(1000 + set))?;
            let boost = random_boost(&mut rng, 5.0)?;
            worst = worst.max(invariance_check(&params, &pts, &boost)?);
        }
        Ok(CheckReport::new("kernel_invariance", worst, tol)
            .param("point_sets", 20)
            .param("points", 8)
            .param("max_boost_rapidity", 5.0)
            .param("z", 0.5))
    })
}

pub fn gram_psd_check(cfg: &SuiteConfig) -> CheckReport {
    let tol = cfg.tol(1e-10);
    check_or_error("gram_psd", tol, || {
        let pts = sample_points(40, 2.0, cfg.seed)?;
        let mut worst: f64 = 0.0;
        let mut mins = Vec::new();
        for z in [0.3, 0.5, 1.0, 2.0, 5.0] {
            let g = gram(&KernelParams::from_z(z)?, &pts)?;
            let m = g.min_eigenvalue();
            mins.push(json!([z, m]));
            // Scale-free violation: how far below zero, relative to the trace.
            worst = worst.max((-m / g.trace()).max(0.0));
        }
        Ok(CheckReport::new("gram_psd", worst, tol).param("points", 40).param("min_eigenvalues", Value::Array(mins)))
    })
}

pub fn gram_schmidt_check(cfg: &SuiteConfig) -> CheckReport {
    let tol = cfg.tol(1e-8);
    check_or_error("gram_schmidt", tol, || {
        let pts = sample_points(10, 2.0, cfg.seed)?;
        let g = gram(&KernelParams::from_z(0.5)?, &pts)?;
        let sys = gram_schmidt(&g)?;
        Ok(CheckReport::new("gram_schmidt", sys.orthonormality_deviation(g.matrix()), tol)
            .param("points", 10)
            .param("z", 0.5))
    })
}

pub fn growth_rate_check(cfg: &SuiteConfig) -> CheckReport {
    let tol = cfg.tol(1e-3);
    check_or_error("growth_rate", tol, || {
        let r = growth_rate(0.5)?;
        Ok(CheckReport::new("growth_rate", (r - 0.5).abs(), tol).param("z", 0.5).param("rate", r))
    })
}

/// Discrete component present exactly for `z < 1`, at `ρ₀ ≈ 1 - z` with
/// Casimir `z(2 - z)`.
pub fn decomposition_branch_check(cfg: &SuiteConfig) -> CheckReport {
    let tol = cfg.tol(1e-3);
    check_or_error("decomposition_branches", tol, || {
        let mut worst: f64 = 0.0;
        let mut branches_ok = true;
        let mut casimir_exact = true;
        for z in [0.1, 0.25, 0.5, 0.75, 0.9] {
            let d = decompose(z, &cfg.decompose)?;
            match d.discrete {
                Some(c) => {
                    worst = worst.max((c.rho0 - (1.0 - z)).abs());
                    casimir_exact &= c.casimir == z * (2.0 - z);
                }
                None => branches_ok = false,
            }
        }
        for z in [1.1, 1.5, 2.0, 5.0] {
            branches_ok &= decompose(z, &cfg.decompose)?.discrete.is_none();
        }
        Ok(CheckReport::new("decomposition_branches", worst, tol)
            .param("z_supplementary", json!([0.1, 0.25, 0.5, 0.75, 0.9]))
            .param("z_principal", json!([1.1, 1.5, 2.0, 5.0]))
            .require("branches_correct", branches_ok)
            .require("casimir_exact", casimir_exact))
    })
}

pub fn roundtrip_check(cfg: &SuiteConfig, z: f64, default_tol: f64) -> CheckReport {
    let name = format!("roundtrip_z{z}");
    let tol = cfg.tol(default_tol);
    check_or_error(&name, tol, || {
        let d = decompose(z, &cfg.decompose)?;
        let (lo, hi) = cfg.decompose.check_range;
        Ok(CheckReport::new(&name, d.reconstruction_error, tol)
            .param("z", z)
            .param("lambda_min", lo)
            .param("lambda_max", hi)
            .param("rho_max", cfg.decompose.grid.max)
            .param("rho_points", cfg.decompose.grid.points as u64))
    })
}

/// Reconstruction at the origin against the kernel normalization `K(0) = 1`.
pub fn origin_check(cfg: &SuiteConfig) -> CheckReport {
    let tol = cfg.tol(1e-4);
    check_or_error("reconstruction_origin", tol, || {
        let mut worst: f64 = 0.0;
        for z in [0.5, 1.5] {
            worst = worst.max((decompose(z, &cfg.decompose)?.origin_value() - 1.0).abs());
        }
        Ok(CheckReport::new("reconstruction_origin", worst, tol).param("z", json!([0.5, 1.5])))
    })
}

/// Threshold arithmetic and class structure of the sector classification.
pub fn classification_check(cfg: &SuiteConfig) -> CheckReport {
    let tol = cfg.tol(1e-12);
    check_or_error("sector_classification", tol, || {
        let c = classify_sectors(cfg.e_squared, cfg.m_max)?;
        let oracle = if cfg.e_squared == FINE_STRUCTURE { PHYSICAL_THRESHOLD } else { (PI * (1.0 / cfg.e_squared)).sqrt() };
        let deviation = (c.threshold - oracle).abs() / oracle;

        let mut supplementary = Vec::new();
        let mut structure_ok = true;
        let mut rho0s: Vec<f64> = Vec::new();
        for s in c.sectors.iter().filter(|s| s.m > 0) {
            let z = cfg.e_squared * f64::from(s.m).powi(2) / PI;
            let expected_supp = f64::from(s.m) < oracle && (z - 1.0).abs() > 1e-9;
            match s.content {
                SectorContent::WithSupplementary { rho0 } => {
                    supplementary.push(s.m);
                    structure_ok &= expected_supp && rho0 == 1.0 - z;
                    structure_ok &= !rho0s.contains(&rho0);
                    rho0s.push(rho0);
                }
                SectorContent::PrincipalOnly => structure_ok &= !expected_supp && s.class_id == crate::spectral::PRINCIPAL_CLASS,
                SectorContent::Boundary => structure_ok &= (z - 1.0).abs() <= 1e-9,
                SectorContent::Trivial => structure_ok = false,
            }
        }
        for s in &c.sectors {
            structure_ok &= c.sector(-s.m).is_some_and(|t| t.class_id == s.class_id);
        }
        let classes = c.classes();
        let principal_classes = classes.iter().filter(|(id, _)| id == crate::spectral::PRINCIPAL_CLASS).count();
        structure_ok &= principal_classes <= 1;
        Ok(CheckReport::new("sector_classification", deviation, tol)
            .param("e_squared", cfg.e_squared)
            .param("m_max", cfg.m_max)
            .param("threshold", c.threshold)
            .param("integer_part", c.integer_part)
            .param("supplementary_abs_m", json!(supplementary))
            .param("classes", classes.len() as u64)
            .require("structure_correct", structure_ok))
    })
}

pub fn embedding_check(cfg: &SuiteConfig) -> CheckReport {
    let tol = cfg.tol(1e-10);
    check_or_error("embedding", tol, || {
        let pts = sample_points(6, 2.0, cfg.seed)?;
        let emb = embed(&pts, cfg.coherent_e_squared, 5)?;
        Ok(CheckReport::new("embedding", emb.constraint_deviation(), tol)
            .param("points", 6)
            .param("modes", 5)
            .param("e_squared", cfg.coherent_e_squared))
    })
}

fn pair(lambda: f64) -> Result<Vec<LobachevskyPoint>, Box<dyn std::error::Error>> {
    Ok(vec![LobachevskyPoint::rest(), LobachevskyPoint::from_rapidity([0.0, 0.0, 1.0], lambda)?])
}

/// Model overlaps against the kernel for `m ∈ {1,2,3}`, `λ ∈ {0.2, 0.5, 1}`.
pub fn overlap_check(cfg: &SuiteConfig) -> CheckReport {
    let tol = cfg.tol(1e-8);
    check_or_error("coherent_overlap", tol, || {
        let e2 = cfg.coherent_e_squared;
        let mut worst: f64 = 0.0;
        for lambda in [0.2, 0.5, 1.0] {
            for m in 1..=3 {
                let model = CoherentModel::build(&pair(lambda)?, e2, 1, m, 0)?;
                let want = kernel_value(&KernelParams::new(e2, m)?, lambda)?;
                worst = worst.max((model.overlap(0, 1, m)? - want).abs());
            }
        }
        Ok(CheckReport::new("coherent_overlap", worst, tol)
            .param("e_squared", e2)
            .param("charges", json!([1, 2, 3]))
            .param("lambdas", json!([0.2, 0.5, 1.0])))
    })
}

/// Own-frame vacuum property: `‖ⁱc_α |m, u_i⟩‖` and `⟨N(u_i)⟩` vanish.
pub fn vacuum_check(cfg: &SuiteConfig) -> CheckReport {
    let tol = cfg.tol(1e-10);
    check_or_error("own_frame_vacuum", tol, || {
        let pts = sample_points(4, 1.0, cfg.seed)?;
        let model = CoherentModel::build(&pts, cfg.coherent_e_squared, 3, 2, 0)?;
        let mut worst: f64 = 0.0;
        let mut cross_positive = true;
        for m in [1, 2] {
            worst = worst.max(model.own_frame_vacuum_deviation(m)?);
            for i in 0..pts.len() {
                worst = worst.max(model.number_expectation(i, &model.coherent_state(i, m)?)?);
                let other = model.coherent_state((i + 1) % pts.len(), m)?;
                cross_positive &= model.number_expectation(i, &other)? > 0.0;
            }
        }
        Ok(CheckReport::new("own_frame_vacuum", worst, tol)
            .param("points", 4)
            .param("charges", json!([1, 2]))
            .require("cross_frame_number_positive", cross_positive))
    })
}

pub fn ccr_check(cfg: &SuiteConfig) -> CheckReport {
    let tol = cfg.tol(1e-9);
    check_or_error("ccr", tol, || {
        let pts = sample_points(3, 1.0, cfg.seed)?;
        let model = CoherentModel::build(&pts, cfg.coherent_e_squared, 2, 2, 2)?;
        let mut worst: f64 = 0.0;
        for m in [-2, 1, 2] {
            worst = worst.max(model.ccr_deviation(m, cfg.seed)?);
        }
        Ok(CheckReport::new("ccr", worst, tol).param("points", 3).param("modes", 2).param("charges", json!([-2, 1, 2])))
    })
}

/// Every `p, n ≤ 1` moment between every frame pair against
/// `(Fock moment) × (overlap)`.
pub fn mixed_moment_check(cfg: &SuiteConfig) -> CheckReport {
    let tol = cfg.tol(1e-8);
    check_or_error("mixed_moment_factorization", tol, || {
        let pts = sample_points(3, 1.0, cfg.seed)?;
        let modes = 2;
        let model = CoherentModel::build(&pts, cfg.coherent_e_squared, modes, 1, 1)?;
        let mut lists: Vec<Vec<usize>> = vec![vec![]];
        lists.extend((0..modes).map(|a| vec![a]));
        let mut worst: f64 = 0.0;
        let mut same_frame: f64 = 0.0;
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                for b in &lists {
                    for a in &lists {
                        let mm = model.mixed_moment((j, b), (i, a), 1)?;
                        worst = worst.max(mm.deviation);
                        if i == j {
                            same_frame = same_frame.max(mm.deviation);
                        }
                    }
                }
            }
        }
        Ok(CheckReport::new("mixed_moment_factorization", worst, tol)
            .param("points", 3)
            .param("modes", modes as u64)
            .param("charge", 1)
            .param("same_frame_max_deviation", same_frame))
    })
}

fn blocks_json(blocks: &[((usize, usize), f64)]) -> Value {
    Value::Array(blocks.iter().map(|((a, b), d)| json!([a, b, d])).collect())
}

/// Orthogonality relation on a 4-point, 4-mode, degree ≤ 2 instance.
pub fn orthogonality_relation_check(cfg: &SuiteConfig) -> CheckReport {
    let tol = cfg.tol(1e-7);
    check_or_error("orthogonality", tol, || {
        let e2 = cfg.coherent_e_squared;
        let pts = sample_points(4, 1.0, cfg.seed)?;
        let model = CoherentModel::build(&pts, e2, 4, 1, 2)?;
        let sys = gram_schmidt(&gram(&KernelParams::new(e2, 1)?, &pts)?)?;
        let r = orthogonality_check(&model, &sys, 2)?;
        Ok(CheckReport::new("orthogonality", r.max_deviation, tol)
            .param("points", 4)
            .param("modes", 4)
            .param("degree", 2)
            .param("e_squared", e2)
            .param("block_max_deviation", blocks_json(&r.blocks)))
    })
}

/// Kronecker factorization of the creator/coherent family Gram for charge `m`.
pub fn lemma_check(cfg: &SuiteConfig, m: i32) -> CheckReport {
    let name = format!("lemma_factorization_m{m}");
    let tol = cfg.tol(1e-7);
    check_or_error(&name, tol, || {
        let pts = sample_points(3, 1.0, cfg.seed)?;
        let model = CoherentModel::build(&pts, cfg.coherent_e_squared, 2, m, 2)?;
        let r = lemma_factorization_check(&model, m, 2, cfg.seed)?;
        Ok(CheckReport::new(&name, r.factorization.max_deviation, tol)
            .param("points", 3)
            .param("modes", 2)
            .param("degree", 2)
            .param("charge", m)
            .param("block_max_deviation", blocks_json(&r.factorization.blocks)))
    })
}

/// Linear disjointness of the same family: positive-definite Gram and a
/// consistent solve.
pub fn disjointness_check(cfg: &SuiteConfig, m: i32) -> CheckReport {
    let name = format!("lemma_disjointness_m{m}");
    let tol = cfg.tol(1e-8);
    check_or_error(&name, tol, || {
        let pts = sample_points(3, 1.0, cfg.seed)?;
        let model = CoherentModel::build(&pts, cfg.coherent_e_squared, 2, m, 2)?;
        let r = lemma_factorization_check(&model, m, 2, cfg.seed)?;
        Ok(CheckReport::new(&name, r.disjointness_residual, tol)
            .param("charge", m)
            .param("min_eigenvalue", r.min_eigenvalue)
            .param("coefficient_error", r.coefficient_error)
            .require("gram_positive_definite", r.min_eigenvalue > 0.0))
    })
}

/// Common boost of all frames leaves the family Grams unchanged.
pub fn relabel_check(cfg: &SuiteConfig) -> CheckReport {
    let tol = cfg.tol(1e-8);
    check_or_error("boost_relabel_invariance", tol, || {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(7));
        let pts = sample_points(3, 1.0, cfg.seed)?;
        let mut worst: f64 = 0.0;
        for m in [1, 2] {
            let boost = random_boost(&mut rng, 2.0)?;
            worst = worst.max(relabel_invariance(&pts, cfg.coherent_e_squared, 2, &boost, m, 1)?);
        }
        Ok(CheckReport::new("boost_relabel_invariance", worst, tol).param("points", 3).param("degree", 1))
    })
}

/// Runs every check in a fixed order.
pub fn run_suite(cfg: &SuiteConfig) -> SuiteReport {
    let checks = vec![
        kernel_value_check(cfg),
        psi_series_check(cfg),
        kernel_invariance_check(cfg),
        gram_psd_check(cfg),
        gram_schmidt_check(cfg),
        growth_rate_check(cfg),
        decomposition_branch_check(cfg),
        roundtrip_check(cfg, 1.5, 1e-6),
        roundtrip_check(cfg, 0.5, 1e-5),
        origin_check(cfg),
        classification_check(cfg),
        embedding_check(cfg),
        overlap_check(cfg),
        vacuum_check(cfg),
        ccr_check(cfg),
        mixed_moment_check(cfg),
        orthogonality_relation_check(cfg),
        lemma_check(cfg, 1),
        lemma_check(cfg, 2),
        disjointness_check(cfg, 1),
        disjointness_check(cfg, 2),
        relabel_check(cfg),
    ];
    let mut params = BTreeMap::new();
    params.insert("seed".to_string(), json!(cfg.seed));
    params.insert("e_squared".to_string(), json!(cfg.e_squared));
    params.insert("m_max".to_string(), json!(cfg.m_max));
    params.insert("coherent_e_squared".to_string(), json!(cfg.coherent_e_squared));
    params.insert("rho_max".to_string(), json!(cfg.decompose.grid.max));
    params.insert("rho_points".to_string(), json!(cfg.decompose.grid.points));
    params.insert("lambda_max".to_string(), json!(cfg.decompose.lambda_max));
    params.insert("tolerance_override".to_string(), json!(cfg.tolerance));
    SuiteReport::new("verify", params, checks)
}
