//! Acceptance criteria, one PASS/FAIL line each. The test fails if any
//! criterion fails.

#![allow(clippy::excessive_precision)]

use std::f64::consts::PI;
use std::fs;
use std::process::Command;
use std::time::{Duration, Instant};

use coulomb_sectors::coherent::{lemma_factorization_check, orthogonality_check, CoherentModel};
use coulomb_sectors::geometry::{sample_points, LobachevskyPoint, LorentzBoost};
use coulomb_sectors::kernel::{gram, gram_schmidt, invariance_check, kernel_value, psi, psi_direct, KernelParams};
use coulomb_sectors::spectral::{classify_sectors, decompose, DecomposeOptions, SectorContent, PRINCIPAL_CLASS};

// exp(-(coth 1 - 1)), mpmath at 50 digits.
const K_ONE: f64 = 0.731_224_110_505_803_053_120_931_897_1;
// sqrt(pi * 137.035999), mpmath at 50 digits.
const THRESHOLD: f64 = 20.748_765_932_838_951_678_5;
const ALPHA: f64 = 1.0 / 137.035_999;
const SEED: u64 = 2024;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
    budget: Duration,
}

fn criterion<F>(id: u32, name: &'static str, budget_secs: u64, f: F) -> Outcome
where
    F: FnOnce() -> (bool, String),
{
    let start = Instant::now();
    let (ok, detail) = f();
    let elapsed = start.elapsed();
    let budget = Duration::from_secs(budget_secs);
    Outcome { id, name, pass: ok && elapsed <= budget, detail, elapsed, budget }
}

fn kernel_correctness() -> (bool, String) {
    let k = kernel_value(&KernelParams::from_z(1.0).unwrap(), 1.0).unwrap();
    let dk = (k - K_ONE).abs();
    let mut ds: f64 = 0.0;
    for i in 0..=600 {
        let l = 10f64.powf(-8.0 + 6.0 * f64::from(i) / 600.0).min(0.999_999_999 * 1e-2);
        ds = ds.max((psi(l).unwrap() - psi_direct(l)).abs());
    }
    (dk <= 1e-12 && ds <= 1e-12, format!("|K(1,1) - oracle| = {dk:.2e}, max |series - direct| = {ds:.2e}"))
}

fn invariance() -> (bool, String) {
    let params = KernelParams::from_z(0.7).unwrap();
    let mut worst: f64 = 0.0;
    for set in 0..20u64 {
        let pts = sample_points(10, 2.0, SEED + set).unwrap();
        let t = set as f64 / 19.0;
        let axis = [(3.0 * t).cos(), (5.0 * t).sin(), 0.5 - t];
        let boost = LorentzBoost::new(axis, 5.0 * (0.05 + 0.95 * t)).unwrap();
        worst = worst.max(invariance_check(&params, &pts, &boost).unwrap());
    }
    (worst <= 1e-10, format!("max |G - G(Λ·)| = {worst:.2e} over 20 sets, χ ≤ 5"))
}

fn positive_definiteness() -> (bool, String) {
    let pts = sample_points(40, 2.5, SEED).unwrap();
    let mut worst = f64::INFINITY;
    let mut ok = true;
    for z in [0.3, 0.5, 1.0, 2.0, 5.0] {
        let g = gram(&KernelParams::from_z(z).unwrap(), &pts).unwrap();
        let rel = g.min_eigenvalue() / g.trace();
        ok &= rel >= -1e-10;
        worst = worst.min(rel);
    }
    (ok, format!("min λ_min / tr G = {worst:.2e}"))
}

fn decomposition_thresholds() -> (bool, String) {
    let opts = DecomposeOptions::default();
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for z in [0.1, 0.25, 0.5, 0.75, 0.9] {
        match decompose(z, &opts).map(|d| d.discrete) {
            Ok(Some(c)) => {
                worst = worst.max((c.rho0 - (1.0 - z)).abs());
                ok &= c.casimir == z * (2.0 - z);
            }
            _ => ok = false,
        }
    }
    for z in [1.1, 1.5, 2.0, 5.0] {
        ok &= matches!(decompose(z, &opts), Ok(d) if d.discrete.is_none());
    }
    (ok && worst <= 1e-3, format!("max |ρ₀ - (1 - z)| = {worst:.2e}, branches and Casimir exact: {ok}"))
}

fn round_trip() -> (bool, String) {
    let opts = DecomposeOptions::default();
    let e15 = decompose(1.5, &opts).unwrap().reconstruction_error;
    let e05 = decompose(0.5, &opts).unwrap().reconstruction_error;
    (e15 <= 1e-6 && e05 <= 1e-5, format!("z = 1.5: {e15:.2e} (≤ 1e-6), z = 0.5: {e05:.2e} (≤ 1e-5)"))
}

fn sector_classification() -> (bool, String) {
    let c = classify_sectors(ALPHA, 30).unwrap();
    let mut ok = (c.threshold - THRESHOLD).abs() <= 1e-12 * THRESHOLD;
    let mut rho0s = Vec::new();
    for m in 1..=30 {
        let s = c.sector(m).unwrap();
        if m <= 20 {
            let expected = 1.0 - f64::from(m * m) * ALPHA / PI;
            match s.content {
                SectorContent::WithSupplementary { rho0 } => {
                    ok &= (rho0 - expected).abs() <= 1e-15 && !rho0s.contains(&rho0);
                    rho0s.push(rho0);
                }
                _ => ok = false,
            }
        } else {
            ok &= s.content == SectorContent::PrincipalOnly && s.class_id == PRINCIPAL_CLASS;
        }
    }
    let classes = c.classes();
    let merged = classes.iter().find(|(id, _)| id == PRINCIPAL_CLASS).map(|(_, ms)| ms.clone());
    ok &= merged == Some((21..=30).collect());
    ok &= classes.len() == 1 + 20 + 1;
    (ok, format!("threshold = {:.15}, integer part {}, {} classes", c.threshold, c.integer_part, classes.len()))
}

fn coherent_overlap() -> (bool, String) {
    let e2 = PI / 2.0;
    let mut worst: f64 = 0.0;
    for lambda in [0.2, 0.5, 1.0] {
        let pts = [LobachevskyPoint::rest(), LobachevskyPoint::from_rapidity([1.0, 1.0, 0.0], lambda).unwrap()];
        for m in 1..=3 {
            let model = CoherentModel::build(&pts, e2, 1, m, 0).unwrap();
            let want = (-(e2 * f64::from(m * m) / PI) * psi(lambda).unwrap()).exp();
            worst = worst.max((model.overlap(0, 1, m).unwrap() - want).abs());
            worst = worst.max((model.overlap(1, 0, -m).unwrap() - want).abs());
        }
    }
    (worst <= 1e-8, format!("max |⟨m,u|m,v⟩ - K| = {worst:.2e}"))
}

fn orthogonality() -> (bool, String) {
    let e2 = PI / 2.0;
    let pts = sample_points(4, 1.0, SEED).unwrap();
    let model = CoherentModel::build(&pts, e2, 4, 1, 2).unwrap();
    let sys = gram_schmidt(&gram(&KernelParams::new(e2, 1).unwrap(), &pts).unwrap()).unwrap();
    let r = orthogonality_check(&model, &sys, 2).unwrap();
    let blocks: Vec<String> = r.blocks.iter().map(|((a, b), d)| format!("({a},{b}):{d:.1e}")).collect();
    (r.max_deviation <= 1e-7, format!("max deviation = {:.3e}; by degree block {}", r.max_deviation, blocks.join(" ")))
}

fn lemma() -> (bool, String) {
    let e2 = PI / 2.0;
    let pts = sample_points(3, 1.0, SEED).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [1, 2] {
        let model = CoherentModel::build(&pts, e2, 2, m, 2).unwrap();
        let r = lemma_factorization_check(&model, m, 2, SEED).unwrap();
        let deg0 = r.factorization.blocks.iter().find(|(k, _)| *k == (0, 0)).map_or(f64::NAN, |b| b.1);
        ok &= r.factorization.max_deviation <= 1e-7;
        parts.push(format!("m = {m}: {:.3e} (degree-0 block {deg0:.1e})", r.factorization.max_deviation));
    }
    (ok, parts.join(", "))
}

fn determinism() -> (bool, String) {
    let bin = env!("CARGO_BIN_EXE_coulomb-sectors");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut reports = Vec::new();
    for d in &dirs {
        let status = Command::new(bin)
            .args(["verify", "--seed", "7", "--output-dir"])
            .arg(d.path())
            .env_remove("COULOMB_SECTORS_OUT")
            .output()
            .unwrap()
            .status;
        reports.push((status.code(), fs::read(d.path().join("verify.json")).unwrap_or_default()));
    }
    let same = !reports[0].1.is_empty() && reports[0].1 == reports[1].1;
    (same, format!("two runs: {} bytes each, identical: {same}, exit codes {:?}/{:?}", reports[0].1.len(), reports[0].0, reports[1].0))
}

#[test]
fn acceptance_criteria() {
    let outcomes = [
        criterion(1, "kernel correctness", 1, kernel_correctness),
        criterion(2, "boost invariance", 5, invariance),
        criterion(3, "positive definiteness", 5, positive_definiteness),
        criterion(4, "decomposition thresholds", 30, decomposition_thresholds),
        criterion(5, "round trip", 60, round_trip),
        criterion(6, "sector classification", 1, sector_classification),
        criterion(7, "coherent model vs kernel", 30, coherent_overlap),
        criterion(8, "orthogonality relation", 30, orthogonality),
        criterion(9, "lemma factorization", 60, lemma),
        criterion(10, "determinism", 120, determinism),
    ];
    let mut failed = Vec::new();
    for o in &outcomes {
        println!(
            "[{}] {:>2} {:<26} {} ({:.2?} of {:?})",
            if o.pass { "PASS" } else { "FAIL" },
            o.id,
            o.name,
            o.detail,
            o.elapsed,
            o.budget
        );
        if !o.pass {
            failed.push(o.id);
        }
    }
    assert!(failed.is_empty(), "acceptance criteria failed: {failed:?}");
}
