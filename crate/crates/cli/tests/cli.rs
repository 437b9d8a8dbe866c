use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coulomb-sectors"))
        .args(args)
        .arg("--output-dir")
        .arg(dir)
        .env_remove("COULOMB_SECTORS_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn classify_physical_coupling() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["classify"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("threshold sqrt(pi/e^2) = 2.0748765932838953e1"));
    assert!(text.contains("integer part (least natural n with threshold <= n) = 21"));
    assert!(text.contains("supplementary-20: |m| in {20}"));
    assert!(text.contains("principal: |m| in {21,22,23,24,25}"));
    let csv = fs::read_to_string(dir.path().join("classification.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 51);
    assert_eq!(fs::read_to_string(dir.path().join("classification.txt")).unwrap(), text);
}

#[test]
fn classify_quarter_pi() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["classify", "--e-squared", "0.7853981633974483", "--m-max", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("supplementary-1: |m| in {1}"));
    assert!(text.contains("boundary-2: |m| in {2}"));
    assert!(text.contains("principal: |m| in {3,4}"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["classify", "--m-max", "0"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["decompose"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["nonsense"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["decompose", "--z", "0.5", "--rho-grid", "20"]).status.code(), Some(1));
}

#[test]
fn decompose_branches() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["decompose", "--z", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let json: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("decomposition.json")).unwrap()).unwrap();
    assert!((json["discrete"]["rho0"].as_f64().unwrap() - 0.5).abs() < 1e-3);
    assert_eq!(json["discrete"]["casimir"].as_f64().unwrap(), 0.75);
    assert_eq!(json["density"].as_array().unwrap().len(), 400);
    let keys: Vec<&String> = json.as_object().unwrap().keys().collect();
    assert_eq!(keys.len(), 4);

    let out = run(dir.path(), &["decompose", "--z", "1.5"]);
    assert_eq!(out.status.code(), Some(0));
    let json: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("decomposition.json")).unwrap()).unwrap();
    assert!(json["discrete"].is_null());

    let out = run(dir.path(), &["decompose", "--z", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("boundary"));
}

#[test]
fn decompose_from_charge_and_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["decompose", "--charge", "-1", "--e-squared", "1.5707963267948966"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("casimir = 7.5000000000000000e-1"));
    let out = run(dir.path(), &["decompose", "--z", "1.5", "--tolerance", "1e-30"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn kernel_gram_sweep_exports() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["kernel", "--z", "1", "--lmax-lambda", "2", "--points", "3"]).status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("kernel.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "lambda,psi,kernel");
    assert_eq!(lines[1], "0.0000000000000000e0,0.0000000000000000e0,1.0000000000000000e0");
    let k1: f64 = lines[2].split(',').nth(2).unwrap().parse().unwrap();
    assert!((k1 - 0.731_224_110_505_803).abs() < 1e-15);

    assert_eq!(run(dir.path(), &["gram", "--z", "0.3", "--points", "5"]).status.code(), Some(0));
    assert_eq!(fs::read_to_string(dir.path().join("gram.csv")).unwrap().lines().count(), 6);
    assert_eq!(fs::read_to_string(dir.path().join("points.csv")).unwrap().lines().count(), 6);

    let out = run(dir.path(), &["sweep", "--z-min", "0.5", "--z-max", "1.5", "--steps", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let status: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(status, ["supplementary", "boundary", "principal"]);
}

#[test]
fn outputs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        run(d.path(), &["gram", "--z", "0.5", "--seed", "3"]);
        run(d.path(), &["classify"]);
        run(d.path(), &["decompose", "--z", "0.25"]);
    }
    for f in ["gram.csv", "points.csv", "classification.csv", "decomposition.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

fn verify_pattern(dir: &Path, extra: &[&str]) -> (Option<i32>, Vec<(String, bool)>) {
    let mut args = vec!["verify"];
    args.extend_from_slice(extra);
    let out = run(dir, &args);
    let json: Value = serde_json::from_str(&fs::read_to_string(dir.join("verify.json")).unwrap()).unwrap();
    let pattern = json["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| (c["check"].as_str().unwrap().to_string(), c["pass"].as_bool().unwrap()))
        .collect();
    (out.status.code(), pattern)
}

#[test]
fn verify_reports_and_is_seed_robust() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (code_a, pat_a) = verify_pattern(a.path(), &["--seed", "1"]);
    let (code_b, pat_b) = verify_pattern(b.path(), &["--seed", "99"]);
    assert_eq!(pat_a, pat_b);
    assert_eq!(code_a, code_b);
    let all_pass = pat_a.iter().all(|(_, p)| *p);
    assert_eq!(code_a, Some(if all_pass { 0 } else { 3 }));
    assert!(pat_a.len() >= 20);

    let c = tempfile::tempdir().unwrap();
    let (code, forced) = verify_pattern(c.path(), &["--tolerance", "1e-20"]);
    assert_eq!(code, Some(3));
    assert!(forced.iter().filter(|(_, p)| !p).count() > pat_a.iter().filter(|(_, p)| !p).count());
}

#[test]
fn config_file_and_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "e_squared = 0.7853981633974483\nm_max = 3\n").unwrap();
    let out = run(dir.path(), &["classify", "--config", cfg.to_str().unwrap(), "--m-max", "4"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("principal: |m| in {3,4}"));

    fs::write(&cfg, "bogus_key = 1\n").unwrap();
    assert_eq!(run(dir.path(), &["classify", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));

    let env_dir = dir.path().join("from-env");
    let status = Command::new(env!("CARGO_BIN_EXE_coulomb-sectors"))
        .args(["classify", "--m-max", "2"])
        .env("COULOMB_SECTORS_OUT", &env_dir)
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert!(env_dir.join("classification.csv").exists());
}
