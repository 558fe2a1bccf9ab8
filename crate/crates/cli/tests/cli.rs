use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lifetail::{fit, ExceedanceConfig, Family};
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_lifetail");

fn female_csv(dir: &Path) -> PathBuf {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/japanese_female.csv");
    let dst = dir.join("japanese_f.csv");
    fs::copy(src, &dst).unwrap();
    dst
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn fit_matches_library_and_embeds_provenance() {
    let dir = tempfile::tempdir().unwrap();
    female_csv(dir.path());
    let out = run(dir.path(), &["fit", "--data", "japanese_f.csv", "--family", "gomp", "--thresh", "108"]);
    let v = json(&out);
    let fr = fit(&lifetail::japanese_female(), Family::Gomp, &ExceedanceConfig::new(108.0), None).unwrap();
    let est = v["result"]["estimates"]["values"].as_array().unwrap();
    for (a, b) in est.iter().zip(fr.estimates.values()) {
        assert!((a.as_f64().unwrap() - b).abs() <= 1e-10 * b.abs());
    }
    let se = v["result"]["se"].as_array().unwrap();
    assert!((se[0].as_f64().unwrap() - fr.se[0].unwrap()).abs() <= 1e-10);
    assert!((v["result"]["loglik"].as_f64().unwrap() - fr.loglik).abs() < 1e-9);
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["config"]["family"], "gomp");
    assert_eq!(v["config"]["thresh"], 108.0);
    assert_eq!(v["input_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn forbidden_comparison_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    female_csv(dir.path());
    let out = run(
        dir.path(),
        &["anova", "--data", "japanese_f.csv", "--null", "exp", "--alt", "gompmake", "--thresh", "108"],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("not permitted"), "{err}");
    assert!(!err.contains("panicked"));
    assert!(out.stdout.is_empty());
}

#[test]
fn sample_is_deterministic_and_needs_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let args = |name: &'static str| {
        ["sample", "--family", "gp", "--scale", "1", "--shape", "0", "--n", "10", "--seed", "7", "--out", name]
    };
    assert!(run(dir.path(), &args("a.csv")).status.success());
    assert!(run(dir.path(), &args("b.csv")).status.success());
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 11);

    let out = run(dir.path(), &["sample", "--family", "gp", "--scale", "1", "--shape", "0", "--n", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn sampled_csv_round_trips_through_fit() {
    let dir = tempfile::tempdir().unwrap();
    let s = run(
        dir.path(),
        &[
            "sample", "--family", "gp", "--scale", "2", "--shape", "-0.2", "--n", "2000", "--seed", "3",
            "--scheme", "ltrt", "--lower", "0,0.5", "--upper", "4,inf", "--out", "s.csv",
        ],
    );
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    let v = json(&run(dir.path(), &["fit", "--data", "s.csv", "--family", "gp", "--thresh", "0"]));
    let est = v["result"]["estimates"]["values"].as_array().unwrap();
    assert!((est[0].as_f64().unwrap() - 2.0).abs() < 0.3);
    assert!((est[1].as_f64().unwrap() + 0.2).abs() < 0.1);
}

#[test]
fn config_file_fills_missing_flags() {
    let dir = tempfile::tempdir().unwrap();
    female_csv(dir.path());
    fs::write(dir.path().join("c.json"), r#"{"data": "japanese_f.csv", "family": "gomp", "thresh": 108}"#).unwrap();
    let v = json(&run(dir.path(), &["fit", "--config", "c.json", "--family", "exp"]));
    assert_eq!(v["config"]["family"], "exp");
    assert_eq!(v["result"]["family"], "exp");
    assert_eq!(v["config"]["thresh"], 108.0);
}

#[test]
fn bootstrap_output_does_not_depend_on_jobs() {
    let go = |jobs: &str| {
        let dir = tempfile::tempdir().unwrap();
        female_csv(dir.path());
        let out = run(
            dir.path(),
            &[
                "boot-lrt", "--data", "japanese_f.csv", "--null", "exp", "--alt", "gomp", "--thresh", "108",
                "--b", "99", "--seed", "11", "--jobs", jobs, "--out", "b.json", "--replicates", "b.csv",
            ],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (fs::read(dir.path().join("b.json")).unwrap(), fs::read(dir.path().join("b.csv")).unwrap())
    };
    let one = go("1");
    let three = go("3");
    assert_eq!(one, three);
    let v: Value = serde_json::from_slice(&one.0).unwrap();
    assert!(v["result"]["pvalue"].as_f64().unwrap() < 0.05);
    assert_eq!(v["config"]["seed"], 11);
}

#[test]
fn threshold_diagnostics_write_json_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    female_csv(dir.path());
    let out = run(
        dir.path(),
        &["tstab", "--data", "japanese_f.csv", "--thresholds", "104,106,108,110", "--out", "t.json", "--svg", "t.svg"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&fs::read(dir.path().join("t.json")).unwrap()).unwrap();
    assert_eq!(v["result"]["entries"].as_array().unwrap().len(), 4);
    assert!(fs::read_to_string(dir.path().join("t.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn hazard_band_csv() {
    let dir = tempfile::tempdir().unwrap();
    female_csv(dir.path());
    let out = run(
        dir.path(),
        &["hazard", "--data", "japanese_f.csv", "--family", "gomp", "--thresh", "108", "--times", "108,112"],
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert!(r[2] < r[1] && r[1] < r[3]);
    }
    assert_eq!(rows[1][0], 112.0);
}

#[test]
fn strata_requires_a_stratum_column() {
    let dir = tempfile::tempdir().unwrap();
    female_csv(dir.path());
    let base = ["strata", "--data", "japanese_f.csv", "--family", "exp", "--thresh", "108"];
    assert_eq!(run(dir.path(), &base).status.code(), Some(2));
    let mut args = base.to_vec();
    args.extend(["--stratum", "cohort"]);
    let v = json(&run(dir.path(), &args));
    assert!(v["result"]["pvalue"].as_f64().unwrap() > 0.0);
}

#[test]
fn exit_codes_for_bad_input_and_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    female_csv(dir.path());
    let bad_family = run(dir.path(), &["fit", "--data", "japanese_f.csv", "--family", "lognormal", "--thresh", "108"]);
    assert_eq!(bad_family.status.code(), Some(2));
    let missing = run(dir.path(), &["fit", "--data", "nope.csv", "--family", "exp", "--thresh", "108"]);
    assert_eq!(missing.status.code(), Some(2));
    // grid far above the estimate leaves the maximum on its edge
    let narrow = run(
        dir.path(),
        &["profile-endpoint", "--data", "japanese_f.csv", "--thresh", "110", "--psi", "200,250,300"],
    );
    assert_eq!(narrow.status.code(), Some(3), "{}", String::from_utf8_lossy(&narrow.stderr));
}

#[test]
fn gof_and_npmle_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let s = run(
        dir.path(),
        &["sample", "--family", "exp", "--par", "scale=1", "--n", "200", "--seed", "5", "--out", "s.csv"],
    );
    assert!(s.status.success());
    let out = run(
        dir.path(),
        &["gof", "--data", "s.csv", "--family", "exp", "--thresh", "0", "--kind", "pp", "--svg", "g.svg"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 201);
    assert!(dir.path().join("g.svg").exists());

    let v = json(&run(dir.path(), &["npmle", "--data", "s.csv", "--svg", "n.svg"]));
    let total: f64 = v["result"]["p"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
}
