use serde_json::Value;
use std::path::PathBuf;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn config(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_billiard")).args(args).output().expect("spawn billiard")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn json_ok(args: &[&str], schema: &str) -> Value {
    let out = run(args);
    assert_eq!(code(&out), 0, "{args:?}: {}", stderr(&out));
    let value: Value = serde_json::from_slice(&out.stdout).unwrap();
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "schemas", &format!("{schema}.schema.json")].iter().collect();
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(&value).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{args:?}: {errors:?}");
    value
}

#[test]
fn validate_exit_codes() {
    assert_eq!(code(&run(&["validate", &config("equilateral.toml")])), 0);

    let out = run(&["validate", &config("collinear.toml")]);
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).contains("(H) violated"));
    assert!(stderr(&out).contains("hull(K1 u K3) vs K2"), "{}", stderr(&out));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "balls = [ { centre = [0.0, 0.0] } ]\n").unwrap();
    assert_eq!(code(&run(&["validate", bad.to_str().unwrap()])), 3);
    std::fs::write(&bad, "d0 = \n").unwrap();
    assert_eq!(code(&run(&["validate", bad.to_str().unwrap()])), 3);
    assert_eq!(code(&run(&["validate", "/nonexistent/table.toml"])), 1);
}

#[test]
fn validate_json_matches_schema() {
    let v = json_ok(&["validate", &config("equilateral.toml"), "--format", "json"], "validate");
    assert_eq!(v["passed"], true);
}

#[test]
fn periodic_triangle_orbit_is_planar() {
    let out = run(&["orbit", &config("equilateral.toml"), "--word", "1,2,3", "--periodic"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "flag_perpendicular").unwrap();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert_eq!(r.split(',').nth(col), Some("0"));
    }
}

#[test]
fn orbit_json_and_csv_file() {
    let v = json_ok(&["orbit", &config("equilateral.toml"), "--word", "1,2,1,3", "--periodic", "--format", "json"], "orbit");
    assert_eq!(v["points"].as_array().unwrap().len(), 4);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("orbit.csv");
    let out = run(&["orbit", &config("equilateral.toml"), "--word", "1,2,3", "--csv", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(path).unwrap().lines().count(), 4);
}

#[test]
fn orbit_failures() {
    let t = config("equilateral.toml");
    let out = run(&["orbit", &t, "--word", "1,1", "--periodic"]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("inadmissible"));
    assert_eq!(code(&run(&["orbit", &t, "--word", "1,x"])), 3);
    assert_eq!(code(&run(&["orbit", &t, "--word", "1,4"])), 4);
    assert_eq!(code(&run(&["orbit", &t])), 64);
    assert_eq!(code(&run(&["orbit", &t, "--sample-measure", &config("uniform3.toml"), "--length", "10"])), 64);
}

#[test]
fn long_sampled_orbit_is_fast_and_deterministic() {
    let args = [
        "orbit",
        &config("equilateral.toml"),
        "--sample-measure",
        &config("uniform3.toml"),
        "--length",
        "2000",
        "--seed",
        "17",
    ];
    let start = Instant::now();
    let a = run(&args);
    assert!(start.elapsed() < Duration::from_secs(60));
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(stdout(&a).lines().count(), 2001);
    assert_eq!(a.stdout, run(&args).stdout);
}

#[test]
fn spectrum_methods_agree_on_triangle_orbit() {
    let v = json_ok(&["spectrum", &config("equilateral.toml"), "--word", "1,2,3", "--m", "300"], "spectrum");
    let dis = v["relative_disagreement"].as_array().unwrap();
    assert!(dis.iter().all(|x| x.as_f64().unwrap() < 1e-6), "{dis:?}");
    assert!(v["lambda_f"].as_f64().unwrap() > v["lambda_e"].as_f64().unwrap());
    assert_eq!(v["degenerate"], false);
}

#[test]
fn axis_orbit_has_equal_exponents() {
    let v = json_ok(
        &["spectrum", &config("equilateral.toml"), "--word", "1,2", "--method", "delta"],
        "spectrum",
    );
    assert_eq!(v["lambda_e"], v["lambda_f"]);
    assert_eq!(v["degenerate"], true);
}

#[test]
fn spectrum_usage_errors() {
    let t = config("equilateral.toml");
    assert_eq!(code(&run(&["spectrum", &t])), 64);
    assert_eq!(code(&run(&["spectrum", &t, "--word", "1,2,3", "--m", "10"])), 64);
    assert_eq!(code(&run(&["spectrum", &t, "--word", "1,2,3", "--method", "svd"])), 64);
}

#[test]
fn sampled_spectrum_is_deterministic() {
    let args = ["spectrum", &config("equilateral.toml"), "--sample", &config("uniform3.toml"), "--m", "240", "--seed", "9"];
    let v = json_ok(&args, "spectrum");
    assert!(v["lambda_f"].as_f64().unwrap() >= v["lambda_e"].as_f64().unwrap());
    assert_eq!(run(&args).stdout, run(&args).stdout);
}

#[test]
fn gap_defaults_pass() {
    let v = json_ok(&["gap", &config("equilateral.toml"), &config("uniform3.toml"), "--seed", "1"], "gap");
    assert_eq!(v["pass"], true);
    assert!(v["mean_gap"].as_f64().unwrap() > 0.0);
    assert_eq!(v["completed"], 50);
}

#[test]
fn single_orbit_gap_is_indeterminate() {
    let v = json_ok(
        &["gap", &config("equilateral.toml"), &config("uniform3.toml"), "--seed", "1", "--ensemble", "1"],
        "gap",
    );
    assert_eq!(v["pass"], "indeterminate");
    assert!(v["z_score"].is_null());
}

#[test]
fn gap_csv_is_byte_identical_across_runs_and_threads() {
    let base = ["gap", &config("equilateral.toml"), &config("near-two-ball.toml"), "--m", "108", "--seed", "5", "--ensemble", "12", "--format", "csv"];
    let one = run(&[&base[..], &["--threads", "1"]].concat());
    let four = run(&[&base[..], &["--threads", "4"]].concat());
    assert_eq!(code(&one), 0, "{}", stderr(&one));
    assert_eq!(stdout(&one).lines().count(), 13);
    assert_eq!(one.stdout, four.stdout);
    assert_eq!(one.stdout, run(&base).stdout);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rows.csv");
    let json = run(&["gap", &config("equilateral.toml"), &config("near-two-ball.toml"), "--m", "108", "--seed", "5", "--ensemble", "12", "--csv", path.to_str().unwrap()]);
    assert_eq!(code(&json), 0);
    assert_eq!(std::fs::read(path).unwrap(), one.stdout);
}

#[test]
fn gap_needs_a_seed_and_a_valid_window() {
    let (t, mu) = (config("equilateral.toml"), config("uniform3.toml"));
    assert_eq!(code(&run(&["gap", &t, &mu])), 64);
    assert_eq!(code(&run(&["gap", &t, &mu, "--seed", "1", "--m", "7"])), 64);
    assert_eq!(code(&run(&["gap", &config("collinear.toml"), &mu, "--seed", "1"])), 2);
}

#[test]
fn uniform_pair_frequency() {
    let v = json_ok(
        &["frequency", &config("uniform3.toml"), "--word", "1,2", "--n", "1000000", "--seed", "4", "--format", "json"],
        "frequency",
    );
    assert!((v["empirical_freq"].as_f64().unwrap() - 1.0 / 6.0).abs() < 2e-3);
    let csv = run(&["frequency", &config("uniform3.toml"), "--word", "1,2", "--n", "1000", "--seed", "4"]);
    assert_eq!(stdout(&csv).lines().count(), 2);
}

#[test]
fn short_paths_have_no_occurrences() {
    let v = json_ok(
        &["frequency", &config("uniform3.toml"), "--word", "1,2,3", "--n", "2", "--seed", "4", "--format", "json"],
        "frequency",
    );
    assert_eq!(v["occurrences"], 0);
}

#[test]
fn rich_windows_pass() {
    let v = json_ok(
        &["frequency", &config("uniform3.toml"), "--rich", "8", "--t", "10000", "--seed", "4", "--format", "json"],
        "frequency",
    );
    assert_eq!(v["pass"], true);
    assert!(v["count"].as_f64().unwrap() >= v["bound"].as_f64().unwrap());
}

#[test]
fn help_and_bad_usage() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["bogus"])), 64);
    assert_eq!(code(&run(&[])), 64);
    assert_eq!(code(&run(&["--threads", "0", "validate", &config("equilateral.toml")])), 64);
    assert_eq!(code(&run(&["validate", &config("equilateral.toml"), "--format", "csv"])), 64);
}
