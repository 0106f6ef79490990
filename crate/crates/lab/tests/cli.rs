use std::fs;
use std::process::Command;

fn lab(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_lab")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn params_prints_constants() {
    let (code, stdout, _) = lab(&["params", "--seed", "1"]);
    assert_eq!(code, 0);
    for line in ["gamma=0.5", "pi_squared=0.25", "hurst=0.5"] {
        assert!(stdout.lines().any(|l| l == line), "missing {line}");
    }
}

#[test]
fn missing_seed_and_unknown_keys_exit_2() {
    let (code, _, stderr) = lab(&["params"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("seed"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"seed": 1, "replicatons": 5}"#).unwrap();
    let (code, _, stderr) = lab(&["lemma1", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("replicatons"), "{stderr}");
}

#[test]
fn theorem2_with_light_tails_is_a_regime_error() {
    let (code, _, stderr) = lab(&["theorem2", "--seed", "1"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("regime"), "{stderr}");
}

#[test]
fn failing_check_exits_1() {
    // Forty replications cannot bring the largest rung within twice the critical value at N = 2.
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("t1.json");
    fs::write(&cfg, r#"{"n_ladder":[1,2],"replications":40,"limit_replications":400,"grid_step":0.05,"theta":0.2}"#).unwrap();
    let (code, stdout, _) = lab(&["theorem1", "--config", cfg.to_str().unwrap(), "--seed", "3"]);
    assert_eq!(code, 1, "{stdout}");
    assert!(stdout.contains("verdict: FAIL"));
}

#[test]
fn flags_override_file_and_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"seed": 99, "n_ladder": [10, 40], "replications": 20, "output": "ignored"}"#).unwrap();
    let mut reports = Vec::new();
    for (name, workers) in [("a", "1"), ("b", "4")] {
        let out = dir.path().join(name);
        let (code, stdout, _) = lab(&[
            "collapse", "--config", cfg.to_str().unwrap(), "--seed", "5", "--out", out.to_str().unwrap(), "--workers", workers,
        ]);
        assert!(code == 0 || code == 1);
        assert!(stdout.contains("seed: 5"));
        reports.push(fs::read(out.join("gaps.csv")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    assert!(!dir.path().join("ignored").exists());
}
