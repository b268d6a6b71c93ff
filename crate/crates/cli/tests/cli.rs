use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const GAD: &str = r#"
seed = 5

[model]
kind = "gad"
theta = [0.3]

[dam]
T = 200
N = 1
trials = 500
"#;

fn damlab(dir: &Path, args: &[&str], scenario: &str) -> Output {
    let config = dir.join("scenario.toml");
    fs::write(&config, scenario).unwrap();
    Command::new(env!("CARGO_BIN_EXE_damlab"))
        .args(args)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

#[test]
fn steady_prints_diagonal_state() {
    let dir = tempfile::tempdir().unwrap();
    let out = damlab(dir.path(), &["steady"], GAD);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("0.30000000"), "{text}");
    assert!(text.contains("0.70000000"), "{text}");
    assert!(text.contains("dissipative gap: 0.5"), "{text}");
    let csv = fs::read_to_string(dir.path().join("out/steady_state.csv")).unwrap();
    assert!(csv.starts_with("row,col,re[1],im[1]\n"));
}

#[test]
fn theta_outside_domain_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = damlab(dir.path(), &["steady"], &GAD.replace("[0.3]", "[1.4]"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside"));
}

#[test]
fn missing_seed_and_empty_sweep_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = damlab(dir.path(), &["steady"], &GAD.replace("seed = 5", ""));
    assert_eq!(out.status.code(), Some(2));
    let sweep = format!("{GAD}\n[sweep]\naxis = \"N\"\nvalues = []\n");
    let out = damlab(dir.path(), &["scaling"], &sweep);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_flag_satisfies_missing_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("s.toml");
    fs::write(&config, GAD.replace("seed = 5", "")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_damlab"))
        .args(["steady", "--seed", "9", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn distribution_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let first = damlab(dir.path(), &["dam-distribution"], GAD);
    assert_eq!(first.status.code(), Some(0));
    let csv = fs::read(dir.path().join("out/distribution.csv")).unwrap();
    let svg = fs::read_to_string(dir.path().join("out/distribution.svg")).unwrap();
    let header = "q[a.u.],pr_exact[1/a.u.],pr_pert[1/a.u.],pr_ideal[1/a.u.],deviation[1/a.u.]\n";
    assert!(csv.starts_with(header.as_bytes()));
    assert!(svg.contains("scenario-sha256: "));
    assert_eq!(svg.matches("<polyline").count(), 3);

    let again = damlab(dir.path(), &["dam-distribution", "--workers", "3"], GAD);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(fs::read(dir.path().join("out/distribution.csv")).unwrap(), csv);
}

fn deviation_l1(dir: &Path, t: u32) -> f64 {
    let out = damlab(dir, &["dam-distribution", "--json"], &GAD.replace("T = 200", &format!("T = {t}")));
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    v["deviation_l1"].as_f64().unwrap()
}

#[test]
fn deviation_shrinks_with_coupling_time() {
    let dir = tempfile::tempdir().unwrap();
    let short = deviation_l1(dir.path(), 50);
    let long = deviation_l1(dir.path(), 500);
    assert!(long < short, "{long} vs {short}");
}

#[test]
fn scaling_sweep_over_t_keeps_error_times_n_flat() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = format!("{GAD}\n[sweep]\naxis = \"T\"\nvalues = [1000, 2000, 4000]\nn_over_t = 0.1\n");
    let out = damlab(dir.path(), &["scaling", "--json"], &sweep);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let products: Vec<f64> = v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["predicted_error"].as_f64().unwrap() * r["N"].as_f64().unwrap())
        .collect();
    for p in &products {
        assert!((p / products[0] - 1.0).abs() < 0.02, "{products:?}");
    }
    let csv = fs::read_to_string(dir.path().join("out/scaling.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn tampered_verify_fails_with_names() {
    let dir = tempfile::tempdir().unwrap();
    let tampered = format!("{GAD}\n[verify]\nnonadiabatic_t = [5, 10, 20]\nadiabatic_limit_t = 5\nscaling_trials = 200\nmultiparam_trials = 200\npovm_trials = 200\n");
    let out = damlab(dir.path(), &["verify", "--json"], &tampered);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonadiabaticity_scaling"));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let checks = v.as_array().unwrap();
    assert_eq!(checks.len(), 10);
    let c5 = checks.iter().find(|c| c["criterion"] == 5).unwrap();
    assert_eq!(c5["passed"], false);
    assert!(checks.iter().all(|c| c.get("measurements").is_some()));
}

#[test]
fn missing_config_flag_exits_2() {
    let out = Command::new(env!("CARGO_BIN_EXE_damlab")).arg("steady").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
