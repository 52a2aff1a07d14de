use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robustfill"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

#[test]
fn generate_writes_a_readable_design() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &["generate", "--type", "jca", "--n1", "4", "--n2", "5", "--p", "2", "--q", "2", "--noise", "tr", "-o", "d.csv"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let d = robustfill::io::read_design(dir.path().join("d.csv")).unwrap();
    assert_eq!(d.n_runs(), 20);
    assert_eq!(d.noise_columns(), vec![2, 3]);
}

#[test]
fn evaluate_prints_a_number() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["generate", "--type", "mmlhd", "--n1", "8", "--p", "0", "--q", "1", "--noise", "dt", "-o", "d.csv"]);
    let out = run(dir.path(), &["evaluate", "--design", "d.csv", "--criterion", "irmse", "--theta", "10"]);
    assert!(out.status.success());
    let v: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!(v > 0.0 && v < 1.0);
}

#[test]
fn malformed_design_exits_with_parse_code() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "name,x1\ntransform,none\n0.5\n").unwrap();
    let out = run(dir.path(), &["evaluate", "--design", "bad.csv", "--theta", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn unknown_flag_exits_with_parse_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["generate", "--bogus"]).status.code(), Some(2));
}

#[test]
fn singular_fit_exits_with_numerical_code() {
    let dir = tempfile::tempdir().unwrap();
    // nearly coincident runs defeat every nugget level
    let rows: String = (0..40).map(|i| format!("{:.17e}\n", 0.5 + i as f64 * 1e-13)).collect();
    std::fs::write(dir.path().join("d.csv"), format!("name,x1\nrole,control\ntransform,none\n{rows}")).unwrap();
    let y: String = (0..40).map(|i| format!("{}\n", i % 2)).collect();
    std::fs::write(dir.path().join("y.txt"), y).unwrap();
    let out = run(dir.path(), &["fit", "--design", "d.csv", "--response", "y.txt"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"config": {}}"#).unwrap();
    assert_eq!(run(dir.path(), &["simulate", "--config", "c.json"]).status.code(), Some(2));
}
