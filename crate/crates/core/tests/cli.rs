use std::process::Command;

fn eqq(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_eqq")).args(args).output().unwrap()
}

fn field(csv: &str, name: &str) -> f64 {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    row[i].parse().unwrap()
}

#[test]
fn det_reaches_two_over_pi() {
    let out = eqq(&["det", "--omega-t", "1.5707963", "--n-max", "100000"]);
    assert_eq!(out.status.code(), Some(0));
    let v = field(&String::from_utf8(out.stdout).unwrap(), "value");
    assert!((v - 2.0 / std::f64::consts::PI).abs() < 1e-4);
}

#[test]
fn eqq_verify_reports_normalizations() {
    let out = eqq(&["eqq-verify", "--level", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8(out.stdout).unwrap();
    for col in [
        "c_measured_re",
        "c_paper_im",
        "ratio_re",
        "rel_error",
        "brute_force_rel_error",
    ] {
        assert!(csv.lines().next().unwrap().contains(col), "{col}");
    }
    assert!(field(&csv, "rel_error") < 1e-10);
    assert!((field(&csv, "ratio_re") - 16.0).abs() < 1e-9);
}

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("out.csv");
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"command":"det","omega_t":1.0,"output":"{}","n_maxx":3}}"#,
            out_path.display()
        ),
    )
    .unwrap();
    let out = eqq(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_path.exists());
    assert!(!out.stderr.is_empty());
    std::fs::write(&cfg, "{ not json").unwrap();
    assert_eq!(eqq(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn invalid_values_exit_2_and_caustics_exit_3() {
    assert_eq!(eqq(&["kernel", "--mass", "-1"]).status.code(), Some(2));
    assert_eq!(eqq(&["det", "--omega-t", "4.0"]).status.code(), Some(3));
    let c = eqq(&["kernel", "--potential", "harmonic", "--omega", "3.141592653589793"]);
    assert_eq!(c.status.code(), Some(3), "{}", String::from_utf8_lossy(&c.stderr));
    assert_eq!(eqq(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn config_run_is_byte_identical_and_matches_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        std::fs::write(
            &cfg,
            format!(
                r#"{{"command":"perturb","potential":{{"kind":"harmonic","omega":0.2}},"x_i":[0.0],"x_f":[1.0],"format":"json","output":"{}"}}"#,
                path.display()
            ),
        )
        .unwrap();
        assert_eq!(eqq(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(0));
    }
    let ta = std::fs::read(&a).unwrap();
    assert_eq!(ta, std::fs::read(&b).unwrap());
    let flags = eqq(&[
        "perturb",
        "--potential",
        "harmonic",
        "--omega",
        "0.2",
        "--x-i",
        "0",
        "--x-f",
        "1",
        "--format",
        "json",
    ]);
    assert_eq!(flags.stdout, ta);
}
