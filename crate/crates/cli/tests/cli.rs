use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const MINIMAL: &str = r#"[domain]
y = "torus"
z = "torus"
ny = 8
nz = 8

[coefficients]
A = "1"
B = "0"
a = "1"
b = "0"
c = "cos(2*pi*y)"
"#;

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn slowfast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slowfast"))
        .args(args)
        .output()
        .unwrap()
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        sub,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    slowfast(&args)
}

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let path = dir.path().join("scenario.toml");
    fs::write(&path, text).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn passing_sweep_exits_zero_and_writes_tables() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = run("sweep", &scenarios().join("constant_c.toml"), &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(sweep.starts_with("eps,k_eps,sup_tv,iters,residual\n"));
    assert_eq!(sweep.lines().count(), 5);
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("gate eigenvalue_bound = pass"));
    assert!(report.ends_with("result = pass\n"));
    assert!(out.join("local_spectrum.csv").exists());
    assert!(out.join("hj_v.csv").exists());
}

#[test]
fn failing_gate_exits_one() {
    let dir = TempDir::new().unwrap();
    // a limit tolerance no extrapolation can meet at this resolution
    let config = write_config(&dir, &format!("{MINIMAL}\n[sweep]\nlimit_tol = 1e-12\n"));
    let o = run("sweep", &config, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("out/report.txt")).unwrap();
    assert!(report.contains("gate limit_match = fail"));
    assert!(report.ends_with("result = fail\n"));
}

#[test]
fn configuration_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");

    let config = write_config(&dir, &format!("{MINIMAL}\n[sweep]\neps_list = \"0.1, 0.2\"\n"));
    let o = run("sweep", &config, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("sweep.eps_list") && stderr(&o).contains("decreasing"),
        "{}",
        stderr(&o)
    );

    let interval = MINIMAL
        .replacen("y = \"torus\"", "y = \"interval\"", 1)
        .replace("B = \"0\"", "B = \"y\"");
    let config = write_config(&dir, &interval);
    let o = run("limit", &config, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 9: coefficients.B"), "{}", stderr(&o));

    let o = run("eig", &dir.path().join("missing.toml"), &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cannot read"));

    let config = write_config(&dir, MINIMAL);
    let o = run("qsd-mc", &config, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("[qsd]"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(slowfast(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(slowfast(&["sweep", "--seed", "x"]).status.code(), Some(2));
    let o = slowfast(&["sweep"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--config"));
}

#[test]
fn numerical_failure_exits_three() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, &format!("{MINIMAL}\n[sweep]\nmax_iter = 2\ntol = 1e-14\n"));
    let o = run("eig", &config, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn interval_transport_refuses_hj_check() {
    let dir = TempDir::new().unwrap();
    let text = MINIMAL
        .replacen("y = \"torus\"", "y = \"interval\"", 1)
        .replace("B = \"0\"", "B = \"y*(1-y)\"")
        .replace("cos(2*pi*y)", "cos(pi*y)");
    let config = write_config(&dir, &text);
    let out = dir.path().join("out");
    let o = run("limit", &config, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("regime = none"));
    let o = run("hj-check", &config, &out, &[]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn every_subcommand_runs() {
    let dir = TempDir::new().unwrap();
    let config = scenarios().join("supercritical.toml");
    for (sub, file) in [
        ("eig", "eigenvalues.csv"),
        ("local-spectrum", "local_spectrum.csv"),
        ("limit", "local_spectrum.csv"),
        ("hj-check", "hj_ubar.csv"),
    ] {
        let out = dir.path().join(sub);
        let o = run(sub, &config, &out, &[]);
        assert_eq!(o.status.code(), Some(0), "{sub}: {}", stderr(&o));
        assert!(out.join(file).exists(), "{sub}");
        assert!(out.join("report.txt").exists(), "{sub}");
    }
    let limit = fs::read_to_string(dir.path().join("limit/report.txt")).unwrap();
    assert!(limit.contains("regime = transport-supercritical"));
}

const SMALL_QSD: &str = r#"
[qsd]
eps = 0.3
n_particles = 2000
t_checkpoints = [0.0, 0.5, 1.0]
seed = 5
fleming_viot = true
initial = "phi"
"#;

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, &format!("{MINIMAL}{SMALL_QSD}"));
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for out in [&a, &b] {
        assert_eq!(run("qsd-mc", &config, out, &[]).status.code(), Some(0));
        // 8 slow nodes leave the spline residual well above the HJ gate
        assert_eq!(run("sweep", &config, out, &[]).status.code(), Some(1));
    }
    for file in [
        "qsd.csv",
        "qsd_histogram.csv",
        "sweep.csv",
        "local_spectrum.csv",
        "hj_v.csv",
    ] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
    let qsd = fs::read_to_string(a.join("qsd.csv")).unwrap();
    assert!(qsd.starts_with("t,survivors,tv_vs_phi\n"));
    assert_eq!(qsd.lines().count(), 4);

    assert_eq!(run("qsd-mc", &config, &c, &["--seed", "6"]).status.code(), Some(0));
    assert_ne!(
        fs::read(a.join("qsd_histogram.csv")).unwrap(),
        fs::read(c.join("qsd_histogram.csv")).unwrap()
    );
}

#[test]
fn output_directory_comes_from_config_when_flag_is_absent() {
    let dir = TempDir::new().unwrap();
    let target = dir.path().join("from_config");
    let text = format!("{MINIMAL}\n[output]\ndir = \"{}\"\n", target.display());
    let config = write_config(&dir, &text);
    let o = slowfast(&["local-spectrum", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(target.join("local_spectrum.csv")).unwrap();
    assert!(csv.starts_with("y,k_y\n"));
    assert_eq!(csv.lines().count(), 9);
}
