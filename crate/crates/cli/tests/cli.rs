//! End-to-end checks of the binary: exit codes, outputs, manifest echo.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fibresync"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn validation_error_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", r#"{"family": "example1", "eps_tilde": 0.2}"#);
    let out = bin().args(["lyapunov", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("eps_tilde out of (0, 1/8)"), "{stderr}");
}

#[test]
fn unknown_key_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"family": "example1", "eps_tilde": 0.05, "spurious": 1}"#,
    );
    let out = bin().args(["orbit", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));
}

#[test]
fn b_one_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"family": "schrodinger", "lambda": 2.0, "energy": 0.0, "b": 1}"#,
    );
    let out = bin().args(["schrodinger", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn certify_identity_fibre_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "identity.json",
        r#"{"family": "additive", "b": 5, "g": {"kind": "sine", "amp": 0.1}, "h": {"kind": "identity"}}"#,
    );
    let out = bin()
        .args(["certify", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("contraction region is empty"));
}

#[test]
fn certify_additive_happy_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "additive.json",
        r#"{
            "family": "additive", "b": 3,
            "g": {"kind": "sine", "amp": 0.06},
            "h": {"kind": "sine", "offset": 0.25, "amp": 0.005},
            "command": {"g_arcs": [[0.1857386995642917, 0.1285226008714166]],
                        "y_grid_n": 512, "x_grid_n": 2048, "region_grid_n": 4096}
        }"#,
    );
    let run_dir = dir.path().join("run");
    let out = bin()
        .args(["certify", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let cert: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("certificate.json")).unwrap())
            .unwrap();
    assert_eq!(cert["s"], 1);
    assert!(cert["b0"].as_u64().unwrap() >= 20);
    // manifest echoes the injected defaults
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["family"]["seed"], 42);
    assert_eq!(manifest["family"]["y0"], 0.25);
}

#[test]
fn lyapunov_dispatch_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sch.json",
        r#"{"family": "schrodinger", "lambda": 10.0, "energy": 0.0, "b": 100, "seed": 5}"#,
    );
    let run_dir = dir.path().join("run");
    let out = bin()
        .args(["lyapunov", "--config"])
        .arg(&cfg)
        .args(["--n", "2000", "--out-dir"])
        .arg(&run_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("\"estimate\""), "{stdout}");
    let trace = std::fs::read_to_string(run_dir.join("lyapunov_trace.csv")).unwrap();
    assert!(trace.starts_with("j,partial_avg"));
    assert!(trace.lines().count() > 100);
}

#[test]
fn orbit_singularity_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // y0 = 0.5 is the singular fibre point of the projective cocycle
    let cfg = write_config(
        dir.path(),
        "sing.json",
        r#"{"family": "schrodinger", "lambda": 2.0, "energy": 0.0, "b": 5, "y0": 0.5}"#,
    );
    let out = bin()
        .args(["orbit", "--config"])
        .arg(&cfg)
        .args(["--n", "50", "--out-dir"])
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("singularity"));
}

#[test]
fn sync_and_scatter_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "ex1.json",
        r#"{"family": "example1", "eps_tilde": 0.05, "x0": {"inv_pi_multiple": 350}}"#,
    );
    let run_dir = dir.path().join("sync");
    let out = bin()
        .args(["sync", "--config"])
        .arg(&cfg)
        .args(["--n", "60", "--k", "10", "--out-dir"])
        .arg(&run_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let sync = std::fs::read_to_string(run_dir.join("sync.csv")).unwrap();
    assert_eq!(sync.lines().count(), 62); // header + n + 1

    let run_dir = dir.path().join("scatter");
    let out = bin()
        .args(["scatter", "--config"])
        .arg(&cfg)
        .args(["--n", "100", "--out-dir"])
        .arg(&run_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let scatter = std::fs::read_to_string(run_dir.join("scatter.csv")).unwrap();
    assert_eq!(scatter.lines().count(), 101); // header + n rows
}

#[test]
fn figure2_runs_quickly_at_coarse_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["figure2", "--grid-n", "65536", "--out-dir"])
        .arg(dir.path().join("fig2"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("3 components"));
}

#[test]
fn survey_uncertified_gate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "identity.json",
        r#"{"family": "additive", "b": 5, "g": {"kind": "sine", "amp": 0.1}, "h": {"kind": "identity"},
            "command": {"region_grid_n": 1024, "y_grid_n": 64, "x_grid_n": 256}}"#,
    );
    let out = bin()
        .args(["survey", "--config"])
        .arg(&cfg)
        .args(["--samples", "5", "--n", "100", "--out-dir"])
        .arg(dir.path().join("s1"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin()
        .args(["survey", "--config"])
        .arg(&cfg)
        .args(["--samples", "5", "--n", "100", "--allow-uncertified", "--out-dir"])
        .arg(dir.path().join("s2"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"fraction_below\": 0"));
}
