use std::path::Path;
use std::process::Command;

fn egns(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_egns")).args(args).output().unwrap()
}

fn short_run(out: &Path, extra: &[&str]) -> std::process::Output {
    let mut args = vec!["run", "--out", out.to_str().unwrap(), "--dt", "0.05", "--T", "0.1"];
    args.extend_from_slice(extra);
    egns(&args)
}

#[test]
fn taylor_green_sweep_writes_diagnostics_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = short_run(dir.path(), &["--experiment", "taylor_green", "--mesh-m", "1,2", "--nu", "1", "--jobs", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "nu,h,e_inf2,rate,e_grad22,rate,e_p12,rate");
    assert!(lines[1].starts_with("1e0,1/1,"));
    assert!(lines[2].starts_with("1e0,1/2,"));
    let diag = std::fs::read_to_string(dir.path().join("taylor_green_nu1e0_m2.csv")).unwrap();
    assert_eq!(diag.lines().next().unwrap(), "k,t,energy,helicity,maxdiv,energy_residual");
    assert_eq!(diag.lines().count(), 1 + 3);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = short_run(dir.path(), &["--experiment", "conservation", "--mesh-m", "2", "--checkpoint-stride", "1"]);
        assert!(out.status.success());
    }
    let name = "conservation_nu1e-8_m2.csv";
    assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap());
    let checkpoints = std::fs::read_dir(a.path().join("checkpoints/conservation_nu1e-8_m2")).unwrap().count();
    assert_eq!(checkpoints, 2);
}

#[test]
fn check_subcommand_passes_on_small_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let out = egns(&["check", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = std::fs::read_to_string(dir.path().join("checks.txt")).unwrap();
    assert!(report.lines().count() > 10);
    assert!(report.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(egns(&["run", "--experiment", "conservation", "--dt", "0.3", "--out", d]).status.code(), Some(3));
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "experiment = conservation\nwhat = 1\n").unwrap();
    let out = egns(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    // one Picard iteration can never confirm convergence
    let cfg = dir.path().join("picard.cfg");
    std::fs::write(&cfg, "experiment = conservation\nscheme = nonlinear\npicard_max_iters = 1\nmesh_m = 1\n").unwrap();
    let out = egns(&["run", "--config", cfg.to_str().unwrap(), "--out", d, "--dt", "0.05", "--T", "0.1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn mesh_dump_counts() {
    let out = egns(&["mesh-dump", "--mesh-m", "2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "mesh 2 8 48 96");
    assert_eq!(text.lines().count(), 1 + 8 + 48 + 96);
}
