use std::path::PathBuf;

use clap::Parser;
use egns::Scheme;
use egns_cli::{Cli, Command, ConfigError, ExperimentKind, ExperimentSpec, Settings};

fn resolve(text: &str) -> Result<ExperimentSpec, ConfigError> {
    ExperimentSpec::resolve(Settings::parse(text)?, false)
}

#[test]
fn minimal_conservation_config_gets_defaults() {
    let spec = resolve("experiment = conservation\n").unwrap();
    assert_eq!(spec.kind, ExperimentKind::Conservation);
    assert_eq!(spec.mesh_m, vec![6]);
    assert_eq!(spec.nu, vec![1e-8]);
    assert_eq!(spec.template.dt, 0.01);
    assert_eq!(spec.template.t_final, 1.0);
    assert_eq!(spec.template.scheme, Scheme::Linearized);
    assert_eq!(spec.runs().len(), 1);
}

#[test]
fn taylor_green_default_sweep() {
    let spec = resolve("experiment = taylor_green").unwrap();
    let names: Vec<String> = spec.runs().into_iter().map(|r| r.name).collect();
    assert_eq!(
        names,
        [
            "taylor_green_nu1e0_m4",
            "taylor_green_nu1e0_m6",
            "taylor_green_nu1e0_m8",
            "taylor_green_nu1e-8_m4",
            "taylor_green_nu1e-8_m6",
            "taylor_green_nu1e-8_m8"
        ]
    );
    let extended = ExperimentSpec::resolve(Settings::parse("experiment = taylor_green").unwrap(), true).unwrap();
    assert_eq!(extended.mesh_m, vec![4, 6, 8, 10, 12]);
}

#[test]
fn full_schema_with_comments() {
    let text = "# sweep\nexperiment = taylor_green  # trailing\n\nmesh_m = [2, 3]\nnu = 1, 1e-4\ndt = 0.05\nT = 0.5\n\
                scheme = nonlinear\npicard_tol = 1e-9\npicard_max_iters = 20\nout_dir = results\ncheckpoint_stride = 5\n";
    let spec = resolve(text).unwrap();
    assert_eq!(spec.mesh_m, vec![2, 3]);
    assert_eq!(spec.nu, vec![1.0, 1e-4]);
    assert_eq!(spec.template.scheme, Scheme::Nonlinear);
    assert_eq!(spec.template.picard_max_iters, 20);
    assert_eq!(spec.out_dir, PathBuf::from("results"));
    let runs = spec.runs();
    assert_eq!(runs[3].config.m, 3);
    assert_eq!(runs[3].config.nu, 1e-4);
    let ck = runs[0].config.checkpoint.as_ref().unwrap();
    assert_eq!(ck.stride, 5);
    assert!(ck.dir.ends_with("checkpoints/taylor_green_nu1e0_m2"));
}

#[test]
fn non_integral_step_count_is_rejected() {
    let err = resolve("experiment = conservation\ndt = 0.3\nT = 1\n").unwrap_err();
    assert!(matches!(err, ConfigError::Invalid(ref m) if m.contains("multiple")), "{err}");
}

#[test]
fn parse_errors_carry_line_numbers() {
    let err = Settings::parse("experiment = conservation\n\nfoo = 1\n").unwrap_err();
    assert!(matches!(err, ConfigError::Parse { line: 3, .. }), "{err}");
    assert!(err.to_string().contains("unknown key"));
    let err = Settings::parse("dt = fast").unwrap_err();
    assert!(matches!(err, ConfigError::Parse { line: 1, .. }));
    let err = Settings::parse("\nno equals sign").unwrap_err();
    assert!(matches!(err, ConfigError::Parse { line: 2, .. }));
    assert!(Settings::parse("experiment = turbulence").is_err());
    assert!(Settings::parse("mesh_m = ").is_err());
}

#[test]
fn custom_keys_only_for_custom() {
    assert!(resolve("experiment = conservation\ninitial = zero").is_err());
    let spec = resolve("experiment = custom\ninitial = taylor_green\nforcing = taylor_green\nnu = 1").unwrap();
    assert!(spec.template.exact_solution().is_some());
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "experiment = conservation\nnu = 1e-8\nmesh_m = 3\n").unwrap();
    let cli = Cli::try_parse_from([
        "egns",
        "run",
        "--config",
        path.to_str().unwrap(),
        "--nu",
        "1e-4",
        "--T",
        "0.5",
        "--scheme",
        "picard",
    ])
    .unwrap();
    let Command::Run(args) = cli.command else { panic!("expected run") };
    let spec = args.resolve(None).unwrap();
    assert_eq!(spec.nu, vec![1e-4]);
    assert_eq!(spec.mesh_m, vec![3]);
    assert_eq!(spec.template.t_final, 0.5);
    assert_eq!(spec.template.scheme, Scheme::Nonlinear);
}

#[test]
fn missing_experiment_and_missing_file() {
    let cli = Cli::try_parse_from(["egns", "run"]).unwrap();
    let Command::Run(args) = cli.command else { panic!() };
    assert!(matches!(args.resolve(None), Err(ConfigError::Invalid(_))));
    let cli = Cli::try_parse_from(["egns", "run", "--config", "/nonexistent/x.cfg"]).unwrap();
    let Command::Run(args) = cli.command else { panic!() };
    assert!(matches!(args.resolve(None), Err(ConfigError::Read { .. })));
}
