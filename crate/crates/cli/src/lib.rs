//! Command-line front-end for the `egns` solver.

pub mod config;
pub mod experiment;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use egns::Scheme;

pub use config::{ConfigError, ExperimentKind, ExperimentSpec, Settings};
pub use experiment::{run_experiment, Failure};

pub const EXIT_RUN_FAILURE: u8 = 1;
pub const EXIT_CHECK_FAILURE: u8 = 2;
pub const EXIT_CONFIG_ERROR: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "egns", version, about = "Energy- and helicity-conserving EG Navier-Stokes solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment (Taylor-Green sweep, conservation run, ...).
    Run(RunArgs),
    /// Run the operator-identity and form-structure checks.
    Check(RunArgs),
    /// Write the periodic mesh in plain text.
    MeshDump {
        #[arg(long = "mesh-m", default_value_t = 2)]
        m: usize,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = |s: &str| s.parse::<ExperimentKind>())]
    pub experiment: Option<ExperimentKind>,
    /// Comma-separated list of subdivision counts.
    #[arg(long = "mesh-m", value_delimiter = ',', num_args = 1)]
    pub mesh_m: Option<Vec<usize>>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long = "T")]
    pub t_final: Option<f64>,
    /// Comma-separated list of viscosities.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub nu: Option<Vec<f64>>,
    #[arg(long, value_parser = |s: &str| s.parse::<Scheme>().map_err(|e| e.to_string()))]
    pub scheme: Option<Scheme>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "checkpoint-stride")]
    pub checkpoint_stride: Option<usize>,
    /// Concurrent sweep members.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Add m = 10 and 12 to the default Taylor-Green sweep.
    #[arg(long)]
    pub extended: bool,
}

impl RunArgs {
    fn flag_settings(&self) -> Settings {
        Settings {
            experiment: self.experiment,
            mesh_m: self.mesh_m.clone(),
            nu: self.nu.clone(),
            dt: self.dt,
            t_final: self.t_final,
            scheme: self.scheme,
            out_dir: self.out.clone(),
            checkpoint_stride: self.checkpoint_stride,
            ..Settings::default()
        }
    }

    /// Config file first, flags on top.
    pub fn resolve(&self, default_kind: Option<ExperimentKind>) -> Result<ExperimentSpec, ConfigError> {
        let file = match &self.config {
            Some(path) => Settings::from_file(path)?,
            None => Settings::default(),
        };
        let mut settings = file.overlay(self.flag_settings());
        if settings.experiment.is_none() {
            settings.experiment = default_kind;
        }
        ExperimentSpec::resolve(settings, self.extended)
    }
}

fn failure_code(f: &Failure) -> u8 {
    match f {
        Failure::Checks { .. } => EXIT_CHECK_FAILURE,
        _ => EXIT_RUN_FAILURE,
    }
}

/// Executes a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> u8 {
    let (args, default_kind) = match &cli.command {
        Command::MeshDump { m, out } => return mesh_dump(*m, out.as_ref()),
        Command::Run(args) => (args, None),
        Command::Check(args) => (args, Some(ExperimentKind::OperatorChecks)),
    };
    let spec = match args.resolve(default_kind) {
        Ok(spec) => spec,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG_ERROR;
        }
    };
    let result = match cli.command {
        Command::Check(_) => experiment::run_checks(spec.mesh_m[0], &spec.out_dir).map(|_| ()),
        _ => run_experiment(&spec, args.jobs),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            failure_code(&e)
        }
    }
}

fn mesh_dump(m: usize, out: Option<&PathBuf>) -> u8 {
    let mesh = match egns::build_mesh(m) {
        Ok(mesh) => mesh,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG_ERROR;
        }
    };
    let written = match out {
        Some(path) => std::fs::File::create(path)
            .and_then(|f| egns::mesh::write_mesh_dump(&mesh, std::io::BufWriter::new(f))),
        None => egns::mesh::write_mesh_dump(&mesh, std::io::stdout().lock()),
    };
    match written {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUN_FAILURE
        }
    }
}
