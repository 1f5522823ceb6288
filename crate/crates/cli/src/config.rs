//! Experiment configuration: a `key = value` text file, `#` comments,
//! overridden key by key from the command line.
//!
//! ```text
//! experiment = taylor_green      # taylor_green | conservation | operator_checks | custom
//! mesh_m = 4, 6, 8
//! nu = 1, 1e-8
//! dt = 0.01
//! T = 1
//! scheme = linearized            # linearized | nonlinear
//! picard_tol = 1e-10
//! picard_max_iters = 50
//! out_dir = out
//! checkpoint_stride = 0          # 0 disables checkpoints
//! initial = helical              # custom only: zero | taylor_green | helical
//! forcing = zero                 # custom only: zero | taylor_green
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use egns::timestep::{CheckpointConfig, Forcing, InitialCondition};
use egns::{RunConfig, Scheme};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    TaylorGreen,
    Conservation,
    OperatorChecks,
    Custom,
}

impl FromStr for ExperimentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "taylor_green" => Ok(Self::TaylorGreen),
            "conservation" => Ok(Self::Conservation),
            "operator_checks" => Ok(Self::OperatorChecks),
            "custom" => Ok(Self::Custom),
            _ => Err(format!(
                "unknown experiment {s:?} (expected taylor_green, conservation, operator_checks or custom)"
            )),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::TaylorGreen => "taylor_green",
            Self::Conservation => "conservation",
            Self::OperatorChecks => "operator_checks",
            Self::Custom => "custom",
        })
    }
}

fn parse_initial(s: &str) -> Result<InitialCondition, String> {
    match s {
        "zero" => Ok(InitialCondition::Zero),
        "taylor_green" => Ok(InitialCondition::TaylorGreen),
        "helical" => Ok(InitialCondition::Helical),
        _ => Err(format!("unknown initial condition {s:?} (expected zero, taylor_green or helical)")),
    }
}

fn parse_forcing(s: &str) -> Result<Forcing, String> {
    match s {
        "zero" => Ok(Forcing::Zero),
        "taylor_green" => Ok(Forcing::TaylorGreen),
        _ => Err(format!("unknown forcing {s:?} (expected zero or taylor_green)")),
    }
}

/// Every setting is optional; unset values fall back to the experiment's
/// defaults when the spec is resolved.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    pub experiment: Option<ExperimentKind>,
    pub mesh_m: Option<Vec<usize>>,
    pub nu: Option<Vec<f64>>,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub scheme: Option<Scheme>,
    pub picard_tol: Option<f64>,
    pub picard_max_iters: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub checkpoint_stride: Option<usize>,
    pub initial: Option<InitialCondition>,
    pub forcing: Option<Forcing>,
}

pub fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>, String> {
    let inner = value.trim().trim_start_matches('[').trim_end_matches(']');
    let items: Result<Vec<T>, _> = inner.split(',').map(|s| s.trim().parse::<T>()).collect();
    match items {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(format!("expected a non-empty comma-separated list, got {value:?}")),
    }
}

fn parse_one<T: FromStr>(value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse {value:?}"))
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut out = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ConfigError::Parse { line: i + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            out.set(key.trim(), value.trim()).map_err(err)?;
        }
        Ok(out)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "experiment" => self.experiment = Some(value.parse()?),
            "mesh_m" => self.mesh_m = Some(parse_list(value)?),
            "nu" => self.nu = Some(parse_list(value)?),
            "dt" => self.dt = Some(parse_one(value)?),
            "T" => self.t_final = Some(parse_one(value)?),
            "scheme" => self.scheme = Some(value.parse().map_err(|e: egns::Error| e.to_string())?),
            "picard_tol" => self.picard_tol = Some(parse_one(value)?),
            "picard_max_iters" => self.picard_max_iters = Some(parse_one(value)?),
            "out_dir" => self.out_dir = Some(PathBuf::from(value)),
            "checkpoint_stride" => self.checkpoint_stride = Some(parse_one(value)?),
            "initial" => self.initial = Some(parse_initial(value)?),
            "forcing" => self.forcing = Some(parse_forcing(value)?),
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Values set in `other` win.
    pub fn overlay(mut self, other: Settings) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            experiment, mesh_m, nu, dt, t_final, scheme, picard_tol, picard_max_iters, out_dir, checkpoint_stride,
            initial, forcing
        );
        self
    }
}

/// A fully resolved experiment: one `RunConfig` per sweep member.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub mesh_m: Vec<usize>,
    pub nu: Vec<f64>,
    pub template: RunConfig,
    pub out_dir: PathBuf,
    pub checkpoint_stride: usize,
}

pub const EXTENDED_MESHES: [usize; 2] = [10, 12];

impl ExperimentSpec {
    pub fn resolve(settings: Settings, extended: bool) -> Result<Self, ConfigError> {
        let kind = settings
            .experiment
            .ok_or_else(|| ConfigError::Invalid("no experiment selected (set `experiment` or pass --experiment)".into()))?;
        let (mut mesh_m, nu) = match kind {
            ExperimentKind::TaylorGreen => (vec![4, 6, 8], vec![1.0, 1e-8]),
            ExperimentKind::OperatorChecks => (vec![2], vec![1e-8]),
            ExperimentKind::Conservation | ExperimentKind::Custom => (vec![6], vec![1e-8]),
        };
        if let Some(m) = settings.mesh_m {
            mesh_m = m;
        } else if extended && kind == ExperimentKind::TaylorGreen {
            mesh_m.extend(EXTENDED_MESHES);
        }
        let nu = settings.nu.unwrap_or(nu);
        if mesh_m.is_empty() || nu.is_empty() {
            return Err(ConfigError::Invalid("sweep lists must be non-empty".into()));
        }
        let base = match kind {
            ExperimentKind::TaylorGreen => RunConfig::taylor_green(mesh_m[0], nu[0]),
            _ => RunConfig::conservation(mesh_m[0], nu[0]),
        };
        if kind != ExperimentKind::Custom && (settings.initial.is_some() || settings.forcing.is_some()) {
            return Err(ConfigError::Invalid("`initial` and `forcing` apply only to the custom experiment".into()));
        }
        let checkpoint_stride = settings.checkpoint_stride.unwrap_or(0);
        let out_dir = settings.out_dir.unwrap_or_else(|| PathBuf::from("out"));
        let template = RunConfig {
            dt: settings.dt.unwrap_or(base.dt),
            t_final: settings.t_final.unwrap_or(base.t_final),
            scheme: settings.scheme.unwrap_or(base.scheme),
            picard_tol: settings.picard_tol.unwrap_or(base.picard_tol),
            picard_max_iters: settings.picard_max_iters.unwrap_or(base.picard_max_iters),
            initial: settings.initial.unwrap_or(base.initial),
            forcing: settings.forcing.unwrap_or(base.forcing),
            ..base
        };
        let spec = Self {
            kind,
            mesh_m,
            nu,
            template,
            out_dir,
            checkpoint_stride,
        };
        for run in spec.runs() {
            run.config.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(spec)
    }

    /// Sweep members, ordered by viscosity then mesh.
    pub fn runs(&self) -> Vec<RunSpec> {
        let mut out = Vec::new();
        for &nu in &self.nu {
            for &m in &self.mesh_m {
                let name = format!("{}_nu{}_m{}", self.kind, format_nu(nu), m);
                let checkpoint = (self.checkpoint_stride > 0).then(|| CheckpointConfig {
                    dir: self.out_dir.join("checkpoints").join(&name),
                    stride: self.checkpoint_stride,
                });
                out.push(RunSpec {
                    name,
                    config: RunConfig {
                        m,
                        nu,
                        checkpoint,
                        ..self.template.clone()
                    },
                });
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub name: String,
    pub config: RunConfig,
}

/// `1e-8`, `1e0`, `2.5e-3`: compact and stable, for file names and CSVs.
pub fn format_nu(nu: f64) -> String {
    format!("{nu:e}")
}
