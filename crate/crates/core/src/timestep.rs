//! Crank-Nicolson time stepping: the linearized scheme (convection frozen at
//! `u^k`) and the nonlinear scheme solved by Picard iteration (convection
//! frozen at the latest midpoint iterate).
//!
//! Every linear solve is posed for the increment `u^{k+1} - u^k` rather than
//! for `u^{k+1}`: the matrix is the same, but the increment keeps full
//! relative accuracy even when it is tiny, which is what the per-step energy
//! identity needs at small viscosity.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Vector3;

use crate::diagnostics::{
    energy, helicity, max_divergence, triple_norm, DiagnosticsLog, EnergyBalance, ErrorAccumulator, StepRecord,
};
use crate::error::{Error, Result};
use crate::flows::{helical, manufactured_forcing, SmoothFlow, TaylorGreen};
use crate::forms::{assemble_c, assemble_load, GlobalForms};
use crate::mesh::{build_mesh, PeriodicTetMesh};
use crate::solver::{build_step_matrix, increment_rhs, SaddleLayout, SaddleSolution, SparseLuSolver};
use crate::spaces::{interpolate_eg, EGField, PressureField};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Linearized,
    Nonlinear,
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linearized" | "linear" => Ok(Self::Linearized),
            "nonlinear" | "picard" => Ok(Self::Nonlinear),
            _ => Err(Error::InvalidConfig(format!("unknown scheme {s:?} (expected linearized or nonlinear)"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Linearized => "linearized",
            Self::Nonlinear => "nonlinear",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialCondition {
    Zero,
    TaylorGreen,
    Helical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Forcing {
    Zero,
    /// Manufactured from the Taylor-Green solution at the run's viscosity.
    TaylorGreen,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointConfig {
    pub dir: PathBuf,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub m: usize,
    pub dt: f64,
    pub t_final: f64,
    pub nu: f64,
    pub scheme: Scheme,
    pub picard_tol: f64,
    pub picard_max_iters: usize,
    pub initial: InitialCondition,
    pub forcing: Forcing,
    pub checkpoint: Option<CheckpointConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            m: 6,
            dt: 0.01,
            t_final: 1.0,
            nu: 1e-8,
            scheme: Scheme::Linearized,
            picard_tol: 1e-10,
            picard_max_iters: 50,
            initial: InitialCondition::Helical,
            forcing: Forcing::Zero,
            checkpoint: None,
        }
    }
}

impl RunConfig {
    /// Taylor-Green vortex with its manufactured forcing.
    pub fn taylor_green(m: usize, nu: f64) -> Self {
        Self {
            m,
            nu,
            initial: InitialCondition::TaylorGreen,
            forcing: Forcing::TaylorGreen,
            ..Self::default()
        }
    }

    /// Helical initial data, no forcing.
    pub fn conservation(m: usize, nu: f64) -> Self {
        Self {
            m,
            nu,
            ..Self::default()
        }
    }

    /// Number of steps `N = T / dt`; fails unless `T` is an integer multiple
    /// of `dt` to within `1e-12`.
    pub fn num_steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidConfig(format!("T must be non-negative, got {}", self.t_final)));
        }
        let n = (self.t_final / self.dt).round();
        if (n * self.dt - self.t_final).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "T = {} is not an integer multiple of dt = {}",
                self.t_final, self.dt
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::EmptyMesh);
        }
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(Error::InvalidConfig(format!("nu must be positive, got {}", self.nu)));
        }
        if !(self.picard_tol > 0.0) {
            return Err(Error::InvalidConfig(format!("picard_tol must be positive, got {}", self.picard_tol)));
        }
        if self.picard_max_iters == 0 {
            return Err(Error::InvalidConfig("picard_max_iters must be at least 1".into()));
        }
        if let Some(c) = &self.checkpoint {
            if c.stride == 0 {
                return Err(Error::InvalidConfig("checkpoint stride must be at least 1".into()));
            }
        }
        self.num_steps().map(|_| ())
    }

    /// The exact solution, when the initial data and forcing come from the
    /// same smooth flow.
    pub fn exact_solution(&self) -> Option<TaylorGreen> {
        match (self.initial, self.forcing) {
            (InitialCondition::TaylorGreen, Forcing::TaylorGreen) => Some(TaylorGreen::new(self.nu)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TimeStepState {
    pub k: usize,
    pub t: f64,
    pub u: EGField,
    /// `p^{k-1/2}`, absent before the first step.
    pub pressure: Option<PressureField>,
}

/// Everything produced by one time step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub u_new: EGField,
    /// `u^{k+1} - u^k`, flat.
    pub increment: Vec<f64>,
    pub pressure: PressureField,
    pub lambda: [f64; 3],
    pub mu: f64,
    pub iterations: usize,
    pub balance: EnergyBalance,
    /// Relative energy-identity residual of every Picard iterate (one entry
    /// for the linearized scheme).
    pub iterate_residuals: Vec<f64>,
}

/// A run in progress: mesh, operators, solver and the current state.
pub struct Simulation {
    pub config: RunConfig,
    pub mesh: PeriodicTetMesh,
    pub forms: GlobalForms,
    pub state: TimeStepState,
    pub log: DiagnosticsLog,
    pub errors: Option<ErrorAccumulator>,
    solver: SparseLuSolver,
    num_steps: usize,
}

impl Simulation {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let mesh = build_mesh(config.m)?;
        let forms = GlobalForms::new(&mesh)?;
        let u = match config.initial {
            InitialCondition::Zero => EGField::zeros(&forms.dofs),
            InitialCondition::TaylorGreen => {
                let tg = TaylorGreen::new(config.nu);
                interpolate_eg(&mesh, |x| tg.velocity(x, 0.0))
            }
            InitialCondition::Helical => interpolate_eg(&mesh, helical),
        };
        Self::with_initial(config, mesh, forms, u)
    }

    /// Start from a given velocity (e.g. a checkpoint) at step 0.
    pub fn with_initial(config: RunConfig, mesh: PeriodicTetMesh, forms: GlobalForms, u: EGField) -> Result<Self> {
        config.validate()?;
        if u.len() != forms.n_velocity() {
            return Err(Error::DimensionMismatch {
                context: "initial velocity",
                expected: forms.n_velocity(),
                got: u.len(),
            });
        }
        let num_steps = config.num_steps()?;
        let errors = config.exact_solution().map(|_| ErrorAccumulator::new());
        let mut sim = Self {
            state: TimeStepState {
                k: 0,
                t: 0.0,
                u,
                pressure: None,
            },
            log: DiagnosticsLog::default(),
            errors,
            solver: SparseLuSolver::new(),
            num_steps,
            config,
            mesh,
            forms,
        };
        sim.record(None);
        Ok(sim)
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn is_finished(&self) -> bool {
        self.state.k >= self.num_steps
    }

    fn record(&mut self, energy_residual: Option<f64>) {
        let u = &self.state.u;
        self.log.records.push(StepRecord {
            k: self.state.k,
            t: self.state.t,
            energy: energy(&self.forms, u),
            helicity: helicity(&self.mesh, u),
            max_divergence: max_divergence(&self.mesh, u),
            energy_residual,
        });
    }

    /// The load `(f(t^{k+1/2}), R v)` for the current step.
    pub fn load(&self) -> Vec<f64> {
        let t_half = (self.state.k as f64 + 0.5) * self.config.dt;
        match self.config.forcing {
            Forcing::Zero => vec![0.0; self.forms.n_velocity()],
            Forcing::TaylorGreen => {
                let tg = TaylorGreen::new(self.config.nu);
                let f = manufactured_forcing(&tg, self.config.nu);
                assemble_load(|x| f(x, t_half), &self.mesh, &self.forms.dofs)
            }
        }
    }

    /// Solve for the increment with convection frozen at `frozen`.
    fn solve_increment(&mut self, frozen: &EGField, u_old: &[f64], load: &[f64]) -> Result<SaddleSolution> {
        let c = assemble_c(frozen, &self.mesh, &self.forms.dofs);
        let matrix = build_step_matrix(&self.forms, &c, self.config.nu, self.config.dt)?;
        let rhs = increment_rhs(&self.forms, &c, self.config.nu, u_old, load)?;
        let x = self.solver.solve(&matrix, &rhs)?;
        Ok(SaddleSolution::unpack(&SaddleLayout::new(&self.forms.dofs), &x))
    }

    fn outcome(&self, sol: SaddleSolution, u_old: &[f64], load: &[f64], iterations: usize, residuals: Vec<f64>) -> Result<StepOutcome> {
        let balance = EnergyBalance::new(&self.forms, u_old, &sol.velocity, self.config.nu, self.config.dt, load);
        let new: Vec<f64> = u_old.iter().zip(&sol.velocity).map(|(u, d)| u + d).collect();
        let u_new = EGField::from_slice(&self.forms.dofs, &new)?;
        if !u_new.is_finite() {
            return Err(Error::Factorization("non-finite velocity".into()));
        }
        Ok(StepOutcome {
            u_new,
            pressure: sol.pressure_field(),
            lambda: sol.lambda,
            mu: sol.mu,
            increment: sol.velocity,
            iterations,
            balance,
            iterate_residuals: residuals,
        })
    }

    /// One step of the linearized scheme; the state is not advanced.
    pub fn step_linearized(&mut self) -> Result<StepOutcome> {
        let u_old = self.state.u.to_vec();
        let load = self.load();
        let frozen = self.state.u.clone();
        let sol = self.solve_increment(&frozen, &u_old, &load)?;
        let balance = EnergyBalance::new(&self.forms, &u_old, &sol.velocity, self.config.nu, self.config.dt, &load);
        self.outcome(sol, &u_old, &load, 1, vec![balance.relative_residual()])
    }

    /// One step of the nonlinear scheme by Picard iteration, starting from
    /// `u^{k+1,0} = u^k` and stopping once the increment between iterates
    /// has `|||.||| <= picard_tol * max(1, |||u^{k+1,n+1}|||)`, or once the
    /// iteration has stalled at the round-off floor of the solve (below
    /// `sqrt(picard_tol)` relative and no longer halving), which happens at tiny
    /// `nu`. The state is not advanced.
    pub fn step_picard(&mut self) -> Result<StepOutcome> {
        let u_old = self.state.u.to_vec();
        let load = self.load();
        let dofs = self.forms.dofs.clone();
        let mut delta = vec![0.0; u_old.len()];
        let mut residuals = Vec::new();
        let mut last = f64::INFINITY;
        let mut previous = f64::INFINITY;
        for n in 0..self.config.picard_max_iters {
            let half: Vec<f64> = u_old.iter().zip(&delta).map(|(u, d)| u + 0.5 * d).collect();
            let frozen = EGField::from_slice(&dofs, &half)?;
            let sol = self.solve_increment(&frozen, &u_old, &load)?;
            let balance = EnergyBalance::new(&self.forms, &u_old, &sol.velocity, self.config.nu, self.config.dt, &load);
            residuals.push(balance.relative_residual());
            let diff: Vec<f64> = sol.velocity.iter().zip(&delta).map(|(a, b)| a - b).collect();
            last = triple_norm(&self.forms.cache, &dofs, &EGField::from_slice(&dofs, &diff)?);
            let new: Vec<f64> = u_old.iter().zip(&sol.velocity).map(|(u, d)| u + d).collect();
            let scale = triple_norm(&self.forms.cache, &dofs, &EGField::from_slice(&dofs, &new)?).max(1.0);
            let tol = self.config.picard_tol * scale;
            // once the iterates stop contracting near round-off the solve's own
            // error dominates; further iterations only shuffle noise
            let stalled = last <= tol.sqrt() * scale.sqrt() && last >= 0.5 * previous;
            if last <= tol || stalled {
                return self.outcome(sol, &u_old, &load, n + 1, residuals);
            }
            previous = last;
            delta = sol.velocity;
        }
        Err(Error::PicardDivergence {
            iterations: self.config.picard_max_iters,
            increment: last,
        })
    }

    /// Advance one step with the configured scheme, update the log, error
    /// accumulators and checkpoints.
    pub fn advance(&mut self) -> Result<StepOutcome> {
        let k = self.state.k;
        let outcome = match self.config.scheme {
            Scheme::Linearized => self.step_linearized(),
            Scheme::Nonlinear => self.step_picard(),
        }
        .map_err(|e| Error::Step {
            step: k,
            source: Box::new(e),
        })?;
        if let (Some(acc), Some(tg)) = (self.errors.as_mut(), self.config.exact_solution()) {
            acc.record_step(
                &self.mesh,
                &tg,
                k,
                self.config.dt,
                &self.state.u,
                &outcome.u_new,
                &outcome.pressure.values,
            );
        }
        self.state = TimeStepState {
            k: k + 1,
            t: (k + 1) as f64 * self.config.dt,
            u: outcome.u_new.clone(),
            pressure: Some(outcome.pressure.clone()),
        };
        let worst = outcome.iterate_residuals.iter().copied().fold(0.0, f64::max);
        self.record(Some(worst));
        if let Some(ck) = &self.config.checkpoint {
            if self.state.k % ck.stride == 0 {
                write_checkpoint(&ck.dir, self.state.k, self.state.t, &self.state.u)?;
            }
        }
        Ok(outcome)
    }

    /// Run to `T`. On failure the log holds every completed step.
    pub fn run(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.advance()?;
        }
        if let Some(acc) = &self.errors {
            self.log.errors = Some(acc.finish());
        }
        Ok(())
    }
}

/// Final state and diagnostics of a completed run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub log: DiagnosticsLog,
    pub state: TimeStepState,
}

pub fn run_transient(config: &RunConfig) -> Result<RunOutput> {
    let mut sim = Simulation::new(config.clone())?;
    sim.run()?;
    Ok(RunOutput {
        log: sim.log,
        state: sim.state,
    })
}

/// Full nonlinear residual of the Crank-Nicolson system at a candidate step
/// (increment, pressure and multipliers), with convection evaluated at the
/// candidate's own midpoint. Returns the largest absolute entry.
pub fn nonlinear_residual(sim: &Simulation, outcome: &StepOutcome) -> Result<f64> {
    let u_old = sim.state.u.to_vec();
    let half: Vec<f64> = u_old.iter().zip(&outcome.increment).map(|(u, d)| u + 0.5 * d).collect();
    let frozen = EGField::from_slice(&sim.forms.dofs, &half)?;
    let c = assemble_c(&frozen, &sim.mesh, &sim.forms.dofs);
    let matrix = build_step_matrix(&sim.forms, &c, sim.config.nu, sim.config.dt)?;
    let rhs = increment_rhs(&sim.forms, &c, sim.config.nu, &u_old, &sim.load())?;
    let mut x = outcome.increment.clone();
    x.extend_from_slice(&outcome.pressure.values);
    x.extend_from_slice(&outcome.lambda);
    x.push(outcome.mu);
    let ax = matrix.mul_vec(&x);
    Ok(ax.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

fn checkpoint_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("checkpoint_{k:06}.txt"))
}

/// Write `(k, t, u^k)`: a line `step <k> <t>` followed by the field's text
/// form.
pub fn write_checkpoint(dir: &Path, k: usize, t: f64, u: &EGField) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = checkpoint_path(dir, k);
    let mut out = BufWriter::new(File::create(&path)?);
    writeln!(out, "step {k} {t:.17e}")?;
    u.write_text(&mut out)?;
    out.flush()?;
    Ok(path)
}

pub fn read_checkpoint(path: &Path) -> Result<(usize, f64, EGField)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let bad = || Error::Format(format!("bad checkpoint header {:?}", header.trim()));
    let (k, t) = match parts.as_slice() {
        ["step", k, t] => (k.parse().map_err(|_| bad())?, t.parse().map_err(|_| bad())?),
        _ => return Err(bad()),
    };
    Ok((k, t, EGField::read_text(reader)?))
}

/// `int_Omega u_c` of the current state (zero for every state produced by
/// a step).
pub fn velocity_mean(sim: &Simulation) -> Vector3<f64> {
    sim.forms.velocity_mean(&sim.state.u.to_vec())
}
