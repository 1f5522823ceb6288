//! Running a resolved experiment and writing its artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use egns::checks::run_operator_checks;
use egns::diagnostics::{write_summary_csv, SweepEntry};
use egns::{CheckResult, DiagnosticsLog, Simulation};

use crate::config::{ExperimentKind, ExperimentSpec, RunSpec};

pub const CHECK_SEED: u64 = 7;

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{failed} of {total} runs failed")]
    Runs { failed: usize, total: usize },
    #[error("{failed} of {total} checks failed")]
    Checks { failed: usize, total: usize },
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Solver(#[from] egns::Error),
}

pub struct RunResult {
    pub spec: RunSpec,
    pub log: DiagnosticsLog,
    pub error: Option<egns::Error>,
}

fn execute(spec: RunSpec) -> RunResult {
    let mut sim = match Simulation::new(spec.config.clone()) {
        Ok(sim) => sim,
        Err(e) => {
            return RunResult {
                spec,
                log: DiagnosticsLog::default(),
                error: Some(e),
            }
        }
    };
    let error = sim.run().err();
    RunResult {
        spec,
        log: sim.log,
        error,
    }
}

/// Runs every member on up to `jobs` threads; results keep the input order.
pub fn run_all(runs: Vec<RunSpec>, jobs: usize) -> Vec<RunResult> {
    let n = runs.len();
    let queue: Vec<Mutex<Option<RunSpec>>> = runs.into_iter().map(|r| Mutex::new(Some(r))).collect();
    let results: Vec<Mutex<Option<RunResult>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let spec = queue[i].lock().unwrap().take().expect("each run is taken once");
                let start = Instant::now();
                eprintln!("[{}/{n}] {} started", i + 1, spec.name);
                let r = execute(spec);
                eprintln!("[{}/{n}] {} finished in {:.1}s", i + 1, r.spec.name, start.elapsed().as_secs_f64());
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });
    results.into_iter().map(|r| r.into_inner().unwrap().expect("every run completes")).collect()
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|source| Failure::Output {
        path: path.to_owned(),
        source,
    })
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> egns::Result<()>) -> Result<(), Failure> {
    let mut out = create(path)?;
    f(&mut out)?;
    out.flush().map_err(|source| Failure::Output {
        path: path.to_owned(),
        source,
    })
}

fn describe(r: &RunResult) -> String {
    let log = &r.log;
    let mut s = format!(
        "{}: {} steps, energy drift {:.3e}, helicity drift {:.3e}, max div {:.3e}, max energy residual {:.3e}",
        r.spec.name,
        log.records.len().saturating_sub(1),
        log.max_relative_drift(|x| x.energy),
        log.max_relative_drift(|x| x.helicity),
        log.max_step_divergence(),
        log.max_energy_residual()
    );
    if let Some(e) = &log.errors {
        s += &format!(", errors {:.4e} / {:.4e} / {:.4e}", e.e_inf2, e.e_grad22, e.e_p12);
    }
    if let Some(e) = &r.error {
        s += &format!(", FAILED: {e}");
    }
    s
}

pub fn write_check_report(checks: &[CheckResult], path: &Path) -> Result<(), Failure> {
    let mut out = create(path)?;
    let io = |source| Failure::Output {
        path: path.to_owned(),
        source,
    };
    for c in checks {
        writeln!(out, "{c}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Runs the operator and form-structure suite, writes `checks.txt`.
pub fn run_checks(form_m: usize, out_dir: &Path) -> Result<Vec<CheckResult>, Failure> {
    let checks = run_operator_checks(form_m, CHECK_SEED)?;
    fs::create_dir_all(out_dir).map_err(|source| Failure::Output {
        path: out_dir.to_owned(),
        source,
    })?;
    write_check_report(&checks, &out_dir.join("checks.txt"))?;
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    if failed > 0 {
        return Err(Failure::Checks {
            failed,
            total: checks.len(),
        });
    }
    Ok(checks)
}

/// Runs the experiment and writes one diagnostics CSV per run (plus
/// `summary.csv` for sweeps with an exact solution) into the output
/// directory. Partial logs of failed runs are written too.
pub fn run_experiment(spec: &ExperimentSpec, jobs: usize) -> Result<(), Failure> {
    if spec.kind == ExperimentKind::OperatorChecks {
        return run_checks(spec.mesh_m[0], &spec.out_dir).map(|_| ());
    }
    fs::create_dir_all(&spec.out_dir).map_err(|source| Failure::Output {
        path: spec.out_dir.clone(),
        source,
    })?;
    let results = run_all(spec.runs(), jobs);
    let mut entries = Vec::new();
    for r in &results {
        let path = spec.out_dir.join(format!("{}.csv", r.spec.name));
        write_with(&path, |out| r.log.write_csv(out))?;
        println!("{}", describe(r));
        if let (None, Some(errors)) = (&r.error, r.log.errors) {
            entries.push(SweepEntry {
                nu: r.spec.config.nu,
                m: r.spec.config.m,
                errors,
            });
        }
    }
    if !entries.is_empty() {
        write_with(&spec.out_dir.join("summary.csv"), |out| write_summary_csv(&entries, out))?;
    }
    let failed = results.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        return Err(Failure::Runs {
            failed,
            total: results.len(),
        });
    }
    Ok(())
}
