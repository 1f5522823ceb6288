//! Enriched Galerkin discretization of the incompressible Navier-Stokes
//! equations in rotational form on periodic tetrahedral meshes.
//!
//! The velocity space pairs continuous P1 vector fields with one scalar
//! normal component per face; the pressure is piecewise constant. The
//! convective term acts only on the Raviart-Thomas reconstruction of the
//! face part, which makes the Crank-Nicolson schemes conserve the discrete
//! kinetic energy and helicity as the viscosity vanishes.

pub mod checks;
pub mod diagnostics;
pub mod error;
pub mod flows;
pub mod forms;
pub mod mesh;
pub mod operators;
pub mod solver;
pub mod spaces;
pub mod sparse;
pub mod timestep;

pub use checks::CheckResult;
pub use error::{Error, Result};
pub use mesh::{build_mesh, PeriodicTetMesh};
pub use operators::OperatorCache;
pub use spaces::{DofMap, EGField, PressureField};
pub use diagnostics::{DiagnosticsLog, ErrorNorms, StepRecord};
pub use flows::{SmoothFlow, TaylorGreen};
pub use forms::GlobalForms;
pub use solver::{SaddleLayout, SaddleSystem, SparseLuSolver};
pub use sparse::{SparseMatrix, TripletBuilder};
pub use timestep::{run_transient, RunConfig, Scheme, Simulation};
