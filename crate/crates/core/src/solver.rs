//! The per-step saddle-point system and its direct sparse solution.
//!
//! Unknowns are ordered `[u (n) | p (n_p) | lambda (3) | mu (1)]`, where
//! `lambda` enforces `int u_c = 0` and `mu` enforces `sum_K |K| p_K = 0`:
//!
//! ```text
//! [ M/dt + nu/2 A + C/2   -B^T   L^T   0 ] [u     ]
//! [ B                      0     0     d ] [p     ]
//! [ L                      0     0     0 ] [lambda]
//! [ 0                      d^T   0     0 ] [mu    ]
//! ```
//!
//! `M` is the CG mass matrix zero-padded to the velocity space. Since
//! `1^T B = 0` on the torus, `mu` vanishes at the solution and the pressure
//! rows reduce to `B u = 0`.

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{Conj, Mat};

use crate::error::{Error, Result};
use crate::forms::GlobalForms;
use crate::spaces::{DofMap, EGField, PressureField};
use crate::sparse::{SparseMatrix, TripletBuilder};

/// Normwise backward error `|b - A x| / (|A| |x| + |b|)` (max norms)
/// demanded of every solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Block offsets of the saddle-point unknowns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SaddleLayout {
    pub n_c: usize,
    pub n_b: usize,
    pub n_p: usize,
}

impl SaddleLayout {
    pub fn new(dofs: &DofMap) -> Self {
        Self {
            n_c: dofs.n_c,
            n_b: dofs.n_b,
            n_p: dofs.n_p,
        }
    }

    pub fn n_velocity(&self) -> usize {
        self.n_c + self.n_b
    }

    pub fn pressure_offset(&self) -> usize {
        self.n_velocity()
    }

    pub fn lambda_offset(&self) -> usize {
        self.n_velocity() + self.n_p
    }

    pub fn mu_index(&self) -> usize {
        self.lambda_offset() + 3
    }

    pub fn dim(&self) -> usize {
        self.mu_index() + 1
    }
}

/// A solution vector split into its blocks.
#[derive(Clone, Debug)]
pub struct SaddleSolution {
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
    pub lambda: [f64; 3],
    pub mu: f64,
}

impl SaddleSolution {
    pub fn unpack(layout: &SaddleLayout, x: &[f64]) -> Self {
        let l = layout.lambda_offset();
        Self {
            velocity: x[..layout.n_velocity()].to_vec(),
            pressure: x[layout.pressure_offset()..l].to_vec(),
            lambda: [x[l], x[l + 1], x[l + 2]],
            mu: x[layout.mu_index()],
        }
    }

    pub fn velocity_field(&self, dofs: &DofMap) -> Result<EGField> {
        EGField::from_slice(dofs, &self.velocity)
    }

    pub fn pressure_field(&self) -> PressureField {
        PressureField {
            values: self.pressure.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SaddleSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    pub layout: SaddleLayout,
}

fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { context, expected, got })
    }
}

/// The step matrix for convection matrix `c` (the face block of the frozen
/// convection form). The sparsity pattern depends only on the mesh.
pub fn build_step_matrix(forms: &GlobalForms, c: &SparseMatrix, nu: f64, dt: f64) -> Result<SparseMatrix> {
    let layout = SaddleLayout::new(&forms.dofs);
    let n = layout.n_velocity();
    check_len("convection matrix rows", n, c.nrows())?;
    check_len("convection matrix columns", n, c.ncols())?;
    if !(nu > 0.0 && dt > 0.0) {
        return Err(Error::InvalidConfig(format!("need nu > 0 and dt > 0 (nu = {nu}, dt = {dt})")));
    }
    let dim = layout.dim();
    let nnz = forms.mass.nnz() + forms.a.nnz() + c.nnz() + 2 * forms.b.nnz() + 2 * (n + layout.n_p);
    let mut t = TripletBuilder::with_capacity(dim, dim, nnz);
    t.add_block(&forms.mass, 0, 0, 1.0 / dt);
    t.add_block(&forms.a, 0, 0, 0.5 * nu);
    t.add_block(c, 0, 0, 0.5);
    t.add_block_transposed(&forms.b, 0, layout.pressure_offset(), -1.0);
    t.add_block(&forms.b, layout.pressure_offset(), 0, 1.0);
    let lo = layout.lambda_offset();
    for (v, w) in forms.vertex_weights.iter().enumerate() {
        for p in 0..3 {
            t.add(3 * v + p, lo + p, *w);
            t.add(lo + p, 3 * v + p, *w);
        }
    }
    let mu = layout.mu_index();
    for (k, d) in forms.cell_volumes.iter().enumerate() {
        t.add(layout.pressure_offset() + k, mu, *d);
        t.add(mu, layout.pressure_offset() + k, *d);
    }
    Ok(t.build())
}

/// Right-hand side for the new velocity `u^{k+1}`:
/// `M u^k / dt - nu/2 A u^k - 1/2 C u^k + F` on the velocity rows, zero on
/// the constraint rows.
pub fn step_rhs(forms: &GlobalForms, c: &SparseMatrix, nu: f64, dt: f64, u_k: &[f64], load: &[f64]) -> Result<Vec<f64>> {
    let layout = SaddleLayout::new(&forms.dofs);
    let n = layout.n_velocity();
    check_len("previous velocity", n, u_k.len())?;
    check_len("load vector", n, load.len())?;
    let mu = forms.mass_apply(u_k);
    let au = forms.a.mul_vec(u_k);
    let cu = c.mul_vec(u_k);
    let mut rhs = vec![0.0; layout.dim()];
    for i in 0..n {
        rhs[i] = mu[i] / dt - 0.5 * nu * au[i] - 0.5 * cu[i] + load[i];
    }
    Ok(rhs)
}

/// Right-hand side for the increment `u^{k+1} - u^k` with the same matrix:
/// `F - nu A u^k - C u^k` on the velocity rows, `-B u^k` and `-L u^k` on the
/// constraint rows. Solving for the increment keeps its relative accuracy
/// even when it is many orders of magnitude smaller than `u^k`.
pub fn increment_rhs(forms: &GlobalForms, c: &SparseMatrix, nu: f64, u_k: &[f64], load: &[f64]) -> Result<Vec<f64>> {
    let layout = SaddleLayout::new(&forms.dofs);
    let n = layout.n_velocity();
    check_len("previous velocity", n, u_k.len())?;
    check_len("load vector", n, load.len())?;
    let au = forms.a.mul_vec(u_k);
    let cu = c.mul_vec(u_k);
    let mut rhs = vec![0.0; layout.dim()];
    for i in 0..n {
        rhs[i] = load[i] - nu * au[i] - cu[i];
    }
    for (k, bu) in forms.b.mul_vec(u_k).into_iter().enumerate() {
        rhs[layout.pressure_offset() + k] = -bu;
    }
    let mean = forms.velocity_mean(u_k);
    for p in 0..3 {
        rhs[layout.lambda_offset() + p] = -mean[p];
    }
    Ok(rhs)
}

/// Matrix and right-hand side for `u^{k+1}` given `u^k`, the convection
/// matrix and the load at the half step.
pub fn build_step_system(
    forms: &GlobalForms,
    c: &SparseMatrix,
    nu: f64,
    dt: f64,
    u_k: &[f64],
    load: &[f64],
) -> Result<SaddleSystem> {
    Ok(SaddleSystem {
        matrix: build_step_matrix(forms, c, nu, dt)?,
        rhs: step_rhs(forms, c, nu, dt, u_k, load)?,
        layout: SaddleLayout::new(&forms.dofs),
    })
}

fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Sparse LU solver with partial pivoting. The symbolic analysis is kept and
/// reused for every matrix with the same sparsity pattern.
///
/// Failure detection: a structurally singular pattern is reported by the
/// symbolic phase; a numerically singular matrix shows up either as
/// non-finite solution entries or as a solution whose size exceeds
/// `|b| / (|A| * GROWTH_LIMIT * eps)`. In both cases the reported pivot is
/// the index of the offending unknown. Every accepted solution has been
/// refined until `|b - A x| <= tolerance * (|A| |x| + |b|)`.
#[derive(Debug)]
pub struct SparseLuSolver {
    symbolic: Option<(Vec<usize>, Vec<usize>, SymbolicLu<usize>)>,
    pub tolerance: f64,
    pub max_refinements: usize,
    /// Number of symbolic analyses performed so far.
    pub analyses: usize,
}

const GROWTH_LIMIT: f64 = 1e3;

impl Default for SparseLuSolver {
    fn default() -> Self {
        Self::new()
    }
}

impl SparseLuSolver {
    pub fn new() -> Self {
        Self {
            symbolic: None,
            tolerance: RESIDUAL_TOLERANCE,
            max_refinements: 4,
            analyses: 0,
        }
    }

    /// Factor `a` and solve `a x = b`.
    pub fn solve(&mut self, a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
        let n = a.nrows();
        check_len("square matrix", n, a.ncols())?;
        check_len("right-hand side", n, b.len())?;
        if n == 0 {
            return Ok(Vec::new());
        }
        // our row-compressed arrays are the column-compressed arrays of A^T;
        // factor A^T and use transposed solves
        let reuse = matches!(&self.symbolic, Some((rp, ci, _)) if rp == a.row_ptr() && ci == a.col_idx());
        if !reuse {
            let pattern = SymbolicSparseColMat::new_checked(n, n, a.row_ptr().to_vec(), None, a.col_idx().to_vec());
            let sym = SymbolicLu::try_new(pattern.as_ref()).map_err(|e| Error::Factorization(format!("{e:?}")))?;
            self.symbolic = Some((a.row_ptr().to_vec(), a.col_idx().to_vec(), sym));
            self.analyses += 1;
        }
        let (rp, ci, sym) = self.symbolic.as_ref().expect("symbolic analysis");
        let at = SparseColMat::new(
            SymbolicSparseColMat::new_checked(n, n, rp.clone(), None, ci.clone()),
            a.values().to_vec(),
        );
        let lu = Lu::try_new_with_symbolic(sym.clone(), at.as_ref()).map_err(|e| match e {
            faer::sparse::linalg::LuError::SymbolicSingular { index } => Error::SingularSystem { pivot: index },
            e => Error::Factorization(format!("{e:?}")),
        })?;

        let apply = |rhs: &[f64]| -> Result<Vec<f64>> {
            let mut m = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
            lu.solve_transpose_in_place_with_conj(Conj::No, m.as_mut());
            let x: Vec<f64> = (0..n).map(|i| m[(i, 0)]).collect();
            if let Some(pivot) = x.iter().position(|v| !v.is_finite()) {
                return Err(Error::SingularSystem { pivot });
            }
            Ok(x)
        };

        if norm_inf(b) == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let mut x = apply(b)?;
        let anorm = (0..n)
            .map(|r| a.row(r).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        if norm_inf(&x) * anorm > norm_inf(b) / (GROWTH_LIMIT * f64::EPSILON) {
            let pivot = (0..n).max_by(|&i, &j| x[i].abs().total_cmp(&x[j].abs())).unwrap_or(0);
            return Err(Error::SingularSystem { pivot });
        }
        // normwise backward error |b - A x| / (|A| |x| + |b|) in the max norm:
        // at tiny viscosity the face block is close to singular, and no
        // double-precision x has a residual small relative to |b| alone
        let backward = |x: &[f64]| {
            let ax = a.mul_vec(x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
            let err = norm_inf(&r) / (anorm * norm_inf(x) + norm_inf(b));
            (r, err)
        };
        let (mut r, mut residual) = backward(&x);
        for _ in 0..self.max_refinements {
            if residual <= f64::EPSILON {
                break;
            }
            let d = apply(&r)?;
            let candidate: Vec<f64> = x.iter().zip(&d).map(|(x, d)| x + d).collect();
            let (rc, ec) = backward(&candidate);
            if ec >= residual {
                break;
            }
            x = candidate;
            r = rc;
            residual = ec;
        }
        if residual > self.tolerance {
            return Err(Error::ResidualTooLarge {
                residual,
                tolerance: self.tolerance,
            });
        }
        Ok(x)
    }
}

/// One-shot factor and solve of an assembled system.
pub fn factor_solve(system: &SaddleSystem, solver: &mut SparseLuSolver) -> Result<SaddleSolution> {
    let x = solver.solve(&system.matrix, &system.rhs)?;
    Ok(SaddleSolution::unpack(&system.layout, &x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_returns_rhs() {
        let a = SparseMatrix::identity(5);
        let b = vec![1.0, -2.0, 3.0, 0.5, 0.0];
        assert_eq!(SparseLuSolver::new().solve(&a, &b).unwrap(), b);
    }

    #[test]
    fn symbolic_analysis_is_reused() {
        let mut s = SparseLuSolver::new();
        let mut t = TripletBuilder::new(2, 2);
        t.add(0, 0, 2.0);
        t.add(0, 1, 1.0);
        t.add(1, 1, 3.0);
        let a = t.build();
        s.solve(&a, &[1.0, 1.0]).unwrap();
        s.solve(&a.scaled(2.0), &[1.0, 1.0]).unwrap();
        assert_eq!(s.analyses, 1);
    }

    #[test]
    fn singular_matrix_rejected() {
        let mut t = TripletBuilder::new(2, 2);
        for (r, c) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            t.add(r, c, 1.0);
        }
        let err = SparseLuSolver::new().solve(&t.build(), &[1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::SingularSystem { .. }), "{err}");
    }

    #[test]
    fn structurally_singular_rejected() {
        let mut t = TripletBuilder::new(2, 2);
        t.add(0, 0, 1.0);
        t.add(1, 0, 1.0);
        let err = SparseLuSolver::new().solve(&t.build(), &[1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::SingularSystem { .. } | Error::Factorization(_)), "{err}");
    }
}
