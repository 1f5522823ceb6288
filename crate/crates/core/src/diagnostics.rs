//! Conserved quantities, discrete norms, error norms and the inf-sup
//! estimator, plus the CSV records written per run and per sweep.

use std::io::Write;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::flows::SmoothFlow;
use crate::forms::GlobalForms;
use crate::mesh::{tet_rule, PeriodicTetMesh};
use crate::operators::{local_vector, modified_divergence, OperatorCache};
use crate::spaces::{curl_cg, grad_cg, DofMap, EGField, PROJECTION_DEGREE};

/// `E_h = 1/2 ||u_c||^2`, exactly.
pub fn energy(forms: &GlobalForms, u: &EGField) -> f64 {
    let x = u.to_vec();
    let c = &x[..forms.dofs.n_c];
    0.5 * forms.mass.bilinear(c, c)
}

/// `H_h = (u_c, curl u_c)`: per tet the curl is constant and the mean of
/// `u_c` is the vertex average.
pub fn helicity(mesh: &PeriodicTetMesh, u: &EGField) -> f64 {
    mesh.tets
        .iter()
        .zip(mesh.geometries())
        .enumerate()
        .map(|(k, (t, g))| {
            let mean: Vector3<f64> = t.vertices.iter().map(|&v| u.c[v]).sum::<Vector3<f64>>() / 4.0;
            g.volume * mean.dot(&curl_cg(mesh, u, k))
        })
        .sum()
}

/// Helicity by the degree-2 tet rule (independent cross-check).
pub fn helicity_quadrature(mesh: &PeriodicTetMesh, u: &EGField) -> f64 {
    let rule = tet_rule(2).expect("degree-2 tet rule");
    let mut total = 0.0;
    for (k, (t, g)) in mesh.tets.iter().zip(mesh.geometries()).enumerate() {
        let w = curl_cg(mesh, u, k);
        for (p, wt) in rule.iter() {
            let val: Vector3<f64> = (0..4).map(|j| u.c[t.vertices[j]] * p[j]).sum();
            total += 6.0 * g.volume * wt * val.dot(&w);
        }
    }
    total
}

/// `|||u|||^2 = sum_K ||grad_m u||_K^2`, computed from the gradient
/// coefficients and the element Gram matrices.
pub fn triple_norm_squared(cache: &OperatorCache, dofs: &DofMap, u: &EGField) -> f64 {
    cache
        .elements
        .iter()
        .enumerate()
        .map(|(k, op)| {
            let x = op.gradient_coefficients(&local_vector(u, dofs, k));
            x.dot(&(op.gram * x))
        })
        .sum()
}

pub fn triple_norm(cache: &OperatorCache, dofs: &DofMap, u: &EGField) -> f64 {
    triple_norm_squared(cache, dofs, u).max(0.0).sqrt()
}

/// `||u||_{1,h}^2 = ||grad u_c||^2 + sum_K h_K^{-1} ||Q_b(u_c . n) - u_b . n||^2_{dK}`.
pub fn norm_1h(mesh: &PeriodicTetMesh, u: &EGField) -> f64 {
    let mut total = 0.0;
    for (k, (t, g)) in mesh.tets.iter().zip(mesh.geometries()).enumerate() {
        total += g.volume * grad_cg(mesh, u, k).norm_squared();
        let hk = g.diameter();
        for j in 0..4 {
            let face_mean: Vector3<f64> = (0..4).filter(|&i| i != j).map(|i| u.c[t.vertices[i]]).sum::<Vector3<f64>>() / 3.0;
            let jump = face_mean.dot(&g.normals[j]) - t.signs[j] * u.b[t.faces[j]];
            total += g.areas[j] * jump * jump / hk;
        }
    }
    total.sqrt()
}

/// `max_K |div_m u|`.
pub fn max_divergence(mesh: &PeriodicTetMesh, u: &EGField) -> f64 {
    (0..mesh.num_tets())
        .map(|k| modified_divergence(mesh, u, k).abs())
        .fold(0.0, f64::max)
}

/// Terms of the per-step energy identity
/// `(||u_c^{k+1}||^2 - ||u_c^k||^2) / (2 dt) + nu |||u^{k+1/2}|||^2 = (f, R u^{k+1/2})`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyBalance {
    pub kinetic_rate: f64,
    pub dissipation: f64,
    pub work: f64,
}

impl EnergyBalance {
    /// From the old velocity and the increment, both flat. The kinetic term
    /// is evaluated as `delta_c^T M (2 u_c + delta_c) / (2 dt)`, which avoids
    /// cancellation.
    pub fn new(forms: &GlobalForms, u_old: &[f64], delta: &[f64], nu: f64, dt: f64, load: &[f64]) -> Self {
        let nc = forms.dofs.n_c;
        let sum: Vec<f64> = u_old[..nc].iter().zip(&delta[..nc]).map(|(u, d)| 2.0 * u + d).collect();
        let kinetic_rate = forms.mass.bilinear(&delta[..nc], &sum) / (2.0 * dt);
        let half: Vec<f64> = u_old.iter().zip(delta).map(|(u, d)| u + 0.5 * d).collect();
        let dissipation = nu * forms.a.bilinear(&half, &half);
        let work = load.iter().zip(&half).map(|(f, u)| f * u).sum();
        Self {
            kinetic_rate,
            dissipation,
            work,
        }
    }

    pub fn residual(&self) -> f64 {
        (self.kinetic_rate + self.dissipation - self.work).abs()
    }

    /// Residual relative to the sum of the magnitudes of the three terms.
    pub fn relative_residual(&self) -> f64 {
        let scale = self.kinetic_rate.abs() + self.dissipation.abs() + self.work.abs();
        if scale == 0.0 {
            0.0
        } else {
            self.residual() / scale
        }
    }
}

/// One row of the per-run diagnostics CSV.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub t: f64,
    pub energy: f64,
    pub helicity: f64,
    pub max_divergence: f64,
    /// Relative energy-identity residual of the step that produced this
    /// state; `None` for the initial state.
    pub energy_residual: Option<f64>,
}

/// Summary of the error norms against an exact solution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorNorms {
    pub e_inf2: f64,
    pub e_grad22: f64,
    pub e_p12: f64,
}

#[derive(Clone, Debug, Default)]
pub struct DiagnosticsLog {
    pub records: Vec<StepRecord>,
    pub errors: Option<ErrorNorms>,
}

pub const DIAGNOSTICS_HEADER: &str = "k,t,energy,helicity,maxdiv,energy_residual";

impl DiagnosticsLog {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{DIAGNOSTICS_HEADER}")?;
        for r in &self.records {
            let res = r.energy_residual.map(|v| format!("{v:.6e}")).unwrap_or_default();
            writeln!(
                out,
                "{},{:.6},{:.16e},{:.16e},{:.6e},{}",
                r.k, r.t, r.energy, r.helicity, r.max_divergence, res
            )?;
        }
        Ok(())
    }

    /// `max_k |q_k - q_0| / |q_0|` for the selected quantity.
    pub fn max_relative_drift(&self, quantity: impl Fn(&StepRecord) -> f64) -> f64 {
        let Some(first) = self.records.first() else {
            return 0.0;
        };
        let q0 = quantity(first);
        self.records
            .iter()
            .map(|r| (quantity(r) - q0).abs() / q0.abs())
            .fold(0.0, f64::max)
    }

    pub fn max_energy_residual(&self) -> f64 {
        self.records.iter().filter_map(|r| r.energy_residual).fold(0.0, f64::max)
    }

    /// Largest divergence over the states produced by time steps.
    pub fn max_step_divergence(&self) -> f64 {
        self.records.iter().filter(|r| r.k > 0).map(|r| r.max_divergence).fold(0.0, f64::max)
    }
}

/// `||u(t) - u_c||` with the degree-4 tet rule.
pub fn velocity_error<F: SmoothFlow + ?Sized>(mesh: &PeriodicTetMesh, u: &EGField, flow: &F, t: f64) -> f64 {
    let rule = tet_rule(PROJECTION_DEGREE).expect("degree-4 tet rule");
    let mut total = 0.0;
    for (tet, g) in mesh.tets.iter().zip(mesh.geometries()) {
        for (p, w) in rule.iter() {
            let uh: Vector3<f64> = (0..4).map(|j| u.c[tet.vertices[j]] * p[j]).sum();
            total += 6.0 * g.volume * w * (flow.velocity(&g.point(p), t) - uh).norm_squared();
        }
    }
    total.sqrt()
}

/// `||grad u(t) - grad u_c||^2` with the degree-4 tet rule.
pub fn gradient_error_squared<F: SmoothFlow + ?Sized>(mesh: &PeriodicTetMesh, u: &EGField, flow: &F, t: f64) -> f64 {
    let rule = tet_rule(PROJECTION_DEGREE).expect("degree-4 tet rule");
    let mut total = 0.0;
    for (k, g) in mesh.geometries().iter().enumerate() {
        let gh: Matrix3<f64> = grad_cg(mesh, u, k);
        for (p, w) in rule.iter() {
            total += 6.0 * g.volume * w * (flow.velocity_gradient(&g.point(p), t) - gh).norm_squared();
        }
    }
    total
}

/// `||p(t) - mean p(t) - p_h||` with the degree-4 tet rule.
pub fn pressure_error<F: SmoothFlow + ?Sized>(mesh: &PeriodicTetMesh, p_h: &[f64], flow: &F, t: f64) -> f64 {
    let rule = tet_rule(PROJECTION_DEGREE).expect("degree-4 tet rule");
    let mean = flow.pressure_mean(t);
    let mut total = 0.0;
    for (g, ph) in mesh.geometries().iter().zip(p_h) {
        for (p, w) in rule.iter() {
            let e = flow.pressure(&g.point(p), t) - mean - ph;
            total += 6.0 * g.volume * w * e * e;
        }
    }
    total.sqrt()
}

/// Online accumulation of the three discrete error norms.
#[derive(Clone, Debug, Default)]
pub struct ErrorAccumulator {
    e_inf2: f64,
    grad_sum: f64,
    p_sum: f64,
    steps: usize,
}

impl ErrorAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record step `k -> k + 1`: `u_old = u^k`, `u_new = u^{k+1}`, `p_half =
    /// p^{k+1/2}`.
    #[allow(clippy::too_many_arguments)]
    pub fn record_step<F: SmoothFlow + ?Sized>(
        &mut self,
        mesh: &PeriodicTetMesh,
        flow: &F,
        k: usize,
        dt: f64,
        u_old: &EGField,
        u_new: &EGField,
        p_half: &[f64],
    ) {
        let t_new = (k + 1) as f64 * dt;
        let t_half = (k as f64 + 0.5) * dt;
        self.e_inf2 = self.e_inf2.max(velocity_error(mesh, u_new, flow, t_new));
        self.grad_sum += dt * gradient_error_squared(mesh, &u_old.midpoint(u_new), flow, t_half);
        self.p_sum += dt * pressure_error(mesh, p_half, flow, t_half);
        self.steps += 1;
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn finish(&self) -> ErrorNorms {
        ErrorNorms {
            e_inf2: self.e_inf2,
            e_grad22: self.grad_sum.sqrt(),
            e_p12: self.p_sum,
        }
    }
}

/// Error norms of a stored trajectory `u^0..u^N`, `p^{1/2}..p^{N-1/2}`.
pub fn error_norms<F: SmoothFlow + ?Sized>(
    mesh: &PeriodicTetMesh,
    flow: Option<&F>,
    dt: f64,
    velocities: &[EGField],
    pressures: &[Vec<f64>],
) -> Result<ErrorNorms> {
    let flow = flow.ok_or(Error::MissingExactSolution)?;
    if velocities.len() != pressures.len() + 1 {
        return Err(Error::DimensionMismatch {
            context: "trajectory length",
            expected: pressures.len() + 1,
            got: velocities.len(),
        });
    }
    let mut acc = ErrorAccumulator::new();
    for (k, p) in pressures.iter().enumerate() {
        acc.record_step(mesh, flow, k, dt, &velocities[k], &velocities[k + 1], p);
    }
    Ok(acc.finish())
}

/// `log(e1 / e2) / log(m2 / m1)`.
pub fn convergence_rate(e1: f64, m1: usize, e2: f64, m2: usize) -> f64 {
    (e1 / e2).ln() / (m2 as f64 / m1 as f64).ln()
}

/// One row of a convergence table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepEntry {
    pub nu: f64,
    pub m: usize,
    pub errors: ErrorNorms,
}

pub const SUMMARY_HEADER: &str = "nu,h,e_inf2,rate,e_grad22,rate,e_p12,rate";

/// Rates of each entry against the previous entry with the same `nu`
/// (entries are expected sorted by `nu`, then `m`).
pub fn sweep_rates(entries: &[SweepEntry]) -> Vec<Option<[f64; 3]>> {
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let prev = i.checked_sub(1).map(|j| &entries[j]).filter(|p| p.nu == e.nu)?;
            Some([
                convergence_rate(prev.errors.e_inf2, prev.m, e.errors.e_inf2, e.m),
                convergence_rate(prev.errors.e_grad22, prev.m, e.errors.e_grad22, e.m),
                convergence_rate(prev.errors.e_p12, prev.m, e.errors.e_p12, e.m),
            ])
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(entries: &[SweepEntry], mut out: W) -> Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for (e, r) in entries.iter().zip(sweep_rates(entries)) {
        let rate = |i: usize| r.map(|r| format!("{:.4}", r[i])).unwrap_or_else(|| "-".into());
        writeln!(
            out,
            "{:e},1/{},{:.4e},{},{:.4e},{},{:.4e},{}",
            e.nu,
            e.m,
            e.errors.e_inf2,
            rate(0),
            e.errors.e_grad22,
            rate(1),
            e.errors.e_p12,
            rate(2)
        )?;
    }
    Ok(())
}

/// Largest `m` accepted by [`inf_sup_constant`].
pub const INF_SUP_MAX_M: usize = 4;

/// Discrete inf-sup constant
/// `min_{q perp 1} max_v b(v, q) / (|||v||| ||q||)`.
///
/// With `D = diag(|K|)` this is the square root of the smallest eigenvalue
/// of `D^{-1/2} B A^+ B^T D^{-1/2}` on the complement of `D^{1/2} 1`, where
/// `A^+` is the pseudo-inverse of `A` on the complement of its kernel (the
/// constant pairs, which `B` annihilates). Dense; restricted to small meshes.
pub fn inf_sup_constant(mesh: &PeriodicTetMesh, forms: &GlobalForms) -> Result<f64> {
    if mesh.m > INF_SUP_MAX_M {
        return Err(Error::MeshTooLarge {
            m: mesh.m,
            limit: INF_SUP_MAX_M,
        });
    }
    let s = inf_sup_operator(forms);
    let np = s.nrows();
    if np < 2 {
        return Err(Error::InvalidConfig("inf-sup constant needs at least two pressure dofs".into()));
    }
    let w = DVector::from_iterator(np, forms.cell_volumes.iter().map(|d| d.sqrt()));
    let w = &w / w.norm();
    // lift the constant mode above the spectrum
    let shift = s.trace().abs() + 1.0;
    let deflated = &s + &w * w.transpose() * shift;
    let eig = deflated.symmetric_eigenvalues();
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::Eigen);
    }
    Ok(min.max(0.0).sqrt())
}

/// `D^{-1/2} B A^+ B^T D^{-1/2}` as a dense matrix.
pub fn inf_sup_operator(forms: &GlobalForms) -> DMatrix<f64> {
    let a = forms.a.to_dense();
    let a = (&a + a.transpose()) * 0.5;
    let n = a.nrows();
    let eig = a.symmetric_eigen();
    let scale = eig.eigenvalues.amax();
    let tol = scale * 1e-10;
    let mut pinv = DMatrix::zeros(n, n);
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > tol {
            let v = eig.eigenvectors.column(i);
            pinv += v * v.transpose() / lam;
        }
    }
    let dinv = DMatrix::from_diagonal(&DVector::from_iterator(
        forms.cell_volumes.len(),
        forms.cell_volumes.iter().map(|d| 1.0 / d.sqrt()),
    ));
    let b = &dinv * forms.b.to_dense();
    let s = &b * pinv * b.transpose();
    (&s + s.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;
    use crate::spaces::interpolate_eg;

    #[test]
    fn rates_recover_exponent() {
        let e = |m: usize| 3.0 * (m as f64).powf(-1.7);
        assert!((convergence_rate(e(4), 4, e(6), 6) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn constant_field_diagnostics() {
        let mesh = build_mesh(2).unwrap();
        let forms = GlobalForms::new(&mesh).unwrap();
        let u = interpolate_eg(&mesh, |_| Vector3::x());
        assert!((energy(&forms, &u) - 0.5).abs() < 1e-14);
        assert!(helicity(&mesh, &u).abs() < 1e-14);
        assert!(triple_norm(&forms.cache, &forms.dofs, &u) < 1e-7);
        assert!(norm_1h(&mesh, &u) < 1e-12);
    }

    #[test]
    fn summary_layout() {
        let errs = |a: f64| ErrorNorms { e_inf2: a, e_grad22: a, e_p12: a };
        let entries = [
            SweepEntry { nu: 1.0, m: 4, errors: errs(1.0) },
            SweepEntry { nu: 1.0, m: 8, errors: errs(0.25) },
        ];
        let mut buf = Vec::new();
        write_summary_csv(&entries, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], SUMMARY_HEADER);
        assert_eq!(lines[1], "1e0,1/4,1.0000e0,-,1.0000e0,-,1.0000e0,-");
        assert_eq!(lines[2], "1e0,1/8,2.5000e-1,2.0000,2.5000e-1,2.0000,2.5000e-1,2.0000");
    }
}
