//! Self-checks of the discrete operators and global forms on a given mesh.
//! Each check reports the observed defect against its tolerance; the suite
//! backs the `check` command of the CLI.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::triple_norm_squared;
use crate::error::Result;
use crate::forms::{assemble_c, eval_trilinear, GlobalForms};
use crate::mesh::{build_mesh, tet_rule, triangle_rule, ElementGeometry, PeriodicTetMesh};
use crate::operators::{modified_divergence, rt_interpolate, rt_reconstruct, rt_reconstruct_at, s_matrix_defect};
use crate::spaces::{interpolate_eg_with, DofMap, EGField, PROJECTION_DEGREE};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        self.value <= self.tolerance
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} (observed {:.3e}, tolerance {:.1e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.tolerance
        )
    }
}

/// A random smooth periodic vector field: a sum of a few plane waves with
/// integer wave vectors.
#[derive(Clone, Debug)]
pub struct RandomWaves {
    waves: Vec<(Vector3<f64>, Vector3<f64>, f64)>,
}

impl RandomWaves {
    pub fn new(rng: &mut impl Rng, count: usize) -> Self {
        let waves = (0..count)
            .map(|_| {
                let k = Vector3::from_fn(|_, _| rng.random_range(-1i32..=1) as f64);
                let k = if k == Vector3::zeros() { Vector3::x() } else { k };
                let a = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
                (k, a, rng.random_range(0.0..2.0 * PI))
            })
            .collect();
        Self { waves }
    }

    pub fn eval(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.waves.iter().map(|(k, a, phase)| a * (2.0 * PI * k.dot(x) + phase).sin()).sum()
    }

    pub fn divergence(&self, x: &Vector3<f64>) -> f64 {
        self.waves
            .iter()
            .map(|(k, a, phase)| 2.0 * PI * a.dot(k) * (2.0 * PI * k.dot(x) + phase).cos())
            .sum()
    }
}

/// A random quadratic vector field `c + B x + (x^T Q_p x)_p`.
#[derive(Clone, Debug)]
pub struct RandomQuadratic {
    c: Vector3<f64>,
    b: Matrix3<f64>,
    q: [Matrix3<f64>; 3],
}

impl RandomQuadratic {
    pub fn new(rng: &mut impl Rng) -> Self {
        let mut mat = || Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let b = mat();
        let q = [mat(), mat(), mat()].map(|m| (m + m.transpose()) * 0.5);
        let c = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        Self { c, b, q }
    }

    pub fn eval(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.c + self.b * x + Vector3::from_fn(|p, _| x.dot(&(self.q[p] * x)))
    }

    pub fn divergence(&self, x: &Vector3<f64>) -> f64 {
        self.b.trace() + (0..3).map(|p| 2.0 * (self.q[p] * x)[p]).sum::<f64>()
    }
}

pub fn random_field(dofs: &DofMap, rng: &mut impl Rng) -> EGField {
    EGField {
        c: (0..dofs.n_c / 3)
            .map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)))
            .collect(),
        b: (0..dofs.n_b).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

/// Per-element fluxes `int_F v . n_K` through the element's own faces.
pub fn element_fluxes<F>(geo: &ElementGeometry, v: F, degree: usize) -> Result<[f64; 4]>
where
    F: Fn(&Vector3<f64>) -> Vector3<f64>,
{
    let rule = triangle_rule(degree)?;
    Ok(std::array::from_fn(|j| {
        rule.iter()
            .map(|(p, w)| 2.0 * geo.areas[j] * w * v(&geo.face_point(j, p)).dot(&geo.normals[j]))
            .sum()
    }))
}

/// `max_K |div(R v)|_K - div_m v|_K|` with the left side computed from face
/// fluxes of `R v` by triangle quadrature.
pub fn reconstruction_divergence_defect(mesh: &PeriodicTetMesh, v: &EGField) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (k, g) in mesh.geometries().iter().enumerate() {
        let fluxes = element_fluxes(g, |x| rt_reconstruct_at(mesh, v, k, x), 2)?;
        let div = fluxes.iter().sum::<f64>() / g.volume;
        let scale = 1.0 + div.abs();
        worst = worst.max((div - modified_divergence(mesh, v, k)).abs() / scale);
    }
    Ok(worst)
}

/// Largest relative difference between the fluxes of `R Pi_h v` and `r_h v`.
pub fn commuting_defect<F>(mesh: &PeriodicTetMesh, v: F) -> Result<f64>
where
    F: Fn(&Vector3<f64>) -> Vector3<f64>,
{
    let lhs = rt_reconstruct(mesh, &interpolate_eg_with(mesh, &v, PROJECTION_DEGREE)?);
    let rhs = rt_interpolate(mesh, &v, PROJECTION_DEGREE)?;
    let scale = 1.0 + rhs.flux.iter().fold(0.0f64, |m, f| m.max(f.abs()));
    Ok(lhs
        .flux
        .iter()
        .zip(&rhs.flux)
        .map(|(a, b)| (a - b).abs() / scale)
        .fold(0.0, f64::max))
}

/// `max_K |div(r_h v) - Q_0(div v)|` for a field given with its divergence,
/// using element-local fluxes.
pub fn rt_divergence_defect<F, D>(mesh: &PeriodicTetMesh, v: F, div: D) -> Result<f64>
where
    F: Fn(&Vector3<f64>) -> Vector3<f64>,
    D: Fn(&Vector3<f64>) -> f64,
{
    let rule = tet_rule(PROJECTION_DEGREE)?;
    let mut worst: f64 = 0.0;
    for g in mesh.geometries() {
        let fluxes = element_fluxes(g, &v, PROJECTION_DEGREE)?;
        let lhs = fluxes.iter().sum::<f64>() / g.volume;
        let rhs: f64 = rule.iter().map(|(p, w)| 6.0 * w * div(&g.point(p))).sum();
        worst = worst.max((lhs - rhs).abs() / (1.0 + rhs.abs()));
    }
    Ok(worst)
}

/// Operator identities on one mesh: reconstruction divergence, commuting
/// interpolation, RT divergence of quadratics, and the S-matrix duality.
pub fn operator_identity_checks(m: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mesh = build_mesh(m)?;
    let dofs = DofMap::new(&mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut div = 0.0f64;
    for _ in 0..5 {
        div = div.max(reconstruction_divergence_defect(&mesh, &random_field(&dofs, &mut rng))?);
    }
    let mut commute = 0.0f64;
    for _ in 0..20 {
        let w = RandomWaves::new(&mut rng, 3);
        commute = commute.max(commuting_defect(&mesh, |x| w.eval(x))?);
    }
    let mut rt_div = 0.0f64;
    for _ in 0..20 {
        let q = RandomQuadratic::new(&mut rng);
        rt_div = rt_div.max(rt_divergence_defect(&mesh, |x| q.eval(x), |x| q.divergence(x))?);
    }
    Ok(vec![
        CheckResult::new(format!("m={m}: div(R v) = div_m v per element"), div, 1e-12),
        CheckResult::new(format!("m={m}: R Pi_h v = r_h v (20 smooth fields)"), commute, 1e-12),
        CheckResult::new(format!("m={m}: div(r_h v) = Q_0 div v (20 quadratic fields)"), rt_div, 1e-12),
        CheckResult::new("S matrices: n_j . S_i . n_j = 2 delta_ij", s_matrix_defect(), 0.0),
    ])
}

/// Structure of the global forms on one mesh: symmetry, semi-definiteness
/// and kernel of `A`, skew-symmetry of `C`, the trilinear identity and the
/// agreement of `|||.|||` with `A`.
pub fn form_structure_checks(m: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mesh = build_mesh(m)?;
    let forms = GlobalForms::new(&mesh)?;
    let dofs = &forms.dofs;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let a = forms.a.to_dense();
    let scale = a.amax();
    let asym = (&a - a.transpose()).amax() / scale;
    let eig = ((&a + a.transpose()) * 0.5).symmetric_eigenvalues();
    let min_eig = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let kernel = eig.iter().filter(|l| l.abs() <= 1e-10 * scale).count();
    let constant_pairs = (0..3)
        .map(|p| {
            let u = interpolate_eg_with(&mesh, |_| Vector3::ith(p, 1.0), 1).expect("degree-1 rule");
            forms.a.mul_vec(&u.to_vec()).iter().fold(0.0f64, |m, v| m.max(v.abs()))
        })
        .fold(0.0, f64::max);

    let mut skew = 0.0f64;
    let mut trilinear = 0.0f64;
    let mut norm = 0.0f64;
    for _ in 0..10 {
        let u = random_field(dofs, &mut rng);
        let w = random_field(dofs, &mut rng);
        let c = assemble_c(&u, &mesh, dofs);
        let ct = c.transpose();
        let cmax = c.max_abs().max(f64::MIN_POSITIVE);
        skew = skew.max(c.add(&ct).max_abs() / cmax);
        let cw = eval_trilinear(&mesh, &u, &w, &w);
        let scale = eval_trilinear(&mesh, &u, &w, &u).abs().max(1.0);
        trilinear = trilinear.max(cw.abs() / scale);
        let x = u.to_vec();
        let uau = forms.a.bilinear(&x, &x);
        norm = norm.max((triple_norm_squared(&forms.cache, dofs, &u) - uau).abs() / uau.abs().max(1.0));
    }
    Ok(vec![
        CheckResult::new(format!("m={m}: A symmetric"), asym, 1e-14),
        CheckResult::new(format!("m={m}: A positive semi-definite (-min eigenvalue / max entry)"), (-min_eig / scale).max(0.0), 1e-12),
        CheckResult::new(format!("m={m}: A kernel dimension is 3 (|dim - 3|)"), (kernel as f64 - 3.0).abs(), 0.0),
        CheckResult::new(format!("m={m}: constant pairs lie in the kernel of A"), constant_pairs, 1e-12),
        CheckResult::new(format!("m={m}: C(u) skew-symmetric (10 random u)"), skew, 1e-13),
        CheckResult::new(format!("m={m}: c(v, w, w) = 0 (10 random v, w)"), trilinear, 1e-12),
        CheckResult::new(format!("m={m}: |||u|||^2 = u^T A u (10 random u)"), norm, 1e-12),
    ])
}

/// The full suite: operator identities on `m in {1, 2, 4}` (only those not
/// larger than `max_m`) and form structure on `form_m`.
pub fn run_operator_checks(form_m: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for m in [1, 2, 4] {
        out.extend(operator_identity_checks(m, seed.wrapping_add(m as u64))?);
    }
    out.extend(form_structure_checks(form_m, seed)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_divergence_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = RandomQuadratic::new(&mut rng);
        let x = Vector3::new(0.2, 0.4, -0.3);
        let h = 1e-5;
        let fd: f64 = (0..3)
            .map(|i| {
                let e = Vector3::ith(i, h);
                (q.eval(&(x + e))[i] - q.eval(&(x - e))[i]) / (2.0 * h)
            })
            .sum();
        assert!((fd - q.divergence(&x)).abs() < 1e-8);
    }

    #[test]
    fn small_mesh_suite_passes() {
        for r in operator_identity_checks(1, 3).unwrap() {
            assert!(r.passed(), "{r}");
        }
    }
}
