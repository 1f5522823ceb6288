//! Degrees of freedom of the enriched Galerkin velocity space and the
//! piecewise-constant pressure space, projections of smooth data onto them,
//! and the text serialization used for checkpoints.
//!
//! A velocity `v_h = {v_c, v_b}` is stored as the vertex values of the
//! continuous P1 part `v_c` followed by one scalar `v_F` per face, where the
//! face part is `v_b|_F = v_F n_F` for the face's fixed normal. The flat
//! ordering is `[c_0x, c_0y, c_0z, c_1x, ..., b_0, b_1, ...]`.

use std::io::{BufRead, Write};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::mesh::{tet_rule, triangle_rule, PeriodicTetMesh};

/// Face-rule degree used for projections unless stated otherwise.
pub const PROJECTION_DEGREE: usize = 4;

/// Face-rule degree used when interpolating initial data. High enough that
/// the face averages of trigonometric data are exact to round-off, so the
/// interpolant of a divergence-free field is discretely divergence-free.
pub const INITIAL_FACE_DEGREE: usize = 16;

/// Global numbering of velocity and pressure unknowns.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub n_c: usize,
    pub n_b: usize,
    pub n_p: usize,
    /// Per tet: 12 CG dofs (`3 * local_vertex + component`) followed by the
    /// 4 face dofs (face `j` opposite local vertex `j`).
    pub cell_dofs: Vec<[usize; 16]>,
    /// Per tet: `n_F . n_K` for each local face.
    pub cell_signs: Vec<[f64; 4]>,
}

impl DofMap {
    pub fn new(mesh: &PeriodicTetMesh) -> Self {
        let n_c = 3 * mesh.num_vertices();
        let cell_dofs = mesh
            .tets
            .iter()
            .map(|t| {
                let mut d = [0usize; 16];
                for j in 0..4 {
                    for p in 0..3 {
                        d[3 * j + p] = 3 * t.vertices[j] + p;
                    }
                    d[12 + j] = n_c + t.faces[j];
                }
                d
            })
            .collect();
        Self {
            n_c,
            n_b: mesh.num_faces(),
            n_p: mesh.num_tets(),
            cell_dofs,
            cell_signs: mesh.tets.iter().map(|t| t.signs).collect(),
        }
    }

    /// Number of velocity unknowns `n_c + n_b`.
    pub fn n_velocity(&self) -> usize {
        self.n_c + self.n_b
    }
}

/// Coefficients of an enriched Galerkin velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct EGField {
    pub c: Vec<Vector3<f64>>,
    pub b: Vec<f64>,
}

impl EGField {
    pub fn zeros(dofs: &DofMap) -> Self {
        Self {
            c: vec![Vector3::zeros(); dofs.n_c / 3],
            b: vec![0.0; dofs.n_b],
        }
    }

    pub fn len(&self) -> usize {
        3 * self.c.len() + self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_slice(dofs: &DofMap, x: &[f64]) -> Result<Self> {
        if x.len() < dofs.n_velocity() {
            return Err(Error::DimensionMismatch {
                context: "EGField::from_slice",
                expected: dofs.n_velocity(),
                got: x.len(),
            });
        }
        let c = x[..dofs.n_c]
            .chunks_exact(3)
            .map(|v| Vector3::new(v[0], v[1], v[2]))
            .collect();
        Ok(Self {
            c,
            b: x[dofs.n_c..dofs.n_velocity()].to_vec(),
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for v in &self.c {
            out.extend_from_slice(v.as_slice());
        }
        out.extend_from_slice(&self.b);
        out
    }

    /// The 16 local coefficients of tet `k` in `DofMap::cell_dofs` order.
    pub fn local(&self, dofs: &DofMap, k: usize) -> [f64; 16] {
        let n_c = dofs.n_c;
        dofs.cell_dofs[k].map(|g| {
            if g < n_c {
                self.c[g / 3][g % 3]
            } else {
                self.b[g - n_c]
            }
        })
    }

    /// `(self + other) / 2`.
    pub fn midpoint(&self, other: &Self) -> Self {
        self.lerp(other, 0.5)
    }

    /// `(1 - s) self + s other`.
    pub fn lerp(&self, other: &Self, s: f64) -> Self {
        Self {
            c: self.c.iter().zip(&other.c).map(|(a, b)| a * (1.0 - s) + b * s).collect(),
            b: self.b.iter().zip(&other.b).map(|(a, b)| a * (1.0 - s) + b * s).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            c: self.c.iter().zip(&other.c).map(|(a, b)| a - b).collect(),
            b: self.b.iter().zip(&other.b).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|v| v.iter().all(|x| x.is_finite())) && self.b.iter().all(|x| x.is_finite())
    }

    /// Text form: a header line `egfield <n_c> <n_b>` followed by one
    /// coefficient per line in flat dof order.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "egfield {} {}", 3 * self.c.len(), self.b.len())?;
        for x in self.to_vec() {
            writeln!(out, "{x:.17e}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty input".into()))??;
        let (n_c, n_b) = parse_header(&header)?;
        let mut values = Vec::with_capacity(n_c + n_b);
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            values.push(
                line.parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad coefficient {line:?}: {e}")))?,
            );
        }
        if values.len() != n_c + n_b || n_c % 3 != 0 {
            return Err(Error::Format(format!(
                "expected {} coefficients, found {}",
                n_c + n_b,
                values.len()
            )));
        }
        Ok(Self {
            c: values[..n_c].chunks_exact(3).map(|v| Vector3::new(v[0], v[1], v[2])).collect(),
            b: values[n_c..].to_vec(),
        })
    }
}

fn parse_header(header: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = header.split_whitespace().collect();
    match parts.as_slice() {
        ["egfield", c, b] => {
            let c = c.parse().map_err(|_| Error::Format(format!("bad header {header:?}")))?;
            let b = b.parse().map_err(|_| Error::Format(format!("bad header {header:?}")))?;
            Ok((c, b))
        }
        _ => Err(Error::Format(format!("bad header {header:?}"))),
    }
}

/// Piecewise-constant pressure, one value per tet.
#[derive(Clone, Debug, PartialEq)]
pub struct PressureField {
    pub values: Vec<f64>,
}

impl PressureField {
    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    /// `sum_K |K| p_K`.
    pub fn integral(&self, mesh: &PeriodicTetMesh) -> f64 {
        mesh.geometries()
            .iter()
            .zip(&self.values)
            .map(|(g, p)| g.volume * p)
            .sum()
    }
}

/// Per-tet averages `(1/|K|) int_K f` with the degree-4 tet rule.
pub fn project_q0<T, F>(mesh: &PeriodicTetMesh, f: F) -> Vec<T>
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    F: Fn(&Vector3<f64>) -> T,
{
    let rule = tet_rule(PROJECTION_DEGREE).expect("degree-4 tet rule");
    mesh.geometries()
        .iter()
        .map(|g| {
            let mut acc: Option<T> = None;
            for (p, w) in rule.iter() {
                let v = f(&g.point(p)) * (6.0 * w);
                acc = Some(match acc {
                    Some(a) => a + v,
                    None => v,
                });
            }
            acc.expect("non-empty rule")
        })
        .collect()
}

/// Per-face averages `(1/|F|) int_F v . n_F` with a triangle rule of the
/// given degree.
pub fn project_qb<F>(mesh: &PeriodicTetMesh, v: F, degree: usize) -> Result<Vec<f64>>
where
    F: Fn(&Vector3<f64>) -> Vector3<f64>,
{
    let rule = triangle_rule(degree)?;
    Ok(mesh
        .faces
        .iter()
        .map(|face| {
            rule.iter()
                .map(|(p, w)| {
                    let x = face.corners[0] * p[0] + face.corners[1] * p[1] + face.corners[2] * p[2];
                    2.0 * w * v(&x).dot(&face.normal)
                })
                .sum()
        })
        .collect())
}

/// `{Lagrange interpolant of g, Q_b(g . n_F)}` with face averages taken by
/// the rule of the given degree.
pub fn interpolate_eg_with<F>(mesh: &PeriodicTetMesh, g: F, degree: usize) -> Result<EGField>
where
    F: Fn(&Vector3<f64>) -> Vector3<f64>,
{
    Ok(EGField {
        c: mesh.vertices.iter().map(&g).collect(),
        b: project_qb(mesh, &g, degree)?,
    })
}

/// Interpolation used for initial data: vertex values plus face averages
/// computed with [`INITIAL_FACE_DEGREE`].
pub fn interpolate_eg<F>(mesh: &PeriodicTetMesh, g: F) -> EGField
where
    F: Fn(&Vector3<f64>) -> Vector3<f64>,
{
    interpolate_eg_with(mesh, g, INITIAL_FACE_DEGREE).expect("supported face rule")
}

/// Gradient of the CG part on tet `k`: entry `(p, q)` is `d v_p / d x_q`.
pub fn grad_cg(mesh: &PeriodicTetMesh, v: &EGField, k: usize) -> Matrix3<f64> {
    let g = &mesh.geometries()[k];
    let t = &mesh.tets[k];
    (0..4).map(|j| v.c[t.vertices[j]] * g.grad_lambda[j].transpose()).sum()
}

/// Curl of the CG part on tet `k` (constant per element).
pub fn curl_cg(mesh: &PeriodicTetMesh, v: &EGField, k: usize) -> Vector3<f64> {
    let g = &mesh.geometries()[k];
    let t = &mesh.tets[k];
    (0..4).map(|j| g.grad_lambda[j].cross(&v.c[t.vertices[j]])).sum()
}

/// Value and curl of `v_c` at a point of tet `k` (in that tet's unwrapped
/// coordinates).
pub fn eval_cg(
    mesh: &PeriodicTetMesh,
    v: &EGField,
    k: usize,
    x: &Vector3<f64>,
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let g = mesh.geometry(k)?;
    let bary = g.barycentric(x);
    if bary.iter().any(|&l| !(-1e-12..=1.0 + 1e-12).contains(&l)) {
        return Err(Error::PointOutsideElement { tet: k, bary });
    }
    let t = &mesh.tets[k];
    let value = (0..4).map(|j| v.c[t.vertices[j]] * bary[j]).sum();
    Ok((value, curl_cg(mesh, v, k)))
}

/// Per-vertex integrals of the P1 hat functions, `int_Omega phi_v`.
pub fn vertex_weights(mesh: &PeriodicTetMesh) -> Vec<f64> {
    let mut w = vec![0.0; mesh.num_vertices()];
    for (t, g) in mesh.tets.iter().zip(mesh.geometries()) {
        for &v in &t.vertices {
            w[v] += g.volume / 4.0;
        }
    }
    w
}

/// `int_Omega v_c`.
pub fn cg_integral(mesh: &PeriodicTetMesh, v: &EGField) -> Vector3<f64> {
    vertex_weights(mesh).iter().zip(&v.c).map(|(w, c)| c * *w).sum()
}
