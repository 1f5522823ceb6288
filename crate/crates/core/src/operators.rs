//! Element-local discrete differential operators.
//!
//! The modified gradient of an enriched velocity lives in the 13-dimensional
//! tensor space spanned by the nine constant matrices `E_pq` and four linear
//! bubbles `lambda_i Phi_i`, where `Phi_i = B_K S_i B_K^T` has vanishing
//! normal-normal component on every face except the one opposite vertex `i`,
//! and `lambda_i` vanishes on exactly that face. The bubbles are scaled to
//! unit Frobenius norm so that Gram matrices are uniformly conditioned under
//! refinement; the span, and hence the operator, is unchanged.
//!
//! The velocity reconstruction maps the face part of a velocity onto the
//! lowest-order Raviart-Thomas space by matching face fluxes; it never looks
//! at the CG part.

use nalgebra::{Cholesky, Matrix3, SMatrix, SVector, Vector3, U13};

use crate::error::{Error, Result};
use crate::mesh::{ElementGeometry, PeriodicTetMesh};
use crate::spaces::{DofMap, EGField};

pub const GRAD_DIM: usize = 13;
pub const LOCAL_DIM: usize = 16;

pub type GradCoefficients = SVector<f64, GRAD_DIM>;
pub type LocalVector = SVector<f64, LOCAL_DIM>;

/// Symmetric matrices with `n_j . S_i . n_j = 2 delta_ij` for the outward
/// normals of the unit tetrahedron's faces (face `j` opposite vertex `j`,
/// vertices ordered origin, e_x, e_y, e_z).
pub const S_MATRICES: [[[f64; 3]; 3]; 4] = [
    [[0.0, 0.0, 3.0], [0.0, 0.0, 0.0], [3.0, 0.0, 0.0]],
    [[2.0, -1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
    [[0.0, -1.0, 1.0], [-1.0, 2.0, -1.0], [1.0, -1.0, 0.0]],
    [[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, -1.0, 2.0]],
];

pub fn s_matrix(i: usize) -> Matrix3<f64> {
    let s = S_MATRICES[i];
    Matrix3::from_fn(|r, c| s[r][c])
}

/// Outward unit normals of the unit tetrahedron, face `j` opposite vertex `j`.
pub fn reference_normals() -> [Vector3<f64>; 4] {
    let r = 1.0 / 3f64.sqrt();
    [
        Vector3::new(r, r, r),
        Vector3::new(-1.0, 0.0, 0.0),
        Vector3::new(0.0, -1.0, 0.0),
        Vector3::new(0.0, 0.0, -1.0),
    ]
}

/// Largest deviation of `n_j . S_i . n_j` from `2 delta_ij`, evaluated as
/// `m_j . S_i . m_j / |m_j|^2` with integer normals `m_j` so that the check
/// is exact in floating point.
pub fn s_matrix_defect() -> f64 {
    let normals = [[1.0, 1.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]].map(Vector3::from);
    let mut worst: f64 = 0.0;
    for i in 0..4 {
        let s = s_matrix(i);
        for (j, n) in normals.iter().enumerate() {
            let target = if i == j { 2.0 } else { 0.0 };
            worst = worst.max((n.dot(&(s * n)) / n.norm_squared() - target).abs());
        }
    }
    worst
}

/// Per-element operator data.
#[derive(Clone, Debug)]
pub struct ElementOperators {
    pub volume: f64,
    pub diameter: f64,
    /// `B_K S_i B_K^T`, unscaled.
    pub phi: [Matrix3<f64>; 4],
    /// `phi[i]` normalised to unit Frobenius norm; the bubble basis is
    /// `lambda_i * phi_unit[i]`.
    pub phi_unit: [Matrix3<f64>; 4],
    pub gram: SMatrix<f64, GRAD_DIM, GRAD_DIM>,
    gram_chol: Cholesky<f64, U13>,
    /// Linear map from the 16 local dofs to the right-hand side of the
    /// modified-gradient projection.
    pub rhs_map: SMatrix<f64, GRAD_DIM, LOCAL_DIM>,
    /// `rhs_map^T G^{-1} rhs_map`, the local contribution to `a(., .)`.
    pub stiffness: SMatrix<f64, LOCAL_DIM, LOCAL_DIM>,
    pub signs: [f64; 4],
}

impl ElementOperators {
    pub fn new(geo: &ElementGeometry, signs: [f64; 4]) -> Result<Self> {
        let b = geo.jacobian;
        let phi: [Matrix3<f64>; 4] = std::array::from_fn(|i| b * s_matrix(i) * b.transpose());
        let phi_unit = phi.map(|p| p / p.norm());
        let vol = geo.volume;

        let mut gram = SMatrix::<f64, GRAD_DIM, GRAD_DIM>::zeros();
        for a in 0..9 {
            gram[(a, a)] = vol;
        }
        for i in 0..4 {
            for a in 0..9 {
                let v = vol / 4.0 * phi_unit[i][(a / 3, a % 3)];
                gram[(a, 9 + i)] = v;
                gram[(9 + i, a)] = v;
            }
            for j in 0..4 {
                let delta = if i == j { 2.0 } else { 1.0 };
                gram[(9 + i, 9 + j)] = vol * delta / 20.0 * phi_unit[i].component_mul(&phi_unit[j]).sum();
            }
        }
        let gram_chol = Cholesky::new(gram).ok_or(Error::GramNotSpd(usize::MAX))?;

        let mut rhs_map = SMatrix::<f64, GRAD_DIM, LOCAL_DIM>::zeros();
        for j in 0..4 {
            let gl = geo.grad_lambda[j];
            for p in 0..3 {
                let col = 3 * j + p;
                // (grad v_c, E_pq)_K
                for q in 0..3 {
                    rhs_map[(3 * p + q, col)] += vol * gl[q];
                }
                // (grad v_c, lambda_i Phi_i)_K = |K|/4 grad v_c : Phi_i
                for i in 0..4 {
                    rhs_map[(9 + i, col)] += vol / 4.0 * (0..3).map(|q| phi_unit[i][(p, q)] * gl[q]).sum::<f64>();
                }
            }
        }
        // -<Q_b(v_c . n) - v_b . n, n . E_pq . n>; the bubbles' normal-normal
        // trace vanishes on the whole boundary.
        for f in 0..4 {
            let n = geo.normals[f];
            let area = geo.areas[f];
            for p in 0..3 {
                for q in 0..3 {
                    let w = area * n[p] * n[q];
                    for j in (0..4).filter(|&j| j != f) {
                        for r in 0..3 {
                            rhs_map[(3 * p + q, 3 * j + r)] -= w * n[r] / 3.0;
                        }
                    }
                    rhs_map[(3 * p + q, 12 + f)] += w * signs[f];
                }
            }
        }
        let solved = gram_chol.solve(&rhs_map);
        let stiffness = rhs_map.transpose() * solved;
        let stiffness = (stiffness + stiffness.transpose()) * 0.5;

        Ok(Self {
            volume: vol,
            diameter: geo.diameter(),
            phi,
            phi_unit,
            gram,
            gram_chol,
            rhs_map,
            stiffness,
            signs,
        })
    }

    /// Basis tensor `a` of the gradient space evaluated at barycentric point
    /// `bary`.
    pub fn basis_tensor(&self, a: usize, bary: &[f64; 4]) -> Matrix3<f64> {
        if a < 9 {
            let mut e = Matrix3::zeros();
            e[(a / 3, a % 3)] = 1.0;
            e
        } else {
            self.phi_unit[a - 9] * bary[a - 9]
        }
    }

    /// Coefficients of the modified gradient for the given local dofs.
    pub fn gradient_coefficients(&self, local: &LocalVector) -> GradCoefficients {
        self.gram_chol.solve(&(self.rhs_map * local))
    }

    pub fn solve_gram(&self, rhs: &GradCoefficients) -> GradCoefficients {
        self.gram_chol.solve(rhs)
    }

    /// Spectral condition number of the Gram matrix.
    pub fn gram_condition(&self) -> f64 {
        let eig = self.gram.symmetric_eigenvalues();
        eig.max() / eig.min()
    }
}

/// Operator data for every element of a mesh.
#[derive(Clone, Debug)]
pub struct OperatorCache {
    pub elements: Vec<ElementOperators>,
}

impl OperatorCache {
    pub fn new(mesh: &PeriodicTetMesh) -> Result<Self> {
        assert!(s_matrix_defect() == 0.0, "S matrices fail n.S.n = 2 delta");
        let elements = mesh
            .geometries()
            .iter()
            .zip(&mesh.tets)
            .enumerate()
            .map(|(k, (g, t))| {
                ElementOperators::new(g, t.signs).map_err(|e| match e {
                    Error::GramNotSpd(_) => Error::GramNotSpd(k),
                    e => e,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { elements })
    }
}

/// The modified gradient on one element, stored by its 13 coefficients.
#[derive(Clone, Debug)]
pub struct ModifiedGradient {
    pub coefficients: GradCoefficients,
    phi_unit: [Matrix3<f64>; 4],
}

impl ModifiedGradient {
    pub fn eval(&self, bary: &[f64; 4]) -> Matrix3<f64> {
        let x = &self.coefficients;
        let mut g = Matrix3::from_fn(|p, q| x[3 * p + q]);
        for i in 0..4 {
            g += self.phi_unit[i] * (x[9 + i] * bary[i]);
        }
        g
    }

    /// Constant part (coefficients of `E_pq`).
    pub fn constant_part(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|p, q| self.coefficients[3 * p + q])
    }
}

pub fn local_vector(v: &EGField, dofs: &DofMap, k: usize) -> LocalVector {
    LocalVector::from(v.local(dofs, k))
}

pub fn modified_gradient(cache: &OperatorCache, dofs: &DofMap, v: &EGField, k: usize) -> ModifiedGradient {
    let op = &cache.elements[k];
    ModifiedGradient {
        coefficients: op.gradient_coefficients(&local_vector(v, dofs, k)),
        phi_unit: op.phi_unit,
    }
}

/// `(1/|K|) sum_F (n_F . n_K) v_F |F|`.
pub fn modified_divergence(mesh: &PeriodicTetMesh, v: &EGField, k: usize) -> f64 {
    let t = &mesh.tets[k];
    let g = &mesh.geometries()[k];
    (0..4).map(|j| t.signs[j] * v.b[t.faces[j]] * g.areas[j]).sum::<f64>() / g.volume
}

/// Local Raviart-Thomas shape functions at `x`: `psi_j . n_K = 1` on face `j`
/// and `0` on the other faces.
pub fn rt_shape(geo: &ElementGeometry, x: &Vector3<f64>) -> [Vector3<f64>; 4] {
    std::array::from_fn(|j| (x - geo.corners[j]) * (geo.areas[j] / (3.0 * geo.volume)))
}

/// A lowest-order Raviart-Thomas field given by its fluxes `int_F w . n_F`.
#[derive(Clone, Debug, PartialEq)]
pub struct RtField {
    pub flux: Vec<f64>,
}

impl RtField {
    /// Value at a point of tet `k` (unwrapped coordinates of that tet).
    pub fn eval(&self, mesh: &PeriodicTetMesh, k: usize, x: &Vector3<f64>) -> Vector3<f64> {
        let t = &mesh.tets[k];
        let g = &mesh.geometries()[k];
        let psi = rt_shape(g, x);
        (0..4).map(|j| psi[j] * (t.signs[j] * self.flux[t.faces[j]] / g.areas[j])).sum()
    }

    pub fn divergence(&self, mesh: &PeriodicTetMesh, k: usize) -> f64 {
        let t = &mesh.tets[k];
        (0..4).map(|j| t.signs[j] * self.flux[t.faces[j]]).sum::<f64>() / mesh.geometries()[k].volume
    }
}

/// The reconstruction `R v`: fluxes `v_F |F|`, independent of `v_c`.
pub fn rt_reconstruct(mesh: &PeriodicTetMesh, v: &EGField) -> RtField {
    RtField {
        flux: mesh.faces.iter().zip(&v.b).map(|(f, b)| b * f.area).collect(),
    }
}

/// `R v` evaluated at a point of tet `k`.
pub fn rt_reconstruct_at(mesh: &PeriodicTetMesh, v: &EGField, k: usize, x: &Vector3<f64>) -> Vector3<f64> {
    let t = &mesh.tets[k];
    let psi = rt_shape(&mesh.geometries()[k], x);
    (0..4).map(|j| psi[j] * (t.signs[j] * v.b[t.faces[j]])).sum()
}

/// Raviart-Thomas interpolant: fluxes `int_F v . n_F` with a triangle rule of
/// the given degree.
pub fn rt_interpolate<F>(mesh: &PeriodicTetMesh, v: F, degree: usize) -> Result<RtField>
where
    F: Fn(&Vector3<f64>) -> Vector3<f64>,
{
    let averages = crate::spaces::project_qb(mesh, v, degree)?;
    Ok(RtField {
        flux: averages.iter().zip(&mesh.faces).map(|(a, f)| a * f.area).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, tet_rule};
    use crate::spaces::{interpolate_eg, interpolate_eg_with};

    fn random_corners(seed: u64) -> [Vector3<f64>; 4] {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        loop {
            let b = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            if b.determinant() > 0.2 {
                let t = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
                return [t, t + b.column(0), t + b.column(1), t + b.column(2)];
            }
        }
    }

    #[test]
    fn s_matrices_are_dual_to_reference_normals() {
        assert_eq!(s_matrix_defect(), 0.0);
        for i in 0..4 {
            assert_eq!(s_matrix(i), s_matrix(i).transpose());
        }
    }

    #[test]
    fn reference_tet_phi_is_s() {
        let c = [Vector3::zeros(), Vector3::x(), Vector3::y(), Vector3::z()];
        let g = ElementGeometry::from_corners(c).unwrap();
        let op = ElementOperators::new(&g, [1.0; 4]).unwrap();
        for i in 0..4 {
            assert_eq!(op.phi[i], s_matrix(i));
            // lambda_i vanishes on face i, so n.B_i.n = 0 there
            let n = g.normals[i];
            let mut bary = [0.25; 4];
            bary[i] = 0.0;
            assert!(n.dot(&(op.basis_tensor(9 + i, &bary) * n)).abs() < 1e-15);
        }
    }

    #[test]
    fn phi_normal_normal_property() {
        let g = ElementGeometry::from_corners(random_corners(3)).unwrap();
        let op = ElementOperators::new(&g, [1.0; 4]).unwrap();
        let binv_t = g.jacobian.try_inverse().unwrap().transpose();
        let nref = reference_normals();
        for i in 0..4 {
            for j in 0..4 {
                let n = g.normals[j];
                let expect = if i == j { 2.0 / (binv_t * nref[j]).norm_squared() } else { 0.0 };
                let got = n.dot(&(op.phi[i] * n));
                assert!((got - expect).abs() < 1e-12 * (1.0 + expect.abs()), "{i}{j} {got} {expect}");
            }
        }
    }

    #[test]
    fn normals_agree_with_cross_products() {
        for seed in 0..10 {
            let c = random_corners(seed);
            let g = ElementGeometry::from_corners(c).unwrap();
            for j in 0..4 {
                let idx: Vec<usize> = (0..4).filter(|&i| i != j).collect();
                let mut n = (c[idx[1]] - c[idx[0]]).cross(&(c[idx[2]] - c[idx[0]]));
                let area = 0.5 * n.norm();
                if n.dot(&(c[idx[0]] - c[j])) < 0.0 {
                    n = -n;
                }
                assert!((n.normalize() - g.normals[j]).norm() < 1e-12);
                assert!((area - g.areas[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gram_matches_quadrature() {
        let g = ElementGeometry::from_corners(random_corners(7)).unwrap();
        let op = ElementOperators::new(&g, [1.0; 4]).unwrap();
        let rule = tet_rule(2).unwrap();
        for a in 0..GRAD_DIM {
            for b in 0..GRAD_DIM {
                let q: f64 = rule
                    .iter()
                    .map(|(p, w)| 6.0 * g.volume * w * op.basis_tensor(a, p).component_mul(&op.basis_tensor(b, p)).sum())
                    .sum();
                assert!((q - op.gram[(a, b)]).abs() < 1e-12, "{a} {b}");
            }
        }
    }

    #[test]
    fn gram_condition_uniform_under_refinement() {
        let conds: Vec<f64> = [1, 2, 4]
            .iter()
            .map(|&m| {
                let mesh = build_mesh(m).unwrap();
                let cache = OperatorCache::new(&mesh).unwrap();
                cache.elements.iter().map(|e| e.gram_condition()).fold(0.0, f64::max)
            })
            .collect();
        for w in conds.windows(2) {
            assert!(w[1] / w[0] <= 2.0 && w[0] / w[1] <= 2.0, "{conds:?}");
        }
    }

    #[test]
    fn gradient_of_linear_pair_is_exact() {
        let mesh = build_mesh(2).unwrap();
        let dofs = DofMap::new(&mesh);
        let cache = OperatorCache::new(&mesh).unwrap();
        let a = Matrix3::new(1.0, 2.0, -1.0, 0.5, 0.0, 3.0, -2.0, 1.0, 1.0);
        // a globally linear field is not periodic; check on interior tets,
        // where the interpolant is the field itself
        let f = |x: &Vector3<f64>| a * x;
        let u = interpolate_eg_with(&mesh, f, 4).unwrap();
        for k in 0..mesh.num_tets() {
            let g = &mesh.geometries()[k];
            let same_frame = (0..4).all(|j| (mesh.faces[mesh.tets[k].faces[j]].centroid() - g.face_centroids[j]).norm() < 1e-12)
                && mesh.tets[k].corners.iter().zip(&mesh.tets[k].vertices).all(|(p, &v)| (p - mesh.vertices[v]).norm() < 1e-12);
            if !same_frame {
                continue;
            }
            let mg = modified_gradient(&cache, &dofs, &u, k);
            assert!((mg.constant_part() - a).norm() < 1e-12);
            for i in 9..13 {
                assert!(mg.coefficients[i].abs() < 1e-12);
            }
        }
        let c = interpolate_eg(&mesh, |_| Vector3::new(1.0, -2.0, 0.5));
        for k in 0..mesh.num_tets() {
            assert!(modified_gradient(&cache, &dofs, &c, k).coefficients.norm() < 1e-12);
        }
    }

    #[test]
    fn divergence_of_x_field() {
        let mesh = build_mesh(3).unwrap();
        let u = interpolate_eg_with(&mesh, |x| Vector3::new(x.x, 0.0, 0.0), 4).unwrap();
        let mut checked = 0;
        for k in 0..mesh.num_tets() {
            // (x, 0, 0) is not periodic: skip tets whose face records were
            // taken from a periodic image
            let g = &mesh.geometries()[k];
            let same_frame = (0..4).all(|j| (mesh.faces[mesh.tets[k].faces[j]].centroid() - g.face_centroids[j]).norm() < 1e-12);
            if same_frame {
                assert!((modified_divergence(&mesh, &u, k) - 1.0).abs() < 1e-12);
                checked += 1;
            }
        }
        assert!(checked > 0);
        let zero_b = EGField {
            c: vec![Vector3::new(1.0, 2.0, 3.0); mesh.num_vertices()],
            b: vec![0.0; mesh.num_faces()],
        };
        assert!((0..mesh.num_tets()).all(|k| modified_divergence(&mesh, &zero_b, k) == 0.0));
    }

    #[test]
    fn reconstruction_of_constant_pair_is_constant() {
        let mesh = build_mesh(2).unwrap();
        let c = Vector3::new(0.7, -0.2, 1.3);
        let u = interpolate_eg(&mesh, |_| c);
        let rule = tet_rule(2).unwrap();
        for k in 0..mesh.num_tets() {
            let g = &mesh.geometries()[k];
            for (p, _) in rule.iter() {
                assert!((rt_reconstruct_at(&mesh, &u, k, &g.point(p)) - c).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn rt_shape_normal_components() {
        let g = ElementGeometry::from_corners(random_corners(11)).unwrap();
        for f in 0..4 {
            let x = g.face_centroids[f];
            let psi = rt_shape(&g, &x);
            for j in 0..4 {
                let expect = if j == f { 1.0 } else { 0.0 };
                assert!((psi[j].dot(&g.normals[f]) - expect).abs() < 1e-12);
            }
        }
    }
}
