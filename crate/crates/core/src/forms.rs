//! Global sparse operators of the scheme.
//!
//! * `M_c`  - P1 vector mass matrix on the CG dofs;
//! * `A`    - `a(v, w) = sum_K (grad_m v, grad_m w)_K` on all velocity dofs;
//! * `B`    - `b(v, q) = (div_m v, q)`, one row per tet, face columns only;
//! * `C(u)` - `c(u, w, z) = (curl u_c x R w, R z)`, face block only, stored
//!   so that `c(u, w, z) = z^T C(u) w`;
//! * load   - `(f, R v)`, face entries only.
//!
//! Elements are visited in id order and duplicates summed in insertion
//! order, so assembly is bit-reproducible.

use nalgebra::Vector3;

use crate::mesh::{tet_rule, PeriodicTetMesh};
use crate::operators::{rt_reconstruct_at, rt_shape, OperatorCache};
use crate::spaces::{curl_cg, vertex_weights, DofMap, EGField, PROJECTION_DEGREE};
use crate::sparse::{SparseMatrix, TripletBuilder};

/// Exact P1 mass matrix for each of the three velocity components
/// (`n_c x n_c`).
pub fn assemble_mass_cg(mesh: &PeriodicTetMesh, dofs: &DofMap) -> SparseMatrix {
    let mut t = TripletBuilder::with_capacity(dofs.n_c, dofs.n_c, 48 * mesh.num_tets());
    for (k, g) in mesh.geometries().iter().enumerate() {
        let d = &dofs.cell_dofs[k];
        for i in 0..4 {
            for j in 0..4 {
                let m = g.volume * if i == j { 2.0 } else { 1.0 } / 20.0;
                for p in 0..3 {
                    t.add(d[3 * i + p], d[3 * j + p], m);
                }
            }
        }
    }
    t.build()
}

/// `a(., .)` on the full velocity space (`n x n`, `n = n_c + n_b`).
pub fn assemble_a(mesh: &PeriodicTetMesh, cache: &OperatorCache, dofs: &DofMap) -> SparseMatrix {
    let n = dofs.n_velocity();
    let mut t = TripletBuilder::with_capacity(n, n, 256 * mesh.num_tets());
    for (k, op) in cache.elements.iter().enumerate() {
        let d = &dofs.cell_dofs[k];
        for i in 0..16 {
            for j in 0..16 {
                t.add(d[i], d[j], op.stiffness[(i, j)]);
            }
        }
    }
    t.build()
}

/// `b(., .)` as an `n_p x n` matrix: row `K` holds `sigma_KF |F|` on the
/// face dofs of `K`.
pub fn assemble_b(mesh: &PeriodicTetMesh, dofs: &DofMap) -> SparseMatrix {
    let mut t = TripletBuilder::with_capacity(dofs.n_p, dofs.n_velocity(), 4 * mesh.num_tets());
    for (k, (tet, g)) in mesh.tets.iter().zip(mesh.geometries()).enumerate() {
        for j in 0..4 {
            t.add(k, dofs.n_c + tet.faces[j], tet.signs[j] * g.areas[j]);
        }
    }
    t.build()
}

/// Local face block of the convection form for a constant vorticity `omega`:
/// entry `[j][i] = int_K (omega x psi_i) . psi_j` for the unsigned local RT
/// shapes. With `psi_i = a_i (x - p_i)` the integrand is
/// `a_i a_j omega . ((x - p_i) x (x - p_j))`, which is affine in `x`, so the
/// centroid value is exact.
pub fn local_convection(geo: &crate::mesh::ElementGeometry, omega: &Vector3<f64>) -> [[f64; 4]; 4] {
    let centroid = geo.corners.iter().sum::<Vector3<f64>>() / 4.0;
    let scale: [f64; 4] = std::array::from_fn(|j| geo.areas[j] / (3.0 * geo.volume));
    let mut c = [[0.0; 4]; 4];
    for j in 0..4 {
        for i in (j + 1)..4 {
            let (pi, pj) = (geo.corners[i], geo.corners[j]);
            // (x - p_i) x (x - p_j) = x x (p_i - p_j) + p_i x p_j
            let cross = centroid.cross(&(pi - pj)) + pi.cross(&pj);
            let v = geo.volume * scale[i] * scale[j] * omega.dot(&cross);
            c[j][i] = v;
            c[i][j] = -v;
        }
    }
    c
}

/// Convection matrix `C(u)` (`n x n`, nonzero only in the face block).
/// Exactly skew-symmetric: each local pair is inserted as `+v` / `-v`.
pub fn assemble_c(u: &EGField, mesh: &PeriodicTetMesh, dofs: &DofMap) -> SparseMatrix {
    let n = dofs.n_velocity();
    let mut t = TripletBuilder::with_capacity(n, n, 16 * mesh.num_tets());
    for (k, (tet, g)) in mesh.tets.iter().zip(mesh.geometries()).enumerate() {
        let omega = curl_cg(mesh, u, k);
        let local = local_convection(g, &omega);
        for j in 0..4 {
            for i in 0..4 {
                // the diagonal is kept as an explicit zero so that the
                // pattern does not depend on u
                let v = tet.signs[j] * tet.signs[i] * local[j][i];
                t.add(dofs.n_c + tet.faces[j], dofs.n_c + tet.faces[i], v);
            }
        }
    }
    t.build()
}

/// `(f, R v)` as a vector over velocity dofs: `load[F] = sum_K sigma_KF
/// int_K f . psi_F` with the degree-4 tet rule. CG entries are zero.
pub fn assemble_load<F>(f: F, mesh: &PeriodicTetMesh, dofs: &DofMap) -> Vec<f64>
where
    F: Fn(&Vector3<f64>) -> Vector3<f64>,
{
    let rule = tet_rule(PROJECTION_DEGREE).expect("degree-4 tet rule");
    let mut load = vec![0.0; dofs.n_velocity()];
    for (tet, g) in mesh.tets.iter().zip(mesh.geometries()) {
        let mut local = [0.0; 4];
        for (p, w) in rule.iter() {
            let x = g.point(p);
            let fx = f(&x);
            let psi = rt_shape(g, &x);
            for j in 0..4 {
                local[j] += 6.0 * g.volume * w * fx.dot(&psi[j]);
            }
        }
        for j in 0..4 {
            load[dofs.n_c + tet.faces[j]] += tet.signs[j] * local[j];
        }
    }
    load
}

/// `c(v, w, z) = sum_K int_K (curl v_c x R w) . R z`, evaluated pointwise
/// with the degree-2 tet rule.
pub fn eval_trilinear(mesh: &PeriodicTetMesh, v: &EGField, w: &EGField, z: &EGField) -> f64 {
    let rule = tet_rule(2).expect("degree-2 tet rule");
    let mut total = 0.0;
    for (k, g) in mesh.geometries().iter().enumerate() {
        let omega = curl_cg(mesh, v, k);
        for (p, wt) in rule.iter() {
            let x = g.point(p);
            let rw = rt_reconstruct_at(mesh, w, k, &x);
            let rz = rt_reconstruct_at(mesh, z, k, &x);
            total += 6.0 * g.volume * wt * omega.cross(&rw).dot(&rz);
        }
    }
    total
}

/// The time-independent operators plus the mean-value functionals used as
/// constraints.
#[derive(Clone, Debug)]
pub struct GlobalForms {
    pub dofs: DofMap,
    pub cache: OperatorCache,
    /// `n_c x n_c`.
    pub mass: SparseMatrix,
    /// `n x n`.
    pub a: SparseMatrix,
    /// `n_p x n`.
    pub b: SparseMatrix,
    /// `int phi_v` per vertex; `int u_c = sum_v w_v c_v`.
    pub vertex_weights: Vec<f64>,
    /// `|K|` per tet; `int p = sum_K |K| p_K`.
    pub cell_volumes: Vec<f64>,
}

impl GlobalForms {
    pub fn new(mesh: &PeriodicTetMesh) -> crate::Result<Self> {
        let dofs = DofMap::new(mesh);
        let cache = OperatorCache::new(mesh)?;
        Ok(Self {
            mass: assemble_mass_cg(mesh, &dofs),
            a: assemble_a(mesh, &cache, &dofs),
            b: assemble_b(mesh, &dofs),
            vertex_weights: vertex_weights(mesh),
            cell_volumes: mesh.geometries().iter().map(|g| g.volume).collect(),
            dofs,
            cache,
        })
    }

    pub fn n_velocity(&self) -> usize {
        self.dofs.n_velocity()
    }

    /// `M_c` applied to the CG part of a flat velocity vector, zero-padded.
    pub fn mass_apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.mass.mul_vec(&x[..self.dofs.n_c]);
        out.resize(self.n_velocity(), 0.0);
        out
    }

    /// `int_Omega u_c` for a flat velocity vector.
    pub fn velocity_mean(&self, x: &[f64]) -> Vector3<f64> {
        self.vertex_weights
            .iter()
            .enumerate()
            .map(|(v, w)| Vector3::new(x[3 * v], x[3 * v + 1], x[3 * v + 2]) * *w)
            .sum()
    }
}
