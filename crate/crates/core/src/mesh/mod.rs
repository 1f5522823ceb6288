//! Uniform periodic tetrahedral meshes of the unit 3-torus.
//!
//! Each of the `m^3` cubes is split into the six Kuhn tetrahedra that share
//! the cube's main diagonal. Every cube is split the same way, so the
//! triangulation conforms across cube faces and across the periodic seam.
//! Elements keep unwrapped corner coordinates: a tetrahedron touching the
//! seam is stored as a genuine simplex, and only vertex and face *ids* are
//! identified modulo one.

mod dump;
pub mod quadrature;

pub use dump::write_mesh_dump;
pub use quadrature::{tet_rule, triangle_rule, QuadratureRule, TetRule, TriangleRule};

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// One side of a face: the tetrahedron, the local face index inside it
/// (the face opposite local vertex `local`), and `sign = n_F . n_K`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceNeighbor {
    pub tet: usize,
    pub local: usize,
    pub sign: f64,
}

#[derive(Clone, Debug)]
pub struct Face {
    /// Canonical vertex ids of the three corners.
    pub vertices: [usize; 3],
    /// Corner positions as seen from the first neighbor.
    pub corners: [Vector3<f64>; 3],
    pub area: f64,
    /// The fixed unit normal `n_F`.
    pub normal: Vector3<f64>,
    pub neighbors: [FaceNeighbor; 2],
}

impl Face {
    pub fn centroid(&self) -> Vector3<f64> {
        (self.corners[0] + self.corners[1] + self.corners[2]) / 3.0
    }
}

#[derive(Clone, Debug)]
pub struct Tet {
    /// Canonical vertex ids.
    pub vertices: [usize; 4],
    /// Unwrapped corner positions, positively oriented.
    pub corners: [Vector3<f64>; 4],
    /// Face ids; `faces[j]` is opposite local vertex `j`.
    pub faces: [usize; 4],
    /// `signs[j] = n_F . n_K` for face `faces[j]`.
    pub signs: [f64; 4],
}

/// Affine data of one tetrahedron: `F_K(x) = B_K x + b_K` maps the unit
/// reference tetrahedron onto `K`.
#[derive(Clone, Debug)]
pub struct ElementGeometry {
    pub jacobian: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub volume: f64,
    /// Gradients of the barycentric coordinates.
    pub grad_lambda: [Vector3<f64>; 4],
    /// Outward unit normal of the face opposite each vertex.
    pub normals: [Vector3<f64>; 4],
    pub areas: [f64; 4],
    pub face_centroids: [Vector3<f64>; 4],
    pub corners: [Vector3<f64>; 4],
}

const REF_GRADIENTS: [[f64; 3]; 4] = [
    [-1.0, -1.0, -1.0],
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
];

impl ElementGeometry {
    /// Geometry of the simplex with the given corners. Fails for
    /// non-positively oriented or degenerate corner sets.
    pub fn from_corners(corners: [Vector3<f64>; 4]) -> Result<Self> {
        let p0 = corners[0];
        let jacobian = Matrix3::from_columns(&[corners[1] - p0, corners[2] - p0, corners[3] - p0]);
        let det = jacobian.determinant();
        let scale = (1..4).map(|i| (corners[i] - p0).norm()).fold(0.0, f64::max);
        if !(det > 1e-12 * scale.powi(3)) {
            return Err(Error::DegenerateElement {
                tet: usize::MAX,
                volume: det / 6.0,
            });
        }
        let inv_t = jacobian
            .try_inverse()
            .ok_or(Error::DegenerateElement {
                tet: usize::MAX,
                volume: det / 6.0,
            })?
            .transpose();
        let volume = det / 6.0;
        let grad_lambda = REF_GRADIENTS.map(|g| inv_t * Vector3::from(g));
        let normals = grad_lambda.map(|g| -g / g.norm());
        let areas = grad_lambda.map(|g| 3.0 * volume * g.norm());
        let face_centroids = std::array::from_fn(|j| {
            (0..4).filter(|&i| i != j).map(|i| corners[i]).sum::<Vector3<f64>>() / 3.0
        });
        Ok(Self {
            jacobian,
            translation: p0,
            volume,
            grad_lambda,
            normals,
            areas,
            face_centroids,
            corners,
        })
    }

    /// Barycentric coordinates of `x` with respect to this element.
    pub fn barycentric(&self, x: &Vector3<f64>) -> [f64; 4] {
        let r = x - self.translation;
        let mut l = [0.0; 4];
        for j in 1..4 {
            l[j] = self.grad_lambda[j].dot(&r);
        }
        l[0] = 1.0 - l[1] - l[2] - l[3];
        l
    }

    pub fn point(&self, bary: &[f64; 4]) -> Vector3<f64> {
        (0..4).map(|i| self.corners[i] * bary[i]).sum()
    }

    /// Diameter (longest edge).
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..4 {
            for j in i + 1..4 {
                d = d.max((self.corners[i] - self.corners[j]).norm());
            }
        }
        d
    }

    /// Physical point of a barycentric point on the face opposite `j`.
    pub fn face_point(&self, j: usize, bary: &[f64; 3]) -> Vector3<f64> {
        let mut k = 0;
        let mut x = Vector3::zeros();
        for i in 0..4 {
            if i != j {
                x += self.corners[i] * bary[k];
                k += 1;
            }
        }
        x
    }
}

/// Uniform Kuhn triangulation of the periodic unit cube.
#[derive(Clone, Debug)]
pub struct PeriodicTetMesh {
    pub m: usize,
    pub vertices: Vec<Vector3<f64>>,
    pub tets: Vec<Tet>,
    pub faces: Vec<Face>,
    pub h: f64,
    geometry: Vec<ElementGeometry>,
}

// Axis orderings; the Kuhn tet for (a, b, c) walks 0 -> e_a -> e_a+e_b -> 1.
const KUHN_PATHS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

type FaceKey = [[i64; 3]; 3];

impl PeriodicTetMesh {
    pub fn new(m: usize) -> Result<Self> {
        build_mesh(m)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn geometry(&self, k: usize) -> Result<&ElementGeometry> {
        self.geometry.get(k).ok_or(Error::InvalidElement(k))
    }

    /// Geometry of every element, indexed by tet id.
    pub fn geometries(&self) -> &[ElementGeometry] {
        &self.geometry
    }

    fn vertex_id(&self, i: i64, j: i64, k: i64) -> usize {
        let m = self.m as i64;
        (i.rem_euclid(m) + m * (j.rem_euclid(m) + m * k.rem_euclid(m))) as usize
    }

    /// Find the element containing `x` (any real point; coordinates are
    /// reduced modulo one) and its barycentric coordinates there.
    pub fn locate(&self, x: &Vector3<f64>) -> (usize, [f64; 4]) {
        let m = self.m as f64;
        let mut cell = [0usize; 3];
        let mut local = [0.0; 3];
        for d in 0..3 {
            let s = x[d].rem_euclid(1.0) * m;
            let c = (s.floor() as usize).min(self.m - 1);
            cell[d] = c;
            local[d] = s - c as f64;
        }
        // the Kuhn simplex containing a point orders its local coordinates
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| local[b].partial_cmp(&local[a]).unwrap().then(a.cmp(&b)));
        let path = KUHN_PATHS.iter().position(|p| *p == order).unwrap();
        let cube = cell[0] + self.m * (cell[1] + self.m * cell[2]);
        let tet = 6 * cube + path;
        let origin = Vector3::new(cell[0] as f64, cell[1] as f64, cell[2] as f64) / m;
        let xl = origin + Vector3::from(local) / m;
        (tet, self.geometry[tet].barycentric(&xl))
    }
}

/// Build the `m^3`-cube Kuhn triangulation of the unit 3-torus.
pub fn build_mesh(m: usize) -> Result<PeriodicTetMesh> {
    if m == 0 {
        return Err(Error::EmptyMesh);
    }
    let mf = m as f64;
    let mi = m as i64;
    let mut vertices = Vec::with_capacity(m * m * m);
    for k in 0..m {
        for j in 0..m {
            for i in 0..m {
                vertices.push(Vector3::new(i as f64, j as f64, k as f64) / mf);
            }
        }
    }
    let mut mesh = PeriodicTetMesh {
        m,
        vertices,
        tets: Vec::with_capacity(6 * m * m * m),
        faces: Vec::with_capacity(12 * m * m * m),
        h: 0.0,
        geometry: Vec::with_capacity(6 * m * m * m),
    };

    let mut lattice: Vec<[[i64; 3]; 4]> = Vec::with_capacity(6 * m * m * m);
    for k in 0..mi {
        for j in 0..mi {
            for i in 0..mi {
                for path in KUHN_PATHS {
                    let mut c = [[i, j, k]; 4];
                    for s in 0..3 {
                        c[s + 1] = c[s];
                        c[s + 1][path[s]] += 1;
                    }
                    // odd permutations give negatively oriented walks
                    if permutation_sign(path) < 0 {
                        c.swap(2, 3);
                    }
                    lattice.push(c);
                }
            }
        }
    }

    let mut face_ids: HashMap<FaceKey, usize> = HashMap::new();
    let mut pending: Vec<Option<FaceNeighbor>> = Vec::new();
    for (t, c) in lattice.iter().enumerate() {
        let corners = c.map(|p| Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64) / mf);
        let geo = ElementGeometry::from_corners(corners).map_err(|e| match e {
            Error::DegenerateElement { volume, .. } => Error::DegenerateElement { tet: t, volume },
            e => e,
        })?;
        let vids = c.map(|p| mesh.vertex_id(p[0], p[1], p[2]));
        let mut faces = [0usize; 4];
        let mut signs = [0.0; 4];
        for jf in 0..4 {
            let key = face_key(*c, jf, mi);
            match face_ids.get(&key) {
                Some(&f) => {
                    let face = &mut mesh.faces[f];
                    debug_assert!((face.normal + geo.normals[jf]).norm() < 1e-12);
                    let first = pending[f]
                        .take()
                        .ok_or_else(|| Error::MeshTopology(format!("face {f} has more than two neighbors")))?;
                    face.neighbors = [
                        first,
                        FaceNeighbor {
                            tet: t,
                            local: jf,
                            sign: -1.0,
                        },
                    ];
                    faces[jf] = f;
                    signs[jf] = -1.0;
                }
                None => {
                    let f = mesh.faces.len();
                    face_ids.insert(key, f);
                    let local: Vec<usize> = (0..4).filter(|&i| i != jf).collect();
                    let nb = FaceNeighbor {
                        tet: t,
                        local: jf,
                        sign: 1.0,
                    };
                    mesh.faces.push(Face {
                        vertices: [vids[local[0]], vids[local[1]], vids[local[2]]],
                        corners: [corners[local[0]], corners[local[1]], corners[local[2]]],
                        area: geo.areas[jf],
                        normal: geo.normals[jf],
                        neighbors: [nb, nb],
                    });
                    pending.push(Some(nb));
                    faces[jf] = f;
                    signs[jf] = 1.0;
                }
            }
        }
        mesh.h = mesh.h.max(geo.diameter());
        mesh.tets.push(Tet {
            vertices: vids,
            corners,
            faces,
            signs,
        });
        mesh.geometry.push(geo);
    }
    if pending.iter().any(Option::is_some) {
        return Err(Error::MeshTopology(
            "a face has a single neighbor".into(),
        ));
    }
    Ok(mesh)
}

fn permutation_sign(p: [usize; 3]) -> i32 {
    let mut s = 1;
    for i in 0..3 {
        for j in i + 1..3 {
            if p[i] > p[j] {
                s = -s;
            }
        }
    }
    s
}

// Lattice corners of the face opposite `skip`, sorted and translated by a
// period so that the smallest corner lies in the fundamental cell.
fn face_key(c: [[i64; 3]; 4], skip: usize, m: i64) -> FaceKey {
    let mut pts: Vec<[i64; 3]> = (0..4).filter(|&i| i != skip).map(|i| c[i]).collect();
    pts.sort();
    let shift = pts[0].map(|x| x.div_euclid(m) * m);
    let mut key = [[0i64; 3]; 3];
    for (k, p) in pts.iter().enumerate() {
        for d in 0..3 {
            key[k][d] = p[d] - shift[d];
        }
    }
    key
}
