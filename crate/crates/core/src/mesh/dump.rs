//! Plain-text mesh dump for debugging.
//!
//! ```text
//! mesh <m> <vertices> <tets> <faces>
//! v <id> <x> <y> <z>
//! t <id> <v0> <v1> <v2> <v3>
//! f <id> <v0> <v1> <v2> <nx> <ny> <nz> <tet0> <local0> <sign0> <tet1> <local1> <sign1>
//! ```

use std::io::{self, Write};

use super::PeriodicTetMesh;

pub fn write_mesh_dump<W: Write>(mesh: &PeriodicTetMesh, mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "mesh {} {} {} {}",
        mesh.m,
        mesh.num_vertices(),
        mesh.num_tets(),
        mesh.num_faces()
    )?;
    for (i, v) in mesh.vertices.iter().enumerate() {
        writeln!(out, "v {} {:.17e} {:.17e} {:.17e}", i, v.x, v.y, v.z)?;
    }
    for (i, t) in mesh.tets.iter().enumerate() {
        let [a, b, c, d] = t.vertices;
        writeln!(out, "t {i} {a} {b} {c} {d}")?;
    }
    for (i, f) in mesh.faces.iter().enumerate() {
        let [a, b, c] = f.vertices;
        let [n0, n1] = f.neighbors;
        writeln!(
            out,
            "f {i} {a} {b} {c} {:.17e} {:.17e} {:.17e} {} {} {:+} {} {} {:+}",
            f.normal.x, f.normal.y, f.normal.z, n0.tet, n0.local, n0.sign as i32, n1.tet, n1.local, n1.sign as i32
        )?;
    }
    Ok(())
}
