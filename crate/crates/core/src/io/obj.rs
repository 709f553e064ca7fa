use std::fmt::Write as _;
use std::path::Path;

use super::write_bytes;
use crate::error::Result;
use crate::flame::Mesh;

/// Wavefront OBJ text with `v` and 1-based `f` records.
pub fn obj_string(mesh: &Mesh) -> String {
    let mut out = String::with_capacity(mesh.vertices.nrows() * 40 + mesh.faces.len() * 20);
    for row in mesh.vertices.rows() {
        let _ = writeln!(out, "v {} {} {}", row[0], row[1], row[2]);
    }
    for f in mesh.faces.iter() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

pub fn write_obj(path: impl AsRef<Path>, mesh: &Mesh) -> Result<()> {
    write_bytes(path.as_ref(), obj_string(mesh).as_bytes())
}
