//! Wavefront OBJ output.

use std::fmt::Write;
use std::path::Path;

use splatfit_core::fusion::TriangleMesh;

use super::{write_atomic, IoError};

pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> Result<(), IoError> {
    let mut s = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    if let Some(normals) = &mesh.normals {
        for n in normals {
            let _ = writeln!(s, "vn {} {} {}", n.x, n.y, n.z);
        }
    }
    let with_normals = mesh.normals.is_some();
    for t in &mesh.triangles {
        let [a, b, c] = t.map(|i| i + 1);
        if with_normals {
            let _ = writeln!(s, "f {a}//{a} {b}//{b} {c}//{c}");
        } else {
            let _ = writeln!(s, "f {a} {b} {c}");
        }
    }
    write_atomic(path, s.as_bytes())
}
