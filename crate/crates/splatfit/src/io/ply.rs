//! Binary little-endian PLY for splat sets, point clouds and meshes.

use std::path::Path;

use splatfit_core::fusion::TriangleMesh;
use splatfit_core::{Splat, Vec3};

use super::{read_bytes, write_atomic, IoError};

const SPLAT_FIELDS: [&str; 13] = ["x", "y", "z", "qw", "qx", "qy", "qz", "ls1", "ls2", "op_logit", "r", "g", "b"];
const POINT_FIELDS: [&str; 6] = ["x", "y", "z", "nx", "ny", "nz"];

fn header(count: usize, fields: &[&str]) -> String {
    let mut h = format!("ply\nformat binary_little_endian 1.0\nelement vertex {count}\n");
    for f in fields {
        h.push_str(&format!("property float {f}\n"));
    }
    h
}

fn write_rows(path: &Path, fields: &[&str], rows: impl ExactSizeIterator<Item = Vec<f64>>) -> Result<(), IoError> {
    let mut out = header(rows.len(), fields);
    out.push_str("end_header\n");
    let mut bytes = out.into_bytes();
    for row in rows {
        for v in row {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    write_atomic(path, &bytes)
}

/// Vertex table of a PLY file whose only element is `vertex`, with every
/// property converted to f64.
struct VertexTable {
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl VertexTable {
    fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

fn read_vertices(path: &Path) -> Result<VertexTable, IoError> {
    let bytes = read_bytes(path)?;
    let bad = |m: String| IoError::format(path, m);
    let end = bytes
        .windows(11)
        .position(|w| w == b"end_header\n")
        .ok_or_else(|| bad("missing end_header".into()))?;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header is not ASCII".into()))?;
    let mut lines = text.lines();
    if lines.next() != Some("ply") {
        return Err(bad("not a PLY file".into()));
    }
    let mut count = None;
    let mut names = Vec::new();
    let mut sizes = Vec::new();
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["format", "binary_little_endian", _] => {}
            ["format", other, _] => return Err(bad(format!("unsupported format {other}"))),
            ["element", "vertex", n] => count = Some(n.parse::<usize>().map_err(|_| bad("bad vertex count".into()))?),
            ["element", other, _] => return Err(bad(format!("unexpected element {other}"))),
            ["property", ty, name] => {
                let size = match *ty {
                    "float" | "float32" => 4,
                    "double" | "float64" => 8,
                    _ => return Err(bad(format!("unsupported property type {ty}"))),
                };
                names.push(name.to_string());
                sizes.push(size);
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => return Err(bad(format!("unexpected header line {line:?}"))),
        }
    }
    let count = count.ok_or_else(|| bad("no vertex element".into()))?;
    let stride: usize = sizes.iter().sum();
    let body = &bytes[end + 11..];
    if body.len() < count * stride {
        return Err(bad("truncated vertex data".into()));
    }
    let rows = (0..count)
        .map(|i| {
            let mut o = i * stride;
            sizes
                .iter()
                .map(|&s| {
                    let v = if s == 4 {
                        f64::from(f32::from_le_bytes(body[o..o + 4].try_into().unwrap()))
                    } else {
                        f64::from_le_bytes(body[o..o + 8].try_into().unwrap())
                    };
                    o += s;
                    v
                })
                .collect()
        })
        .collect();
    Ok(VertexTable { names, rows })
}

fn columns(path: &Path, table: &VertexTable, fields: &[&str]) -> Result<Vec<usize>, IoError> {
    fields
        .iter()
        .map(|f| table.column(f).ok_or_else(|| IoError::format(path, format!("missing property {f}"))))
        .collect()
}

pub fn write_splats(path: &Path, splats: &[Splat]) -> Result<(), IoError> {
    write_rows(path, &SPLAT_FIELDS, splats.iter().map(|s| s.to_params().to_vec()))
}

pub fn read_splats(path: &Path) -> Result<Vec<Splat>, IoError> {
    let table = read_vertices(path)?;
    let cols = columns(path, &table, &SPLAT_FIELDS)?;
    let splats: Vec<Splat> = table
        .rows
        .iter()
        .map(|r| {
            let mut p = [0.0; 13];
            for (k, &c) in cols.iter().enumerate() {
                p[k] = r[c];
            }
            Splat::from_params(&p)
        })
        .collect();
    if let Some(i) = splats.iter().position(|s| !s.is_finite()) {
        return Err(IoError::format(path, format!("splat {i} has non-finite parameters")));
    }
    Ok(splats)
}

/// Points with optional normals.
pub fn write_points(path: &Path, points: &[Vec3], normals: Option<&[Vec3]>) -> Result<(), IoError> {
    match normals {
        Some(n) => write_rows(path, &POINT_FIELDS, points.iter().zip(n).map(|(p, n)| vec![p.x, p.y, p.z, n.x, n.y, n.z])),
        None => write_rows(path, &POINT_FIELDS[..3], points.iter().map(|p| vec![p.x, p.y, p.z])),
    }
}

/// Points and, when present, normals.
pub fn read_points(path: &Path) -> Result<(Vec<Vec3>, Option<Vec<Vec3>>), IoError> {
    let table = read_vertices(path)?;
    let xyz = columns(path, &table, &POINT_FIELDS[..3])?;
    let points = table.rows.iter().map(|r| Vec3::new(r[xyz[0]], r[xyz[1]], r[xyz[2]])).collect();
    let normals = columns(path, &table, &POINT_FIELDS[3..])
        .ok()
        .map(|n| table.rows.iter().map(|r| Vec3::new(r[n[0]], r[n[1]], r[n[2]])).collect());
    Ok((points, normals))
}

pub fn write_mesh_ply(path: &Path, mesh: &TriangleMesh) -> Result<(), IoError> {
    let with_normals = mesh.normals.is_some();
    let fields: &[&str] = if with_normals { &POINT_FIELDS } else { &POINT_FIELDS[..3] };
    let mut h = header(mesh.vertices.len(), fields);
    h.push_str(&format!("element face {}\nproperty list uchar int vertex_indices\nend_header\n", mesh.triangles.len()));
    let mut bytes = h.into_bytes();
    for (i, v) in mesh.vertices.iter().enumerate() {
        let mut row = vec![v.x, v.y, v.z];
        if let Some(n) = &mesh.normals {
            row.extend_from_slice(n[i].as_slice());
        }
        for x in row {
            bytes.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    for t in &mesh.triangles {
        bytes.push(3);
        for &i in t {
            bytes.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    write_atomic(path, &bytes)
}
