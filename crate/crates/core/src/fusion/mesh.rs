//! Marching cubes and triangle-mesh utilities.

use alloc::vec::Vec;

use hashbrown::HashMap;
use rand::Rng;

use super::tables::TRI_TABLE;
use super::{FusionError, TsdfVolume};
use crate::rng::rng_for;
use crate::Vec3;

/// Corner offsets of a cell.
const CORNERS: [[usize; 3]; 8] = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]];
/// Corner pairs of the twelve cell edges.
const EDGES: [[usize; 2]; 12] = [[0, 1], [1, 2], [2, 3], [3, 0], [4, 5], [5, 6], [6, 7], [7, 4], [0, 4], [1, 5], [2, 6], [3, 7]];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub normals: Option<Vec<Vec3>>,
}

impl TriangleMesh {
    pub fn triangle(&self, t: usize) -> [Vec3; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Signed enclosed volume; positive for outward-facing triangles.
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle(t);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Area-weighted vertex normals.
    pub fn compute_normals(&mut self) {
        let mut n = alloc::vec![Vec3::zeros(); self.vertices.len()];
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.triangle(t);
            let f = (b - a).cross(&(c - a));
            for &i in &self.triangles[t] {
                n[i as usize] += f;
            }
        }
        self.normals = Some(n.into_iter().map(|v| v.try_normalize(1e-300).unwrap_or_else(Vec3::zeros)).collect());
    }

    /// Checks index ranges and vertex finiteness.
    pub fn is_valid(&self) -> bool {
        let n = self.vertices.len() as u32;
        self.vertices.iter().all(|v| v.iter().all(|c| c.is_finite()))
            && self.triangles.iter().all(|t| t.iter().all(|&i| i < n))
            && self.normals.as_ref().is_none_or(|m| m.len() == self.vertices.len())
    }

    /// Number of triangles sharing each undirected edge.
    pub fn edge_use(&self) -> HashMap<(u32, u32), usize> {
        let mut uses = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *uses.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        uses
    }
}

/// Zero level set of the volume over cells whose eight corners all carry
/// weight. Triangles face toward positive values.
pub fn extract_mesh(volume: &TsdfVolume) -> Result<TriangleMesh, FusionError> {
    let [nx, ny, nz] = volume.dims();
    let tsdf = volume.tsdf();
    let weight = volume.weights();
    let mut mesh = TriangleMesh::default();
    // vertex per (lower grid index, axis)
    let mut edge_vertex: HashMap<(usize, u8), u32> = HashMap::new();
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let ids = CORNERS.map(|c| volume.index(i + c[0], j + c[1], k + c[2]));
                if ids.iter().any(|&n| weight[n] <= 0.0) {
                    continue;
                }
                let values = ids.map(|n| tsdf[n] as f64);
                let mut case = 0usize;
                for (b, v) in values.iter().enumerate() {
                    if *v < 0.0 {
                        case |= 1 << b;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                let row = &TRI_TABLE[case];
                for tri in row.chunks(3).take_while(|c| c[0] >= 0) {
                    let mut out = [0u32; 3];
                    for (slot, &e) in out.iter_mut().zip(tri) {
                        let [a, b] = EDGES[e as usize];
                        let (ca, cb) = (CORNERS[a], CORNERS[b]);
                        let axis = (0..3).find(|&d| ca[d] != cb[d]).unwrap_or(0) as u8;
                        let lower = if ca[axis as usize] < cb[axis as usize] { ids[a] } else { ids[b] };
                        *slot = *edge_vertex.entry((lower, axis)).or_insert_with(|| {
                            let (va, vb) = (values[a], values[b]);
                            let t = if va == vb { 0.5 } else { va / (va - vb) };
                            let pa = volume.position(ids[a]);
                            let pb = volume.position(ids[b]);
                            mesh.vertices.push(pa + (pb - pa) * t);
                            (mesh.vertices.len() - 1) as u32
                        });
                    }
                    // the table winds triangles toward negative values
                    mesh.triangles.push([out[0], out[2], out[1]]);
                }
            }
        }
    }
    if mesh.triangles.is_empty() {
        return Err(FusionError::EmptySurface);
    }
    mesh.compute_normals();
    Ok(mesh)
}

/// `count` points uniformly distributed over the surface by area.
pub fn sample_surface(mesh: &TriangleMesh, count: usize, seed: u64) -> Result<Vec<Vec3>, FusionError> {
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        total += mesh.triangle_area(t);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(FusionError::EmptySurface);
    }
    let mut rng = rng_for(seed, "mesh-samples");
    Ok((0..count)
        .map(|_| {
            let r = rng.random::<f64>() * total;
            let t = cumulative.partition_point(|c| *c <= r).min(cumulative.len() - 1);
            let [a, b, c] = mesh.triangle(t);
            let s = libm::sqrt(rng.random::<f64>());
            let u = rng.random::<f64>();
            a * (1.0 - s) + b * (s * (1.0 - u)) + c * (s * u)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sphere_volume(voxel: f64) -> TsdfVolume {
        let n = libm::ceil(1.6 / voxel) as usize + 1;
        TsdfVolume::from_fn(Vec3::repeat(-0.8), voxel, [n; 3], 3.0 * voxel, |p| p.norm() - 0.5).unwrap()
    }

    #[test]
    fn sphere_mesh_vertices_lie_on_the_radius() {
        let voxel = 0.04;
        let mesh = extract_mesh(&sphere_volume(voxel)).unwrap();
        assert!(mesh.is_valid());
        for v in &mesh.vertices {
            assert!((v.norm() - 0.5).abs() <= voxel, "{}", v.norm());
        }
        let vol = mesh.signed_volume();
        let exact = 4.0 / 3.0 * core::f64::consts::PI * 0.125;
        assert!((vol / exact - 1.0).abs() < 0.05, "{vol}");
        let area = mesh.area();
        assert!((area / core::f64::consts::PI - 1.0).abs() < 0.05, "{area}");
        // normals point outward
        let normals = mesh.normals.as_ref().unwrap();
        assert!(mesh.vertices.iter().zip(normals).all(|(v, n)| v.normalize().dot(n) > 0.9));
    }

    #[test]
    fn sphere_mesh_is_watertight() {
        let mesh = extract_mesh(&sphere_volume(0.05)).unwrap();
        let uses = mesh.edge_use();
        assert!(uses.values().all(|&c| c == 2));
    }

    #[test]
    fn blobs_are_watertight() {
        // two overlapping spheres produce ambiguous cells along the seam
        let f = |p: &Vec3| {
            let a = (p - Vec3::new(-0.2, 0.0, 0.0)).norm() - 0.33;
            let b = (p - Vec3::new(0.25, 0.05, 0.02)).norm() - 0.31;
            a.min(b)
        };
        let mesh = extract_mesh(&TsdfVolume::from_fn(Vec3::repeat(-0.7), 0.037, [40; 3], 0.12, f).unwrap()).unwrap();
        assert!(mesh.edge_use().values().all(|&c| c == 2));
    }

    #[test]
    fn all_positive_volume_has_no_surface() {
        let v = TsdfVolume::from_fn(Vec3::zeros(), 0.1, [5; 3], 0.3, |_| 1.0).unwrap();
        assert_eq!(extract_mesh(&v), Err(FusionError::EmptySurface));
    }

    #[test]
    fn unweighted_cells_are_skipped() {
        let v = TsdfVolume::new(Vec3::zeros(), 0.1, [5; 3], 0.3).unwrap();
        assert_eq!(extract_mesh(&v), Err(FusionError::EmptySurface));
    }

    #[test]
    fn surface_samples_follow_area() {
        // two triangles: one with three times the area of the other
        let mesh = TriangleMesh {
            vertices: vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(0.0, 0.0, 5.0),
                Vec3::new(3.0, 0.0, 5.0),
                Vec3::new(0.0, 1.0, 5.0),
            ],
            triangles: vec![[0, 1, 2], [3, 4, 5]],
            normals: None,
        };
        let pts = sample_surface(&mesh, 40_000, 1).unwrap();
        let upper = pts.iter().filter(|p| p.z > 2.5).count() as f64 / pts.len() as f64;
        assert!((upper - 0.75).abs() < 0.01, "{upper}");
        assert!(pts.iter().all(|p| p.x >= -1e-12 && p.y >= -1e-12 && (p.z.abs() < 1e-12 || (p.z - 5.0).abs() < 1e-12)));
        let lower: Vec<&Vec3> = pts.iter().filter(|p| p.z < 2.5).collect();
        assert!(lower.iter().all(|p| p.x + p.y <= 1.0 + 1e-12));
    }
}
