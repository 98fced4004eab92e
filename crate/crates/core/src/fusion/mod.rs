//! Projective TSDF fusion, marching cubes and reconstruction metrics.

mod mesh;
mod metrics;
mod tables;

pub use mesh::{extract_mesh, sample_surface, TriangleMesh};
pub use metrics::{chamfer_distance, depth_metrics, Chamfer, DepthMetrics, THRESHOLDS};

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::Camera;
use crate::image::Image;
use crate::par::map_range;
use crate::Vec3;

/// Default coverage needed for a rendered pixel to be fused.
pub const MIN_COVERAGE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FusionError {
    #[error("invalid volume: {0}")]
    InvalidVolume(&'static str),
    #[error("the volume has no zero crossing")]
    EmptySurface,
    #[error("point set is empty")]
    EmptyPointSet,
    #[error("prediction and ground truth share no covered pixel")]
    NoOverlap,
    #[error("depth and coverage maps differ in size from the camera")]
    DimensionMismatch,
}

/// Regular grid of truncated signed distances. Samples sit at
/// `origin + voxel * (i, j, k)`; values are normalized by the truncation.
#[derive(Clone, Debug, PartialEq)]
pub struct TsdfVolume {
    origin: Vec3,
    voxel: f64,
    dims: [usize; 3],
    truncation: f64,
    tsdf: Vec<f32>,
    weight: Vec<f32>,
}

impl TsdfVolume {
    pub fn new(origin: Vec3, voxel: f64, dims: [usize; 3], truncation: f64) -> Result<Self, FusionError> {
        if !(voxel > 0.0 && voxel.is_finite()) {
            return Err(FusionError::InvalidVolume("voxel size must be positive"));
        }
        if !(truncation >= 2.0 * voxel) {
            return Err(FusionError::InvalidVolume("truncation must be at least two voxels"));
        }
        if dims.iter().any(|d| *d < 2) {
            return Err(FusionError::InvalidVolume("every dimension needs at least 2 samples"));
        }
        let n = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or(FusionError::InvalidVolume("volume too large"))?;
        Ok(Self {
            origin,
            voxel,
            dims,
            truncation,
            tsdf: vec![1.0; n],
            weight: vec![0.0; n],
        })
    }

    /// Volume covering the unit sphere padded by three truncation widths.
    pub fn around_unit_sphere(voxel: f64, truncation: f64) -> Result<Self, FusionError> {
        let half = 1.0 + 3.0 * truncation;
        let n = libm::ceil(2.0 * half / voxel) as usize + 1;
        Self::new(Vec3::repeat(-half), voxel, [n; 3], truncation)
    }

    /// Samples an exact signed distance function, with unit weight everywhere.
    pub fn from_fn(origin: Vec3, voxel: f64, dims: [usize; 3], truncation: f64, sdf: impl Fn(&Vec3) -> f64 + Sync + Send) -> Result<Self, FusionError> {
        let mut v = Self::new(origin, voxel, dims, truncation)?;
        let values = map_range(v.len(), |i| (sdf(&v.position(i)).clamp(-truncation, truncation) / truncation) as f32);
        v.tsdf = values;
        v.weight.fill(1.0);
        Ok(v)
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn len(&self) -> usize {
        self.tsdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tsdf.is_empty()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let i = index % self.dims[0];
        let j = (index / self.dims[0]) % self.dims[1];
        let k = index / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    pub fn position(&self, index: usize) -> Vec3 {
        let [i, j, k] = self.coords(index);
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.voxel
    }

    pub fn tsdf(&self) -> &[f32] {
        &self.tsdf
    }

    pub fn weights(&self) -> &[f32] {
        &self.weight
    }

    /// Fuses one depth map. Pixels with `coverage < min_coverage` or
    /// non-positive depth contribute nothing; a voxel is updated only when
    /// the four pixels around its projection are all valid.
    pub fn integrate(&mut self, camera: &Camera, depth: &Image<f64>, coverage: &Image<f64>, min_coverage: f64) -> Result<(), FusionError> {
        let (w, h) = (camera.width() as usize, camera.height() as usize);
        if depth.width() != w || depth.height() != h || !depth.same_shape(coverage) {
            return Err(FusionError::DimensionMismatch);
        }
        let valid: Vec<bool> = depth
            .as_slice()
            .iter()
            .zip(coverage.as_slice())
            .map(|(&d, &a)| d > 0.0 && d.is_finite() && a >= min_coverage)
            .collect();
        let center = camera.center();
        let tau = self.truncation;
        let sample = |x: &Vec3| -> Option<f32> {
            let (p, _) = camera.project_point(x).ok()?;
            let (fx, fy) = (p.x - 0.5, p.y - 0.5);
            let (x0, y0) = (libm::floor(fx), libm::floor(fy));
            if x0 < 0.0 || y0 < 0.0 || x0 + 1.0 >= w as f64 || y0 + 1.0 >= h as f64 {
                return None;
            }
            let (ix, iy) = (x0 as usize, y0 as usize);
            let corners = [iy * w + ix, iy * w + ix + 1, (iy + 1) * w + ix, (iy + 1) * w + ix + 1];
            if !corners.iter().all(|&c| valid[c]) {
                return None;
            }
            let (tx, ty) = (fx - x0, fy - y0);
            let d = depth.as_slice();
            let pixel_depth = (1.0 - ty) * ((1.0 - tx) * d[corners[0]] + tx * d[corners[1]]) + ty * ((1.0 - tx) * d[corners[2]] + tx * d[corners[3]]);
            let sdf = pixel_depth - (x - center).norm();
            if sdf < -tau {
                return None;
            }
            Some((sdf.min(tau) / tau) as f32)
        };
        let slice = self.dims[0] * self.dims[1];
        let updates = map_range(self.dims[2], |k| {
            (0..slice)
                .map(|i| sample(&self.position(k * slice + i)))
                .collect::<Vec<_>>()
        });
        for (k, slab) in updates.into_iter().enumerate() {
            for (i, u) in slab.into_iter().enumerate() {
                if let Some(s) = u {
                    let idx = k * slice + i;
                    let wt = self.weight[idx];
                    self.tsdf[idx] = (self.tsdf[idx] * wt + s) / (wt + 1.0);
                    self.weight[idx] = wt + 1.0;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, SceneSpec};

    #[test]
    fn rejects_thin_truncation() {
        assert!(TsdfVolume::new(Vec3::zeros(), 0.1, [4; 3], 0.15).is_err());
        assert!(TsdfVolume::around_unit_sphere(0.02, 0.05).is_ok());
    }

    #[test]
    fn index_round_trip() {
        let v = TsdfVolume::new(Vec3::new(-1.0, 0.0, 2.0), 0.5, [3, 4, 5], 1.0).unwrap();
        for n in 0..v.len() {
            let [i, j, k] = v.coords(n);
            assert_eq!(v.index(i, j, k), n);
        }
        assert_eq!(v.position(v.index(2, 1, 3)), Vec3::new(0.0, 0.5, 3.5));
    }

    fn sphere_views() -> crate::synth::GroundTruth {
        let mut spec = SceneSpec::sphere();
        spec.gt_points = 100;
        spec.width = 48;
        spec.height = 48;
        generate_scene(&spec).unwrap()
    }

    #[test]
    fn empty_depth_changes_nothing() {
        let gt = sphere_views();
        let mut v = TsdfVolume::around_unit_sphere(0.1, 0.25).unwrap();
        let before = v.clone();
        let zero = Image::filled(48, 48, 0.0);
        v.integrate(&gt.views[0].camera, &zero, &zero, MIN_COVERAGE).unwrap();
        assert_eq!(v, before);
    }

    #[test]
    fn integrating_twice_is_idempotent_on_values() {
        let gt = sphere_views();
        let view = &gt.views[0];
        let cov = view.depth.map(|d| if *d > 0.0 { 1.0 } else { 0.0 });
        let mut once = TsdfVolume::around_unit_sphere(0.05, 0.12).unwrap();
        once.integrate(&view.camera, &view.depth, &cov, MIN_COVERAGE).unwrap();
        let mut twice = once.clone();
        twice.integrate(&view.camera, &view.depth, &cov, MIN_COVERAGE).unwrap();
        for i in 0..once.len() {
            assert!((once.tsdf()[i] - twice.tsdf()[i]).abs() < 1e-6);
            assert!(twice.weights()[i] >= once.weights()[i]);
        }
        assert!(once.weights().iter().any(|w| *w > 0.0));
    }

    #[test]
    fn fused_sphere_crosses_zero_at_the_radius() {
        let gt = sphere_views();
        let mut v = TsdfVolume::around_unit_sphere(0.05, 0.12).unwrap();
        for view in &gt.views {
            let cov = view.depth.map(|d| if *d > 0.0 { 1.0 } else { 0.0 });
            v.integrate(&view.camera, &view.depth, &cov, MIN_COVERAGE).unwrap();
        }
        let mut checked = 0;
        for n in 0..v.len() {
            if v.weights()[n] > 0.0 {
                let r = v.position(n).norm();
                let s = v.tsdf()[n] as f64 * v.truncation();
                if s.abs() < 0.9 * v.truncation() {
                    // inside the band the stored distance brackets the true one
                    if (r - 0.5).abs() > v.voxel_size() {
                        assert_eq!(s > 0.0, r > 0.5, "r={r} s={s}");
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 100);
    }
}
