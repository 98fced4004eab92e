//! Surfel initialization from ground truth.

use alloc::vec::Vec;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{GroundTruth, View};
use crate::geometry::Camera;
use crate::image::Rgb;
use crate::math;
use crate::rng::rng_for;
use crate::spatial::PointGrid;
use crate::splat::{Splat, SplatSet};
use crate::Vec3;

/// Bounds on the initial log-scales.
pub const MIN_SCALE: f64 = 1e-4;
pub const MAX_SCALE: f64 = 1.0;
/// Scale of a lone surfel, which has no neighbors to measure.
const LONE_SCALE: f64 = 0.05;
const NEIGHBORS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum InitMode {
    /// Draw centers from the ground-truth point cloud.
    SurfaceSample,
    /// Back-project covered pixels of the training depth maps.
    DepthBackproject,
}

struct Seed {
    point: Vec3,
    normal: Vec3,
}

fn seeds(gt: &GroundTruth, count: usize, mode: InitMode, rng: &mut impl Rng) -> Vec<Seed> {
    let pool: Vec<Seed> = match mode {
        InitMode::SurfaceSample => gt
            .points
            .iter()
            .zip(&gt.normals)
            .map(|(p, n)| Seed { point: *p, normal: *n })
            .collect(),
        InitMode::DepthBackproject => gt.views.iter().flat_map(backproject).collect(),
    };
    if pool.is_empty() {
        return Vec::new();
    }
    let picks: Vec<usize> = if count <= pool.len() {
        let mut v = index::sample(rng, pool.len(), count).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..count).map(|_| rng.random_range(0..pool.len())).collect()
    };
    picks
        .into_iter()
        .map(|i| Seed {
            point: pool[i].point,
            normal: pool[i].normal,
        })
        .collect()
}

fn backproject(view: &View) -> Vec<Seed> {
    let w = view.depth.width();
    view.depth
        .as_slice()
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > 0.0)
        .map(|(i, d)| Seed {
            point: view.camera.ray_through_pixel(&Camera::pixel_center(i % w, i / w)).at(*d),
            normal: view.normal.as_slice()[i],
        })
        .collect()
}

/// Rotation with columns `[t1, t2, n]`, spun by `angle` about `n`.
fn tangent_frame(normal: &Vec3, angle: f64) -> Matrix3<f64> {
    let n = normal.try_normalize(1e-12).unwrap_or_else(Vec3::z);
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let a = n.cross(&helper).normalize();
    let b = n.cross(&a);
    let (s, c) = (math::sin(angle), math::cos(angle));
    let t1 = a * c + b * s;
    let t2 = n.cross(&t1);
    Matrix3::from_columns(&[t1, t2, n])
}

fn quaternion_of(r: Matrix3<f64>) -> [f64; 4] {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    [q.w, q.i, q.j, q.k]
}

/// Color of the training pixel whose depth best matches `x`.
fn sample_color(gt: &GroundTruth, x: &Vec3) -> Rgb {
    let mut best: Option<(f64, Rgb)> = None;
    for v in &gt.views {
        let Ok((p, _)) = v.camera.project_point(x) else { continue };
        if !v.camera.contains_pixel(&p) {
            continue;
        }
        let (px, py) = (p.x as usize, p.y as usize);
        let d = *v.depth.get(px, py);
        if d <= 0.0 {
            continue;
        }
        let miss = ((x - v.camera.center()).norm() - d).abs();
        if best.is_none_or(|(m, _)| miss < m) {
            best = Some((miss, *v.image.get(px, py)));
        }
    }
    best.map_or([0.5; 3], |(_, c)| c)
}

/// `count` surfels around the ground-truth surface, centers jittered by
/// isotropic Gaussian noise of standard deviation `sigma_p`.
pub fn init_splats(gt: &GroundTruth, count: usize, sigma_p: f64, mode: InitMode, seed: u64) -> SplatSet {
    let mut rng = rng_for(seed, "init");
    let seeds = seeds(gt, count, mode, &mut rng);
    let centers: Vec<Vec3> = seeds.iter().map(|s| s.point).collect();
    let grid = PointGrid::new(centers);
    let (lo, hi) = (math::ln(MIN_SCALE), math::ln(MAX_SCALE));
    seeds
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let nn = grid.k_nearest(&s.point, NEIGHBORS, Some(i));
            let mean = nn.iter().map(|(_, d)| d).sum::<f64>() / nn.len().max(1) as f64;
            let log_scale = if nn.is_empty() { math::ln(LONE_SCALE) } else { math::ln(mean.max(MIN_SCALE)) }.clamp(lo, hi);
            let spin = rng.random::<f64>() * core::f64::consts::TAU;
            let mut noise = Vec3::zeros();
            if sigma_p > 0.0 {
                for k in 0..3 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    noise[k] = sigma_p * z;
                }
            }
            Splat {
                mean: s.point + noise,
                rotation: quaternion_of(tangent_frame(&s.normal, spin)),
                log_scales: [log_scale; 2],
                opacity_logit: 0.0,
                color: sample_color(gt, &s.point),
            }
        })
        .collect()
}
