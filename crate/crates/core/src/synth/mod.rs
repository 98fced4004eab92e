//! Synthetic ground truth: SDF scenes rendered from a camera rig, a dense
//! surface point cloud, a monocular-depth surrogate and surfel
//! initialization.

mod init;
mod sdf;

pub use init::{init_splats, InitMode};
pub use sdf::{smooth_min, Primitive, SdfScene, TextureSpec, SURFACE_EPS};

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::geometry::{Camera, Intrinsics, Ray};
use crate::image::{Image, Rgb};
use crate::par::{map_range, map_slice};
use crate::rng::rng_for;
use crate::Vec3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
}

/// Cameras on a circle around the look-at point.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct RigSpec {
    /// Training views.
    pub count: usize,
    /// Evaluation-only views placed between the training azimuths.
    pub holdout: usize,
    pub radius: f64,
    pub elevation_deg: f64,
    /// Azimuth range covered by the training views.
    pub azimuth_span_deg: f64,
    pub look_at: [f64; 3],
    pub fov_deg: f64,
}

impl Default for RigSpec {
    fn default() -> Self {
        Self {
            count: 3,
            holdout: 2,
            radius: 2.6,
            elevation_deg: 20.0,
            azimuth_span_deg: 90.0,
            look_at: [0.0, 0.0, 0.0],
            fov_deg: 45.0,
        }
    }
}

/// Monotone warp plus noise applied to true depth.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct MonoSpec {
    pub gamma: f64,
    pub scale: f64,
    pub offset: f64,
    /// Noise standard deviation as a fraction of the covered depth range.
    pub noise_rel: f64,
}

impl Default for MonoSpec {
    fn default() -> Self {
        Self {
            gamma: 1.3,
            scale: 0.8,
            offset: 0.1,
            noise_rel: 0.005,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    /// Smooth-union blend radius.
    pub blend: f64,
    pub texture: TextureSpec,
    pub rig: RigSpec,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    /// Number of ground-truth surface samples.
    pub gt_points: usize,
    pub mono: MonoSpec,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self::reference()
    }
}

impl SceneSpec {
    /// A sphere fused with a box, seen by three views.
    pub fn reference() -> Self {
        Self {
            primitives: vec![
                Primitive::Sphere {
                    center: [-0.2, 0.1, 0.05],
                    radius: 0.45,
                },
                Primitive::Box {
                    center: [0.3, -0.2, -0.05],
                    half_extents: [0.25, 0.25, 0.25],
                },
            ],
            blend: 0.1,
            texture: TextureSpec::default(),
            rig: RigSpec::default(),
            width: 64,
            height: 64,
            seed: 0,
            gt_points: 100_000,
            mono: MonoSpec::default(),
        }
    }

    /// A single centered sphere of radius 0.5.
    pub fn sphere() -> Self {
        Self {
            primitives: vec![Primitive::Sphere {
                center: [0.0, 0.0, 0.0],
                radius: 0.5,
            }],
            blend: 0.0,
            ..Self::reference()
        }
    }

    pub fn scene(&self) -> SdfScene {
        SdfScene {
            primitives: self.primitives.clone(),
            blend: self.blend,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.primitives.is_empty() {
            return bad("at least one primitive is required".into());
        }
        for p in &self.primitives {
            let ok = match p {
                Primitive::Sphere { center, radius } => *radius > 0.0 && center.iter().all(|c| c.is_finite()),
                Primitive::Box { center, half_extents } => {
                    half_extents.iter().all(|h| *h > 0.0) && center.iter().all(|c| c.is_finite())
                }
            };
            if !ok {
                return bad(format!("degenerate primitive {p:?}"));
            }
        }
        let r = self.scene().bounding_radius();
        if !(r <= 1.0) {
            return bad(format!("scene extends to radius {r:.3}, outside the unit sphere"));
        }
        if !(self.blend >= 0.0) {
            return bad("blend must be non-negative".into());
        }
        if self.rig.count < 2 {
            return bad(format!("at least 2 training views are required, got {}", self.rig.count));
        }
        if !(self.rig.radius > 1.0) {
            return bad("camera radius must place cameras outside the unit sphere".into());
        }
        if !(self.rig.fov_deg > 0.0 && self.rig.fov_deg < 170.0) {
            return bad("fov must lie in (0, 170) degrees".into());
        }
        if self.rig.elevation_deg.abs() >= 89.0 {
            return bad("elevation must lie in (-89, 89) degrees".into());
        }
        if self.width == 0 || self.height == 0 {
            return bad("image size must be positive".into());
        }
        let m = &self.mono;
        if !(m.gamma > 0.0 && m.scale > 0.0 && m.noise_rel >= 0.0 && m.offset.is_finite()) {
            return bad("mono warp needs gamma > 0, scale > 0, noise_rel >= 0".into());
        }
        Ok(())
    }

    fn camera_at(&self, azimuth_deg: f64) -> Result<Camera, SynthError> {
        let az = azimuth_deg.to_radians();
        let el = self.rig.elevation_deg.to_radians();
        let target = Vec3::from(self.rig.look_at);
        let offset = Vec3::new(libm::sin(az) * libm::cos(el), libm::sin(el), -libm::cos(az) * libm::cos(el));
        Camera::look_at(
            target + offset * self.rig.radius,
            target,
            Vec3::y(),
            Intrinsics::from_fov(self.width, self.height, self.rig.fov_deg),
            self.width,
            self.height,
        )
        .map_err(|e| SynthError::InvalidSpec(format!("{e}")))
    }

    /// Training cameras, evenly spread over the azimuth span.
    pub fn training_cameras(&self) -> Result<Vec<Camera>, SynthError> {
        let n = self.rig.count;
        let span = self.rig.azimuth_span_deg;
        (0..n)
            .map(|i| self.camera_at(-0.5 * span + span * i as f64 / (n - 1).max(1) as f64))
            .collect()
    }

    /// Held-out cameras, centered in equal slices of the span.
    pub fn holdout_cameras(&self) -> Result<Vec<Camera>, SynthError> {
        let h = self.rig.holdout;
        let span = self.rig.azimuth_span_deg;
        (0..h)
            .map(|j| self.camera_at(-0.5 * span + span * (j as f64 + 0.5) / h as f64))
            .collect()
    }
}

/// One rendered ground-truth view.
#[derive(Clone, Debug, PartialEq)]
pub struct View {
    pub camera: Camera,
    pub image: Image<Rgb>,
    /// Ray-parameter depth, 0 where the ray misses.
    pub depth: Image<f64>,
    /// World-space surface normals, zero where the ray misses.
    pub normal: Image<Vec3>,
    pub mono: Image<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub views: Vec<View>,
    pub holdout: Vec<View>,
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
}

impl GroundTruth {
    pub fn cameras(&self) -> Vec<Camera> {
        self.views.iter().map(|v| v.camera.clone()).collect()
    }
}

const AMBIENT: f64 = 0.35;
/// Directions toward the two lights in the camera frame (x right, y down,
/// z forward), with intensities.
const LIGHTS: [([f64; 3], f64); 2] = [([-0.4, -0.6, -1.0], 0.55), ([0.8, -0.2, -0.5], 0.3)];

/// Lambertian shading with lights attached to the camera, so the same
/// surface point shades differently across views.
pub fn shade(camera: &Camera, albedo: [f64; 3], normal: &Vec3) -> Rgb {
    let mut light = AMBIENT;
    for (dir, intensity) in LIGHTS {
        let l = (camera.rotation() * Vec3::from(dir)).normalize();
        light += intensity * normal.dot(&l).max(0.0);
    }
    albedo.map(|a| (a * light).clamp(0.0, 1.0))
}

struct RenderedView {
    image: Image<Rgb>,
    depth: Image<f64>,
    normal: Image<Vec3>,
}

fn render_gt(scene: &SdfScene, texture: &TextureSpec, camera: &Camera) -> RenderedView {
    let w = camera.width() as usize;
    let h = camera.height() as usize;
    let pixels = map_range(w * h, |i| {
        let ray = camera.ray_through_pixel(&Camera::pixel_center(i % w, i / w));
        match scene.trace(&ray) {
            Some(t) => {
                let p = ray.at(t);
                let n = scene.normal(&p);
                (shade(camera, texture.albedo(&p), &n), t, n)
            }
            None => ([0.0; 3], 0.0, Vec3::zeros()),
        }
    });
    RenderedView {
        image: Image::from_vec(w, h, pixels.iter().map(|p| p.0).collect()),
        depth: Image::from_vec(w, h, pixels.iter().map(|p| p.1).collect()),
        normal: Image::from_vec(w, h, pixels.iter().map(|p| p.2).collect()),
    }
}

/// Warp parameters with an absolute noise level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonoWarp {
    pub gamma: f64,
    pub scale: f64,
    pub offset: f64,
    pub noise: f64,
}

/// `scale * D^gamma + offset + noise` on covered pixels; uncovered pixels
/// take the largest covered value.
pub fn mono_surrogate(depth: &Image<f64>, warp: &MonoWarp, seed: u64) -> Image<f64> {
    let mut rng = rng_for(seed, "mono");
    let mut out: Vec<f64> = depth
        .as_slice()
        .iter()
        .map(|&d| {
            if d <= 0.0 {
                return f64::NAN;
            }
            let mut v = warp.scale * libm::pow(d, warp.gamma) + warp.offset;
            if warp.noise > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                v += warp.noise * z;
            }
            v
        })
        .collect();
    let fill = out.iter().copied().filter(|v| !v.is_nan()).fold(f64::NEG_INFINITY, f64::max);
    let fill = if fill.is_finite() { fill } else { warp.offset };
    for v in &mut out {
        if v.is_nan() {
            *v = fill;
        }
    }
    Image::from_vec(depth.width(), depth.height(), out)
}

fn covered_range(depth: &Image<f64>) -> f64 {
    let (lo, hi) = depth
        .as_slice()
        .iter()
        .filter(|d| **d > 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    if hi > lo {
        hi - lo
    } else {
        0.0
    }
}

fn view_from(spec: &SceneSpec, scene: &SdfScene, camera: Camera, purpose: &str) -> View {
    let r = render_gt(scene, &spec.texture, &camera);
    let warp = MonoWarp {
        gamma: spec.mono.gamma,
        scale: spec.mono.scale,
        offset: spec.mono.offset,
        noise: spec.mono.noise_rel * covered_range(&r.depth),
    };
    let mono = mono_surrogate(&r.depth, &warp, crate::rng::derive_seed(spec.seed, purpose));
    View {
        camera,
        image: r.image,
        depth: r.depth,
        normal: r.normal,
        mono,
    }
}

fn sample_on_primitive(prim: &Primitive, rng: &mut impl Rng) -> Vec3 {
    match prim {
        Primitive::Sphere { center, radius } => {
            let n = Normal::new(0.0, 1.0).unwrap();
            let v = loop {
                let v = Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng));
                if let Some(u) = v.try_normalize(1e-12) {
                    break u;
                }
            };
            Vec3::from(*center) + v * *radius
        }
        Primitive::Box { center, half_extents: h } => {
            let areas = [h[1] * h[2], h[0] * h[2], h[0] * h[1]];
            let mut pick = rng.random::<f64>() * (areas[0] + areas[1] + areas[2]);
            let mut axis = 2;
            for (k, a) in areas.iter().enumerate() {
                if pick < *a {
                    axis = k;
                    break;
                }
                pick -= a;
            }
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let mut local = Vec3::zeros();
            for k in 0..3 {
                local[k] = if k == axis { sign * h[k] } else { rng.random_range(-h[k]..h[k]) };
            }
            Vec3::from(*center) + local
        }
    }
}

/// Tolerance for matching a traced hit with a surface sample.
const VISIBILITY_TOL: f64 = 1e-3;

/// Whether `x` (on the surface, with outward normal `n`) is seen by `camera`.
pub fn point_visible(scene: &SdfScene, camera: &Camera, x: &Vec3, n: &Vec3) -> bool {
    let o = camera.center();
    let to_cam = o - x;
    if n.dot(&to_cam) <= 0.0 {
        return false;
    }
    let Ok((p, _)) = camera.project_point(x) else {
        return false;
    };
    if !camera.contains_pixel(&p) {
        return false;
    }
    let dist = to_cam.norm();
    let ray = Ray {
        origin: o,
        direction: -to_cam / dist,
    };
    scene.trace(&ray).is_some_and(|t| (t - dist).abs() < VISIBILITY_TOL)
}

/// Surface samples visible from at least one camera, with outward normals.
fn surface_points(spec: &SceneSpec, scene: &SdfScene, cameras: &[Camera]) -> (Vec<Vec3>, Vec<Vec3>) {
    let mut rng = rng_for(spec.seed, "gt-points");
    let areas: Vec<f64> = spec.primitives.iter().map(Primitive::surface_area).collect();
    let total: f64 = areas.iter().sum();
    let target = spec.gt_points;
    let mut points = Vec::with_capacity(target);
    let mut normals = Vec::with_capacity(target);
    let batch = (target / 2).max(1024);
    let mut attempts = 0;
    while points.len() < target && attempts < 200 * target.max(1) {
        let candidates: Vec<(usize, Vec3)> = (0..batch)
            .map(|_| {
                let mut pick = rng.random::<f64>() * total;
                let mut idx = areas.len() - 1;
                for (i, a) in areas.iter().enumerate() {
                    if pick < *a {
                        idx = i;
                        break;
                    }
                    pick -= a;
                }
                (idx, sample_on_primitive(&spec.primitives[idx], &mut rng))
            })
            .collect();
        attempts += batch;
        let kept = map_slice(&candidates, |(idx, p)| {
            let inside_other = spec.primitives.iter().enumerate().any(|(j, q)| j != *idx && q.distance(p) < 0.0);
            if inside_other {
                return None;
            }
            let x = scene.project(p)?;
            let n = scene.normal(&x);
            cameras.iter().any(|c| point_visible(scene, c, &x, &n)).then_some((x, n))
        });
        for (x, n) in kept.into_iter().flatten() {
            if points.len() == target {
                break;
            }
            points.push(x);
            normals.push(n);
        }
    }
    (points, normals)
}

/// Renders every view, samples the surface and derives mono priors.
pub fn generate_scene(spec: &SceneSpec) -> Result<GroundTruth, SynthError> {
    spec.validate()?;
    let scene = spec.scene();
    let train = spec.training_cameras()?;
    let hold = spec.holdout_cameras()?;
    let views: Vec<View> = train
        .iter()
        .enumerate()
        .map(|(i, c)| view_from(spec, &scene, c.clone(), &format!("mono-{i}")))
        .collect();
    let holdout: Vec<View> = hold
        .iter()
        .enumerate()
        .map(|(i, c)| view_from(spec, &scene, c.clone(), &format!("holdout-mono-{i}")))
        .collect();
    let (points, normals) = surface_points(spec, &scene, &train);
    if points.is_empty() && spec.gt_points > 0 {
        return Err(SynthError::InvalidSpec("no surface point is visible from the training views".into()));
    }
    Ok(GroundTruth {
        views,
        holdout,
        points,
        normals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mut spec: SceneSpec) -> SceneSpec {
        spec.gt_points = 5000;
        spec
    }

    #[test]
    fn on_axis_sphere_depth() {
        let mut spec = small(SceneSpec::sphere());
        spec.width = 65;
        spec.height = 65;
        spec.rig.radius = 2.0;
        spec.rig.elevation_deg = 0.0;
        spec.rig.azimuth_span_deg = 0.0;
        let gt = generate_scene(&spec).unwrap();
        let d = *gt.views[0].depth.get(32, 32);
        assert!((d - 1.5).abs() < 1e-4, "{d}");
    }

    #[test]
    fn sphere_points_lie_on_the_surface() {
        let gt = generate_scene(&small(SceneSpec::sphere())).unwrap();
        assert_eq!(gt.points.len(), 5000);
        let max = gt.points.iter().map(|p| (p.norm() - 0.5).abs()).fold(0.0, f64::max);
        assert!(max < 1e-4, "{max}");
        for (p, n) in gt.points.iter().zip(&gt.normals) {
            assert!((p.normalize() - n).norm() < 1e-4);
        }
    }

    #[test]
    fn reference_points_lie_on_the_zero_set() {
        let spec = small(SceneSpec::reference());
        let gt = generate_scene(&spec).unwrap();
        let scene = spec.scene();
        assert!(gt.points.iter().all(|p| scene.distance(p).abs() < 1e-4));
    }

    fn components(depth: &Image<f64>) -> usize {
        let (w, h) = (depth.width(), depth.height());
        let mut label = vec![usize::MAX; w * h];
        let mut count = 0;
        for start in 0..w * h {
            if depth.as_slice()[start] <= 0.0 || label[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            label[start] = count;
            while let Some(i) = stack.pop() {
                let (x, y) = (i % w, i / w);
                let mut nbrs = Vec::new();
                if x > 0 {
                    nbrs.push(i - 1);
                }
                if x + 1 < w {
                    nbrs.push(i + 1);
                }
                if y > 0 {
                    nbrs.push(i - w);
                }
                if y + 1 < h {
                    nbrs.push(i + w);
                }
                for j in nbrs {
                    if depth.as_slice()[j] > 0.0 && label[j] == usize::MAX {
                        label[j] = count;
                        stack.push(j);
                    }
                }
            }
            count += 1;
        }
        count
    }

    #[test]
    fn disjoint_spheres_form_two_components() {
        let mut spec = small(SceneSpec::sphere());
        spec.primitives = vec![
            Primitive::Sphere {
                center: [-0.5, 0.0, 0.0],
                radius: 0.3,
            },
            Primitive::Sphere {
                center: [0.5, 0.0, 0.0],
                radius: 0.3,
            },
        ];
        spec.rig.elevation_deg = 0.0;
        spec.rig.azimuth_span_deg = 0.0;
        let gt = generate_scene(&spec).unwrap();
        assert_eq!(components(&gt.views[0].depth), 2);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = small(SceneSpec::reference());
        assert_eq!(generate_scene(&spec).unwrap(), generate_scene(&spec).unwrap());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = SceneSpec::reference();
        s.rig.count = 1;
        assert!(generate_scene(&s).is_err());
        let mut s = SceneSpec::sphere();
        s.primitives = vec![Primitive::Sphere {
            center: [0.8, 0.0, 0.0],
            radius: 0.5,
        }];
        assert!(generate_scene(&s).is_err());
    }

    #[test]
    fn shading_depends_on_the_view() {
        let gt = generate_scene(&small(SceneSpec::sphere())).unwrap();
        // a normal off the vertical axis, facing all three cameras
        let top = Vec3::new(0.0, 0.3, -1.0);
        let colors: Vec<Rgb> = gt
            .views
            .iter()
            .map(|v| shade(&v.camera, [1.0; 3], &top.normalize()))
            .collect();
        assert!(colors.windows(2).any(|w| (w[0][0] - w[1][0]).abs() > 1e-3));
    }

    #[test]
    fn identity_warp_returns_depth() {
        let gt = generate_scene(&small(SceneSpec::sphere())).unwrap();
        let d = &gt.views[0].depth;
        let warp = MonoWarp {
            gamma: 1.0,
            scale: 1.0,
            offset: 0.0,
            noise: 0.0,
        };
        let m = mono_surrogate(d, &warp, 3);
        let max = d.as_slice().iter().copied().fold(0.0, f64::max);
        for (a, b) in d.as_slice().iter().zip(m.as_slice()) {
            assert_eq!(*b, if *a > 0.0 { *a } else { max });
        }
    }

    fn patch_pairs(w: usize, h: usize, side: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for py in (0..h).step_by(side) {
            for px in (0..w).step_by(side) {
                let cells: Vec<usize> = (py..(py + side).min(h))
                    .flat_map(|y| (px..(px + side).min(w)).map(move |x| y * w + x))
                    .collect();
                for (a, &i) in cells.iter().enumerate() {
                    for &j in &cells[a + 1..] {
                        out.push((i, j));
                    }
                }
            }
        }
        out
    }

    #[test]
    fn monotone_warp_preserves_patch_order() {
        let gt = generate_scene(&small(SceneSpec::sphere())).unwrap();
        let d = &gt.views[0].depth;
        let warp = MonoWarp {
            gamma: 1.5,
            scale: 1.0,
            offset: 0.0,
            noise: 0.0,
        };
        let m = mono_surrogate(d, &warp, 4);
        for (i, j) in patch_pairs(64, 64, 16) {
            let (di, dj) = (d.as_slice()[i], d.as_slice()[j]);
            if di > 0.0 && dj > 0.0 {
                assert_eq!(di.partial_cmp(&dj), m.as_slice()[i].partial_cmp(&m.as_slice()[j]));
            }
        }
    }

    #[test]
    fn noisy_surrogate_keeps_most_patch_orderings() {
        let gt = generate_scene(&small(SceneSpec::sphere())).unwrap();
        let d = &gt.views[0].depth;
        let warp = MonoWarp {
            gamma: 1.0,
            scale: 1.0,
            offset: 0.0,
            noise: 0.01 * covered_range(d),
        };
        let m = mono_surrogate(d, &warp, 5);
        let (mut agree, mut total) = (0usize, 0usize);
        for (i, j) in patch_pairs(64, 64, 16) {
            let (di, dj) = (d.as_slice()[i], d.as_slice()[j]);
            if di > 0.0 && dj > 0.0 && di != dj {
                total += 1;
                if (di < dj) == (m.as_slice()[i] < m.as_slice()[j]) {
                    agree += 1;
                }
            }
        }
        let frac = agree as f64 / total as f64;
        assert!(frac >= 0.95, "{frac}");
    }

    /// Bilinear depth at `p`, or `None` near an occlusion boundary.
    fn interior_depth(depth: &Image<f64>, p: &crate::Vec2) -> Option<f64> {
        let (w, h) = (depth.width() as isize, depth.height() as isize);
        let (cx, cy) = (p.x as isize, p.y as isize);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for y in cy - 1..=cy + 1 {
            for x in cx - 1..=cx + 1 {
                if x < 0 || y < 0 || x >= w || y >= h {
                    return None;
                }
                let d = *depth.get(x as usize, y as usize);
                if d <= 0.0 {
                    return None;
                }
                lo = lo.min(d);
                hi = hi.max(d);
            }
        }
        if hi - lo > 0.1 {
            return None;
        }
        let (fx, fy) = (p.x - 0.5, p.y - 0.5);
        let (x0, y0) = (libm::floor(fx), libm::floor(fy));
        let (tx, ty) = (fx - x0, fy - y0);
        let at = |x: f64, y: f64| *depth.get(x as usize, y as usize);
        Some(
            (1.0 - ty) * ((1.0 - tx) * at(x0, y0) + tx * at(x0 + 1.0, y0))
                + ty * ((1.0 - tx) * at(x0, y0 + 1.0) + tx * at(x0 + 1.0, y0 + 1.0)),
        )
    }

    #[test]
    fn depth_maps_are_mutually_consistent() {
        let gt = generate_scene(&small(SceneSpec::reference())).unwrap();
        for (a, va) in gt.views.iter().enumerate() {
            for (b, vb) in gt.views.iter().enumerate() {
                if a == b {
                    continue;
                }
                let w = va.depth.width();
                let (mut ok, mut total) = (0usize, 0usize);
                for (i, &d) in va.depth.as_slice().iter().enumerate() {
                    if d <= 0.0 {
                        continue;
                    }
                    let x = va.camera.ray_through_pixel(&Camera::pixel_center(i % w, i / w)).at(d);
                    let Ok((p, _)) = vb.camera.project_point(&x) else { continue };
                    if !vb.camera.contains_pixel(&p) {
                        continue;
                    }
                    let Some(db) = interior_depth(&vb.depth, &p) else { continue };
                    let dist = (x - vb.camera.center()).norm();
                    if dist > db + 0.1 {
                        // hidden behind what b sees
                        continue;
                    }
                    total += 1;
                    // two voxels at the default fusion resolution
                    if (dist - db).abs() < 0.02 {
                        ok += 1;
                    }
                }
                assert!(ok as f64 >= 0.9 * total as f64, "views {a}->{b}: {ok}/{total}");
            }
        }
    }
}
