//! The 2D Gaussian surfel: a planar elliptical Gaussian embedded in 3D.
//!
//! A surfel has a center `mean`, a rotation whose first two columns span the
//! tangent plane and whose third column is the normal, two positive scales,
//! an opacity and a base color. A point of the tangent plane is
//! `mean + s1 * t1 * u + s2 * t2 * v` and carries weight `exp(-(u² + v²) / 2)`.

use alloc::vec::Vec;
use nalgebra::Matrix3;

use crate::geometry::Ray;
use crate::{math, Vec3};

/// Squared local radius beyond which a surfel contributes nothing (3 sigma).
pub const CUTOFF_SQ: f64 = 9.0;
/// Intersections closer than this ray parameter are rejected.
pub const NEAR_CLIP: f64 = 1e-4;
/// Rays with `|n . d|` below this are treated as parallel to the surfel.
pub const GRAZING_EPS: f64 = 1e-9;

/// Number of learnable scalars per surfel.
pub const PARAM_COUNT: usize = 13;

pub type SplatSet = Vec<Splat>;
pub type SplatGrad = [f64; PARAM_COUNT];

/// Named slots of the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamField {
    MeanX,
    MeanY,
    MeanZ,
    RotW,
    RotX,
    RotY,
    RotZ,
    LogScaleU,
    LogScaleV,
    OpacityLogit,
    ColorR,
    ColorG,
    ColorB,
}

impl ParamField {
    pub const ALL: [ParamField; PARAM_COUNT] = [
        ParamField::MeanX,
        ParamField::MeanY,
        ParamField::MeanZ,
        ParamField::RotW,
        ParamField::RotX,
        ParamField::RotY,
        ParamField::RotZ,
        ParamField::LogScaleU,
        ParamField::LogScaleV,
        ParamField::OpacityLogit,
        ParamField::ColorR,
        ParamField::ColorG,
        ParamField::ColorB,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamField::MeanX => "mean.x",
            ParamField::MeanY => "mean.y",
            ParamField::MeanZ => "mean.z",
            ParamField::RotW => "rot.w",
            ParamField::RotX => "rot.x",
            ParamField::RotY => "rot.y",
            ParamField::RotZ => "rot.z",
            ParamField::LogScaleU => "log_scale.u",
            ParamField::LogScaleV => "log_scale.v",
            ParamField::OpacityLogit => "opacity_logit",
            ParamField::ColorR => "color.r",
            ParamField::ColorG => "color.g",
            ParamField::ColorB => "color.b",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splat {
    pub mean: Vec3,
    /// Quaternion `(w, x, y, z)`; normalized whenever a frame is derived.
    pub rotation: [f64; 4],
    pub log_scales: [f64; 2],
    pub opacity_logit: f64,
    pub color: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplatHit {
    /// Local plane coordinates, already divided by the scales.
    pub u: f64,
    pub v: f64,
    /// Ray parameter of the intersection.
    pub depth: f64,
    /// `exp(-(u² + v²) / 2)`.
    pub gaussian: f64,
}

/// Tangent frame and scales of a surfel, the quantities intersection needs.
#[derive(Clone, Copy, Debug)]
pub struct SplatFrame {
    pub rotation: Matrix3<f64>,
    pub scales: [f64; 2],
}

impl SplatFrame {
    pub fn t1(&self) -> Vec3 {
        self.rotation.column(0).into_owned()
    }

    pub fn t2(&self) -> Vec3 {
        self.rotation.column(1).into_owned()
    }

    pub fn normal(&self) -> Vec3 {
        self.rotation.column(2).into_owned()
    }
}

impl Splat {
    pub fn new(mean: Vec3, rotation: [f64; 4], scales: [f64; 2], opacity: f64, color: [f64; 3]) -> Self {
        Self {
            mean,
            rotation,
            log_scales: [math::ln(scales[0]), math::ln(scales[1])],
            opacity_logit: math::logit(opacity),
            color,
        }
    }

    pub fn scales(&self) -> [f64; 2] {
        [math::exp(self.log_scales[0]), math::exp(self.log_scales[1])]
    }

    pub fn opacity(&self) -> f64 {
        math::sigmoid(self.opacity_logit)
    }

    pub fn frame(&self) -> SplatFrame {
        SplatFrame {
            rotation: quaternion_to_matrix(&self.rotation),
            scales: self.scales(),
        }
    }

    /// Maps local plane coordinates to world space.
    pub fn local_to_world(&self, u: f64, v: f64) -> Vec3 {
        let f = self.frame();
        self.mean + f.t1() * (f.scales[0] * u) + f.t2() * (f.scales[1] * v)
    }

    pub fn normal(&self) -> Vec3 {
        self.frame().normal()
    }

    pub fn to_params(&self) -> SplatGrad {
        let mut p = [0.0; PARAM_COUNT];
        p[0..3].copy_from_slice(self.mean.as_slice());
        p[3..7].copy_from_slice(&self.rotation);
        p[7..9].copy_from_slice(&self.log_scales);
        p[9] = self.opacity_logit;
        p[10..13].copy_from_slice(&self.color);
        p
    }

    pub fn from_params(p: &SplatGrad) -> Self {
        Self {
            mean: Vec3::new(p[0], p[1], p[2]),
            rotation: [p[3], p[4], p[5], p[6]],
            log_scales: [p[7], p[8]],
            opacity_logit: p[9],
            color: [p[10], p[11], p[12]],
        }
    }

    pub fn param(&self, field: ParamField) -> f64 {
        self.to_params()[field.index()]
    }

    pub fn set_param(&mut self, field: ParamField, value: f64) {
        let mut p = self.to_params();
        p[field.index()] = value;
        *self = Self::from_params(&p);
    }

    pub fn is_finite(&self) -> bool {
        self.to_params().iter().all(|v| v.is_finite())
    }
}

/// Rotation matrix of the normalized quaternion `(w, x, y, z)`.
pub fn quaternion_to_matrix(q: &[f64; 4]) -> Matrix3<f64> {
    let n = math::sqrt(q.iter().map(|v| v * v).sum::<f64>());
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Pulls a gradient on the rotation matrix back to the raw (unnormalized) quaternion.
pub fn quaternion_to_matrix_backward(q: &[f64; 4], grad: &Matrix3<f64>) -> [f64; 4] {
    let n = math::sqrt(q.iter().map(|v| v * v).sum::<f64>());
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    let g = |r: usize, c: usize| grad[(r, c)];
    let gw = 2.0
        * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    let gx = 2.0
        * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2)
            + z * g(2, 0)
            + w * g(2, 1)
            - 2.0 * x * g(2, 2));
    let gy = 2.0
        * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2)
            - w * g(2, 0)
            + z * g(2, 1)
            - 2.0 * y * g(2, 2));
    let gz = 2.0
        * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1)
            + y * g(1, 2)
            + x * g(2, 0)
            + y * g(2, 1));
    let gn = [gw, gx, gy, gz];
    let qn = [w, x, y, z];
    let dot: f64 = gn.iter().zip(&qn).map(|(a, b)| a * b).sum();
    [
        (gn[0] - qn[0] * dot) / n,
        (gn[1] - qn[1] * dot) / n,
        (gn[2] - qn[2] * dot) / n,
        (gn[3] - qn[3] * dot) / n,
    ]
}

/// Gaussian weight of local coordinates, zero beyond the 3 sigma cutoff.
pub fn gaussian_weight(u: f64, v: f64) -> f64 {
    let r2 = u * u + v * v;
    if r2 > CUTOFF_SQ {
        0.0
    } else {
        math::exp(-0.5 * r2)
    }
}

/// Intersects a unit ray with the surfel's tangent plane.
pub fn intersect_ray_splat(ray: &Ray, splat: &Splat) -> Option<SplatHit> {
    intersect_with_frame(ray, splat, &splat.frame())
}

pub fn intersect_with_frame(ray: &Ray, splat: &Splat, frame: &SplatFrame) -> Option<SplatHit> {
    let n = frame.normal();
    let denom = n.dot(&ray.direction);
    if denom.abs() < GRAZING_EPS {
        return None;
    }
    let t = n.dot(&(splat.mean - ray.origin)) / denom;
    if !(t > NEAR_CLIP) {
        return None;
    }
    let r = ray.at(t) - splat.mean;
    let u = frame.t1().dot(&r) / frame.scales[0];
    let v = frame.t2().dot(&r) / frame.scales[1];
    let g = gaussian_weight(u, v);
    if g == 0.0 {
        return None;
    }
    Some(SplatHit {
        u,
        v,
        depth: t,
        gaussian: g,
    })
}

/// Upstream gradients arriving at one intersection.
#[derive(Clone, Copy, Debug, Default)]
pub struct HitGrad {
    /// dL / d(opacity * gaussian).
    pub alpha: f64,
    /// dL / d(ray parameter).
    pub depth: f64,
    /// dL / d(world normal).
    pub normal: Vec3,
    /// dL / d(color).
    pub color: [f64; 3],
}

/// Accumulates the gradient of one intersection into `out`.
///
/// The intersection must be a hit (not past the cutoff, not grazing); the
/// cutoff itself is a gate and carries no gradient.
pub fn intersect_backward(ray: &Ray, splat: &Splat, frame: &SplatFrame, grad: &HitGrad, out: &mut SplatGrad) {
    let t1 = frame.t1();
    let t2 = frame.t2();
    let n = frame.normal();
    let [s1, s2] = frame.scales;
    let denom = n.dot(&ray.direction);
    let w = splat.mean - ray.origin;
    let t = n.dot(&w) / denom;
    let r = ray.at(t) - splat.mean;
    let a = t1.dot(&r);
    let b = t2.dot(&r);
    let u = a / s1;
    let v = b / s2;
    let g = math::exp(-0.5 * (u * u + v * v));
    let o = splat.opacity();

    // alpha = o * g
    let g_g = grad.alpha * o;
    let g_o = grad.alpha * g;
    let g_logit = g_o * o * (1.0 - o);

    let g_u = -g_g * g * u;
    let g_v = -g_g * g * v;
    let g_a = g_u / s1;
    let g_b = g_v / s2;
    let g_log_s1 = -g_u * u;
    let g_log_s2 = -g_v * v;

    let g_t1 = r * g_a;
    let g_t2 = r * g_b;
    let g_r = t1 * g_a + t2 * g_b;

    // r = o + t d - mean
    let mut g_mean = -g_r;
    let g_t = grad.depth + g_r.dot(&ray.direction);

    // t = n.w / n.d
    g_mean += n * (g_t / denom);
    let mut g_n = (w - ray.direction * t) * (g_t / denom);
    g_n += grad.normal;

    let g_rot = Matrix3::from_columns(&[g_t1, g_t2, g_n]);
    let g_q = quaternion_to_matrix_backward(&splat.rotation, &g_rot);

    out[0] += g_mean.x;
    out[1] += g_mean.y;
    out[2] += g_mean.z;
    for k in 0..4 {
        out[3 + k] += g_q[k];
    }
    out[7] += g_log_s1;
    out[8] += g_log_s2;
    out[9] += g_logit;
    for k in 0..3 {
        out[10 + k] += grad.color[k];
    }
}
