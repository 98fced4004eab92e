//! Signed distance scenes, sphere tracing and procedural albedo.

use alloc::vec::Vec;

use crate::geometry::Ray;
use crate::Vec3;

/// Stop sphere tracing once `|sdf|` falls below this.
pub const SURFACE_EPS: f64 = 1e-5;
const MAX_STEPS: usize = 512;
const GRADIENT_STEP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "lowercase", deny_unknown_fields))]
pub enum Primitive {
    Sphere { center: [f64; 3], radius: f64 },
    Box { center: [f64; 3], half_extents: [f64; 3] },
}

impl Primitive {
    pub fn distance(&self, p: &Vec3) -> f64 {
        match self {
            Primitive::Sphere { center, radius } => (p - Vec3::from(*center)).norm() - radius,
            Primitive::Box { center, half_extents } => {
                let d = p - Vec3::from(*center);
                let q = Vec3::new(d.x.abs(), d.y.abs(), d.z.abs()) - Vec3::from(*half_extents);
                let outside = Vec3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
                outside + q.x.max(q.y).max(q.z).min(0.0)
            }
        }
    }

    /// Radius of the smallest origin-centered sphere containing the primitive.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            Primitive::Sphere { center, radius } => Vec3::from(*center).norm() + radius,
            Primitive::Box { center, half_extents } => {
                let c = Vec3::from(*center);
                let h = Vec3::from(*half_extents);
                let mut r: f64 = 0.0;
                for sx in [-1.0, 1.0] {
                    for sy in [-1.0, 1.0] {
                        for sz in [-1.0, 1.0] {
                            r = r.max((c + Vec3::new(sx * h.x, sy * h.y, sz * h.z)).norm());
                        }
                    }
                }
                r
            }
        }
    }

    pub fn surface_area(&self) -> f64 {
        match self {
            Primitive::Sphere { radius, .. } => 4.0 * core::f64::consts::PI * radius * radius,
            Primitive::Box { half_extents: h, .. } => 8.0 * (h[0] * h[1] + h[1] * h[2] + h[0] * h[2]),
        }
    }
}

/// Polynomial smooth minimum with blend radius `k`.
pub fn smooth_min(a: f64, b: f64, k: f64) -> f64 {
    if k <= 0.0 {
        return a.min(b);
    }
    let h = (k - (a - b).abs()).max(0.0) / k;
    a.min(b) - h * h * k * 0.25
}

/// Smooth union of primitives.
#[derive(Clone, Debug, PartialEq)]
pub struct SdfScene {
    pub primitives: Vec<Primitive>,
    pub blend: f64,
}

impl SdfScene {
    pub fn distance(&self, p: &Vec3) -> f64 {
        let mut iter = self.primitives.iter();
        let Some(first) = iter.next() else {
            return f64::INFINITY;
        };
        iter.fold(first.distance(p), |acc, prim| smooth_min(acc, prim.distance(p), self.blend))
    }

    /// Unit outward normal from central differences.
    pub fn normal(&self, p: &Vec3) -> Vec3 {
        let h = GRADIENT_STEP;
        let g = Vec3::new(
            self.distance(&(p + Vec3::x() * h)) - self.distance(&(p - Vec3::x() * h)),
            self.distance(&(p + Vec3::y() * h)) - self.distance(&(p - Vec3::y() * h)),
            self.distance(&(p + Vec3::z() * h)) - self.distance(&(p - Vec3::z() * h)),
        );
        g.try_normalize(1e-300).unwrap_or_else(Vec3::z)
    }

    /// Radius of an origin-centered sphere containing the whole surface.
    pub fn bounding_radius(&self) -> f64 {
        // the smooth union can bulge outward by at most blend / 4
        self.primitives.iter().map(Primitive::bounding_radius).fold(0.0, f64::max) + 0.25 * self.blend.max(0.0)
    }

    /// First intersection along the ray, or `None` on a miss.
    pub fn trace(&self, ray: &Ray) -> Option<f64> {
        let bound = self.bounding_radius() + 1e-3;
        let b = ray.origin.dot(&ray.direction);
        let c = ray.origin.norm_squared() - bound * bound;
        let disc = b * b - c;
        if disc < 0.0 {
            return None;
        }
        let root = libm::sqrt(disc);
        let far = -b + root;
        if far < 0.0 {
            return None;
        }
        let mut t = (-b - root).max(0.0);
        for _ in 0..MAX_STEPS {
            let d = self.distance(&ray.at(t));
            if d.abs() < SURFACE_EPS {
                // a few more steps tighten the hit well below the stopping tolerance
                for _ in 0..4 {
                    t += self.distance(&ray.at(t));
                }
                return Some(t);
            }
            t += d;
            if t > far {
                return None;
            }
        }
        None
    }

    /// Moves `p` onto the zero set along the gradient; `None` if it fails
    /// to converge.
    pub fn project(&self, p: &Vec3) -> Option<Vec3> {
        let mut x = *p;
        for _ in 0..50 {
            let d = self.distance(&x);
            if d.abs() < 1e-10 {
                return Some(x);
            }
            x -= self.normal(&x) * d;
        }
        (self.distance(&x).abs() < 1e-7).then_some(x)
    }
}

/// Two-tone 3D checker modulated by marble veins.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TextureSpec {
    /// Checker cells per scene unit.
    pub checker_scale: f64,
    pub marble_frequency: f64,
    pub marble_turbulence: f64,
    pub color_a: [f64; 3],
    pub color_b: [f64; 3],
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self {
            checker_scale: 5.0,
            marble_frequency: 9.0,
            marble_turbulence: 2.5,
            color_a: [0.85, 0.55, 0.3],
            color_b: [0.25, 0.45, 0.8],
        }
    }
}

impl TextureSpec {
    pub fn albedo(&self, p: &Vec3) -> [f64; 3] {
        let cell = |v: f64| libm::floor(v * self.checker_scale) as i64;
        let odd = (cell(p.x) + cell(p.y) + cell(p.z)).rem_euclid(2) == 1;
        let base = if odd { self.color_a } else { self.color_b };
        let turbulence = libm::sin(3.1 * p.x + 1.7 * p.z) * libm::sin(2.3 * p.y - 1.3 * p.x) + 0.5 * libm::sin(5.3 * p.z + 4.1 * p.y);
        let vein = 0.5 + 0.5 * libm::sin(self.marble_frequency * (p.x + 0.6 * p.y + 0.3 * p.z) + self.marble_turbulence * turbulence);
        let m = 0.55 + 0.45 * vein;
        base.map(|c| c * m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn primitive_distances() {
        let s = Primitive::Sphere {
            center: [0.0, 0.0, 0.0],
            radius: 0.5,
        };
        assert!((s.distance(&Vec3::new(1.0, 0.0, 0.0)) - 0.5).abs() < 1e-15);
        let b = Primitive::Box {
            center: [0.0, 0.0, 0.0],
            half_extents: [0.5, 0.25, 0.25],
        };
        assert!((b.distance(&Vec3::new(1.0, 0.0, 0.0)) - 0.5).abs() < 1e-15);
        assert!((b.distance(&Vec3::new(0.0, 0.0, 0.0)) + 0.25).abs() < 1e-15);
        assert!((b.distance(&Vec3::new(1.5, 1.25, 0.0)) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn smooth_min_bounds() {
        for (a, b) in [(0.1, 0.2), (0.5, -0.3), (0.0, 0.0), (1.0, 1.05)] {
            let m = smooth_min(a, b, 0.1);
            assert!(m <= a.min(b));
            assert!(m >= a.min(b) - 0.025);
        }
        assert_eq!(smooth_min(0.0, 1.0, 0.1), 0.0);
    }

    #[test]
    fn trace_hits_sphere_analytically() {
        let scene = SdfScene {
            primitives: vec![Primitive::Sphere {
                center: [0.0, 0.0, 0.0],
                radius: 0.5,
            }],
            blend: 0.0,
        };
        let ray = Ray {
            origin: Vec3::new(0.0, 0.0, -2.0),
            direction: Vec3::z(),
        };
        assert!((scene.trace(&ray).unwrap() - 1.5).abs() < 1e-9);
        let miss = Ray {
            origin: Vec3::new(0.0, 0.6, -2.0),
            direction: Vec3::z(),
        };
        assert!(scene.trace(&miss).is_none());
        let p = scene.project(&Vec3::new(0.3, 0.2, 0.1)).unwrap();
        assert!((p.norm() - 0.5).abs() < 1e-9);
    }
}
