//! Pinhole cameras, rays and reprojection.
//!
//! Conventions:
//! - camera frame is x right, y down, z forward;
//! - poses are stored camera-to-world, world-to-camera is derived on demand;
//! - pixel `(i, j)` has its center at `(i + 0.5, j + 0.5)`;
//! - "depth" handed around the pipeline is the Euclidean distance along the
//!   unit ray; camera-frame z is only used inside [`Camera::project_point`].

use nalgebra::{Matrix2x3, Matrix3};
use thiserror::Error;

use crate::{math, Vec2, Vec3};

/// Smallest camera-frame z accepted by projection.
pub const MIN_CAMERA_Z: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("ray depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("invalid camera: {0}")]
    InvalidCamera(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Square pixels with the principal point at the image center.
    pub fn from_fov(width: u32, height: u32, fov_x_deg: f64) -> Self {
        let f = 0.5 * width as f64 / math::tan(0.5 * fov_x_deg.to_radians());
        Self {
            fx: f,
            fy: f,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    intrinsics: Intrinsics,
    rotation: Matrix3<f64>,
    translation: Vec3,
    width: u32,
    height: u32,
}

impl Camera {
    /// Builds a camera from intrinsics and a camera-to-world pose.
    pub fn new(
        intrinsics: Intrinsics,
        rotation: Matrix3<f64>,
        translation: Vec3,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidCamera("image size must be non-zero"));
        }
        if !(intrinsics.fx > 0.0 && intrinsics.fy > 0.0) {
            return Err(GeometryError::InvalidCamera("focal lengths must be positive"));
        }
        if !(intrinsics.cx > 0.0
            && intrinsics.cx < width as f64
            && intrinsics.cy > 0.0
            && intrinsics.cy < height as f64)
        {
            return Err(GeometryError::InvalidCamera(
                "principal point must lie inside the image",
            ));
        }
        if orthonormality_error(&rotation) > 1e-9 || rotation.determinant() < 0.0 {
            return Err(GeometryError::InvalidCamera("rotation is not a proper rotation"));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidCamera("translation is not finite"));
        }
        Ok(Self {
            intrinsics,
            rotation,
            translation,
            width,
            height,
        })
    }

    /// Camera at `eye` looking at `target`, with image "up" as close to `up` as possible.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        intrinsics: Intrinsics,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or(GeometryError::InvalidCamera("eye coincides with target"))?;
        let down = (forward * forward.dot(&up) - up)
            .try_normalize(1e-12)
            .ok_or(GeometryError::InvalidCamera("up is parallel to the view direction"))?;
        let right = down.cross(&forward);
        let rotation = Matrix3::from_columns(&[right, down, forward]);
        Self::new(intrinsics, rotation, eye, width, height)
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    /// Camera-to-world rotation.
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        self.translation
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Continuous coordinate of the center of pixel `(x, y)`.
    pub fn pixel_center(x: usize, y: usize) -> Vec2 {
        Vec2::new(x as f64 + 0.5, y as f64 + 0.5)
    }

    pub fn contains_pixel(&self, p: &Vec2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64
    }

    pub fn world_to_camera(&self, x: &Vec3) -> Vec3 {
        self.rotation.tr_mul(&(x - self.translation))
    }

    pub fn camera_to_world(&self, x: &Vec3) -> Vec3 {
        self.rotation * x + self.translation
    }

    /// Unit ray from the camera center through continuous pixel `p`.
    pub fn ray_through_pixel(&self, p: &Vec2) -> Ray {
        debug_assert!(p.iter().all(|v| v.is_finite()));
        let k = &self.intrinsics;
        let dir_cam = Vec3::new((p.x - k.cx) / k.fx, (p.y - k.cy) / k.fy, 1.0);
        Ray {
            origin: self.translation,
            direction: (self.rotation * dir_cam).normalize(),
        }
    }

    /// Perspective projection; returns the pixel and the camera-frame z.
    pub fn project_point(&self, x: &Vec3) -> Result<(Vec2, f64), GeometryError> {
        let c = self.world_to_camera(x);
        if c.z <= MIN_CAMERA_Z {
            return Err(GeometryError::BehindCamera(c.z));
        }
        let k = &self.intrinsics;
        Ok((
            Vec2::new(k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy),
            c.z,
        ))
    }

    /// Jacobian of the projected pixel with respect to the world point.
    pub fn project_jacobian(&self, x: &Vec3) -> Result<Matrix2x3<f64>, GeometryError> {
        let c = self.world_to_camera(x);
        if c.z <= MIN_CAMERA_Z {
            return Err(GeometryError::BehindCamera(c.z));
        }
        let k = &self.intrinsics;
        let iz = 1.0 / c.z;
        let d_cam = Matrix2x3::new(
            k.fx * iz,
            0.0,
            -k.fx * c.x * iz * iz,
            0.0,
            k.fy * iz,
            -k.fy * c.y * iz * iz,
        );
        Ok(d_cam * self.rotation.transpose())
    }

    /// World point at ray depth `depth` behind pixel `p`.
    pub fn unproject_pixel(&self, p: &Vec2, depth: f64) -> Result<Vec3, GeometryError> {
        if !(depth > 0.0) {
            return Err(GeometryError::NonPositiveDepth(depth));
        }
        Ok(self.ray_through_pixel(p).at(depth))
    }
}

/// Max absolute entry of `R^T R - I`.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}
