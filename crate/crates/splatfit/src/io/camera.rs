//! Camera JSON: intrinsics, image size and a row-major 3x4 camera-to-world pose.

use std::path::Path;

use serde::{Deserialize, Serialize};
use splatfit_core::geometry::{Camera, Intrinsics};
use splatfit_core::nalgebra::Matrix3;
use splatfit_core::Vec3;

use super::{read_bytes, write_atomic, IoError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraJson {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub c2w: [f64; 12],
}

impl From<&Camera> for CameraJson {
    fn from(c: &Camera) -> Self {
        let k = c.intrinsics();
        let r = c.rotation();
        let t = c.center();
        let mut c2w = [0.0; 12];
        for row in 0..3 {
            for col in 0..3 {
                c2w[4 * row + col] = r[(row, col)];
            }
            c2w[4 * row + 3] = t[row];
        }
        Self {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: c.width(),
            height: c.height(),
            c2w,
        }
    }
}

impl CameraJson {
    pub fn to_camera(&self) -> Result<Camera, String> {
        let m = &self.c2w;
        let r = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let t = Vec3::new(m[3], m[7], m[11]);
        let k = Intrinsics {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
        };
        Camera::new(k, r, t, self.width, self.height).map_err(|e| e.to_string())
    }
}

pub fn write_camera(path: &Path, camera: &Camera) -> Result<(), IoError> {
    let mut s = serde_json::to_string_pretty(&CameraJson::from(camera)).expect("camera serializes");
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_camera(path: &Path) -> Result<Camera, IoError> {
    let bytes = read_bytes(path)?;
    let json: CameraJson = serde_json::from_slice(&bytes).map_err(|e| IoError::format(path, e.to_string()))?;
    json.to_camera().map_err(|e| IoError::format(path, e))
}
