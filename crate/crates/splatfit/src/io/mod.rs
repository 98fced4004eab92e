//! File formats: PFM maps, PNG images, PLY point/splat/mesh files, OBJ
//! meshes and camera JSON.

mod camera;
mod obj;
mod pfm;
mod ply;

pub use camera::{read_camera, write_camera, CameraJson};
pub use obj::write_obj;
pub use pfm::{read_pfm, read_pfm_rgb, write_pfm, write_pfm_rgb};
pub use ply::{read_points, read_splats, write_mesh_ply, write_points, write_splats};

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use splatfit_core::image::{Image, Rgb};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("missing file {0}")]
    Missing(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl IoError {
    pub(crate) fn format(path: &Path, message: impl Into<String>) -> Self {
        IoError::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => IoError::Missing(path.to_path_buf()),
        _ => IoError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let wrap = |e| IoError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(wrap)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(wrap)?;
    fs::rename(&tmp, path).map_err(wrap)
}

/// 8-bit RGB PNG; values are clamped to [0, 1] and rounded.
pub fn write_png(path: &Path, img: &Image<Rgb>) -> Result<(), IoError> {
    let data: Vec<u8> = img
        .as_slice()
        .iter()
        .flat_map(|c| c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
        .collect();
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, data).expect("buffer matches image size");
    let mut out = io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png).map_err(|e| IoError::format(path, e.to_string()))?;
    write_atomic(path, out.get_ref())
}

pub fn read_png(path: &Path) -> Result<Image<Rgb>, IoError> {
    let bytes = read_bytes(path)?;
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| IoError::format(path, e.to_string()))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| p.0.map(|v| f64::from(v) / 255.0)).collect();
    Ok(Image::from_vec(w as usize, h as usize, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_quantizes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let img = Image::from_vec(2, 1, vec![[0.0, 0.5, 1.0], [0.2, 1.3, -0.1]]);
        write_png(&p, &img).unwrap();
        let back = read_png(&p).unwrap();
        assert_eq!(back.width(), 2);
        assert_eq!(back.as_slice()[0], [0.0, 128.0 / 255.0, 1.0]);
        assert_eq!(back.as_slice()[1], [51.0 / 255.0, 1.0, 0.0]);
    }

    #[test]
    fn missing_files_are_named() {
        let err = read_png(Path::new("/nonexistent/x.png")).unwrap_err();
        assert!(matches!(err, IoError::Missing(p) if p.ends_with("x.png")));
    }
}
