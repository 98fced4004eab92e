//! Portable float maps, little-endian, rows stored bottom to top.

use std::path::Path;

use splatfit_core::image::Image;
use splatfit_core::Vec3;

use super::{read_bytes, write_atomic, IoError};

fn encode(width: usize, height: usize, channels: usize, value: impl Fn(usize, usize) -> f32) -> Vec<u8> {
    let tag = if channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{tag}\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(width * height * channels * 4);
    for y in (0..height).rev() {
        for x in 0..width {
            for c in 0..channels {
                out.extend_from_slice(&value(y * width + x, c).to_le_bytes());
            }
        }
    }
    out
}

fn decode(path: &Path, channels: usize) -> Result<(usize, usize, Vec<f32>), IoError> {
    let bytes = read_bytes(path)?;
    let bad = |m: &str| IoError::format(path, m.to_string());
    let mut fields = Vec::new();
    let mut pos = 0;
    // three whitespace-separated header tokens groups: tag, size, scale
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?);
    }
    pos += 1;
    let expected = if channels == 3 { "PF" } else { "Pf" };
    if fields[0] != expected {
        return Err(bad(&format!("expected {expected} map, found {}", fields[0])));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = fields[3].parse().map_err(|_| bad("bad scale"))?;
    let n = w * h * channels;
    let body = bytes.get(pos..pos + 4 * n).ok_or_else(|| bad("truncated data"))?;
    let mut data = vec![0f32; n];
    for y in 0..h {
        let src_row = h - 1 - y;
        for i in 0..w * channels {
            let o = 4 * (src_row * w * channels + i);
            let raw = [body[o], body[o + 1], body[o + 2], body[o + 3]];
            data[y * w * channels + i] = if scale < 0.0 { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        }
    }
    Ok((w, h, data))
}

pub fn write_pfm(path: &Path, img: &Image<f64>) -> Result<(), IoError> {
    let s = img.as_slice();
    write_atomic(path, &encode(img.width(), img.height(), 1, |i, _| s[i] as f32))
}

pub fn read_pfm(path: &Path) -> Result<Image<f64>, IoError> {
    let (w, h, data) = decode(path, 1)?;
    Ok(Image::from_vec(w, h, data.into_iter().map(f64::from).collect()))
}

pub fn write_pfm_rgb(path: &Path, img: &Image<Vec3>) -> Result<(), IoError> {
    let s = img.as_slice();
    write_atomic(path, &encode(img.width(), img.height(), 3, |i, c| s[i][c] as f32))
}

pub fn read_pfm_rgb(path: &Path) -> Result<Image<Vec3>, IoError> {
    let (w, h, data) = decode(path, 3)?;
    let px = data.chunks(3).map(|c| Vec3::new(c[0].into(), c[1].into(), c[2].into())).collect();
    Ok(Image::from_vec(w, h, px))
}
