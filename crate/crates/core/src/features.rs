//! Multi-level descriptor maps used for cross-view consistency.
//!
//! Each level holds eight channels computed from a box-downsampled copy of
//! the image. Every channel is normalized by its own 5x5 local mean and
//! standard deviation, which removes constant brightness offsets.

use alloc::vec::Vec;

use crate::image::{Image, Rgb};
use crate::Vec2;

pub const CHANNELS: usize = 8;
const LOCAL_RADIUS: isize = 2;
const NORM_EPS: f64 = 1e-6;

pub type Feature = [f64; CHANNELS];

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureLevel {
    /// Downsampling factor relative to the input image.
    pub scale: usize,
    pub map: Image<Feature>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePyramid {
    levels: Vec<FeatureLevel>,
    base_width: usize,
    base_height: usize,
}

impl FeaturePyramid {
    pub fn levels(&self) -> &[FeatureLevel] {
        &self.levels
    }

    pub fn level(&self, scale: usize) -> Option<&FeatureLevel> {
        self.levels.iter().find(|l| l.scale == scale)
    }

    pub fn base_size(&self) -> (usize, usize) {
        (self.base_width, self.base_height)
    }
}

/// Builds `count` levels with scales 1, 2, 4, ...; stops early if a level
/// would be empty.
pub fn build_pyramid(image: &Image<Rgb>, count: usize) -> FeaturePyramid {
    let mut levels = Vec::with_capacity(count);
    let mut current = image.clone();
    let mut scale = 1;
    for i in 0..count.max(1) {
        if i > 0 {
            if current.width() < 2 || current.height() < 2 {
                break;
            }
            current = downsample(&current);
            scale *= 2;
        }
        levels.push(FeatureLevel {
            scale,
            map: feature_map(&current),
        });
    }
    FeaturePyramid {
        levels,
        base_width: image.width(),
        base_height: image.height(),
    }
}

/// 2x2 box filter; odd trailing rows/columns are dropped.
pub fn downsample(image: &Image<Rgb>) -> Image<Rgb> {
    let w = image.width() / 2;
    let h = image.height() / 2;
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut c = [0.0; 3];
            for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let p = image.get(2 * x + dx, 2 * y + dy);
                for k in 0..3 {
                    c[k] += 0.25 * p[k];
                }
            }
            data.push(c);
        }
    }
    Image::from_vec(w, h, data)
}

fn clamped(image: &Image<f64>, x: isize, y: isize) -> f64 {
    let cx = x.clamp(0, image.width() as isize - 1) as usize;
    let cy = y.clamp(0, image.height() as isize - 1) as usize;
    *image.get(cx, cy)
}

/// Sobel responses with replicated borders; positive `gx` for intensity
/// increasing to the right.
pub fn sobel(gray: &Image<f64>) -> (Image<f64>, Image<f64>) {
    let mut gx = Image::filled(gray.width(), gray.height(), 0.0);
    let mut gy = gx.clone();
    for y in 0..gray.height() as isize {
        for x in 0..gray.width() as isize {
            let p = |dx: isize, dy: isize| clamped(gray, x + dx, y + dy);
            let sx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let sy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            *gx.get_mut(x as usize, y as usize) = sx / 8.0;
            *gy.get_mut(x as usize, y as usize) = sy / 8.0;
        }
    }
    (gx, gy)
}

/// Mean and standard deviation over the in-image part of each 5x5 window.
fn local_stats(channel: &Image<f64>) -> (Image<f64>, Image<f64>) {
    let (w, h) = (channel.width() as isize, channel.height() as isize);
    let mut mean = Image::filled(channel.width(), channel.height(), 0.0);
    let mut std = mean.clone();
    for y in 0..h {
        for x in 0..w {
            let (mut s, mut s2, mut n) = (0.0, 0.0, 0.0);
            for yy in (y - LOCAL_RADIUS).max(0)..=(y + LOCAL_RADIUS).min(h - 1) {
                for xx in (x - LOCAL_RADIUS).max(0)..=(x + LOCAL_RADIUS).min(w - 1) {
                    let v = *channel.get(xx as usize, yy as usize);
                    s += v;
                    s2 += v * v;
                    n += 1.0;
                }
            }
            let m = s / n;
            *mean.get_mut(x as usize, y as usize) = m;
            *std.get_mut(x as usize, y as usize) = libm::sqrt((s2 / n - m * m).max(0.0));
        }
    }
    (mean, std)
}

fn normalize_local(channel: &Image<f64>) -> Image<f64> {
    let (mean, std) = local_stats(channel);
    let data = channel
        .as_slice()
        .iter()
        .zip(mean.as_slice().iter().zip(std.as_slice()))
        .map(|(v, (m, s))| (v - m) / (s + NORM_EPS))
        .collect();
    Image::from_vec(channel.width(), channel.height(), data)
}

/// Raw (unnormalized) channels of one image.
pub fn raw_channels(image: &Image<Rgb>) -> [Image<f64>; CHANNELS] {
    let gray = image.map(|c| (c[0] + c[1] + c[2]) / 3.0);
    let chroma = |k: usize| image.map(|c| c[k] - (c[0] + c[1] + c[2]) / 3.0);
    let (gx, gy) = sobel(&gray);
    let magnitude = Image::from_vec(
        gray.width(),
        gray.height(),
        gx.as_slice()
            .iter()
            .zip(gy.as_slice())
            .map(|(a, b)| libm::sqrt(a * a + b * b))
            .collect(),
    );
    let (_, contrast) = local_stats(&gray);
    [gray.clone(), chroma(0), chroma(1), chroma(2), gx, gy, magnitude, contrast]
}

fn feature_map(image: &Image<Rgb>) -> Image<Feature> {
    let channels = raw_channels(image).map(|c| normalize_local(&c));
    let n = image.len();
    let data = (0..n)
        .map(|i| core::array::from_fn(|k| channels[k].as_slice()[i]))
        .collect();
    Image::from_vec(image.width(), image.height(), data)
}

/// A bilinear feature lookup and its derivative with respect to the
/// level-1 pixel coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureSample {
    pub value: Feature,
    pub d_dx: Feature,
    pub d_dy: Feature,
    /// Lower-left texel of the interpolation cell (after clamping).
    pub cell: (usize, usize),
}

/// Samples level `scale` at pixel coordinate `p` given in full-resolution
/// units (pixel centers at `i + 0.5`). Returns `None` when `p` lies outside
/// the full-resolution image or the level does not exist.
///
/// Within a level, texel `i` sits at `p = (i + 0.5) * scale`; coordinates
/// beyond the outermost texel centers are clamped (zero derivative).
pub fn sample_feature(pyramid: &FeaturePyramid, scale: usize, p: Vec2) -> Option<FeatureSample> {
    let (bw, bh) = pyramid.base_size();
    if !(p.x >= 0.0 && p.y >= 0.0 && p.x < bw as f64 && p.y < bh as f64) {
        return None;
    }
    let level = pyramid.level(scale)?;
    let map = &level.map;
    let inv = 1.0 / scale as f64;
    let axis = |v: f64, n: usize| -> (usize, usize, f64, f64) {
        let t = v * inv - 0.5;
        if n == 1 || t <= 0.0 {
            return (0, 0, 0.0, 0.0);
        }
        let max = (n - 1) as f64;
        if t >= max {
            return (n - 1, n - 1, 0.0, 0.0);
        }
        let i = libm::floor(t) as usize;
        (i, i + 1, t - i as f64, inv)
    };
    let (x0, x1, fx, dfx) = axis(p.x, map.width());
    let (y0, y1, fy, dfy) = axis(p.y, map.height());
    let a = map.get(x0, y0);
    let b = map.get(x1, y0);
    let c = map.get(x0, y1);
    let d = map.get(x1, y1);
    let mut out = FeatureSample {
        value: [0.0; CHANNELS],
        d_dx: [0.0; CHANNELS],
        d_dy: [0.0; CHANNELS],
        cell: (x0, y0),
    };
    for k in 0..CHANNELS {
        let top = a[k] + fx * (b[k] - a[k]);
        let bottom = c[k] + fx * (d[k] - c[k]);
        out.value[k] = top + fy * (bottom - top);
        out.d_dx[k] = dfx * ((1.0 - fy) * (b[k] - a[k]) + fy * (d[k] - c[k]));
        out.d_dy[k] = dfy * (bottom - top);
    }
    Some(out)
}

pub fn dot(a: &Feature, b: &Feature) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &Feature) -> f64 {
    libm::sqrt(dot(a, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::rng::rng_for;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_image(seed: u64, w: usize, h: usize) -> Image<Rgb> {
        let mut rng = rng_for(seed, "features");
        Image::from_vec(w, h, (0..w * h).map(|_| [rng.random(), rng.random(), rng.random()]).collect())
    }

    #[test]
    fn constant_image_has_no_gradients() {
        let img = Image::filled(20, 14, [0.3, 0.5, 0.7]);
        let p = build_pyramid(&img, 3);
        for level in p.levels() {
            for f in level.map.as_slice() {
                assert_eq!(f[4], 0.0);
                assert_eq!(f[5], 0.0);
                assert_eq!(f[6], 0.0);
            }
        }
    }

    #[test]
    fn level_shapes_halve_with_floor() {
        let p = build_pyramid(&random_image(1, 37, 22), 3);
        let shapes: Vec<_> = p.levels().iter().map(|l| (l.scale, l.map.width(), l.map.height())).collect();
        assert_eq!(shapes, vec![(1, 37, 22), (2, 18, 11), (4, 9, 5)]);
    }

    #[test]
    fn vertical_step_edge_response() {
        // edge between columns 7 and 8
        let w = 16;
        let img = Image::from_vec(w, 9, (0..w * 9).map(|i| if i % w >= 8 { [1.0; 3] } else { [0.0; 3] }).collect());
        let gray = img.map(|c| c[0]);
        let (gx, gy) = sobel(&gray);
        for y in 0..9 {
            assert_eq!(*gx.get(7, y), 0.5);
            assert_eq!(*gx.get(8, y), 0.5);
            assert_eq!(*gx.get(3, y), 0.0);
            for x in 0..w {
                assert_eq!(*gy.get(x, y), 0.0);
            }
        }
        // the normalized channel mirrors about the edge and flips sign with
        // the step direction
        let fwd = feature_map(&img);
        let rev = feature_map(&img.map(|c| [1.0 - c[0], 1.0 - c[1], 1.0 - c[2]]));
        for y in 0..9 {
            for x in 0..w / 2 {
                let a = fwd.get(x, y)[4];
                let b = fwd.get(w - 1 - x, y)[4];
                assert!((a - b).abs() < 1e-12);
                assert!((a + rev.get(x, y)[4]).abs() < 1e-12);
                assert!(fwd.get(x, y)[5].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sampling_at_texel_centers_and_midpoints() {
        let p = build_pyramid(&random_image(2, 24, 16), 3);
        for level in p.levels() {
            let s = level.scale as f64;
            let (i, j) = (3usize, 2usize);
            let c = Vec2::new((i as f64 + 0.5) * s, (j as f64 + 0.5) * s);
            let v = sample_feature(&p, level.scale, c).unwrap().value;
            assert_eq!(&v, level.map.get(i, j));
            let mid = Vec2::new((i as f64 + 1.0) * s, (j as f64 + 0.5) * s);
            let m = sample_feature(&p, level.scale, mid).unwrap().value;
            for k in 0..CHANNELS {
                let avg = 0.5 * (level.map.get(i, j)[k] + level.map.get(i + 1, j)[k]);
                assert!((m[k] - avg).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn out_of_frame_samples_are_dropped() {
        let p = build_pyramid(&random_image(3, 10, 10), 2);
        assert!(sample_feature(&p, 1, Vec2::new(-0.01, 4.0)).is_none());
        assert!(sample_feature(&p, 2, Vec2::new(4.0, 10.0)).is_none());
        assert!(sample_feature(&p, 8, Vec2::new(4.0, 4.0)).is_none());
        assert!(sample_feature(&p, 2, Vec2::new(0.1, 9.9)).is_some());
    }

    #[test]
    fn deterministic_pyramids() {
        let img = random_image(4, 30, 20);
        assert_eq!(build_pyramid(&img, 3), build_pyramid(&img, 3));
    }

    #[test]
    fn sample_derivative_matches_finite_differences() {
        let p = build_pyramid(&random_image(5, 20, 20), 3);
        let mut rng = rng_for(5, "feature-fd");
        for _ in 0..200 {
            let q = Vec2::new(rng.random_range(1.0..19.0), rng.random_range(1.0..19.0));
            for scale in [1, 2, 4] {
                let s = sample_feature(&p, scale, q).unwrap();
                let h = 1e-6;
                let px = sample_feature(&p, scale, q + Vec2::new(h, 0.0)).unwrap();
                let mx = sample_feature(&p, scale, q - Vec2::new(h, 0.0)).unwrap();
                if px.cell != mx.cell {
                    continue;
                }
                for k in 0..CHANNELS {
                    let fd = (px.value[k] - mx.value[k]) / (2.0 * h);
                    assert!((fd - s.d_dx[k]).abs() < 1e-5 * fd.abs().max(1.0));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn brightness_offset_leaves_normalized_channels(offset in -0.1f64..0.1) {
            let img = random_image(6, 16, 12).map(|c| [0.2 + 0.6 * c[0], 0.2 + 0.6 * c[1], 0.2 + 0.6 * c[2]]);
            let a = build_pyramid(&img, 3);
            let b = build_pyramid(&img.map(|c| [c[0] + offset, c[1] + offset, c[2] + offset]), 3);
            for (la, lb) in a.levels().iter().zip(b.levels()) {
                for (fa, fb) in la.map.as_slice().iter().zip(lb.map.as_slice()) {
                    // the gray channel shifts before normalization but its
                    // locally normalized value is offset invariant as well
                    for k in 1..CHANNELS {
                        prop_assert!((fa[k] - fb[k]).abs() < 1e-6);
                    }
                }
            }
        }

        #[test]
        fn sampling_is_lipschitz(x in 0.5f64..15.5, y in 0.5f64..11.5, dx in -1e-3f64..1e-3, dy in -1e-3f64..1e-3) {
            let img = random_image(7, 16, 12);
            let p = build_pyramid(&img, 3);
            for level in p.levels() {
                let range = level.map.as_slice().iter().flat_map(|f| f.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
                let a = sample_feature(&p, level.scale, Vec2::new(x, y)).unwrap();
                let b = sample_feature(&p, level.scale, Vec2::new(x + dx, y + dy)).unwrap();
                let bound = 2.0 * range * (dx.abs() + dy.abs()) / level.scale as f64 + 1e-12;
                for k in 0..CHANNELS {
                    prop_assert!((a.value[k] - b.value[k]).abs() <= bound);
                }
            }
        }

        #[test]
        fn self_similarity(x in 0.0f64..15.99, y in 0.0f64..11.99) {
            let p = build_pyramid(&random_image(8, 16, 12), 3);
            for level in p.levels() {
                let s = sample_feature(&p, level.scale, Vec2::new(x, y)).unwrap().value;
                let n = norm(&s);
                if n > 1e-9 {
                    prop_assert!((dot(&s, &s) / (n * n) - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
