//! Multi-view feature consistency through the rendered depth.

use alloc::vec::Vec;
use hashbrown::HashMap;

use crate::features::{dot, norm, sample_feature, FeaturePyramid, CHANNELS};
use crate::gates::GateTrace;
use crate::geometry::Camera;
use crate::image::Image;
use crate::render::COVERAGE_MIN;
use crate::{Vec2, Vec3};

const NORM_MIN: f64 = 1e-9;

/// Marks, for every point, whether it is the nearest point to the source
/// camera among all points projecting into the same pixel cell. Equal
/// distances resolve to the lower index.
pub fn visibility_mask(points: &[Vec3], source: &Camera) -> Vec<bool> {
    let mut best: HashMap<(u32, u32), (f64, usize)> = HashMap::new();
    let origin = source.center();
    for (i, x) in points.iter().enumerate() {
        let Ok((p, _)) = source.project_point(x) else {
            continue;
        };
        if !source.contains_pixel(&p) {
            continue;
        }
        let cell = (libm::floor(p.x) as u32, libm::floor(p.y) as u32);
        let dist = (x - origin).norm();
        best.entry(cell)
            .and_modify(|e| {
                if dist < e.0 {
                    *e = (dist, i);
                }
            })
            .or_insert((dist, i));
    }
    let mut mask = alloc::vec![false; points.len()];
    for (_, i) in best.values() {
        mask[*i] = true;
    }
    mask
}

/// Cameras and pyramids of every view, indexed by view id.
#[derive(Clone, Copy)]
pub struct FeatureViews<'a> {
    pub cameras: &'a [Camera],
    pub pyramids: &'a [FeaturePyramid],
}

/// Mean of `(1/l) * (1 - cos)` between reference and source features at
/// points lifted with the reference view's rendered depth.
pub fn feature_loss(reference: usize, sources: &[usize], depth: &Image<f64>, acc: &Image<f64>, views: FeatureViews<'_>) -> f64 {
    feature_term(reference, sources, depth, acc, views, None, None)
}

pub(crate) fn feature_term(
    reference: usize,
    sources: &[usize],
    depth: &Image<f64>,
    acc: &Image<f64>,
    views: FeatureViews<'_>,
    mut grad: Option<(&mut [f64], f64)>,
    mut gates: Option<&mut GateTrace>,
) -> f64 {
    let cam_r = &views.cameras[reference];
    let pyr_r = &views.pyramids[reference];
    let w = depth.width();

    let mut pixels = Vec::new();
    let mut points = Vec::new();
    let mut dirs = Vec::new();
    for (i, (&d, &a)) in depth.as_slice().iter().zip(acc.as_slice()).enumerate() {
        if a < COVERAGE_MIN || d <= 0.0 {
            continue;
        }
        let ray = cam_r.ray_through_pixel(&Camera::pixel_center(i % w, i / w));
        pixels.push(i);
        points.push(ray.at(d));
        dirs.push(ray.direction);
    }

    // (pixel, d term / d depth) pairs, scaled by the final count afterwards
    let mut partials: Vec<(usize, f64)> = Vec::new();
    let (mut sum, mut count) = (0.0, 0usize);
    for &s in sources {
        let cam_s = &views.cameras[s];
        let pyr_s = &views.pyramids[s];
        let visible = visibility_mask(&points, cam_s);
        for (n, &pixel) in pixels.iter().enumerate() {
            if let Some(g) = gates.as_deref_mut() {
                g.record_bool(visible[n]);
            }
            if !visible[n] {
                continue;
            }
            let Ok((p_s, _)) = cam_s.project_point(&points[n]) else {
                continue;
            };
            let p_r = Camera::pixel_center(pixel % w, pixel / w);
            let jac = cam_s.project_jacobian(&points[n]).ok();
            for level in pyr_r.levels() {
                let l = level.scale;
                let (Some(fr), Some(fs)) = (sample_feature(pyr_r, l, p_r), sample_feature(pyr_s, l, p_s)) else {
                    if let Some(g) = gates.as_deref_mut() {
                        g.record(u64::MAX);
                    }
                    continue;
                };
                if let Some(g) = gates.as_deref_mut() {
                    g.record(((fs.cell.0 as u64) << 32) | fs.cell.1 as u64);
                }
                let (nr, ns) = (norm(&fr.value), norm(&fs.value));
                if nr < NORM_MIN || ns < NORM_MIN {
                    continue;
                }
                let cos = dot(&fr.value, &fs.value) / (nr * ns);
                let weight = 1.0 / l as f64;
                sum += weight * (1.0 - cos);
                count += 1;
                if grad.is_none() {
                    continue;
                }
                let Some(jac) = jac else { continue };
                // d(1 - cos)/d fs = -(fr / (|fr||fs|) - cos * fs / |fs|^2)
                let mut g_p = Vec2::zeros();
                for k in 0..CHANNELS {
                    let g_fs = -weight * (fr.value[k] / (nr * ns) - cos * fs.value[k] / (ns * ns));
                    g_p.x += g_fs * fs.d_dx[k];
                    g_p.y += g_fs * fs.d_dy[k];
                }
                let g_x: Vec3 = jac.transpose() * g_p;
                partials.push((pixel, g_x.dot(&dirs[n])));
            }
        }
    }
    if count == 0 {
        return 0.0;
    }
    let inv = 1.0 / count as f64;
    if let Some((g, scale)) = grad.as_mut() {
        for (pixel, v) in partials {
            g[pixel] += *scale * v * inv;
        }
    }
    sum * inv
}
