//! Depth distortion and depth-normal consistency.

use crate::gates::GateTrace;
use crate::geometry::Camera;
use crate::image::Image;
use crate::render::{depth_to_normal, depth_to_normal_backward, record_normal_gates, PixelGrads, RenderBuffers};
use crate::splat::Splat;
use crate::Vec3;

/// `2 * sum_{i<j} w_i w_j |d_i - d_j|` for depth-sorted records.
pub fn pixel_distortion(weights: &[f64], depths: &[f64]) -> f64 {
    let (mut acc_w, mut acc_wd, mut sum) = (0.0, 0.0, 0.0);
    for (w, d) in weights.iter().zip(depths) {
        sum += w * (d * acc_w - acc_wd);
        acc_w += w;
        acc_wd += w * d;
    }
    2.0 * sum
}

/// Mean per-pixel distortion over covered pixels.
pub fn distortion_loss(buffers: &RenderBuffers) -> f64 {
    distortion_term(buffers, None)
}

pub(crate) fn distortion_term(buffers: &RenderBuffers, mut grad: Option<(&mut PixelGrads, f64)>) -> f64 {
    let covered = (0..buffers.pixel_count()).filter(|&i| buffers.is_covered(i)).count();
    if covered == 0 {
        return 0.0;
    }
    let inv = 1.0 / covered as f64;
    let mut total = 0.0;
    for i in 0..buffers.pixel_count() {
        if !buffers.is_covered(i) {
            continue;
        }
        let cs = buffers.contribs(i);
        let (mut pre_w, mut pre_wd) = (0.0, 0.0);
        let (tot_w, tot_wd) = cs.iter().fold((0.0, 0.0), |(a, b), c| (a + c.weight, b + c.weight * c.depth));
        let base = buffers.contrib_offset(i);
        for (k, c) in cs.iter().enumerate() {
            total += 2.0 * c.weight * (c.depth * pre_w - pre_wd);
            if let Some((g, scale)) = grad.as_mut() {
                let suf_w = tot_w - pre_w - c.weight;
                let suf_wd = tot_wd - pre_wd - c.weight * c.depth;
                let s = *scale * inv * 2.0;
                g.contrib_weight[base + k] += s * (c.depth * pre_w - pre_wd + suf_wd - c.depth * suf_w);
                g.contrib_depth[base + k] += s * c.weight * (pre_w - suf_w);
            }
            pre_w += c.weight;
            pre_wd += c.weight * c.depth;
        }
    }
    total * inv
}

/// Mean over covered pixels with a depth-derived normal of
/// `sum_i w_i (1 - n_i . N)`, with surfel normals facing the camera.
pub fn normal_loss(camera: &Camera, splats: &[Splat], buffers: &RenderBuffers) -> f64 {
    normal_term(camera, splats, buffers, None, None)
}

pub(crate) fn normal_term(
    camera: &Camera,
    splats: &[Splat],
    buffers: &RenderBuffers,
    mut grad: Option<(&mut PixelGrads, f64)>,
    mut gates: Option<&mut GateTrace>,
) -> f64 {
    let depth_normals = depth_to_normal(camera, &buffers.depth);
    if let Some(g) = gates.as_deref_mut() {
        record_normal_gates(camera, &buffers.depth, g);
    }
    let n = buffers.pixel_count();
    let used = |i: usize| buffers.is_covered(i) && depth_normals.as_slice()[i] != Vec3::zeros();
    let count = (0..n).filter(|&i| used(i)).count();
    if count == 0 {
        return 0.0;
    }
    let inv = 1.0 / count as f64;
    let w = buffers.width();
    let normals: alloc::vec::Vec<Vec3> = splats.iter().map(Splat::normal).collect();
    let mut grad_n = grad.as_ref().map(|_| Image::filled(w, buffers.height(), Vec3::zeros()));
    let mut total = 0.0;
    for i in 0..n {
        if !used(i) {
            continue;
        }
        let big_n = depth_normals.as_slice()[i];
        let dir = camera.ray_through_pixel(&Camera::pixel_center(i % w, i / w)).direction;
        let base = buffers.contrib_offset(i);
        let mut g_big = Vec3::zeros();
        for (k, c) in buffers.contribs(i).iter().enumerate() {
            let raw = normals[c.splat as usize];
            let flip = if raw.dot(&dir) < 0.0 { 1.0 } else { -1.0 };
            if let Some(g) = gates.as_deref_mut() {
                g.record_bool(flip > 0.0);
            }
            let facing = raw * flip;
            let cos = facing.dot(&big_n);
            total += c.weight * (1.0 - cos);
            if let Some((g, scale)) = grad.as_mut() {
                let s = *scale * inv;
                g.contrib_weight[base + k] += s * (1.0 - cos);
                g.contrib_normal[base + k] -= big_n * (s * c.weight * flip);
                g_big -= facing * (s * c.weight);
            }
        }
        if let Some(img) = grad_n.as_mut() {
            img.as_mut_slice()[i] = g_big;
        }
    }
    if let (Some((g, _)), Some(img)) = (grad, grad_n) {
        depth_to_normal_backward(camera, &buffers.depth, &img, &mut g.depth);
    }
    total * inv
}
