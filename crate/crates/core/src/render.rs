//! Front-to-back compositing of surfels and the matching reverse pass.
//!
//! Every pixel sorts its own intersections by ray depth, so results do not
//! depend on the order of the input set or on how surfels are binned. The
//! per-pixel contribution lists are kept in [`RenderBuffers`]; the reverse
//! pass walks them again to distribute gradients back to surfel parameters.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::gates::GateTrace;
use crate::geometry::{Camera, Ray};
use crate::image::{Image, Rgb};
use crate::splat::{intersect_backward, intersect_with_frame, HitGrad, Splat, SplatFrame, SplatGrad, CUTOFF_SQ, PARAM_COUNT};
use crate::{Vec2, Vec3};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fragments with `opacity * gaussian` below this are skipped.
pub const ALPHA_MIN: f64 = 1.0 / 255.0;
/// Traversal stops once transmittance drops below this.
pub const TRANSMITTANCE_MIN: f64 = 1e-4;
/// Stabilizer of the normalized depth.
pub const DEPTH_EPS: f64 = 1e-8;
/// Pixels with accumulated weight below this count as uncovered.
pub const COVERAGE_MIN: f64 = 1e-6;

const TILE: usize = 8;
const GRAD_CHUNKS: usize = 16;

/// One blended intersection of a pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contrib {
    pub splat: u32,
    /// Blending weight.
    pub weight: f64,
    /// Ray parameter of the intersection.
    pub depth: f64,
    pub gaussian: f64,
    /// `opacity * gaussian`.
    pub alpha: f64,
    /// Transmittance in front of this intersection.
    pub transmittance: f64,
}

/// A candidate intersection before blending.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fragment {
    pub splat: u32,
    pub alpha: f64,
    pub depth: f64,
    pub gaussian: f64,
    pub color: Rgb,
    /// Normal oriented toward the viewer.
    pub normal: Vec3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PixelRecord {
    pub color: Rgb,
    pub depth: f64,
    pub normal: Vec3,
    pub acc_weight: f64,
    pub contribs: Vec<Contrib>,
}

/// Blends fragments front to back; sorts them in place by depth (ties by id).
pub fn composite_fragments(fragments: &mut [Fragment]) -> PixelRecord {
    fragments.sort_by(|a, b| match a.depth.partial_cmp(&b.depth) {
        Some(Ordering::Equal) | None => a.splat.cmp(&b.splat),
        Some(o) => o,
    });
    let mut color = [0.0; 3];
    let mut weighted_depth = 0.0;
    let mut normal = Vec3::zeros();
    let mut acc = 0.0;
    let mut transmittance = 1.0;
    let mut contribs = Vec::new();
    for f in fragments.iter() {
        if f.alpha < ALPHA_MIN {
            continue;
        }
        let w = f.alpha * transmittance;
        contribs.push(Contrib {
            splat: f.splat,
            weight: w,
            depth: f.depth,
            gaussian: f.gaussian,
            alpha: f.alpha,
            transmittance,
        });
        for c in 0..3 {
            color[c] += w * f.color[c];
        }
        weighted_depth += w * f.depth;
        normal += f.normal * w;
        acc += w;
        transmittance *= 1.0 - f.alpha;
        if transmittance < TRANSMITTANCE_MIN {
            break;
        }
    }
    let normal = if acc < COVERAGE_MIN {
        Vec3::zeros()
    } else {
        normal.try_normalize(1e-300).unwrap_or_else(Vec3::zeros)
    };
    PixelRecord {
        color,
        depth: weighted_depth / (acc + DEPTH_EPS),
        normal,
        acc_weight: acc,
        contribs,
    }
}

fn fragment(ray: &Ray, splat: &Splat, frame: &SplatFrame, id: u32) -> Option<Fragment> {
    let hit = intersect_with_frame(ray, splat, frame)?;
    let n = frame.normal();
    let facing = if n.dot(&ray.direction) < 0.0 { n } else { -n };
    Some(Fragment {
        splat: id,
        alpha: splat.opacity() * hit.gaussian,
        depth: hit.depth,
        gaussian: hit.gaussian,
        color: splat.color,
        normal: facing,
    })
}

/// Composites a single ray against every surfel (no binning).
pub fn composite_pixel(ray: &Ray, splats: &[Splat]) -> PixelRecord {
    let mut fragments: Vec<Fragment> = splats
        .iter()
        .enumerate()
        .filter_map(|(i, s)| fragment(ray, s, &s.frame(), i as u32))
        .collect();
    composite_fragments(&mut fragments)
}

/// Everything a view render produces.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderBuffers {
    pub color: Image<Rgb>,
    pub depth: Image<f64>,
    pub normal: Image<Vec3>,
    pub acc_weight: Image<f64>,
    offsets: Vec<usize>,
    contribs: Vec<Contrib>,
}

impl RenderBuffers {
    pub fn width(&self) -> usize {
        self.color.width()
    }

    pub fn height(&self) -> usize {
        self.color.height()
    }

    pub fn pixel_count(&self) -> usize {
        self.color.len()
    }

    /// Depth-sorted contributions of pixel `index` (row-major).
    pub fn contribs(&self, index: usize) -> &[Contrib] {
        &self.contribs[self.offsets[index]..self.offsets[index + 1]]
    }

    /// Offset of pixel `index`'s first record in the flat contribution list.
    pub fn contrib_offset(&self, index: usize) -> usize {
        self.offsets[index]
    }

    pub fn contrib_count(&self) -> usize {
        self.contribs.len()
    }

    pub fn all_contribs(&self) -> &[Contrib] {
        &self.contribs
    }

    pub fn is_covered(&self, index: usize) -> bool {
        self.acc_weight.as_slice()[index] >= COVERAGE_MIN
    }

    /// Fingerprint of the per-pixel contribution sequences.
    pub fn record_gates(&self, gates: &mut GateTrace) {
        for w in self.offsets.windows(2) {
            gates.record(w[1] as u64 - w[0] as u64);
        }
        for c in &self.contribs {
            gates.record(c.splat as u64);
        }
    }
}

/// Inclusive pixel-index rectangle.
#[derive(Clone, Copy, Debug)]
struct PixelRect {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

impl PixelRect {
    fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

/// Conservative screen footprint of a surfel's 3 sigma disk: the disk lies in
/// the parallelogram spanned by its scaled axes, and perspective maps that
/// parallelogram onto the convex hull of its projected corners.
fn footprint(camera: &Camera, splat: &Splat, frame: &SplatFrame) -> Option<PixelRect> {
    let w = camera.width() as usize;
    let h = camera.height() as usize;
    let full = PixelRect {
        x0: 0,
        x1: w - 1,
        y0: 0,
        y1: h - 1,
    };
    let reach = libm::sqrt(CUTOFF_SQ);
    let a = frame.t1() * (reach * frame.scales[0]);
    let b = frame.t2() * (reach * frame.scales[1]);
    let corners = [splat.mean + a + b, splat.mean + a - b, splat.mean - a + b, splat.mean - a - b];
    let cam_corners = corners.map(|c| camera.world_to_camera(&c));
    if cam_corners.iter().all(|c| c.z <= 0.0) {
        return None;
    }
    if cam_corners.iter().any(|c| c.z <= 1e-6) {
        return Some(full);
    }
    let k = camera.intrinsics();
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for c in &cam_corners {
        let px = k.fx * c.x / c.z + k.cx;
        let py = k.fy * c.y / c.z + k.cy;
        xmin = xmin.min(px);
        xmax = xmax.max(px);
        ymin = ymin.min(py);
        ymax = ymax.max(py);
    }
    let slack = 1e-6;
    let lo = |v: f64| libm::ceil(v - 0.5 - slack);
    let hi = |v: f64| libm::floor(v - 0.5 + slack);
    let (fx0, fx1, fy0, fy1) = (lo(xmin), hi(xmax), lo(ymin), hi(ymax));
    if fx1 < 0.0 || fy1 < 0.0 || fx0 > (w - 1) as f64 || fy0 > (h - 1) as f64 || fx0 > fx1 || fy0 > fy1 {
        return None;
    }
    Some(PixelRect {
        x0: fx0.max(0.0) as usize,
        x1: fx1.min((w - 1) as f64) as usize,
        y0: fy0.max(0.0) as usize,
        y1: fy1.min((h - 1) as f64) as usize,
    })
}

struct Binning {
    frames: Vec<SplatFrame>,
    rects: Vec<Option<PixelRect>>,
    tiles_x: usize,
    tiles: Vec<Vec<u32>>,
}

impl Binning {
    fn new(camera: &Camera, splats: &[Splat]) -> Self {
        let frames: Vec<SplatFrame> = splats.iter().map(Splat::frame).collect();
        let rects: Vec<Option<PixelRect>> = splats
            .iter()
            .zip(&frames)
            .map(|(s, f)| footprint(camera, s, f))
            .collect();
        let tiles_x = (camera.width() as usize).div_ceil(TILE);
        let tiles_y = (camera.height() as usize).div_ceil(TILE);
        let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
        for (i, rect) in rects.iter().enumerate() {
            if let Some(r) = rect {
                for ty in r.y0 / TILE..=r.y1 / TILE {
                    for tx in r.x0 / TILE..=r.x1 / TILE {
                        tiles[ty * tiles_x + tx].push(i as u32);
                    }
                }
            }
        }
        Self {
            frames,
            rects,
            tiles_x,
            tiles,
        }
    }

    fn candidates(&self, x: usize, y: usize) -> impl Iterator<Item = u32> + '_ {
        self.tiles[(y / TILE) * self.tiles_x + x / TILE]
            .iter()
            .copied()
            .filter(move |&i| self.rects[i as usize].is_some_and(|r| r.contains(x, y)))
    }
}

fn render_row(camera: &Camera, splats: &[Splat], bins: &Binning, y: usize) -> Vec<PixelRecord> {
    let mut fragments = Vec::new();
    (0..camera.width() as usize)
        .map(|x| {
            let ray = camera.ray_through_pixel(&Camera::pixel_center(x, y));
            fragments.clear();
            fragments.extend(
                bins.candidates(x, y)
                    .filter_map(|i| fragment(&ray, &splats[i as usize], &bins.frames[i as usize], i)),
            );
            composite_fragments(&mut fragments)
        })
        .collect()
}

/// Renders color, depth, normal and coverage for one camera.
pub fn render_view(camera: &Camera, splats: &[Splat]) -> RenderBuffers {
    let w = camera.width() as usize;
    let h = camera.height() as usize;
    let bins = Binning::new(camera, splats);

    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<PixelRecord>> = (0..h)
        .into_par_iter()
        .map(|y| render_row(camera, splats, &bins, y))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<PixelRecord>> = (0..h).map(|y| render_row(camera, splats, &bins, y)).collect();

    let mut color = Vec::with_capacity(w * h);
    let mut depth = Vec::with_capacity(w * h);
    let mut normal = Vec::with_capacity(w * h);
    let mut acc = Vec::with_capacity(w * h);
    let mut offsets = Vec::with_capacity(w * h + 1);
    let mut contribs = Vec::new();
    offsets.push(0);
    for record in rows.into_iter().flatten() {
        color.push(record.color);
        depth.push(record.depth);
        normal.push(record.normal);
        acc.push(record.acc_weight);
        contribs.extend_from_slice(&record.contribs);
        offsets.push(contribs.len());
    }
    RenderBuffers {
        color: Image::from_vec(w, h, color),
        depth: Image::from_vec(w, h, depth),
        normal: Image::from_vec(w, h, normal),
        acc_weight: Image::from_vec(w, h, acc),
        offsets,
        contribs,
    }
}

/// Upstream gradients on the render outputs.
///
/// `contrib_*` slots are aligned with the flat contribution list of the
/// buffers and carry gradients of losses that read blending records
/// directly; `contrib_normal` is with respect to the unoriented world normal.
#[derive(Clone, Debug)]
pub struct PixelGrads {
    pub color: Vec<Rgb>,
    pub depth: Vec<f64>,
    pub contrib_weight: Vec<f64>,
    pub contrib_depth: Vec<f64>,
    pub contrib_normal: Vec<Vec3>,
}

impl PixelGrads {
    pub fn zeros(buffers: &RenderBuffers) -> Self {
        let n = buffers.pixel_count();
        let m = buffers.contrib_count();
        Self {
            color: vec![[0.0; 3]; n],
            depth: vec![0.0; n],
            contrib_weight: vec![0.0; m],
            contrib_depth: vec![0.0; m],
            contrib_normal: vec![Vec3::zeros(); m],
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn backward_pixel(
    camera: &Camera,
    splats: &[Splat],
    frames: &[SplatFrame],
    buffers: &RenderBuffers,
    grads: &PixelGrads,
    index: usize,
    out: &mut [SplatGrad],
    scratch: &mut Vec<f64>,
) {
    let contribs = buffers.contribs(index);
    if contribs.is_empty() {
        return;
    }
    let base = buffers.contrib_offset(index);
    let w = buffers.width();
    let ray = camera.ray_through_pixel(&Camera::pixel_center(index % w, index / w));
    let den = buffers.acc_weight.as_slice()[index] + DEPTH_EPS;
    let d_hat = buffers.depth.as_slice()[index];
    let g_color = grads.color[index];
    let g_depth = grads.depth[index];

    scratch.clear();
    scratch.extend(contribs.iter().enumerate().map(|(k, c)| {
        let col = &splats[c.splat as usize].color;
        g_color[0] * col[0]
            + g_color[1] * col[1]
            + g_color[2] * col[2]
            + g_depth * (c.depth - d_hat) / den
            + grads.contrib_weight[base + k]
    }));

    let mut suffix = 0.0;
    for k in (0..contribs.len()).rev() {
        let c = &contribs[k];
        let g_w = scratch[k];
        let g_alpha = c.transmittance * (g_w - suffix);
        suffix = g_w * c.alpha + (1.0 - c.alpha) * suffix;
        let id = c.splat as usize;
        let hit = HitGrad {
            alpha: g_alpha,
            depth: g_depth * c.weight / den + grads.contrib_depth[base + k],
            normal: grads.contrib_normal[base + k],
            color: [g_color[0] * c.weight, g_color[1] * c.weight, g_color[2] * c.weight],
        };
        intersect_backward(&ray, &splats[id], &frames[id], &hit, &mut out[id]);
    }
}

/// Reverse pass: gradients of the upstream loss with respect to every surfel parameter.
///
/// Rows are reduced in a fixed number of chunks merged in order, so the
/// result is identical with or without the `parallel` feature.
pub fn render_backward(camera: &Camera, splats: &[Splat], buffers: &RenderBuffers, grads: &PixelGrads) -> Vec<SplatGrad> {
    let frames: Vec<SplatFrame> = splats.iter().map(Splat::frame).collect();
    let h = buffers.height();
    let w = buffers.width();
    let chunk_rows = h.div_ceil(GRAD_CHUNKS).max(1);
    let run_chunk = |chunk: usize| -> Vec<SplatGrad> {
        let mut out = vec![[0.0; PARAM_COUNT]; splats.len()];
        let mut scratch = Vec::new();
        let y0 = chunk * chunk_rows;
        let y1 = ((chunk + 1) * chunk_rows).min(h);
        for y in y0..y1 {
            for x in 0..w {
                backward_pixel(camera, splats, &frames, buffers, grads, y * w + x, &mut out, &mut scratch);
            }
        }
        out
    };
    let chunks = h.div_ceil(chunk_rows);

    #[cfg(feature = "parallel")]
    let partials: Vec<Vec<SplatGrad>> = (0..chunks).into_par_iter().map(run_chunk).collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<Vec<SplatGrad>> = (0..chunks).map(run_chunk).collect();

    let mut total = vec![[0.0; PARAM_COUNT]; splats.len()];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            for k in 0..PARAM_COUNT {
                t[k] += p[k];
            }
        }
    }
    total
}

/// Per-pixel normals of the surface implied by a ray-depth map.
///
/// Uses forward differences toward the +x and +y neighbors; pixels on the
/// last row/column or next to an uncovered pixel get a zero normal. Normals
/// are in world space and face the camera.
pub fn depth_to_normal(camera: &Camera, depth: &Image<f64>) -> Image<Vec3> {
    let mut out = Image::filled(depth.width(), depth.height(), Vec3::zeros());
    for y in 0..depth.height() {
        for x in 0..depth.width() {
            if let Some(n) = pixel_normal(camera, depth, x, y) {
                *out.get_mut(x, y) = n.normal;
            }
        }
    }
    out
}

struct PixelNormal {
    normal: Vec3,
    cross: Vec3,
    a: Vec3,
    b: Vec3,
    sign: f64,
    dirs: [Vec3; 3],
}

fn pixel_normal(camera: &Camera, depth: &Image<f64>, x: usize, y: usize) -> Option<PixelNormal> {
    if x + 1 >= depth.width() || y + 1 >= depth.height() {
        return None;
    }
    let d0 = *depth.get(x, y);
    let dx = *depth.get(x + 1, y);
    let dy = *depth.get(x, y + 1);
    if !(d0 > 0.0 && dx > 0.0 && dy > 0.0) {
        return None;
    }
    let r0 = camera.ray_through_pixel(&Camera::pixel_center(x, y));
    let rx = camera.ray_through_pixel(&Camera::pixel_center(x + 1, y));
    let ry = camera.ray_through_pixel(&Camera::pixel_center(x, y + 1));
    let p0 = r0.at(d0);
    let a = rx.at(dx) - p0;
    let b = ry.at(dy) - p0;
    let cross = a.cross(&b);
    let len = cross.norm();
    if !(len > 1e-300) {
        return None;
    }
    let sign = if cross.dot(&(p0 - r0.origin)) > 0.0 { -1.0 } else { 1.0 };
    Some(PixelNormal {
        normal: cross * (sign / len),
        cross,
        a,
        b,
        sign,
        dirs: [r0.direction, rx.direction, ry.direction],
    })
}

/// Records which pixels produce a normal and its orientation.
pub fn record_normal_gates(camera: &Camera, depth: &Image<f64>, gates: &mut GateTrace) {
    for y in 0..depth.height() {
        for x in 0..depth.width() {
            match pixel_normal(camera, depth, x, y) {
                Some(n) => gates.record(if n.sign > 0.0 { 1 } else { 2 }),
                None => gates.record(0),
            }
        }
    }
}

/// Accumulates `dL/d depth` given `dL/d normal` from [`depth_to_normal`].
pub fn depth_to_normal_backward(camera: &Camera, depth: &Image<f64>, grad_normal: &Image<Vec3>, grad_depth: &mut [f64]) {
    let w = depth.width();
    for y in 0..depth.height() {
        for x in 0..w {
            let g_n = *grad_normal.get(x, y);
            if g_n == Vec3::zeros() {
                continue;
            }
            let Some(pn) = pixel_normal(camera, depth, x, y) else {
                continue;
            };
            let len = pn.cross.norm();
            let unit = pn.cross / len;
            let g_c = (g_n - unit * unit.dot(&g_n)) * (pn.sign / len);
            let g_a = pn.b.cross(&g_c);
            let g_b = g_c.cross(&pn.a);
            let g_p0 = -g_a - g_b;
            grad_depth[y * w + x] += g_p0.dot(&pn.dirs[0]);
            grad_depth[y * w + x + 1] += g_a.dot(&pn.dirs[1]);
            grad_depth[(y + 1) * w + x] += g_b.dot(&pn.dirs[2]);
        }
    }
}

/// Pixel center of a row-major index.
pub fn pixel_of(index: usize, width: usize) -> Vec2 {
    Camera::pixel_center(index % width, index / width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Intrinsics;
    use crate::rng::rng_for;
    use crate::splat::intersect_ray_splat;
    use nalgebra::Matrix3;
    use rand::Rng;

    fn frag(id: u32, alpha: f64, depth: f64, color: Rgb) -> Fragment {
        Fragment {
            splat: id,
            alpha,
            depth,
            gaussian: 1.0,
            color,
            normal: Vec3::new(0.0, 0.0, -1.0),
        }
    }

    pub(crate) fn test_camera(size: u32) -> Camera {
        Camera::look_at(
            Vec3::new(0.0, 0.0, -2.5),
            Vec3::zeros(),
            Vec3::new(0.0, 1.0, 0.0),
            Intrinsics::from_fov(size, size, 45.0),
            size,
            size,
        )
        .unwrap()
    }

    pub(crate) fn random_splats(rng: &mut impl Rng, n: usize) -> Vec<Splat> {
        (0..n)
            .map(|_| Splat {
                mean: Vec3::new(
                    rng.random_range(-0.6..0.6),
                    rng.random_range(-0.6..0.6),
                    rng.random_range(-0.5..0.5),
                ),
                rotation: [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ],
                log_scales: [rng.random_range(-2.5..-1.0), rng.random_range(-2.5..-1.0)],
                opacity_logit: rng.random_range(-1.0..3.0),
                color: [rng.random(), rng.random(), rng.random()],
            })
            .collect()
    }

    #[test]
    fn single_opaque_fragment() {
        let mut f = [frag(0, 1.0, 2.0, [1.0, 0.0, 0.0])];
        let r = composite_fragments(&mut f);
        assert_eq!(r.color, [1.0, 0.0, 0.0]);
        assert_eq!(r.depth, 2.0 / (1.0 + 1e-8));
        assert_eq!(r.acc_weight, 1.0);
    }

    #[test]
    fn two_fragments_hand_evaluated() {
        let mut f = [frag(1, 1.0, 2.0, [0.0, 1.0, 0.0]), frag(0, 0.5, 1.0, [1.0, 0.0, 0.0])];
        let r = composite_fragments(&mut f);
        let w: Vec<f64> = r.contribs.iter().map(|c| c.weight).collect();
        assert_eq!(w, vec![0.5, 0.5]);
        assert_eq!(r.color, [0.5, 0.5, 0.0]);
        assert!((r.depth - 1.5).abs() < 1e-7);
    }

    #[test]
    fn empty_pixel_is_background() {
        let r = composite_fragments(&mut []);
        assert_eq!(r.color, [0.0; 3]);
        assert_eq!(r.depth, 0.0);
        assert_eq!(r.acc_weight, 0.0);
        assert_eq!(r.normal, Vec3::zeros());
    }

    #[test]
    fn low_alpha_fragments_are_skipped() {
        let mut f = [frag(0, 0.5 / 255.0, 1.0, [1.0; 3])];
        assert!(composite_fragments(&mut f).contribs.is_empty());
    }

    #[test]
    fn empty_scene_renders_background() {
        let cam = test_camera(16);
        let b = render_view(&cam, &[]);
        assert!(b.color.as_slice().iter().all(|c| *c == [0.0; 3]));
        assert!(b.depth.as_slice().iter().all(|d| *d == 0.0));
        assert_eq!(b.contrib_count(), 0);
    }

    #[test]
    fn binned_render_matches_brute_force_and_is_deterministic() {
        let mut rng = rng_for(21, "render-brute");
        let cam = test_camera(24);
        let splats = random_splats(&mut rng, 80);
        let b = render_view(&cam, &splats);
        let again = render_view(&cam, &splats);
        assert_eq!(b, again);
        for y in 0..24 {
            for x in 0..24 {
                let ray = cam.ray_through_pixel(&Camera::pixel_center(x, y));
                let r = composite_pixel(&ray, &splats);
                let i = y * 24 + x;
                assert_eq!(r.color, b.color.as_slice()[i]);
                assert_eq!(r.depth, b.depth.as_slice()[i]);
                assert_eq!(r.contribs.as_slice(), b.contribs(i));
            }
        }
    }

    #[test]
    fn footprint_matches_projected_ellipse() {
        // A tilted opaque surfel; the analytic mask is the interior of the conic
        // that the 3 sigma ellipse projects to, evaluated at pixel centers.
        let cam = test_camera(48);
        let q = nalgebra::UnitQuaternion::from_euler_angles(0.5, -0.3, 0.2);
        let qq = q.quaternion();
        let splat = Splat::new(Vec3::new(0.05, -0.1, 0.2), [qq.w, qq.i, qq.j, qq.k], [0.12, 0.07], 0.99999, [1.0, 0.5, 0.2]);
        let b = render_view(&cam, std::slice::from_ref(&splat));

        // Homography from plane coordinates (u, v, 1) to homogeneous pixels.
        let f = splat.frame();
        let k = cam.intrinsics();
        let kmat = Matrix3::new(k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0);
        let to_cam = |v: Vec3| cam.rotation().transpose() * v;
        let hmat = kmat
            * Matrix3::from_columns(&[
                to_cam(f.t1() * f.scales[0]),
                to_cam(f.t2() * f.scales[1]),
                cam.world_to_camera(&splat.mean),
            ]);
        let hinv = hmat.try_inverse().unwrap();
        let circle = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -9.0);
        let conic = hinv.transpose() * circle * hinv;
        let mut inside_count = 0;
        for y in 0..48 {
            for x in 0..48 {
                let p = nalgebra::Vector3::new(x as f64 + 0.5, y as f64 + 0.5, 1.0);
                let val = p.dot(&(conic * p));
                let scale = (conic * p).norm() * p.norm();
                if (val / scale).abs() < 1e-9 {
                    continue;
                }
                let inside = val < 0.0;
                // the opacity gate also removes the faint rim below 1/255
                let ray = cam.ray_through_pixel(&Camera::pixel_center(x, y));
                let alpha_ok = intersect_ray_splat(&ray, &splat)
                    .is_some_and(|h| h.gaussian * splat.opacity() >= ALPHA_MIN);
                let covered = b.acc_weight.as_slice()[y * 48 + x] > 0.0;
                if inside {
                    inside_count += 1;
                }
                assert_eq!(covered, inside && alpha_ok, "pixel ({x},{y})");
            }
        }
        assert!(inside_count > 30);
    }

    #[test]
    fn weights_are_bounded() {
        let mut rng = rng_for(22, "render-bounds");
        let cam = test_camera(32);
        let splats = random_splats(&mut rng, 200);
        let b = render_view(&cam, &splats);
        for i in 0..b.pixel_count() {
            let cs = b.contribs(i);
            assert!(cs.iter().all(|c| c.weight >= 0.0));
            assert!(cs.windows(2).all(|w| w[0].depth <= w[1].depth));
            let s: f64 = cs.iter().map(|c| c.weight).sum();
            assert!(s <= 1.0 + 1e-6);
        }
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = rng_for(23, "render-perm");
        let cam = test_camera(20);
        let splats = random_splats(&mut rng, 60);
        let b = render_view(&cam, &splats);
        let mut order: Vec<usize> = (0..splats.len()).collect();
        order.reverse();
        let shuffled: Vec<Splat> = order.iter().map(|&i| splats[i].clone()).collect();
        let c = render_view(&cam, &shuffled);
        assert_eq!(b.color, c.color);
        assert_eq!(b.depth, c.depth);
    }

    #[test]
    fn fronto_parallel_plane_normal() {
        let cam = test_camera(16);
        let depth = Image::from_vec(
            16,
            16,
            (0..256)
                .map(|i| {
                    // constant camera-frame z = 2 expressed as ray depth
                    let p = pixel_of(i, 16);
                    let r = cam.ray_through_pixel(&p);
                    let z_axis = cam.rotation().column(2).into_owned();
                    2.0 / r.direction.dot(&z_axis)
                })
                .collect(),
        );
        let n = depth_to_normal(&cam, &depth);
        for y in 0..15 {
            for x in 0..15 {
                let nc = cam.rotation().transpose() * n.get(x, y);
                assert!((nc - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-9);
            }
        }
        assert_eq!(*n.get(15, 3), Vec3::zeros());
    }

    #[test]
    fn sphere_depth_normals_match_analytic() {
        let size = 96;
        let cam = test_camera(size);
        let radius = 0.7;
        let mut depth = Image::filled(size as usize, size as usize, 0.0);
        for y in 0..size as usize {
            for x in 0..size as usize {
                let r = cam.ray_through_pixel(&Camera::pixel_center(x, y));
                let b = r.origin.dot(&r.direction);
                let c = r.origin.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc > 0.0 {
                    *depth.get_mut(x, y) = -b - disc.sqrt();
                }
            }
        }
        let n = depth_to_normal(&cam, &depth);
        let mut checked = 0;
        for y in 0..size as usize - 1 {
            for x in 0..size as usize - 1 {
                let nn = *n.get(x, y);
                if nn == Vec3::zeros() {
                    continue;
                }
                let at = |x: usize, y: usize| cam.ray_through_pixel(&Camera::pixel_center(x, y)).at(*depth.get(x, y));
                let p = at(x, y);
                // forward differences estimate the normal at the stencil centroid
                let analytic = ((p + at(x + 1, y) + at(x, y + 1)) / 3.0).normalize();
                // interior only: skip the silhouette band
                if analytic.dot(&(cam.center() - p).normalize()) < 0.6 {
                    continue;
                }
                let angle = nn.dot(&analytic).clamp(-1.0, 1.0).acos().to_degrees();
                assert!(angle < 2.0, "angle {angle} at ({x},{y})");
                checked += 1;
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn holes_zero_the_rim() {
        let cam = test_camera(12);
        let mut depth = Image::filled(12, 12, 2.0);
        *depth.get_mut(5, 5) = 0.0;
        let n = depth_to_normal(&cam, &depth);
        assert_eq!(*n.get(5, 5), Vec3::zeros());
        assert_eq!(*n.get(4, 5), Vec3::zeros());
        assert_eq!(*n.get(5, 4), Vec3::zeros());
        assert_ne!(*n.get(6, 5), Vec3::zeros());
        assert_ne!(*n.get(3, 3), Vec3::zeros());
    }

    #[test]
    fn depth_normal_backward_matches_finite_differences() {
        let mut rng = rng_for(24, "normal-grad");
        let cam = test_camera(8);
        let mut depth = Image::filled(8, 8, 0.0);
        for d in depth.as_mut_slice() {
            *d = 2.0 + rng.random_range(-0.05..0.05);
        }
        let weights: Vec<Vec3> = (0..64)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let f = |d: &Image<f64>| -> f64 {
            depth_to_normal(&cam, d)
                .as_slice()
                .iter()
                .zip(&weights)
                .map(|(n, w)| n.dot(w))
                .sum()
        };
        let gimg = Image::from_vec(8, 8, weights.clone());
        let mut g = vec![0.0; 64];
        depth_to_normal_backward(&cam, &depth, &gimg, &mut g);
        for i in 0..64 {
            let mut p = depth.clone();
            let mut m = depth.clone();
            p.as_mut_slice()[i] += 1e-6;
            m.as_mut_slice()[i] -= 1e-6;
            let fd = (f(&p) - f(&m)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-5 * fd.abs().max(1.0), "pixel {i}: {fd} vs {}", g[i]);
        }
    }
}
