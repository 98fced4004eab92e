//! L1 + D-SSIM photometric term.

use alloc::vec;
use alloc::vec::Vec;

use super::{check_shape, LossError};
use crate::gates::GateTrace;
use crate::image::{Image, Rgb};

const WINDOW_RADIUS: usize = 5;
const WINDOW_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
const C1: f64 = SSIM_K1 * SSIM_K1;
const C2: f64 = SSIM_K2 * SSIM_K2;

fn taps() -> [f64; 2 * WINDOW_RADIUS + 1] {
    core::array::from_fn(|i| {
        let k = i as f64 - WINDOW_RADIUS as f64;
        libm::exp(-k * k / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA))
    })
}

/// Separable Gaussian filter whose taps are renormalized over the part of
/// the window that falls inside the image.
struct Blur {
    w: usize,
    h: usize,
    taps: [f64; 2 * WINDOW_RADIUS + 1],
    inv_norm_x: Vec<f64>,
    inv_norm_y: Vec<f64>,
}

impl Blur {
    fn new(w: usize, h: usize) -> Self {
        let taps = taps();
        let norms = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|p| {
                    let s: f64 = (0..taps.len())
                        .filter(|&i| {
                            let q = p as isize + i as isize - WINDOW_RADIUS as isize;
                            q >= 0 && q < n as isize
                        })
                        .map(|i| taps[i])
                        .sum();
                    1.0 / s
                })
                .collect()
        };
        Self {
            w,
            h,
            taps,
            inv_norm_x: norms(w),
            inv_norm_y: norms(h),
        }
    }

    fn pass(&self, src: &[f64], horizontal: bool, transpose: bool) -> Vec<f64> {
        let (w, h) = (self.w, self.h);
        let (n, inv) = if horizontal { (w, &self.inv_norm_x) } else { (h, &self.inv_norm_y) };
        let mut out = vec![0.0; src.len()];
        for y in 0..h {
            for x in 0..w {
                let p = if horizontal { x } else { y };
                let mut acc = 0.0;
                for (i, t) in self.taps.iter().enumerate() {
                    let q = p as isize + i as isize - WINDOW_RADIUS as isize;
                    if q < 0 || q >= n as isize {
                        continue;
                    }
                    let q = q as usize;
                    let idx = if horizontal { y * w + q } else { q * w + x };
                    // forward normalizes by the output position, the adjoint by the source
                    let scale = if transpose { inv[q] } else { inv[p] };
                    acc += t * scale * src[idx];
                }
                out[y * w + x] = acc;
            }
        }
        out
    }

    fn apply(&self, src: &[f64]) -> Vec<f64> {
        self.pass(&self.pass(src, true, false), false, false)
    }

    fn adjoint(&self, src: &[f64]) -> Vec<f64> {
        self.pass(&self.pass(src, false, true), true, true)
    }
}

fn channel(img: &Image<Rgb>, c: usize) -> Vec<f64> {
    img.as_slice().iter().map(|p| p[c]).collect()
}

/// Mean SSIM over pixels and channels; adds `scale * dSSIM/dx` into `grad`.
fn ssim_impl(x: &Image<Rgb>, y: &Image<Rgb>, mut grad: Option<(&mut [Rgb], f64)>) -> f64 {
    let blur = Blur::new(x.width(), x.height());
    let n = x.len() as f64 * 3.0;
    let mut total = 0.0;
    for c in 0..3 {
        let xs = channel(x, c);
        let ys = channel(y, c);
        let sq = |v: &[f64], u: &[f64]| -> Vec<f64> { v.iter().zip(u).map(|(a, b)| a * b).collect() };
        let mx = blur.apply(&xs);
        let my = blur.apply(&ys);
        let mxx = blur.apply(&sq(&xs, &xs));
        let myy = blur.apply(&sq(&ys, &ys));
        let mxy = blur.apply(&sq(&xs, &ys));
        let len = xs.len();
        let mut da = vec![0.0; len];
        let mut dxx = vec![0.0; len];
        let mut dxy = vec![0.0; len];
        for p in 0..len {
            let (a, b) = (mx[p], my[p]);
            let vx = mxx[p] - a * a;
            let vy = myy[p] - b * b;
            let cxy = mxy[p] - a * b;
            let a1 = 2.0 * a * b + C1;
            let a2 = 2.0 * cxy + C2;
            let b1 = a * a + b * b + C1;
            let b2 = vx + vy + C2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            da[p] = (2.0 * b * a2 - 2.0 * b * a1) / (b1 * b2) - s * (2.0 * a / b1 - 2.0 * a / b2);
            dxx[p] = -s / b2;
            dxy[p] = 2.0 * a1 / (b1 * b2);
        }
        if let Some((g, scale)) = grad.as_mut() {
            let ga = blur.adjoint(&da);
            let gxx = blur.adjoint(&dxx);
            let gxy = blur.adjoint(&dxy);
            for q in 0..len {
                g[q][c] += *scale / n * (ga[q] + 2.0 * xs[q] * gxx[q] + ys[q] * gxy[q]);
            }
        }
    }
    total / n
}

/// Structural similarity with an 11x11 Gaussian window (sigma 1.5).
pub fn ssim(x: &Image<Rgb>, y: &Image<Rgb>) -> Result<f64, LossError> {
    check_shape(x, y)?;
    Ok(ssim_impl(x, y, None))
}

/// `(1 - mix) * L1 + mix * (1 - SSIM)`.
pub fn color_loss(rendered: &Image<Rgb>, target: &Image<Rgb>, mix: f64) -> Result<f64, LossError> {
    check_shape(rendered, target)?;
    Ok(color_term(rendered, target, mix, None, None))
}

pub(crate) fn color_term(
    rendered: &Image<Rgb>,
    target: &Image<Rgb>,
    mix: f64,
    mut grad: Option<(&mut [Rgb], f64)>,
    gates: Option<&mut GateTrace>,
) -> f64 {
    let n = rendered.len() as f64 * 3.0;
    let mut l1 = 0.0;
    for (i, (r, t)) in rendered.as_slice().iter().zip(target.as_slice()).enumerate() {
        for c in 0..3 {
            let d = r[c] - t[c];
            l1 += d.abs();
            if let Some((g, scale)) = grad.as_mut() {
                let sign = if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 };
                g[i][c] += *scale * (1.0 - mix) * sign / n;
            }
        }
    }
    if let Some(gates) = gates {
        for (r, t) in rendered.as_slice().iter().zip(target.as_slice()) {
            for c in 0..3 {
                gates.record(match r[c].partial_cmp(&t[c]) {
                    Some(core::cmp::Ordering::Less) => 0,
                    Some(core::cmp::Ordering::Greater) => 1,
                    _ => 2,
                });
            }
        }
    }
    let ssim = ssim_impl(rendered, target, grad.map(|(g, scale)| (g, -scale * mix)));
    (1.0 - mix) * l1 / n + mix * (1.0 - ssim)
}
