//! Monocular-prior terms: patch ranking and edge-aware smoothing.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{check_shape, LossError};
use crate::gates::GateTrace;
use crate::image::Image;
use crate::render::COVERAGE_MIN;

/// Relative size of mono-depth differences treated as ties.
pub const TIE_FRACTION: f64 = 1e-6;

/// A patch of the image and the shuffle pairing each of its pixels with a
/// partner in the same patch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchPermutation {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
    /// Local index `j` (row-major within the patch) is compared with `perm[j]`.
    pub perm: Vec<usize>,
}

impl PatchPermutation {
    /// Returns `None` unless `perm` is a bijection on `0..rows * cols`.
    pub fn new(row: usize, col: usize, rows: usize, cols: usize, perm: Vec<usize>) -> Option<Self> {
        let n = rows * cols;
        if perm.len() != n {
            return None;
        }
        let mut seen = alloc::vec![false; n];
        for &k in &perm {
            if k >= n || seen[k] {
                return None;
            }
            seen[k] = true;
        }
        Some(Self {
            row,
            col,
            rows,
            cols,
            perm,
        })
    }

    pub fn random(row: usize, col: usize, rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let mut perm: Vec<usize> = (0..rows * cols).collect();
        perm.shuffle(rng);
        Self {
            row,
            col,
            rows,
            cols,
            perm,
        }
    }

    /// Row-major image index of local patch index `j`.
    pub fn pixel(&self, j: usize, width: usize) -> usize {
        (self.row + j / self.cols) * width + self.col + j % self.cols
    }
}

/// Tiles the image with `side x side` patches (clipped at the right and
/// bottom borders), each with a fresh permutation.
pub fn sample_patches(width: usize, height: usize, side: usize, rng: &mut impl Rng) -> Vec<PatchPermutation> {
    let mut out = Vec::new();
    for row in (0..height).step_by(side) {
        for col in (0..width).step_by(side) {
            let rows = side.min(height - row);
            let cols = side.min(width - col);
            out.push(PatchPermutation::random(row, col, rows, cols, rng));
        }
    }
    out
}

fn value_range(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

/// Ranking loss of one patch given as flat slices (patch-local indices).
/// Pairs whose mono depths differ by less than `TIE_FRACTION` of the patch
/// mono range are skipped; the result is the mean over evaluated pairs.
pub fn ranking_loss(rendered: &[f64], mono: &[f64], perm: &PatchPermutation, margin: f64) -> f64 {
    assert_eq!(rendered.len(), mono.len());
    assert_eq!(rendered.len(), perm.perm.len());
    let tie = TIE_FRACTION * value_range(mono.iter().copied());
    let (mut sum, mut count) = (0.0, 0usize);
    for (j, &k) in perm.perm.iter().enumerate() {
        let dm = mono[k] - mono[j];
        if dm.abs() <= tie || dm == 0.0 {
            continue;
        }
        count += 1;
        sum += (dm.signum() * (rendered[j] - rendered[k]) + margin).max(0.0);
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Image-level ranking term over a set of patches. Pairs touching an
/// uncovered pixel are skipped; ties are relative to the image mono range.
pub(crate) fn ranking_term(
    depth: &Image<f64>,
    mono: &Image<f64>,
    acc: &Image<f64>,
    patches: &[PatchPermutation],
    margin: f64,
    mut grad: Option<(&mut [f64], f64)>,
    mut gates: Option<&mut GateTrace>,
) -> f64 {
    let w = depth.width();
    let d = depth.as_slice();
    let m = mono.as_slice();
    let a = acc.as_slice();
    let tie = TIE_FRACTION * value_range(m.iter().copied());
    let mut active: Vec<(usize, usize, f64)> = Vec::new();
    let (mut sum, mut count) = (0.0, 0usize);
    for patch in patches {
        for (j, &k) in patch.perm.iter().enumerate() {
            let pj = patch.pixel(j, w);
            let pk = patch.pixel(k, w);
            let dm = m[pk] - m[pj];
            let evaluated = a[pj] >= COVERAGE_MIN && a[pk] >= COVERAGE_MIN && dm.abs() > tie && dm != 0.0;
            let s = dm.signum();
            let arg = s * (d[pj] - d[pk]) + margin;
            if let Some(g) = gates.as_deref_mut() {
                g.record((evaluated as u64) | (((arg > 0.0) as u64) << 1));
            }
            if !evaluated {
                continue;
            }
            count += 1;
            if arg > 0.0 {
                sum += arg;
                active.push((pj, pk, s));
            }
        }
    }
    if count == 0 {
        return 0.0;
    }
    let inv = 1.0 / count as f64;
    if let Some((g, scale)) = grad.as_mut() {
        for (pj, pk, s) in active {
            g[pj] += *scale * s * inv;
            g[pk] -= *scale * s * inv;
        }
    }
    sum * inv
}

/// Min-max normalized copy; a constant map becomes all zeros.
pub fn normalize_min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let range = value_range(values.iter().copied());
    values
        .iter()
        .map(|v| if range > 0.0 { (v - lo) / range } else { 0.0 })
        .collect()
}

/// Edge-aware depth smoothing over right/down neighbor pairs.
pub fn smoothing_loss(
    rendered: &Image<f64>,
    mono: &Image<f64>,
    acc: &Image<f64>,
    edge_threshold: f64,
    tolerance: f64,
) -> Result<f64, LossError> {
    check_shape(rendered, mono)?;
    check_shape(rendered, acc)?;
    Ok(smoothing_term(rendered, mono, acc, edge_threshold, tolerance, None, None))
}

pub(crate) fn smoothing_term(
    depth: &Image<f64>,
    mono: &Image<f64>,
    acc: &Image<f64>,
    edge_threshold: f64,
    tolerance: f64,
    mut grad: Option<(&mut [f64], f64)>,
    mut gates: Option<&mut GateTrace>,
) -> f64 {
    let (w, h) = (depth.width(), depth.height());
    let d = depth.as_slice();
    let a = acc.as_slice();
    let m = normalize_min_max(mono.as_slice());
    let mut active: Vec<(usize, usize, f64)> = Vec::new();
    let (mut sum, mut count) = (0.0, 0usize);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            for (ok, k) in [(x + 1 < w, i + 1), (y + 1 < h, i + w)] {
                if !ok {
                    continue;
                }
                let evaluated = a[i] >= COVERAGE_MIN && a[k] >= COVERAGE_MIN && (m[k] - m[i]).abs() < edge_threshold;
                let diff = d[k] - d[i];
                let arg = diff.abs() - tolerance;
                if let Some(g) = gates.as_deref_mut() {
                    g.record((evaluated as u64) | (((arg > 0.0) as u64) << 1) | (((diff > 0.0) as u64) << 2));
                }
                if !evaluated {
                    continue;
                }
                count += 1;
                if arg > 0.0 {
                    sum += arg;
                    active.push((i, k, diff.signum()));
                }
            }
        }
    }
    if count == 0 {
        return 0.0;
    }
    let inv = 1.0 / count as f64;
    if let Some((g, scale)) = grad.as_mut() {
        for (i, k, s) in active {
            g[k] += *scale * s * inv;
            g[i] -= *scale * s * inv;
        }
    }
    sum * inv
}
