//! Chamfer distance and depth-map error statistics.

use alloc::vec::Vec;

use super::FusionError;
use crate::image::Image;
use crate::par::map_slice;
use crate::spatial::PointGrid;
use crate::Vec3;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Chamfer {
    /// Mean distance from predicted points to the ground truth.
    pub accuracy: f64,
    /// Mean distance from ground-truth points to the prediction.
    pub completeness: f64,
    pub chamfer: f64,
}

fn mean_nearest(from: &[Vec3], to: &PointGrid) -> f64 {
    let d = map_slice(from, |p| to.nearest(p).map_or(f64::INFINITY, |(_, d)| d));
    d.iter().sum::<f64>() / d.len() as f64
}

pub fn chamfer_distance(pred: &[Vec3], gt: &[Vec3]) -> Result<Chamfer, FusionError> {
    if pred.is_empty() || gt.is_empty() {
        return Err(FusionError::EmptyPointSet);
    }
    let accuracy = mean_nearest(pred, &PointGrid::new(gt.to_vec()));
    let completeness = mean_nearest(gt, &PointGrid::new(pred.to_vec()));
    Ok(Chamfer {
        accuracy,
        completeness,
        chamfer: 0.5 * (accuracy + completeness),
    })
}

/// Threshold multiples of the unit reported by [`depth_metrics`].
pub const THRESHOLDS: [f64; 3] = [1.0, 2.0, 4.0];

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DepthMetrics {
    /// Percent of pixels with error strictly below 1, 2 and 4 units.
    pub pct1: f64,
    pub pct2: f64,
    pub pct4: f64,
    /// Mean absolute error.
    pub abs: f64,
    /// Mean absolute relative error.
    pub rel: f64,
    /// Pixels compared.
    pub count: usize,
}

/// Compares depth maps on pixels where both are positive and finite.
pub fn depth_metrics(pred: &Image<f64>, gt: &Image<f64>, unit: f64) -> Result<DepthMetrics, FusionError> {
    if !pred.same_shape(gt) {
        return Err(FusionError::DimensionMismatch);
    }
    let pairs: Vec<(f64, f64)> = pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .filter(|(p, g)| **p > 0.0 && **g > 0.0 && p.is_finite() && g.is_finite())
        .map(|(p, g)| (*p, *g))
        .collect();
    if pairs.is_empty() {
        return Err(FusionError::NoOverlap);
    }
    let n = pairs.len() as f64;
    let pct = |t: f64| 100.0 * pairs.iter().filter(|(p, g)| (p - g).abs() < t * unit).count() as f64 / n;
    Ok(DepthMetrics {
        pct1: pct(THRESHOLDS[0]),
        pct2: pct(THRESHOLDS[1]),
        pct4: pct(THRESHOLDS[2]),
        abs: pairs.iter().map(|(p, g)| (p - g).abs()).sum::<f64>() / n,
        rel: pairs.iter().map(|(p, g)| (p - g).abs() / g).sum::<f64>() / n,
        count: pairs.len(),
    })
}
