//! Training objectives and their weighted combination.
//!
//! Each term exposes a plain evaluation function; [`evaluate`] combines the
//! selected terms and, on request, returns upstream gradients ready for
//! [`crate::render::render_backward`].

mod color;
mod depth;
mod feature;
mod regularizers;

pub use color::{color_loss, ssim};
pub use depth::{normalize_min_max, ranking_loss, sample_patches, smoothing_loss, PatchPermutation, TIE_FRACTION};
pub use feature::{feature_loss, visibility_mask, FeatureViews};
pub use regularizers::{distortion_loss, normal_loss, pixel_distortion};

use crate::gates::GateTrace;
use crate::geometry::Camera;
use crate::image::{Image, Rgb};
use crate::render::{PixelGrads, RenderBuffers};
use crate::splat::Splat;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("image dimensions differ: {expected:?} vs {found:?}")]
    DimensionMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("invalid loss weights: {0}")]
    InvalidWeights(&'static str),
}

pub(crate) fn check_shape<A, B>(a: &Image<A>, b: &Image<B>) -> Result<(), LossError> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(LossError::DimensionMismatch {
            expected: (a.width(), a.height()),
            found: (b.width(), b.height()),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LossWeights {
    /// Ranking weight.
    pub l1: f64,
    /// Smoothing weight.
    pub l2: f64,
    /// Feature weight.
    pub l3: f64,
    /// Distortion weight.
    pub l4: f64,
    /// Normal-consistency weight.
    pub l5: f64,
    /// D-SSIM share of the color term.
    pub ssim_mix: f64,
    /// Ranking margin (scene units).
    pub margin: f64,
    /// Edge threshold on min-max normalized mono depth.
    pub edge_threshold: f64,
    /// Smoothing tolerance (scene units).
    pub smooth_tolerance: f64,
    /// Ranking patch side in pixels.
    pub patch_size: usize,
    /// Number of feature pyramid levels (scales 1, 2, 4, ...).
    pub levels: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            l1: 1.0,
            l2: 0.5,
            l3: 0.2,
            l4: 100.0,
            l5: 0.05,
            ssim_mix: 0.2,
            margin: 1e-3,
            edge_threshold: 0.01,
            smooth_tolerance: 1e-3,
            patch_size: 16,
            levels: 3,
        }
    }
}

impl LossWeights {
    /// Photometric term only.
    pub fn color_only() -> Self {
        Self {
            l1: 0.0,
            l2: 0.0,
            l3: 0.0,
            l4: 0.0,
            l5: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let lambdas = [self.l1, self.l2, self.l3, self.l4, self.l5];
        if lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(LossError::InvalidWeights("term weights must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.ssim_mix) {
            return Err(LossError::InvalidWeights("ssim_mix must lie in [0, 1]"));
        }
        if !(self.margin > 0.0 && self.edge_threshold > 0.0 && self.smooth_tolerance > 0.0) {
            return Err(LossError::InvalidWeights("margin, edge threshold and tolerance must be positive"));
        }
        if self.patch_size < 2 {
            return Err(LossError::InvalidWeights("patch size must be at least 2"));
        }
        if self.levels < 1 {
            return Err(LossError::InvalidWeights("at least one pyramid level is required"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Color,
    Ranking,
    Smoothing,
    Feature,
    Distortion,
    Normal,
}

impl Term {
    pub const ALL: [Term; 6] = [Term::Color, Term::Ranking, Term::Smoothing, Term::Feature, Term::Distortion, Term::Normal];

    pub fn name(self) -> &'static str {
        match self {
            Term::Color => "color",
            Term::Ranking => "ranking",
            Term::Smoothing => "smoothing",
            Term::Feature => "feature",
            Term::Distortion => "distortion",
            Term::Normal => "normal",
        }
    }

    pub fn from_name(name: &str) -> Option<Term> {
        Term::ALL.into_iter().find(|t| t.name() == name)
    }
}

/// Which terms to evaluate. Terms left out report 0 and contribute nothing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Terms {
    pub color: bool,
    pub ranking: bool,
    pub smoothing: bool,
    pub feature: bool,
    pub distortion: bool,
    pub normal: bool,
}

impl Terms {
    pub const ALL: Terms = Terms {
        color: true,
        ranking: true,
        smoothing: true,
        feature: true,
        distortion: true,
        normal: true,
    };

    pub const NONE: Terms = Terms {
        color: false,
        ranking: false,
        smoothing: false,
        feature: false,
        distortion: false,
        normal: false,
    };

    pub fn only(term: Term) -> Terms {
        Terms::NONE.with(term, true)
    }

    pub fn with(mut self, term: Term, on: bool) -> Terms {
        *self.slot(term) = on;
        self
    }

    fn slot(&mut self, term: Term) -> &mut bool {
        match term {
            Term::Color => &mut self.color,
            Term::Ranking => &mut self.ranking,
            Term::Smoothing => &mut self.smoothing,
            Term::Feature => &mut self.feature,
            Term::Distortion => &mut self.distortion,
            Term::Normal => &mut self.normal,
        }
    }
}

/// Unweighted term values and the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossBreakdown {
    #[cfg_attr(feature = "serde", serde(rename = "L_c"))]
    pub color: f64,
    #[cfg_attr(feature = "serde", serde(rename = "L_r"))]
    pub ranking: f64,
    #[cfg_attr(feature = "serde", serde(rename = "L_s"))]
    pub smoothing: f64,
    #[cfg_attr(feature = "serde", serde(rename = "L_f"))]
    pub feature: f64,
    #[cfg_attr(feature = "serde", serde(rename = "L_d"))]
    pub distortion: f64,
    #[cfg_attr(feature = "serde", serde(rename = "L_n"))]
    pub normal: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn get(&self, term: Term) -> f64 {
        match term {
            Term::Color => self.color,
            Term::Ranking => self.ranking,
            Term::Smoothing => self.smoothing,
            Term::Feature => self.feature,
            Term::Distortion => self.distortion,
            Term::Normal => self.normal,
        }
    }

    pub fn get_mut(&mut self, term: Term) -> &mut f64 {
        match term {
            Term::Color => &mut self.color,
            Term::Ranking => &mut self.ranking,
            Term::Smoothing => &mut self.smoothing,
            Term::Feature => &mut self.feature,
            Term::Distortion => &mut self.distortion,
            Term::Normal => &mut self.normal,
        }
    }

    /// Weighted sum of the terms.
    pub fn weighted_sum(&self, w: &LossWeights) -> f64 {
        self.color + w.l1 * self.ranking + w.l2 * self.smoothing + w.l3 * self.feature + w.l4 * self.distortion + w.l5 * self.normal
    }
}

/// Multi-view context for the feature term.
#[derive(Clone, Copy)]
pub struct FeatureContext<'a> {
    pub views: FeatureViews<'a>,
    pub reference: usize,
    pub sources: &'a [usize],
}

/// Everything one view contributes to the objective.
#[derive(Clone, Copy)]
pub struct LossInputs<'a> {
    pub camera: &'a Camera,
    pub splats: &'a [Splat],
    pub buffers: &'a RenderBuffers,
    pub target: &'a Image<Rgb>,
    pub mono: &'a Image<f64>,
    pub patches: &'a [PatchPermutation],
    pub features: Option<FeatureContext<'a>>,
}

/// Evaluates the selected terms. With `want_grad`, also returns gradients
/// of the total with respect to the render outputs. `gates` receives the
/// discrete decisions taken along the way.
pub fn evaluate(
    inputs: &LossInputs<'_>,
    weights: &LossWeights,
    terms: Terms,
    want_grad: bool,
    mut gates: Option<&mut GateTrace>,
) -> Result<(LossBreakdown, Option<PixelGrads>), LossError> {
    weights.validate()?;
    let b = inputs.buffers;
    check_shape(&b.color, inputs.target)?;
    check_shape(&b.depth, inputs.mono)?;

    let mut grads = want_grad.then(|| PixelGrads::zeros(b));
    let mut out = LossBreakdown::default();
    if let Some(g) = gates.as_deref_mut() {
        b.record_gates(g);
    }

    if terms.color {
        let g = grads.as_mut().map(|g| (g.color.as_mut_slice(), 1.0));
        out.color = color::color_term(&b.color, inputs.target, weights.ssim_mix, g, gates.as_deref_mut());
    }
    if terms.ranking {
        let g = grads.as_mut().map(|g| (g.depth.as_mut_slice(), weights.l1));
        out.ranking = depth::ranking_term(&b.depth, inputs.mono, &b.acc_weight, inputs.patches, weights.margin, g, gates.as_deref_mut());
    }
    if terms.smoothing {
        let g = grads.as_mut().map(|g| (g.depth.as_mut_slice(), weights.l2));
        out.smoothing = depth::smoothing_term(
            &b.depth,
            inputs.mono,
            &b.acc_weight,
            weights.edge_threshold,
            weights.smooth_tolerance,
            g,
            gates.as_deref_mut(),
        );
    }
    if terms.feature {
        if let Some(ctx) = inputs.features {
            let g = grads.as_mut().map(|g| (g.depth.as_mut_slice(), weights.l3));
            out.feature = feature::feature_term(ctx.reference, ctx.sources, &b.depth, &b.acc_weight, ctx.views, g, gates.as_deref_mut());
        }
    }
    if terms.distortion {
        let g = grads.as_mut().map(|g| (g, weights.l4));
        out.distortion = regularizers::distortion_term(b, g);
    }
    if terms.normal {
        let g = grads.as_mut().map(|g| (g, weights.l5));
        out.normal = regularizers::normal_term(inputs.camera, inputs.splats, b, g, gates);
    }
    out.total = out.weighted_sum(weights);
    Ok((out, grads))
}

/// Weighted total of all terms, without gradients.
pub fn total_loss(inputs: &LossInputs<'_>, weights: &LossWeights) -> Result<LossBreakdown, LossError> {
    evaluate(inputs, weights, Terms::ALL, false, None).map(|(b, _)| b)
}
