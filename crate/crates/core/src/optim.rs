//! Adam training loop and finite-difference gradient verification.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;

use crate::features::{build_pyramid, FeaturePyramid};
use crate::gates::GateTrace;
use crate::geometry::Camera;
use crate::image::{Image, Rgb};
use crate::losses::{evaluate, sample_patches, FeatureContext, FeatureViews, LossBreakdown, LossError, LossInputs, LossWeights, Term, Terms};
use crate::math;
use crate::render::{render_backward, render_view};
use crate::rng::rng_for;
use crate::splat::{ParamField, Splat, SplatGrad, PARAM_COUNT};
use crate::synth::View;

/// Log-scale bounds enforced after every step.
pub const LOG_SCALE_MIN: f64 = -9.210_340_371_976_182; // ln 1e-4
pub const LOG_SCALE_MAX: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimError {
    #[error("non-finite gradient for splat {splat} parameter {param}")]
    NonFiniteGradient { splat: usize, param: &'static str },
    #[error("at least 2 training views are required, got {0}")]
    InsufficientViews(usize),
    #[error("invalid training config: {0}")]
    InvalidConfig(&'static str),
    #[error("gradient shape mismatch: {splats} splats, {grads} gradients")]
    ShapeMismatch { splats: usize, grads: usize },
    #[error(transparent)]
    Loss(#[from] LossError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LearningRates {
    pub position: f64,
    pub rotation: f64,
    pub scale: f64,
    pub opacity: f64,
    pub color: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position: 1.6e-4,
            rotation: 1e-3,
            scale: 5e-3,
            opacity: 5e-2,
            color: 2.5e-3,
        }
    }
}

impl LearningRates {
    fn for_index(&self, i: usize) -> f64 {
        match i {
            0..=2 => self.position,
            3..=6 => self.rotation,
            7..=8 => self.scale,
            9 => self.opacity,
            _ => self.color,
        }
    }

    fn all(&self) -> [f64; 5] {
        [self.position, self.rotation, self.scale, self.opacity, self.color]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub iterations: usize,
    pub lr: LearningRates,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weights: LossWeights,
    /// Iteration (0-based) from which the feature term is active.
    pub feature_start: usize,
    /// Iteration from which the distortion term is active.
    pub distortion_start: usize,
    /// Iteration from which the normal term is active.
    pub normal_start: usize,
    /// Use every view each iteration instead of one in turn.
    pub full_batch: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 3000,
            lr: LearningRates::default(),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
            weights: LossWeights::default(),
            feature_start: 500,
            distortion_start: 300,
            normal_start: 700,
            full_batch: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        if self.iterations == 0 {
            return Err(OptimError::InvalidConfig("iterations must be at least 1"));
        }
        if !self.lr.all().iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err(OptimError::InvalidConfig("learning rates must be positive"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0) {
            return Err(OptimError::InvalidConfig("Adam needs beta in [0, 1) and eps > 0"));
        }
        self.weights.validate()?;
        Ok(())
    }

    /// Terms with a non-zero weight at `iteration`.
    pub fn active_terms(&self, iteration: usize) -> Terms {
        let w = &self.weights;
        Terms::ALL
            .with(Term::Ranking, w.l1 > 0.0)
            .with(Term::Smoothing, w.l2 > 0.0)
            .with(Term::Feature, w.l3 > 0.0 && iteration >= self.feature_start)
            .with(Term::Distortion, w.l4 > 0.0 && iteration >= self.distortion_start)
            .with(Term::Normal, w.l5 > 0.0 && iteration >= self.normal_start)
    }
}

/// Adam moments for every parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<SplatGrad>,
    pub v: Vec<SplatGrad>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(count: usize) -> Self {
        Self {
            m: vec![[0.0; PARAM_COUNT]; count],
            v: vec![[0.0; PARAM_COUNT]; count],
            step: 0,
        }
    }
}

/// Restores unit quaternions, clamps log-scales and colors.
pub fn project_parameters(s: &mut Splat) {
    let n = math::sqrt(s.rotation.iter().map(|v| v * v).sum());
    if n > 0.0 && n.is_finite() {
        s.rotation = s.rotation.map(|v| v / n);
    } else {
        s.rotation = [1.0, 0.0, 0.0, 0.0];
    }
    s.log_scales = s.log_scales.map(|v| v.clamp(LOG_SCALE_MIN, LOG_SCALE_MAX));
    s.color = s.color.map(|v| v.clamp(0.0, 1.0));
}

/// One Adam update with bias correction.
pub fn step(splats: &mut [Splat], grads: &[SplatGrad], state: &mut OptimizerState, config: &TrainConfig) -> Result<(), OptimError> {
    if grads.len() != splats.len() || state.m.len() != splats.len() {
        return Err(OptimError::ShapeMismatch {
            splats: splats.len(),
            grads: grads.len(),
        });
    }
    for (i, g) in grads.iter().enumerate() {
        if let Some(k) = g.iter().position(|v| !v.is_finite()) {
            return Err(OptimError::NonFiniteGradient {
                splat: i,
                param: ParamField::ALL[k].name(),
            });
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - math::powf(b1, t);
    let c2 = 1.0 - math::powf(b2, t);
    for (i, s) in splats.iter_mut().enumerate() {
        let mut p = s.to_params();
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for k in 0..PARAM_COUNT {
            let g = grads[i][k];
            m[k] = b1 * m[k] + (1.0 - b1) * g;
            v[k] = b2 * v[k] + (1.0 - b2) * g * g;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= config.lr.for_index(k) * m_hat / (math::sqrt(v_hat) + config.eps);
        }
        *s = Splat::from_params(&p);
        project_parameters(s);
    }
    Ok(())
}

/// The parts of a ground-truth view that training may see.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainView {
    pub camera: Camera,
    pub image: Image<Rgb>,
    pub mono: Image<f64>,
}

impl From<&View> for TrainView {
    fn from(v: &View) -> Self {
        Self {
            camera: v.camera.clone(),
            image: v.image.clone(),
            mono: v.mono.clone(),
        }
    }
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LogRecord {
    #[cfg_attr(feature = "serde", serde(rename = "iter"))]
    pub iteration: usize,
    /// View used, or `None` for a full-batch step.
    pub view: Option<usize>,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub losses: LossBreakdown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub splats: Vec<Splat>,
    pub log: Vec<LogRecord>,
}

/// Shared state for evaluating views of one scene.
pub struct Objective<'a> {
    views: &'a [TrainView],
    cameras: Vec<Camera>,
    pyramids: Vec<FeaturePyramid>,
    sources: Vec<Vec<usize>>,
    weights: LossWeights,
}

impl<'a> Objective<'a> {
    pub fn new(views: &'a [TrainView], weights: LossWeights) -> Self {
        let n = views.len();
        Self {
            views,
            cameras: views.iter().map(|v| v.camera.clone()).collect(),
            pyramids: views.iter().map(|v| build_pyramid(&v.image, weights.levels)).collect(),
            sources: (0..n).map(|r| (0..n).filter(|&s| s != r).collect()).collect(),
            weights,
        }
    }

    /// Loss of one view and, optionally, per-splat gradients.
    pub fn evaluate_view(
        &self,
        splats: &[Splat],
        view: usize,
        terms: Terms,
        patch_seed: u64,
        want_grad: bool,
        gates: Option<&mut GateTrace>,
    ) -> Result<(LossBreakdown, Option<Vec<SplatGrad>>), OptimError> {
        let v = &self.views[view];
        let buffers = render_view(&v.camera, splats);
        let mut rng = rng_for(patch_seed, "patches");
        let patches = if terms.ranking {
            sample_patches(v.image.width(), v.image.height(), self.weights.patch_size, &mut rng)
        } else {
            Vec::new()
        };
        let features = (terms.feature && self.views.len() > 1).then(|| FeatureContext {
            views: FeatureViews {
                cameras: &self.cameras,
                pyramids: &self.pyramids,
            },
            reference: view,
            sources: &self.sources[view],
        });
        let inputs = LossInputs {
            camera: &v.camera,
            splats,
            buffers: &buffers,
            target: &v.image,
            mono: &v.mono,
            patches: &patches,
            features,
        };
        let (losses, pixel_grads) = evaluate(&inputs, &self.weights, terms, want_grad, gates)?;
        let grads = pixel_grads.map(|g| render_backward(&v.camera, splats, &buffers, &g));
        Ok((losses, grads))
    }
}

/// Fits `splats` to the views. `on_iteration` sees every log record with
/// the parameters after that step.
pub fn fit(
    views: &[TrainView],
    mut splats: Vec<Splat>,
    config: &TrainConfig,
    mut on_iteration: impl FnMut(&LogRecord, &[Splat]),
) -> Result<FitResult, OptimError> {
    config.validate()?;
    if views.len() < 2 {
        return Err(OptimError::InsufficientViews(views.len()));
    }
    for s in &mut splats {
        project_parameters(s);
    }
    let objective = Objective::new(views, config.weights);
    let mut state = OptimizerState::new(splats.len());
    let mut log = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let terms = config.active_terms(it);
        let patch_seed = crate::rng::derive_seed(config.seed, "iteration") ^ it as u64;
        let (record, grads) = if config.full_batch {
            let mut total = LossBreakdown::default();
            let mut sum = vec![[0.0; PARAM_COUNT]; splats.len()];
            let scale = 1.0 / views.len() as f64;
            for v in 0..views.len() {
                let (l, g) = objective.evaluate_view(&splats, v, terms, patch_seed ^ ((v as u64) << 32), true, None)?;
                for term in Term::ALL {
                    *total.get_mut(term) += scale * l.get(term);
                }
                total.total += scale * l.total;
                for (acc, g) in sum.iter_mut().zip(g.unwrap_or_default()) {
                    for k in 0..PARAM_COUNT {
                        acc[k] += scale * g[k];
                    }
                }
            }
            (
                LogRecord {
                    iteration: it,
                    view: None,
                    losses: total,
                },
                sum,
            )
        } else {
            let v = it % views.len();
            let (l, g) = objective.evaluate_view(&splats, v, terms, patch_seed, true, None)?;
            (
                LogRecord {
                    iteration: it,
                    view: Some(v),
                    losses: l,
                },
                g.unwrap_or_default(),
            )
        };
        step(&mut splats, &grads, &mut state, config)?;
        on_iteration(&record, &splats);
        log.push(record);
    }
    Ok(FitResult { splats, log })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    pub tolerance: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    /// Distance within which a gate change excludes a parameter.
    pub gate_margin: f64,
    /// Splats checked, chosen at random.
    pub splats: usize,
    /// Further random splats are drawn until every field has this many
    /// checked entries or the set is exhausted.
    pub min_per_field: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            tolerance: 1e-4,
            floor: 1e-6,
            gate_margin: 1e-3,
            splats: 10,
            min_per_field: 3,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckEntry {
    pub splat: usize,
    pub param: ParamField,
    pub analytic: f64,
    /// Richardson-extrapolated difference, `(4 D(h) - D(2h)) / 3`.
    pub numeric: f64,
    /// Plain central difference `D(h)`.
    pub central: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub term: Term,
    pub checked: Vec<GradCheckEntry>,
    /// Parameters whose neighborhood crosses a discrete decision.
    pub excluded: Vec<(usize, ParamField)>,
    pub max_relative_error: f64,
    pub passed: bool,
}

impl GradCheckReport {
    /// Checked entries per parameter field.
    pub fn field_counts(&self) -> [usize; PARAM_COUNT] {
        let mut counts = [0; PARAM_COUNT];
        for e in &self.checked {
            counts[e.param.index()] += 1;
        }
        counts
    }

    pub fn failures(&self, tolerance: f64) -> impl Iterator<Item = &GradCheckEntry> {
        self.checked.iter().filter(move |e| e.relative_error > tolerance)
    }
}

/// Compares analytic gradients of one term (on view 0) with extrapolated
/// central differences for every parameter of randomly chosen splats.
pub fn gradient_check(
    views: &[TrainView],
    splats: &[Splat],
    term: Term,
    weights: &LossWeights,
    config: &GradCheckConfig,
) -> Result<GradCheckReport, OptimError> {
    if views.is_empty() {
        return Err(OptimError::InsufficientViews(0));
    }
    let mut w = *weights;
    // the checked term carries unit weight so magnitudes are comparable
    match term {
        Term::Color => {}
        Term::Ranking => w.l1 = 1.0,
        Term::Smoothing => w.l2 = 1.0,
        Term::Feature => w.l3 = 1.0,
        Term::Distortion => w.l4 = 1.0,
        Term::Normal => w.l5 = 1.0,
    }
    let objective = Objective::new(views, w);
    let terms = Terms::only(term);
    let patch_seed = config.seed;
    let eval = |s: &[Splat]| -> Result<(f64, u64), OptimError> {
        let mut gates = GateTrace::new();
        let (l, _) = objective.evaluate_view(s, 0, terms, patch_seed, false, Some(&mut gates))?;
        Ok((l.total, gates.digest()))
    };
    let (_, base_gates) = eval(splats)?;
    let (_, grads) = objective.evaluate_view(splats, 0, terms, patch_seed, true, None)?;
    let grads = grads.unwrap_or_default();

    let mut rng = rng_for(config.seed, "gradcheck");
    let order = index::sample(&mut rng, splats.len(), splats.len()).into_vec();

    let mut checked = Vec::new();
    let mut excluded = Vec::new();
    let mut per_field = [0usize; PARAM_COUNT];
    let mut work = splats.to_vec();
    for (n, &i) in order.iter().enumerate() {
        if n >= config.splats && per_field.iter().all(|&c| c >= config.min_per_field) {
            break;
        }
        for field in ParamField::ALL {
            let x = splats[i].param(field);
            let mut at = |value: f64| -> Result<(f64, u64), OptimError> {
                work[i].set_param(field, value);
                let r = eval(&work);
                work[i] = splats[i].clone();
                r
            };
            let h = config.step;
            let (fp, gp) = at(x + h)?;
            let (fm, gm) = at(x - h)?;
            let (fp2, gp2) = at(x + 2.0 * h)?;
            let (fm2, gm2) = at(x - 2.0 * h)?;
            let (_, gfp) = at(x + config.gate_margin)?;
            let (_, gfm) = at(x - config.gate_margin)?;
            if [gp, gm, gp2, gm2, gfp, gfm].iter().any(|g| *g != base_gates) {
                excluded.push((i, field));
                continue;
            }
            let central = (fp - fm) / (2.0 * h);
            let wide = (fp2 - fm2) / (4.0 * h);
            // cancels the O(h^2) truncation term of the central difference
            let numeric = (4.0 * central - wide) / 3.0;
            let analytic = grads[i][field.index()];
            per_field[field.index()] += 1;
            checked.push(GradCheckEntry {
                splat: i,
                param: field,
                analytic,
                numeric,
                central,
                relative_error: math::relative_error(analytic, numeric, config.floor),
            });
        }
    }
    let max_relative_error = checked.iter().map(|e| e.relative_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        term,
        passed: !checked.is_empty() && max_relative_error <= config.tolerance,
        checked,
        excluded,
        max_relative_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, init_splats, InitMode, SceneSpec};
    use crate::Vec3;

    fn unit_splat() -> Splat {
        Splat::new(Vec3::zeros(), [1.0, 0.0, 0.0, 0.0], [0.1, 0.1], 0.5, [0.5; 3])
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = vec![unit_splat()];
        let before = s.clone();
        let mut st = OptimizerState::new(1);
        step(&mut s, &[[0.0; PARAM_COUNT]], &mut st, &TrainConfig::default()).unwrap();
        assert_eq!(s, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn constant_gradient_descends() {
        let mut s = vec![unit_splat()];
        let mut st = OptimizerState::new(1);
        let mut g = [0.0; PARAM_COUNT];
        g[0] = 2.0;
        g[9] = -0.5;
        for _ in 0..50 {
            step(&mut s, &[g], &mut st, &TrainConfig::default()).unwrap();
        }
        assert!(s[0].mean.x < 0.0);
        assert!(s[0].opacity_logit > 0.0);
    }

    #[test]
    fn scalar_quadratic_converges() {
        // f(x) = (x - 3)^2 / 2 on the opacity logit, lr 0.01
        let mut cfg = TrainConfig::default();
        cfg.lr.opacity = 0.01;
        let mut s = vec![unit_splat()];
        let mut st = OptimizerState::new(1);
        let mut converged = None;
        for n in 1..=2000 {
            let mut g = [0.0; PARAM_COUNT];
            g[9] = s[0].opacity_logit - 3.0;
            step(&mut s, &[g], &mut st, &cfg).unwrap();
            if converged.is_none() && (s[0].opacity_logit - 3.0).abs() < 1e-3 {
                converged = Some(n);
            }
        }
        assert!(converged.is_some());
        assert!((s[0].opacity_logit - 3.0).abs() < 1e-3, "{}", s[0].opacity_logit);
    }

    #[test]
    fn non_finite_gradients_are_reported() {
        let mut s = vec![unit_splat(), unit_splat()];
        let mut st = OptimizerState::new(2);
        let mut g = [[0.0; PARAM_COUNT]; 2];
        g[1][7] = f64::NAN;
        let err = step(&mut s, &g, &mut st, &TrainConfig::default()).unwrap_err();
        assert_eq!(
            err,
            OptimError::NonFiniteGradient {
                splat: 1,
                param: "log_scale.u"
            }
        );
    }

    #[test]
    fn projection_restores_invariants() {
        let mut s = unit_splat();
        s.rotation = [2.0, 0.0, 0.0, 0.0];
        s.log_scales = [3.0, -20.0];
        s.color = [1.5, -0.2, 0.3];
        project_parameters(&mut s);
        assert_eq!(s.rotation, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.log_scales, [LOG_SCALE_MAX, LOG_SCALE_MIN]);
        assert_eq!(s.color, [1.0, 0.0, 0.3]);
        assert!((LOG_SCALE_MIN - math::ln(1e-4)).abs() < 1e-12);
    }

    fn small_scene(n: usize) -> (Vec<TrainView>, Vec<Splat>) {
        let mut spec = SceneSpec::sphere();
        spec.width = 24;
        spec.height = 24;
        spec.gt_points = 2000;
        let gt = generate_scene(&spec).unwrap();
        let splats = init_splats(&gt, n, 0.01, InitMode::SurfaceSample, 1);
        (gt.views.iter().map(TrainView::from).collect(), splats)
    }

    #[test]
    fn fit_is_deterministic_and_descends() {
        let (views, splats) = small_scene(150);
        let cfg = TrainConfig {
            iterations: 60,
            feature_start: 20,
            distortion_start: 0,
            normal_start: 0,
            ..TrainConfig::default()
        };
        let a = fit(&views, splats.clone(), &cfg, |_, s| {
            for p in s {
                let n: f64 = p.rotation.iter().map(|v| v * v).sum();
                assert!((n - 1.0).abs() < 1e-6);
                assert!(p.is_finite());
            }
        })
        .unwrap();
        let b = fit(&views, splats, &cfg, |_, _| {}).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.log.len(), 60);
        assert_eq!(a.log[4].view, Some(1));
        let first: f64 = a.log[..3].iter().map(|r| r.losses.total).sum();
        let last: f64 = a.log[57..].iter().map(|r| r.losses.total).sum();
        assert!(last < first, "{last} vs {first}");
        assert_eq!(a.log[19].losses.feature, 0.0);
        assert!(a.log[20].losses.feature > 0.0);
    }

    #[test]
    fn regularizers_start_late() {
        let cfg = TrainConfig::default();
        let early = cfg.active_terms(cfg.distortion_start - 1);
        assert!(!early.distortion && !early.normal && !early.feature && early.ranking);
        let mid = cfg.active_terms(cfg.distortion_start);
        assert!(mid.distortion && !mid.normal);
        let late = cfg.active_terms(cfg.normal_start);
        assert!(late.distortion && late.normal && late.feature);
    }

    #[test]
    fn fit_requires_two_views() {
        let (views, splats) = small_scene(10);
        let err = fit(&views[..1], splats, &TrainConfig::default(), |_, _| {}).unwrap_err();
        assert_eq!(err, OptimError::InsufficientViews(1));
    }

    #[test]
    fn full_batch_averages_views() {
        let (views, splats) = small_scene(40);
        let cfg = TrainConfig {
            iterations: 2,
            full_batch: true,
            ..TrainConfig::default()
        };
        let r = fit(&views, splats, &cfg, |_, _| {}).unwrap();
        assert!(r.log.iter().all(|l| l.view.is_none() && l.losses.total > 0.0));
    }

    #[test]
    fn color_gradient_check_single_splat() {
        let (views, _) = small_scene(1);
        let splat = Splat::new(Vec3::new(0.02, -0.03, -0.2), [0.9, 0.2, 0.3, 0.1], [0.15, 0.1], 0.6, [0.7, 0.3, 0.2]);
        let cfg = GradCheckConfig::default();
        let r = gradient_check(&views, &[splat], Term::Color, &LossWeights::default(), &cfg).unwrap();
        assert!(r.passed, "{:?}", r.failures(cfg.tolerance).collect::<Vec<_>>());
        assert_eq!(r.checked.len() + r.excluded.len(), PARAM_COUNT);
    }

    #[test]
    fn splat_on_the_cutoff_is_excluded() {
        let (views, _) = small_scene(1);
        let cam = &views[0].camera;
        // place the 3-sigma boundary of a fronto-parallel splat exactly on a pixel ray
        let ray = cam.ray_through_pixel(&Camera::pixel_center(12, 12));
        let hit = ray.at(1.5);
        let right = cam.rotation().column(0).into_owned();
        let down = cam.rotation().column(1).into_owned();
        let forward = cam.rotation().column(2).into_owned();
        let r = nalgebra::Matrix3::from_columns(&[right, down, forward]);
        let q = nalgebra::UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(r));
        let scale = 0.05;
        let mean = hit - right * (3.0 * scale);
        let splat = Splat::new(mean, [q.w, q.i, q.j, q.k], [scale, scale], 0.8, [0.9, 0.1, 0.1]);
        let r = gradient_check(&views, &[splat], Term::Color, &LossWeights::default(), &GradCheckConfig::default()).unwrap();
        assert!(r.excluded.contains(&(0, ParamField::MeanX)) || r.excluded.contains(&(0, ParamField::LogScaleU)));
        assert!(!r.excluded.is_empty());
    }
}
