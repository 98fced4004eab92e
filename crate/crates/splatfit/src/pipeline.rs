//! Reconstruction and evaluation steps shared by the commands.

use serde::Serialize;
use splatfit_core::fusion::{chamfer_distance, depth_metrics, extract_mesh, sample_surface, Chamfer, DepthMetrics, FusionError, TriangleMesh, TsdfVolume};
use splatfit_core::image::Image;
use splatfit_core::optim::TrainView;
use splatfit_core::render::render_view;
use splatfit_core::synth::{generate_scene, init_splats, InitMode, SceneSpec, View};
use splatfit_core::{Camera, Splat, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReconParams {
    pub voxel: f64,
    pub truncation: f64,
    /// Accumulated weight needed for a rendered pixel to count as covered.
    pub min_coverage: f64,
    /// Mesh samples for the Chamfer distance.
    pub samples: usize,
    pub seed: u64,
}

impl Default for ReconParams {
    fn default() -> Self {
        Self {
            voxel: 0.01,
            truncation: 0.03,
            min_coverage: splatfit_core::fusion::MIN_COVERAGE,
            samples: 100_000,
            seed: 0,
        }
    }
}

/// Rendered depth with uncovered pixels zeroed, and the coverage map.
pub fn covered_depth(camera: &Camera, splats: &[Splat], min_coverage: f64) -> (Image<f64>, Image<f64>) {
    let b = render_view(camera, splats);
    let depth = Image::from_vec(
        b.depth.width(),
        b.depth.height(),
        b.depth
            .as_slice()
            .iter()
            .zip(b.acc_weight.as_slice())
            .map(|(&d, &a)| if a >= min_coverage { d } else { 0.0 })
            .collect(),
    );
    (depth, b.acc_weight)
}

/// Fuses rendered depth from `cameras` and extracts the zero level set.
pub fn reconstruct(cameras: &[Camera], splats: &[Splat], p: &ReconParams) -> Result<TriangleMesh, FusionError> {
    let mut volume = TsdfVolume::around_unit_sphere(p.voxel, p.truncation)?;
    for cam in cameras {
        let (depth, acc) = covered_depth(cam, splats, p.min_coverage);
        volume.integrate(cam, &depth, &acc, p.min_coverage)?;
    }
    extract_mesh(&volume)
}

pub fn mesh_chamfer(mesh: &TriangleMesh, gt_points: &[Vec3], p: &ReconParams) -> Result<Chamfer, FusionError> {
    let samples = sample_surface(mesh, p.samples, p.seed)?;
    chamfer_distance(&samples, gt_points)
}

fn stack(images: Vec<Image<f64>>) -> Image<f64> {
    let w = images.first().map_or(0, Image::width);
    let h: usize = images.iter().map(Image::height).sum();
    Image::from_vec(w, h, images.into_iter().flat_map(Image::into_vec).collect())
}

/// Depth errors pooled over all pixels of `views`, in units of `unit`.
pub fn view_depth_metrics(views: &[View], splats: &[Splat], unit: f64, min_coverage: f64) -> Result<DepthMetrics, FusionError> {
    let pred = views.iter().map(|v| covered_depth(&v.camera, splats, min_coverage).0).collect();
    let gt = views.iter().map(|v| v.depth.clone()).collect();
    depth_metrics(&stack(pred), &stack(gt), unit)
}

/// Small scene used by gradient checking: the reference shapes at
/// `size`×`size` with `count` jittered surfels.
pub fn gradcheck_scene(size: u32, count: usize, seed: u64) -> (Vec<TrainView>, Vec<Splat>) {
    let spec = SceneSpec {
        width: size,
        height: size,
        gt_points: 4000,
        seed,
        ..SceneSpec::reference()
    };
    let gt = generate_scene(&spec).expect("reference spec is valid");
    let mut splats = init_splats(&gt, count, 0.01, InitMode::SurfaceSample, seed);
    // varied opacities
    for (i, s) in splats.iter_mut().enumerate() {
        s.opacity_logit = -0.5 + (i % 7) as f64 * 0.15;
    }
    (gt.views.iter().map(TrainView::from).collect(), splats)
}
