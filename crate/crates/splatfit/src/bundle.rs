//! Scene bundle directories.
//!
//! ```text
//! spec.json  gt_points.ply
//! cam_{i}.json  rgb_{i}.png  depth_{i}.pfm  mono_{i}.pfm  normal_{i}.pfm
//! holdout/   the same five files per held-out view
//! ```

use std::path::{Path, PathBuf};

use splatfit_core::optim::TrainView;
use splatfit_core::synth::{GroundTruth, SceneSpec, View};

use crate::io::{self, IoError};

#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    pub spec: SceneSpec,
    pub gt: GroundTruth,
}

impl Bundle {
    pub fn train_views(&self) -> Vec<TrainView> {
        self.gt.views.iter().map(TrainView::from).collect()
    }
}

pub fn view_files(dir: &Path, i: usize) -> [PathBuf; 5] {
    [
        dir.join(format!("cam_{i}.json")),
        dir.join(format!("rgb_{i}.png")),
        dir.join(format!("depth_{i}.pfm")),
        dir.join(format!("mono_{i}.pfm")),
        dir.join(format!("normal_{i}.pfm")),
    ]
}

fn write_view(dir: &Path, i: usize, v: &View) -> Result<(), IoError> {
    let [cam, rgb, depth, mono, normal] = view_files(dir, i);
    io::write_camera(&cam, &v.camera)?;
    io::write_png(&rgb, &v.image)?;
    io::write_pfm(&depth, &v.depth)?;
    io::write_pfm(&mono, &v.mono)?;
    io::write_pfm_rgb(&normal, &v.normal)
}

fn read_view(dir: &Path, i: usize) -> Result<View, IoError> {
    let [cam, rgb, depth, mono, normal] = view_files(dir, i);
    let camera = io::read_camera(&cam)?;
    let image = io::read_png(&rgb)?;
    let depth_img = io::read_pfm(&depth)?;
    let mono_img = io::read_pfm(&mono)?;
    let normal_img = io::read_pfm_rgb(&normal)?;
    let (w, h) = (camera.width() as usize, camera.height() as usize);
    for (path, size) in [
        (&rgb, (image.width(), image.height())),
        (&depth, (depth_img.width(), depth_img.height())),
        (&mono, (mono_img.width(), mono_img.height())),
        (&normal, (normal_img.width(), normal_img.height())),
    ] {
        if size != (w, h) {
            return Err(IoError::format(path, format!("size {size:?} does not match camera {w}x{h}")));
        }
    }
    Ok(View {
        camera,
        image,
        depth: depth_img,
        normal: normal_img,
        mono: mono_img,
    })
}

pub fn write_bundle(dir: &Path, bundle: &Bundle) -> Result<(), IoError> {
    let mut spec = serde_json::to_string_pretty(&bundle.spec).expect("spec serializes");
    spec.push('\n');
    io::write_atomic(&dir.join("spec.json"), spec.as_bytes())?;
    for (i, v) in bundle.gt.views.iter().enumerate() {
        write_view(dir, i, v)?;
    }
    for (i, v) in bundle.gt.holdout.iter().enumerate() {
        write_view(&dir.join("holdout"), i, v)?;
    }
    io::write_points(&dir.join("gt_points.ply"), &bundle.gt.points, Some(&bundle.gt.normals))
}

pub fn read_spec(path: &Path) -> Result<SceneSpec, IoError> {
    let bytes = io::read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| IoError::format(path, e.to_string()))
}

pub fn read_bundle(dir: &Path) -> Result<Bundle, IoError> {
    let spec = read_spec(&dir.join("spec.json"))?;
    let views = (0..spec.rig.count).map(|i| read_view(dir, i)).collect::<Result<Vec<_>, _>>()?;
    let holdout = (0..spec.rig.holdout)
        .map(|i| read_view(&dir.join("holdout"), i))
        .collect::<Result<Vec<_>, _>>()?;
    let ply = dir.join("gt_points.ply");
    let (points, normals) = io::read_points(&ply)?;
    let normals = normals.ok_or_else(|| IoError::format(&ply, "ground-truth points need normals"))?;
    Ok(Bundle {
        spec,
        gt: GroundTruth {
            views,
            holdout,
            points,
            normals,
        },
    })
}
