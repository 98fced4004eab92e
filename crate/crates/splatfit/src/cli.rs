//! Command-line interface.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use splatfit_core::fusion::{Chamfer, DepthMetrics, FusionError};
use splatfit_core::losses::{LossWeights, Term};
use splatfit_core::optim::{fit, gradient_check, GradCheckConfig, GradCheckReport, OptimError};
use splatfit_core::synth::{generate_scene, init_splats, SceneSpec, SynthError};

use crate::bundle::{read_bundle, read_spec, write_bundle, Bundle};
use crate::config::{load_config, weight_overrides};
use crate::io::{self, IoError};
use crate::manifest::RunManifest;
use crate::pipeline::{self, ReconParams};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("empty result: {0}")]
    Empty(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Empty(_) => 4,
            CliError::Verification(_) => 5,
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<OptimError> for CliError {
    fn from(e: OptimError) -> Self {
        match e {
            OptimError::NonFiniteGradient { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<FusionError> for CliError {
    fn from(e: FusionError) -> Self {
        match e {
            FusionError::EmptySurface | FusionError::EmptyPointSet | FusionError::NoOverlap => CliError::Empty(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "splatfit", version, about = "Sparse-view surface reconstruction with 2D Gaussian surfels")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SPLATFIT_THREADS")]
    pub threads: Option<usize>,
    /// Use ordered reductions only. Reductions are always ordered, so this
    /// is recorded in the manifest and changes nothing else.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Run seed; overrides the seed in specs and configs.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic scene bundle.
    GenScene(GenSceneArgs),
    /// Fit surfels to a scene bundle.
    Fit(FitArgs),
    /// Fuse rendered depth into a mesh and score it.
    Recon(ReconArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
    /// Depth metrics of fitted surfels against ground-truth views.
    EvalDepth(EvalDepthArgs),
    /// Render color, depth and coverage of fitted surfels.
    Render(RenderArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Reference,
    Sphere,
}

#[derive(Debug, Args)]
pub struct GenSceneArgs {
    /// Scene spec JSON; defaults to the preset.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Reference)]
    pub preset: Preset,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Dotted-key override, e.g. `losses.l1=0.5`; repeatable, last wins.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Loss-weight shorthand, e.g. `l3=0,l1=0.5`.
    #[arg(long)]
    pub weights: Option<String>,
    /// Start from these surfels instead of initializing from the bundle.
    #[arg(long)]
    pub init: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReconArgs {
    #[arg(long)]
    pub splats: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = ReconParams::default().voxel)]
    pub voxel: f64,
    #[arg(long, default_value_t = ReconParams::default().truncation)]
    pub truncation: f64,
    #[arg(long, default_value_t = ReconParams::default().min_coverage)]
    pub min_coverage: f64,
    #[arg(long, default_value_t = ReconParams::default().samples)]
    pub samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LossSelector {
    All,
    Color,
    Ranking,
    Smoothing,
    Feature,
    Distortion,
    Normal,
}

impl LossSelector {
    fn terms(self) -> Vec<Term> {
        match self {
            LossSelector::All => Term::ALL.to_vec(),
            LossSelector::Color => vec![Term::Color],
            LossSelector::Ranking => vec![Term::Ranking],
            LossSelector::Smoothing => vec![Term::Smoothing],
            LossSelector::Feature => vec![Term::Feature],
            LossSelector::Distortion => vec![Term::Distortion],
            LossSelector::Normal => vec![Term::Normal],
        }
    }
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value_t = LossSelector::All)]
    pub loss: LossSelector,
    #[arg(long, default_value_t = GradCheckConfig::default().tolerance)]
    pub tolerance: f64,
    /// Central-difference step.
    #[arg(long, default_value_t = GradCheckConfig::default().step)]
    pub step: f64,
    /// Splats checked per loss.
    #[arg(long, default_value_t = GradCheckConfig::default().splats)]
    pub splats: usize,
    /// Image side in pixels.
    #[arg(long, default_value_t = 32)]
    pub size: u32,
    /// Surfels in the scene.
    #[arg(long, default_value_t = 64)]
    pub count: usize,
    /// Also write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Holdout,
}

#[derive(Debug, Args)]
pub struct EvalDepthArgs {
    #[arg(long)]
    pub splats: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, value_enum, default_value_t = Split::Holdout)]
    pub split: Split,
    /// Threshold unit (one voxel).
    #[arg(long, default_value_t = ReconParams::default().voxel)]
    pub unit: f64,
    #[arg(long, default_value_t = ReconParams::default().min_coverage)]
    pub min_coverage: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub splats: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Split::Train)]
    pub split: Split,
}

/// Parsed global options that every command sees.
#[derive(Clone, Copy, Debug)]
pub struct Globals {
    pub threads: usize,
    pub deterministic: bool,
    pub seed: Option<u64>,
}

/// Configures the worker pool; returns the thread count in use.
pub fn init_threads(requested: Option<usize>) -> usize {
    let n = requested.filter(|n| *n > 0).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    // a pool may already exist when called twice in one process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    rayon::current_num_threads()
}

/// Runs a command, returning the text to print on success.
pub fn run(cli: Cli) -> Result<String, CliError> {
    let globals = Globals {
        threads: init_threads(cli.threads),
        deterministic: cli.deterministic,
        seed: cli.seed,
    };
    match cli.command {
        Command::GenScene(a) => gen_scene(&a, &globals),
        Command::Fit(a) => fit_cmd(&a, &globals),
        Command::Recon(a) => recon(&a, &globals),
        Command::Gradcheck(a) => gradcheck(&a, &globals),
        Command::EvalDepth(a) => eval_depth(&a, &globals),
        Command::Render(a) => render(&a, &globals),
    }
}

fn json_bytes(v: &impl Serialize) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("value serializes");
    s.push('\n');
    s.into_bytes()
}

pub fn gen_scene(a: &GenSceneArgs, g: &Globals) -> Result<String, CliError> {
    let mut spec = match &a.spec {
        Some(p) => read_spec(p)?,
        None => match a.preset {
            Preset::Reference => SceneSpec::reference(),
            Preset::Sphere => SceneSpec::sphere(),
        },
    };
    if let Some(seed) = g.seed {
        spec.seed = seed;
    }
    let spec_bytes = json_bytes(&spec);
    let mut manifest = RunManifest::new("gen-scene", &spec_bytes, spec.seed, g.threads, g.deterministic);
    manifest.inputs.extend(a.spec.clone());
    let gt = manifest.time("generate", || generate_scene(&spec))?;
    let bundle = Bundle { spec, gt };
    manifest.time("write", || write_bundle(&a.out, &bundle))?;
    manifest.outputs.push(a.out.clone());
    manifest.write(&a.out.join("manifest.json"))?;
    Ok(format!(
        "wrote {} training and {} held-out views, {} surface points to {}",
        bundle.gt.views.len(),
        bundle.gt.holdout.len(),
        bundle.gt.points.len(),
        a.out.display()
    ))
}

pub fn fit_cmd(a: &FitArgs, g: &Globals) -> Result<String, CliError> {
    let file = match &a.config {
        Some(p) => Some(String::from_utf8_lossy(&io::read_bytes(p)?).into_owned()),
        None => None,
    };
    let mut overrides = a.set.clone();
    if let Some(w) = &a.weights {
        overrides.extend(weight_overrides(w));
    }
    if let Some(seed) = g.seed {
        overrides.push(format!("seed={seed}"));
    }
    let config = load_config(file.as_deref(), &overrides).map_err(CliError::Input)?;
    let config_json = config.to_json();
    let mut manifest = RunManifest::new("fit", config_json.as_bytes(), config.seed, g.threads, g.deterministic);
    manifest.inputs.push(a.scene.clone());
    manifest.inputs.extend(a.config.clone());

    let bundle = manifest.time("load", || read_bundle(&a.scene))?;
    if bundle.gt.views.len() < 2 {
        return Err(OptimError::InsufficientViews(bundle.gt.views.len()).into());
    }
    let splats = match &a.init {
        Some(p) => {
            manifest.inputs.push(p.clone());
            io::read_splats(p)?
        }
        None => manifest.time("init", || init_splats(&bundle.gt, config.init.count, config.init.sigma_p, config.init.mode, config.seed)),
    };
    if splats.is_empty() {
        return Err(CliError::Input("no surfels to fit".into()));
    }
    std::fs::create_dir_all(&a.out).map_err(|e| IoError::Io {
        path: a.out.clone(),
        source: e,
    })?;
    io::write_atomic(&a.out.join("config.json"), config_json.as_bytes())?;
    let views = bundle.train_views();
    let train = config.train();
    let mut ckpt_err = None;
    let result = manifest.time("fit", || {
        fit(&views, splats, &train, |rec, s| {
            let k = config.checkpoint_every;
            if k > 0 && (rec.iteration + 1) % k == 0 && ckpt_err.is_none() {
                ckpt_err = io::write_splats(&a.out.join(format!("ckpt_{:06}.ply", rec.iteration + 1)), s).err();
            }
        })
    })?;
    if let Some(e) = ckpt_err {
        return Err(e.into());
    }
    let mut log = String::new();
    for rec in &result.log {
        log.push_str(&serde_json::to_string(rec).expect("log record serializes"));
        log.push('\n');
    }
    let final_ply = a.out.join("final.ply");
    let log_path = a.out.join("train.jsonl");
    manifest.time("write", || -> Result<(), IoError> {
        io::write_splats(&final_ply, &result.splats)?;
        io::write_atomic(&log_path, log.as_bytes())
    })?;
    manifest.outputs.extend([final_ply.clone(), log_path, a.out.join("config.json")]);
    manifest.write(&a.out.join("manifest.json"))?;
    let last = result.log.last().map_or(0.0, |r| r.losses.total);
    Ok(format!(
        "fitted {} surfels over {} iterations, final loss {last:.6}; wrote {}",
        result.splats.len(),
        result.log.len(),
        final_ply.display()
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct ReconMetrics {
    pub accuracy: f64,
    pub completeness: f64,
    pub chamfer: f64,
    /// Training-view depth errors in voxel units.
    pub depth: DepthMetrics,
    /// Held-out view depth errors, when the bundle has held-out views.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holdout_depth: Option<DepthMetrics>,
    pub vertices: usize,
    pub triangles: usize,
    pub params: ReconParams,
}

pub fn recon(a: &ReconArgs, g: &Globals) -> Result<String, CliError> {
    let params = ReconParams {
        voxel: a.voxel,
        truncation: a.truncation,
        min_coverage: a.min_coverage,
        samples: a.samples,
        seed: g.seed.unwrap_or(0),
    };
    let mut manifest = RunManifest::new("recon", &json_bytes(&params), params.seed, g.threads, g.deterministic);
    manifest.inputs.extend([a.splats.clone(), a.scene.clone()]);
    let splats = io::read_splats(&a.splats)?;
    let bundle = read_bundle(&a.scene)?;
    let cameras = bundle.gt.cameras();
    let mesh = manifest.time("fuse", || pipeline::reconstruct(&cameras, &splats, &params))?;
    let Chamfer {
        accuracy,
        completeness,
        chamfer,
    } = manifest.time("chamfer", || pipeline::mesh_chamfer(&mesh, &bundle.gt.points, &params))?;
    let depth = pipeline::view_depth_metrics(&bundle.gt.views, &splats, params.voxel, params.min_coverage)?;
    let holdout_depth = if bundle.gt.holdout.is_empty() {
        None
    } else {
        pipeline::view_depth_metrics(&bundle.gt.holdout, &splats, params.voxel, params.min_coverage).ok()
    };
    let metrics = ReconMetrics {
        accuracy,
        completeness,
        chamfer,
        depth,
        holdout_depth,
        vertices: mesh.vertices.len(),
        triangles: mesh.triangles.len(),
        params,
    };
    let (ply, obj, json) = (a.out.join("mesh.ply"), a.out.join("mesh.obj"), a.out.join("metrics.json"));
    io::write_mesh_ply(&ply, &mesh)?;
    io::write_obj(&obj, &mesh)?;
    io::write_atomic(&json, &json_bytes(&metrics))?;
    manifest.outputs.extend([ply, obj, json]);
    manifest.write(&a.out.join("manifest.json"))?;
    Ok(format!(
        "chamfer {chamfer:.5} (accuracy {accuracy:.5}, completeness {completeness:.5}); depth pct<1 {:.2}%",
        metrics.depth.pct1
    ))
}

#[derive(Clone, Debug, Serialize)]
struct ReportEntry {
    splat: usize,
    param: &'static str,
    analytic: f64,
    numeric: f64,
    central: f64,
    relative_error: f64,
}

#[derive(Clone, Debug, Serialize)]
struct ReportJson {
    loss: &'static str,
    passed: bool,
    max_relative_error: f64,
    splats: Vec<usize>,
    checked: Vec<ReportEntry>,
    excluded: Vec<(usize, &'static str)>,
}

impl From<&GradCheckReport> for ReportJson {
    fn from(r: &GradCheckReport) -> Self {
        let mut splats: Vec<usize> = r.checked.iter().map(|e| e.splat).chain(r.excluded.iter().map(|e| e.0)).collect();
        splats.sort_unstable();
        splats.dedup();
        Self {
            loss: r.term.name(),
            passed: r.passed,
            max_relative_error: r.max_relative_error,
            splats,
            checked: r
                .checked
                .iter()
                .map(|e| ReportEntry {
                    splat: e.splat,
                    param: e.param.name(),
                    analytic: e.analytic,
                    numeric: e.numeric,
                    central: e.central,
                    relative_error: e.relative_error,
                })
                .collect(),
            excluded: r.excluded.iter().map(|(s, p)| (*s, p.name())).collect(),
        }
    }
}

pub fn gradcheck(a: &GradcheckArgs, g: &Globals) -> Result<String, CliError> {
    if !(a.tolerance > 0.0 && a.step > 0.0) {
        return Err(CliError::Input("tolerance and step must be positive".into()));
    }
    let seed = g.seed.unwrap_or(0);
    let (views, splats) = pipeline::gradcheck_scene(a.size, a.count, seed);
    let cfg = GradCheckConfig {
        tolerance: a.tolerance,
        step: a.step,
        splats: a.splats,
        seed,
        ..GradCheckConfig::default()
    };
    let mut text = String::new();
    let mut reports = Vec::new();
    let mut failed = Vec::new();
    for term in a.loss.terms() {
        let r = gradient_check(&views, &splats, term, &LossWeights::default(), &cfg)?;
        let json = ReportJson::from(&r);
        let _ = writeln!(
            text,
            "{:<10} {}  max rel err {:.3e}  splats {}  checked {}  excluded {}",
            term.name(),
            if r.passed { "PASS" } else { "FAIL" },
            r.max_relative_error,
            json.splats.len(),
            r.checked.len(),
            r.excluded.len()
        );
        for (s, p) in &json.excluded {
            let _ = writeln!(text, "           excluded splat {s} {p}");
        }
        if !r.passed {
            failed.push(term.name());
        }
        reports.push(json);
    }
    if let Some(p) = &a.out {
        io::write_atomic(p, &json_bytes(&reports))?;
    }
    if failed.is_empty() {
        Ok(text.trim_end().to_string())
    } else {
        print!("{text}");
        Err(CliError::Verification(format!("gradient check failed for {}", failed.join(", "))))
    }
}

pub fn eval_depth(a: &EvalDepthArgs, _g: &Globals) -> Result<String, CliError> {
    let splats = io::read_splats(&a.splats)?;
    let bundle = read_bundle(&a.scene)?;
    let views = match a.split {
        Split::Train => &bundle.gt.views,
        Split::Holdout => &bundle.gt.holdout,
    };
    if views.is_empty() {
        return Err(CliError::Input("the bundle has no views in that split".into()));
    }
    let m = pipeline::view_depth_metrics(views, &splats, a.unit, a.min_coverage)?;
    let bytes = json_bytes(&m);
    if let Some(p) = &a.out {
        io::write_atomic(p, &bytes)?;
    }
    Ok(String::from_utf8(bytes).expect("JSON is UTF-8").trim_end().to_string())
}

pub fn render(a: &RenderArgs, _g: &Globals) -> Result<String, CliError> {
    let splats = io::read_splats(&a.splats)?;
    let bundle = read_bundle(&a.scene)?;
    let views = match a.split {
        Split::Train => &bundle.gt.views,
        Split::Holdout => &bundle.gt.holdout,
    };
    for (i, v) in views.iter().enumerate() {
        let b = splatfit_core::render::render_view(&v.camera, &splats);
        io::write_png(&a.out.join(format!("rgb_{i}.png")), &b.color)?;
        io::write_pfm(&a.out.join(format!("depth_{i}.pfm")), &b.depth)?;
        io::write_pfm(&a.out.join(format!("acc_{i}.pfm")), &b.acc_weight)?;
    }
    Ok(format!("rendered {} views to {}", views.len(), a.out.display()))
}
