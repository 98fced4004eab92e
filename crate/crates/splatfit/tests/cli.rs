use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use splatfit::bundle::read_bundle;
use splatfit::io;
use splatfit_core::synth::{init_splats, InitMode, SceneSpec};
use splatfit_core::{Splat, Vec3};

fn splatfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splatfit")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Writes a small spec and generates its bundle.
fn small_scene(dir: &Path, spec: SceneSpec) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let spec_path = dir.join("spec.json");
    fs::write(&spec_path, serde_json::to_string(&spec).unwrap()).unwrap();
    let scene = dir.join("scene");
    let out = splatfit(&["gen-scene", "--spec", p(&spec_path), "--out", p(&scene)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    scene
}

fn tiny_spec() -> SceneSpec {
    SceneSpec {
        width: 24,
        height: 24,
        gt_points: 2000,
        ..SceneSpec::reference()
    }
}

fn file_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    names
}

#[test]
fn sphere_preset_writes_five_files_per_view() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let out = splatfit(&["gen-scene", "--preset", "sphere", "--out", p(&scene)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let names = file_names(&scene);
    for i in 0..3 {
        for stem in ["cam", "rgb", "depth", "mono", "normal"] {
            assert!(names.iter().any(|n| n.starts_with(&format!("{stem}_{i}."))), "{stem}_{i} in {names:?}");
        }
    }
    let per_view = names.iter().filter(|n| n.contains('_') && !n.starts_with("gt_")).count();
    assert_eq!(per_view, 15);
    assert!(names.contains(&"gt_points.ply".to_string()));
    assert_eq!(file_names(&scene.join("holdout")).len(), 10);
}

#[test]
fn nine_view_spec_writes_nine_cameras() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = tiny_spec();
    spec.rig.count = 9;
    spec.rig.holdout = 0;
    let scene = small_scene(dir.path(), spec);
    let cams = file_names(&scene).into_iter().filter(|n| n.starts_with("cam_")).count();
    assert_eq!(cams, 9);
    assert_eq!(read_bundle(&scene).unwrap().gt.views.len(), 9);
}

#[test]
fn same_spec_and_seed_give_identical_bundles() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_scene(&dir.path().join("a"), tiny_spec());
    let b = small_scene(&dir.path().join("b"), tiny_spec());
    let names = file_names(&a);
    assert_eq!(names, file_names(&b));
    for n in names.iter().filter(|n| n.as_str() != "manifest.json" && n.as_str() != "holdout") {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n}");
    }
}

#[test]
fn invalid_spec_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"width": 0}"#).unwrap();
    let out = splatfit(&["gen-scene", "--spec", p(&spec), "--out", p(&dir.path().join("s"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_depth_exits_2_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let scene = small_scene(dir.path(), tiny_spec());
    fs::remove_file(scene.join("depth_1.pfm")).unwrap();
    let out = splatfit(&["fit", "--scene", p(&scene), "--out", p(&dir.path().join("fit")), "--set", "iterations=2"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("depth_1.pfm"), "{}", stderr(&out));
}

#[test]
fn single_view_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = tiny_spec();
    spec.rig.count = 1;
    let spec_path = dir.path().join("one.json");
    fs::write(&spec_path, serde_json::to_string(&spec).unwrap()).unwrap();
    let out = splatfit(&["gen-scene", "--spec", p(&spec_path), "--out", p(&dir.path().join("one"))]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));

    let scene = small_scene(dir.path(), tiny_spec());
    let mut spec = tiny_spec();
    spec.rig.count = 1;
    fs::write(scene.join("spec.json"), serde_json::to_string(&spec).unwrap()).unwrap();
    let out = splatfit(&["fit", "--scene", p(&scene), "--out", p(&dir.path().join("fit")), "--set", "iterations=2"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn feature_weight_override_zeroes_the_feature_term() {
    let dir = tempfile::tempdir().unwrap();
    let scene = small_scene(dir.path(), tiny_spec());
    let run = |name: &str, extra: &[&str]| {
        let out_dir = dir.path().join(name);
        let mut args = vec!["fit", "--scene", p(&scene), "--out", p(&out_dir)];
        args.extend(["--set", "iterations=6", "--set", "feature_start=0", "--set", "init.count=200"]);
        args.extend(extra);
        let out = splatfit(&args);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        fs::read_to_string(out_dir.join("train.jsonl"))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["L_f"].as_f64().unwrap())
            .collect::<Vec<f64>>()
    };
    let with = run("with", &[]);
    let without = run("without", &["--weights", "l3=0"]);
    assert_eq!(without.len(), 6);
    assert!(without.iter().all(|&v| v == 0.0), "{without:?}");
    assert!(with.iter().any(|&v| v > 0.0), "{with:?}");
    let dir_files = file_names(&dir.path().join("without"));
    for f in ["final.ply", "train.jsonl", "manifest.json"] {
        assert!(dir_files.contains(&f.to_string()));
    }
}

#[test]
fn fit_resumes_from_an_initial_ply_and_writes_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let scene = small_scene(dir.path(), tiny_spec());
    let bundle = read_bundle(&scene).unwrap();
    let init = dir.path().join("init.ply");
    io::write_splats(&init, &init_splats(&bundle.gt, 100, 0.01, InitMode::SurfaceSample, 0)).unwrap();
    let out_dir = dir.path().join("fit");
    let out = splatfit(&[
        "fit",
        "--scene",
        p(&scene),
        "--out",
        p(&out_dir),
        "--init",
        p(&init),
        "--set",
        "iterations=4",
        "--set",
        "checkpoint_every=2",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(io::read_splats(&out_dir.join("final.ply")).unwrap().len(), 100);
    assert!(out_dir.join("ckpt_000002.ply").exists());
    assert!(out_dir.join("ckpt_000004.ply").exists());
}

#[test]
fn ground_truth_splats_reconstruct_within_two_voxels() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SceneSpec {
        gt_points: 20_000,
        ..SceneSpec::reference()
    };
    let scene = small_scene(dir.path(), spec);
    let bundle = read_bundle(&scene).unwrap();
    let splats = dir.path().join("gt.ply");
    io::write_splats(&splats, &init_splats(&bundle.gt, 20_000, 0.0, InitMode::SurfaceSample, 0)).unwrap();
    let out_dir = dir.path().join("recon");
    let out = splatfit(&["recon", "--splats", p(&splats), "--scene", p(&scene), "--out", p(&out_dir), "--samples", "20000"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("metrics.json")).unwrap()).unwrap();
    let chamfer = m["chamfer"].as_f64().unwrap();
    assert!(chamfer < 0.02, "{chamfer}");
    for key in ["accuracy", "completeness", "chamfer", "vertices", "triangles"] {
        assert!(m[key].is_number(), "{key}");
    }
    for key in ["pct1", "pct2", "pct4", "abs", "rel", "count"] {
        assert!(m["depth"][key].is_number(), "depth.{key}");
    }
    assert!(out_dir.join("mesh.ply").exists() && out_dir.join("mesh.obj").exists());
}

#[test]
fn far_off_splats_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let scene = small_scene(dir.path(), tiny_spec());
    let far: Vec<Splat> = (0..50)
        .map(|i| Splat::new(Vec3::new(40.0 + i as f64, -30.0, 25.0), [1.0, 0.0, 0.0, 0.0], [0.05, 0.05], 0.9, [0.5; 3]))
        .collect();
    let splats = dir.path().join("far.ply");
    io::write_splats(&splats, &far).unwrap();
    let out = splatfit(&["recon", "--splats", p(&splats), "--scene", p(&scene), "--out", p(&dir.path().join("r"))]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn gradcheck_ranking_reports_at_least_ten_splats() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = splatfit(&["gradcheck", "--loss", "ranking", "--out", p(&report)]);
    assert_eq!(code(&out), 0, "{}{}", String::from_utf8_lossy(&out.stdout), stderr(&out));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!(r[0]["splats"].as_array().unwrap().len() >= 10);
    assert_eq!(r[0]["loss"], "ranking");
}

#[test]
fn unreachable_gradcheck_tolerance_exits_5() {
    let out = splatfit(&["gradcheck", "--loss", "color", "--tolerance", "1e-12"]);
    assert_eq!(code(&out), 5);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn thread_count_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let out = Command::new(env!("CARGO_BIN_EXE_splatfit"))
        .args(["gen-scene", "--preset", "sphere", "--out", p(&scene)])
        .env("SPLATFIT_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(scene.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["threads"], 3);
    assert_eq!(m["command"], "gen-scene");
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn eval_depth_and_render_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let scene = small_scene(dir.path(), tiny_spec());
    let bundle = read_bundle(&scene).unwrap();
    let splats = dir.path().join("s.ply");
    io::write_splats(&splats, &init_splats(&bundle.gt, 3000, 0.0, InitMode::SurfaceSample, 0)).unwrap();
    let metrics = dir.path().join("depth.json");
    let out = splatfit(&["eval-depth", "--splats", p(&splats), "--scene", p(&scene), "--out", p(&metrics)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap();
    assert!(m["pct4"].as_f64().unwrap() > 50.0, "{m}");
    let render = dir.path().join("render");
    let out = splatfit(&["render", "--splats", p(&splats), "--scene", p(&scene), "--out", p(&render)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(file_names(&render).len(), 9);
}
