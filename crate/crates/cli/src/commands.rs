use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;
use serde_json::json;

use labelforge::align::{align_correspondences, apply_transform};
use labelforge::blend::{export_semantic_mesh, fuse, BlendTarget, SemanticMesh, DEFAULT_TEXELS_PER_METER};
use labelforge::camera::{generate_orbit, import_poses, write_poses, OrbitConfig};
use labelforge::dataset::{
    build_dataset_with, pack_raw_dir, raw_label_name, write_raw_pair, DatasetManifest, DatasetOptions, Split,
    SplitFractions, DEFAULT_SIDE, MANIFEST_FILE,
};
use labelforge::eval::{evaluate_run, format_table, load_run_report, quantize, write_run_report, ClassSelection, EvalOptions};
use labelforge::fixture::{farmhouse, farmhouse_orbit, fixture_poses, sun_sweep};
use labelforge::pipeline::{predict_split, run_demo, DemoConfig, SUMMARY_FILE};
use labelforge::render::Renderer;
use labelforge::scene::{load_scene, write_mesh, write_scene};
use labelforge::{baseline, default_palette, ClassId, ClassPalette, Image, Pose, Scene, Vec3f};

use crate::config::{BlendArgs, CameraArgs, DemoArgs, EvalArgs, PackArgs, PredictArgs, SynthArgs, TrainArgs};

const DEFAULT_RENDER: u32 = 256;

#[derive(Serialize)]
struct RunSummary<'a, A: Serialize, R: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: Option<u64>,
    args: &'a A,
    results: R,
}

fn write_summary<A: Serialize, R: Serialize>(dir: &Path, command: &str, seed: Option<u64>, args: &A, results: R) -> Result<()> {
    let summary = RunSummary { command, version: env!("CARGO_PKG_VERSION"), seed, args, results };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    let path = dir.join(SUMMARY_FILE);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

/// Refuses to overwrite `path` unless `force`.
fn claim(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        bail!("{} already exists; pass --force to overwrite", path.display());
    }
    Ok(())
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.with_context(|| format!("missing required --{flag}"))
}

fn fractions(split: Option<Vec<f64>>) -> Result<SplitFractions> {
    match split {
        Some(v) => {
            ensure!(v.len() == 3, "--split takes three comma-separated fractions");
            Ok(SplitFractions::new(v[0], v[1], v[2])?)
        }
        None => Ok(SplitFractions::default()),
    }
}

fn palette_of(scene: &Option<PathBuf>) -> Result<ClassPalette> {
    Ok(match scene {
        Some(p) => load_scene::<f64>(p)?.palette,
        None => default_palette(),
    })
}

fn scene_bounds(scene: &Scene) -> (Vec3f, Vec3f) {
    let mut lo = Vec3f::splat(f64::INFINITY);
    let mut hi = Vec3f::splat(f64::NEG_INFINITY);
    for o in &scene.objects {
        for v in &o.mesh.vertices {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    (lo, hi)
}

/// Pose file if given, otherwise an orbit. Without a custom scene the orbit defaults to the
/// farmhouse framing; with one it is centred on the scene bounds at 1.5× their diagonal.
fn resolve_poses(cam: &CameraArgs, scene: &Scene, custom_scene: bool) -> Result<Vec<Pose>> {
    if let Some(p) = &cam.poses {
        return Ok(import_poses(p)?);
    }
    let mut orbit: OrbitConfig<f64> = farmhouse_orbit(vec![20.0], 10);
    if custom_scene {
        let (lo, hi) = scene_bounds(scene);
        orbit.center = (lo + hi) * 0.5;
        orbit.radius = 1.5 * lo.distance(hi);
    }
    if let Some(c) = &cam.center {
        ensure!(c.len() == 3, "--center takes x,y,z");
        orbit.center = Vec3f::new(c[0], c[1], c[2]);
    }
    orbit.radius = cam.orbit_radius.unwrap_or(orbit.radius);
    orbit.elevations = cam.elevations.clone().unwrap_or(orbit.elevations);
    orbit.views_per_ring = cam.views_per_ring.unwrap_or(orbit.views_per_ring);
    orbit.focal_length = cam.focal_length.unwrap_or(orbit.focal_length);
    Ok(generate_orbit(&orbit)?)
}

pub fn synth(a: SynthArgs, seed: u64) -> Result<()> {
    let started = Instant::now();
    let out = required(a.out.clone(), "out")?;
    let mut scene = match &a.scene {
        Some(p) => load_scene(p)?,
        None => farmhouse()?,
    };
    let residual = register(&mut scene)?;
    if let Some(n) = a.states {
        ensure!(n > 0, "--states must be positive");
        scene.states = sun_sweep(n)?;
    }
    let poses = resolve_poses(&a.camera, &scene, a.scene.is_some())?;
    let width = a.width.unwrap_or(DEFAULT_RENDER);
    let height = a.height.unwrap_or(DEFAULT_RENDER);
    let options = DatasetOptions { side: a.side.unwrap_or(DEFAULT_SIDE), fractions: fractions(a.split.clone())?, seed, force: a.force };

    let raw_dir = out.join("raw");
    if a.keep_raw && raw_dir.exists() {
        claim(&raw_dir, a.force)?;
        fs::remove_dir_all(&raw_dir)?;
    }
    let renderer = Renderer::new(&scene);
    let manifest = build_dataset_with(&renderer, &poses, &scene.states, width, height, &out, options, |pair| {
        if a.keep_raw {
            write_raw_pair(pair, &raw_dir)?;
        }
        Ok(())
    })?;
    println!("{} pairs written", manifest.entries.len());
    eprintln!("{} views × {} states in {:.1?}", poses.len(), scene.states.len(), started.elapsed());
    let mut results = dataset_results(&manifest, poses.len(), scene.states.len());
    results["alignment_residual"] = json!(residual);
    write_summary(&out, "synth", Some(seed), &a, results)
}

/// Applies the manifest's `align` block, if any, and returns the largest point residual.
fn register(scene: &mut Scene) -> Result<Option<f64>> {
    let Some(c) = scene.correspondences.clone() else { return Ok(None) };
    let t = align_correspondences(&c).context("aligning scene")?;
    *scene = apply_transform(&t, scene);
    let residual = t.max_residual(&c.src, &c.dst);
    eprintln!("aligned: scale {:.6}, max residual {residual:.3e} m", t.scale);
    Ok(Some(residual))
}

fn dataset_results(m: &DatasetManifest, views: usize, states: usize) -> serde_json::Value {
    json!({
        "pairs": m.entries.len(),
        "views": views,
        "states": states,
        "image_size": m.image_size,
        "train": m.entries_in(Split::Train).count(),
        "val": m.entries_in(Split::Val).count(),
        "test": m.entries_in(Split::Test).count(),
        "manifest": MANIFEST_FILE,
    })
}

pub fn pack(a: PackArgs, seed: u64) -> Result<()> {
    let raw = required(a.raw.clone(), "raw")?;
    let out = required(a.out.clone(), "out")?;
    let options = DatasetOptions { side: a.side.unwrap_or(DEFAULT_SIDE), fractions: fractions(a.split.clone())?, seed, force: a.force };
    let manifest = pack_raw_dir(&raw, &out, palette_of(&a.scene)?, options)?;
    let mut views: Vec<u32> = manifest.entries.iter().map(|e| e.view_id).collect();
    views.dedup();
    let mut states: Vec<u32> = manifest.entries.iter().map(|e| e.state_id).collect();
    states.sort_unstable();
    states.dedup();
    println!("{} pairs written", manifest.entries.len());
    write_summary(&out, "pack", Some(seed), &a, dataset_results(&manifest, views.len(), states.len()))
}

pub fn train(a: TrainArgs) -> Result<()> {
    let dataset = required(a.dataset.clone(), "dataset")?;
    let out = required(a.out.clone(), "out")?;
    let model_path = out.join("model.json");
    claim(&model_path, a.force)?;
    let manifest = DatasetManifest::load(&dataset)?;
    let model = baseline::train_baseline(&dataset, &manifest, a.smoothing.unwrap_or(1))?;
    fs::create_dir_all(&out)?;
    model.save(&model_path)?;
    let centroids: Vec<_> = model.centroids.iter().map(|c| json!({ "class": c.class, "pixels": c.count })).collect();
    println!("trained on {} composites, {} classes", manifest.entries_in(Split::Train).count(), centroids.len());
    write_summary(&out, "train-baseline", None, &a, json!({ "model": "model.json", "centroids": centroids }))
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let model = baseline::BaselineModel::load(&required(a.model.clone(), "model")?)?;
    let dataset = required(a.dataset.clone(), "dataset")?;
    let out = required(a.out.clone(), "out")?;
    let split: Split = a.split.as_deref().unwrap_or("test").parse()?;
    for d in ["pred", "gt"] {
        let p = out.join(d);
        if p.exists() {
            claim(&p, a.force)?;
            fs::remove_dir_all(&p)?;
        }
    }
    let manifest = DatasetManifest::load(&dataset)?;
    let names = predict_split(&dataset, &manifest, split, &model, &out)?;
    println!("{} predictions written", names.len());
    write_summary(&out, "predict", None, &a, json!({ "split": split.dir_name(), "predictions": names.len() }))
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let pred = required(a.pred.clone(), "pred")?;
    let gt = required(a.gt.clone(), "gt")?;
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("eval-report"));
    claim(&out.join("metrics.json"), a.force)?;
    let options = EvalOptions {
        selection: if a.all_classes { ClassSelection::All } else { ClassSelection::Present },
        drift_threshold: a.drift_threshold,
        mask_dir: a.mask.clone(),
    };
    let report = evaluate_run(&pred, &gt, &palette_of(&a.scene)?, &options)?;
    println!("accuracy {:.2}%", report.metrics.global_accuracy * 100.0);
    println!("mIoU {:.4}", report.metrics.mean_iou);
    print!("\n{}", format_table(&report.metrics, Some(report.drift_fraction)));
    write_run_report(&report, &out)?;
    let m = &report.metrics;
    write_summary(
        &out,
        "eval",
        None,
        &a,
        json!({ "images": report.images, "accuracy": m.global_accuracy, "mean_iou": m.mean_iou, "report": "metrics.json" }),
    )
}

pub fn blend(a: BlendArgs) -> Result<()> {
    let mesh = labelforge::scene::load_mesh::<f64>(&required(a.mesh.clone(), "mesh")?)?;
    let poses = import_poses::<f64>(&required(a.poses.clone(), "poses")?)?;
    let labels_dir = required(a.labels.clone(), "labels")?;
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("blend-out"));
    let mesh_path = out.join("semantic.smesh");
    claim(&mesh_path, a.force)?;
    let palette = palette_of(&a.scene)?;
    let target = BlendTarget::new(mesh, a.texels_per_meter.unwrap_or(DEFAULT_TEXELS_PER_METER))?;
    let mut observations = Vec::with_capacity(poses.len());
    for pose in &poses {
        let path = labels_dir.join(raw_label_name(pose.view_id));
        let labels = quantize(&Image::load(&path)?, &palette);
        observations.push(target.project_view(pose, &labels)?);
    }
    ensure!(!observations.is_empty(), "pose file is empty");
    let fusion = fuse(target.texel_count(), &observations);
    let sm = SemanticMesh { target, fusion };
    fs::create_dir_all(&out)?;
    export_semantic_mesh(&sm, &palette, &mesh_path)?;
    let observed = (0..sm.target.texel_count()).filter(|&t| sm.fusion.observation_count(t) > 0).count();
    let mut histogram = [0usize; labelforge::NUM_CLASSES];
    for c in sm.fused() {
        histogram[c.index()] += 1;
    }
    let by_class: serde_json::Map<String, serde_json::Value> =
        ClassId::ALL.iter().map(|c| (c.name().to_string(), json!(histogram[c.index()]))).collect();
    println!("{} of {} texels observed from {} views", observed, sm.target.texel_count(), poses.len());
    write_summary(
        &out,
        "blend",
        None,
        &a,
        json!({ "texels": sm.target.texel_count(), "observed": observed, "fused": by_class, "mesh": "semantic.smesh" }),
    )
}

pub fn report(path: &Path) -> Result<()> {
    let file = if path.is_dir() {
        [path.join("metrics.json"), path.join(SUMMARY_FILE)]
            .into_iter()
            .find(|p| p.exists())
            .with_context(|| format!("no metrics.json or {SUMMARY_FILE} in {}", path.display()))?
    } else {
        path.to_path_buf()
    };
    if file.file_name().is_some_and(|n| n == "metrics.json") {
        let r = load_run_report(&file)?;
        println!("{} images", r.images);
        print!("{}", format_table(&r.metrics, Some(r.drift_fraction)));
    } else {
        print!("{}", fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?);
    }
    Ok(())
}

pub fn fixture(out: &Path) -> Result<()> {
    let scene = farmhouse()?;
    let manifest = write_scene(&scene, out)?;
    write_poses(&fixture_poses()?, &out.join("poses.txt"))?;
    write_mesh(&scene.merged_mesh().0, &out.join("farmhouse.obj"))?;
    println!("{}", manifest.display());
    Ok(())
}

pub fn demo(a: DemoArgs, seed: u64) -> Result<()> {
    ensure!(a.camera.poses.is_none() && a.camera.center.is_none(), "demo uses the farmhouse orbit; --poses and --center are not supported");
    let d = DemoConfig::default();
    let cfg = DemoConfig {
        seed,
        side: a.side.unwrap_or(d.side),
        states: a.states.unwrap_or(d.states),
        elevations: a.camera.elevations.clone().unwrap_or(d.elevations),
        views_per_ring: a.camera.views_per_ring.unwrap_or(d.views_per_ring),
        orbit_radius: a.camera.orbit_radius.unwrap_or(d.orbit_radius),
        focal_length: a.camera.focal_length.unwrap_or(d.focal_length),
        split: match a.split.clone() {
            Some(_) => fractions(a.split.clone())?,
            None => d.split,
        },
        smoothing: a.smoothing.unwrap_or(d.smoothing),
        texels_per_meter: a.texels_per_meter.unwrap_or(d.texels_per_meter),
    };
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from("demo-out"));
    let started = Instant::now();
    let s = run_demo(&cfg, &out, a.force)?;
    let c = &s.comparison;
    println!("{} pairs written ({} views × {} states)", s.composites, s.views, s.states);
    println!("held-out mIoU: baseline {:.4}, constant-class ({}) {:.4}, uniform random {:.4}", c.baseline_miou, c.constant_class, c.constant_miou, c.uniform_random_miou);
    println!("held-out accuracy {:.2}%", c.baseline_accuracy * 100.0);
    println!(
        "blend: fused texel accuracy {:.4} vs single-view {:.4} over {} observed texels",
        s.blend.fused_accuracy, s.blend.single_view_accuracy, s.blend.observed_texels
    );
    println!("baseline beats both trivial predictors: {}", if c.baseline_wins() { "yes" } else { "no" });
    eprintln!("finished in {:.1?}", started.elapsed());
    Ok(())
}
