//! End-to-end run on the bundled farmhouse: synthesize, pack, train the baseline, predict
//! held-out views, evaluate against trivial predictors, and fuse predictions on the mesh.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{train_baseline, BaselineModel};
use crate::blend::{export_semantic_mesh, fuse, BlendTarget, SemanticMesh};
use crate::camera::{generate_orbit, write_poses};
use crate::dataset::{build_dataset, unpack_composite, DatasetManifest, DatasetOptions, Split, SplitFractions};
use crate::error::{Error, IoContext, Result};
use crate::eval::{confusion, evaluate_run, metrics, quantize, write_run_report, ClassSelection, ConfusionCounts, EvalOptions};
use crate::fixture::{farmhouse_orbit, farmhouse_with_states};
use crate::raster::{Image, LabelMap};
use crate::render::Renderer;
use crate::scene::{write_scene, ClassId, ClassPalette, NUM_CLASSES};

pub const SUMMARY_FILE: &str = "run_summary.json";

/// Everything that shapes a demo run. All randomness derives from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoConfig {
    pub seed: u64,
    /// Render resolution and composite half side.
    pub side: u32,
    pub states: usize,
    pub elevations: Vec<f64>,
    pub views_per_ring: usize,
    pub orbit_radius: f64,
    pub focal_length: f64,
    pub split: SplitFractions,
    pub smoothing: u32,
    pub texels_per_meter: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            side: 64,
            states: 4,
            elevations: vec![20.0],
            views_per_ring: 10,
            orbit_radius: 20.0,
            focal_length: 35.0,
            split: SplitFractions { train: 0.6, val: 0.2, test: 0.2 },
            smoothing: 1,
            texels_per_meter: 4.0,
        }
    }
}

/// Writes `pred/` (baseline output) and `gt/` (label half) for every composite of `split`.
/// Returns the composite file names written.
pub fn predict_split(
    dataset_dir: &Path,
    manifest: &DatasetManifest,
    split: Split,
    model: &BaselineModel,
    out_dir: &Path,
) -> Result<Vec<String>> {
    let pred_dir = out_dir.join("pred");
    let gt_dir = out_dir.join("gt");
    for d in [&pred_dir, &gt_dir] {
        fs::create_dir_all(d).at(d)?;
    }
    let entries: Vec<_> = manifest.entries_in(split).collect();
    entries
        .par_iter()
        .map(|e| {
            let (photo, label) = unpack_composite(&Image::load(&dataset_dir.join(&e.file))?)?;
            let name = Path::new(&e.file).file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            model.predict_labels(&photo).to_image(&model.palette).save_png(&pred_dir.join(&name))?;
            label.save_png(&gt_dir.join(&name))?;
            Ok(name)
        })
        .collect()
}

/// Mean IoU of a predictor over held-out ground truth.
fn score(gt: &[LabelMap], predict: impl Fn(usize, &LabelMap) -> LabelMap) -> Result<f64> {
    let mut counts = ConfusionCounts::default();
    for (i, g) in gt.iter().enumerate() {
        counts += confusion(g, &predict(i, g), None)?;
    }
    Ok(metrics::<f64>(&counts, ClassSelection::Present)?.mean_iou)
}

/// The training class with the most pixels; ties go to the lower id.
pub fn majority_class(model: &BaselineModel) -> ClassId {
    model
        .centroids
        .iter()
        .fold(None::<(ClassId, u64)>, |best, c| match best {
            Some((_, n)) if n >= c.count => best,
            _ => Some((c.class, c.count)),
        })
        .map_or(ClassId::Background, |(c, _)| c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline_miou: f64,
    pub baseline_accuracy: f64,
    pub constant_class: ClassId,
    pub constant_miou: f64,
    pub uniform_random_miou: f64,
}

impl Comparison {
    pub fn baseline_wins(&self) -> bool {
        self.baseline_miou > self.constant_miou && self.baseline_miou > self.uniform_random_miou
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlendSummary {
    pub texels: usize,
    pub observed_texels: usize,
    /// Fraction of observed texels whose fused class matches the face's true class.
    pub fused_accuracy: f64,
    /// Mean over views of the fraction of that view's votes matching the true class.
    pub single_view_accuracy: f64,
    pub mesh_file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoSummary {
    pub config: DemoConfig,
    pub views: usize,
    pub states: usize,
    pub composites: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub comparison: Comparison,
    pub blend: BlendSummary,
}

const OUTPUTS: [&str; 8] = ["scene", "poses.txt", "dataset", "model.json", "predict", "eval", "blend", SUMMARY_FILE];

fn prepare_output(out: &Path, force: bool) -> Result<()> {
    let existing: Vec<PathBuf> = OUTPUTS.iter().map(|n| out.join(n)).filter(|p| p.exists()).collect();
    if !existing.is_empty() && !force {
        return Err(Error::DatasetExists(out.to_path_buf()));
    }
    for p in existing {
        if p.is_dir() { fs::remove_dir_all(&p) } else { fs::remove_file(&p) }.at(&p)?;
    }
    fs::create_dir_all(out).at(out)
}

/// Runs the whole loop into `out`. Existing outputs are an error unless `force`.
pub fn run_demo(cfg: &DemoConfig, out: &Path, force: bool) -> Result<DemoSummary> {
    cfg.split.validate()?;
    prepare_output(out, force)?;

    let scene = farmhouse_with_states(cfg.states)?;
    let mut orbit = farmhouse_orbit(cfg.elevations.clone(), cfg.views_per_ring);
    orbit.radius = cfg.orbit_radius;
    orbit.focal_length = cfg.focal_length;
    let poses = generate_orbit(&orbit)?;
    write_scene(&scene, &out.join("scene"))?;
    write_poses(&poses, &out.join("poses.txt"))?;

    let dataset_dir = out.join("dataset");
    let renderer = Renderer::new(&scene);
    let options = DatasetOptions { side: cfg.side, fractions: cfg.split, seed: cfg.seed, force: false };
    let manifest = build_dataset(&renderer, &poses, &scene.states, cfg.side, cfg.side, &dataset_dir, options)?;

    let model = train_baseline(&dataset_dir, &manifest, cfg.smoothing)?;
    model.save(&out.join("model.json"))?;

    let predict_dir = out.join("predict");
    predict_split(&dataset_dir, &manifest, Split::Test, &model, &predict_dir)?;
    let report = evaluate_run(&predict_dir.join("pred"), &predict_dir.join("gt"), &scene.palette, &EvalOptions::default())?;
    write_run_report(&report, &out.join("eval"))?;

    let comparison = compare(&dataset_dir, &manifest, &model, cfg.seed, &report.metrics)?;
    let blend = blend_predictions(&scene, &poses, &dataset_dir, &manifest, &model, cfg.texels_per_meter, &out.join("blend"))?;

    let count = |s| manifest.entries_in(s).count();
    let summary = DemoSummary {
        config: cfg.clone(),
        views: poses.len(),
        states: scene.states.len(),
        composites: manifest.entries.len(),
        train: count(Split::Train),
        val: count(Split::Val),
        test: count(Split::Test),
        comparison,
        blend,
    };
    let path = out.join(SUMMARY_FILE);
    let mut text = serde_json::to_string_pretty(&summary).map_err(|source| Error::Json { path: path.clone(), source })?;
    text.push('\n');
    fs::write(&path, text).at(&path)?;
    Ok(summary)
}

fn held_out_labels(dataset_dir: &Path, manifest: &DatasetManifest, palette: &ClassPalette) -> Result<Vec<LabelMap>> {
    manifest
        .entries_in(Split::Test)
        .map(|e| {
            let (_, label) = unpack_composite(&Image::load(&dataset_dir.join(&e.file))?)?;
            Ok(quantize(&label, palette))
        })
        .collect()
}

fn compare(
    dataset_dir: &Path,
    manifest: &DatasetManifest,
    model: &BaselineModel,
    seed: u64,
    baseline: &crate::eval::MetricsReport<f64>,
) -> Result<Comparison> {
    let gt = held_out_labels(dataset_dir, manifest, &manifest.palette)?;
    let constant_class = majority_class(model);
    let constant_miou = score(&gt, |_, g| LabelMap::new(g.width(), g.height(), constant_class))?;
    let uniform_random_miou = score(&gt, |i, g| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7261_6e64_6f6d ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let classes = (0..g.width() as usize * g.height() as usize)
            .map(|_| ClassId::ALL[rng.random_range(0..NUM_CLASSES)])
            .collect();
        LabelMap::from_classes(g.width(), g.height(), classes).expect("dimensions match")
    })?;
    Ok(Comparison {
        baseline_miou: baseline.mean_iou,
        baseline_accuracy: baseline.global_accuracy,
        constant_class,
        constant_miou,
        uniform_random_miou,
    })
}

/// Fuses baseline predictions of every view under the first lighting state onto the
/// merged scene mesh and scores fused vs single-view texel accuracy.
fn blend_predictions(
    scene: &crate::Scene,
    poses: &[crate::Pose],
    dataset_dir: &Path,
    manifest: &DatasetManifest,
    model: &BaselineModel,
    texels_per_meter: f64,
    out: &Path,
) -> Result<BlendSummary> {
    let state = scene.states[0].id;
    let labels = poses
        .par_iter()
        .map(|pose| {
            let entry = manifest
                .entries
                .iter()
                .find(|e| e.view_id == pose.view_id && e.state_id == state)
                .ok_or_else(|| Error::InvalidDataset(format!("no composite for view {}", pose.view_id)))?;
            let (photo, _) = unpack_composite(&Image::load(&dataset_dir.join(&entry.file))?)?;
            Ok(model.predict_labels(&photo))
        })
        .collect::<Result<Vec<_>>>()?;

    let (mesh, face_class) = scene.merged_mesh();
    let target = BlendTarget::new(mesh, texels_per_meter)?;
    let truth: Vec<ClassId> = (0..target.texel_count()).map(|t| face_class[target.texel_face(t)]).collect();
    let observations = poses
        .iter()
        .zip(&labels)
        .map(|(p, l)| target.project_view(p, l))
        .collect::<Result<Vec<_>>>()?;
    let single: Vec<f64> = observations
        .iter()
        .filter(|o| !o.votes.is_empty())
        .map(|o| o.votes.iter().filter(|v| v.class == truth[v.texel as usize]).count() as f64 / o.votes.len() as f64)
        .collect();
    let fusion = fuse(target.texel_count(), &observations);
    let sm = SemanticMesh { target, fusion };
    let observed: Vec<usize> = (0..sm.target.texel_count()).filter(|&t| sm.fusion.observation_count(t) > 0).collect();
    let correct = observed.iter().filter(|&&t| sm.fused()[t] == truth[t]).count();

    fs::create_dir_all(out).at(out)?;
    let mesh_path = out.join("semantic.smesh");
    export_semantic_mesh(&sm, &scene.palette, &mesh_path)?;
    Ok(BlendSummary {
        texels: sm.target.texel_count(),
        observed_texels: observed.len(),
        fused_accuracy: if observed.is_empty() { 0.0 } else { correct as f64 / observed.len() as f64 },
        single_view_accuracy: if single.is_empty() { 0.0 } else { single.iter().sum::<f64>() / single.len() as f64 },
        mesh_file: "blend/semantic.smesh".into(),
    })
}
