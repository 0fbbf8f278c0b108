//! Optional TOML configuration. Every subcommand reads its own table; flags given on the
//! command line win over file values, which win over built-in defaults.
//!
//! ```toml
//! seed = 7
//! workers = 4
//!
//! [camera]
//! elevations = [15.0, 30.0]
//! views-per-ring = 55
//!
//! [synth]
//! states = 38
//! width = 64
//! height = 64
//! side = 64
//! ```

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

/// Fills every `None` field of `self` from `base`; booleans are or-ed.
pub trait Overlay {
    fn overlay(self, base: Self) -> Self;
}

macro_rules! overlay {
    ($ty:ty { $($opt:ident),* $(; $($flag:ident),*)? $(; nested $($sub:ident),*)? }) => {
        impl Overlay for $ty {
            fn overlay(self, base: Self) -> Self {
                Self {
                    $($opt: self.$opt.or(base.$opt),)*
                    $($($flag: self.$flag || base.$flag,)*)?
                    $($($sub: self.$sub.overlay(base.$sub),)*)?
                }
            }
        }
    };
}

#[derive(Args, Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct CameraArgs {
    /// Orbit radius in meters
    #[arg(long)]
    pub orbit_radius: Option<f64>,
    /// Ring elevations in degrees, comma separated
    #[arg(long, value_delimiter = ',')]
    pub elevations: Option<Vec<f64>>,
    /// Views per elevation ring
    #[arg(long)]
    pub views_per_ring: Option<usize>,
    /// Focal length in mm (36 mm sensor width)
    #[arg(long)]
    pub focal_length: Option<f64>,
    /// Orbit centre `x,y,z`
    #[arg(long, value_delimiter = ',')]
    pub center: Option<Vec<f64>>,
    /// Pose file (one `px py pz lx ly lz focal` per line); replaces the orbit
    #[arg(long)]
    pub poses: Option<PathBuf>,
}
overlay!(CameraArgs { orbit_radius, elevations, views_per_ring, focal_length, center, poses });

#[derive(Args, Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SynthArgs {
    /// Scene manifest; defaults to the bundled farmhouse
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Replace the scene's lighting states with this many swept sun positions
    #[arg(long)]
    pub states: Option<usize>,
    /// Render width in pixels
    #[arg(long)]
    pub width: Option<u32>,
    /// Render height in pixels
    #[arg(long)]
    pub height: Option<u32>,
    /// Composite half side in pixels
    #[arg(long)]
    pub side: Option<u32>,
    /// Train/val/test fractions, comma separated
    #[arg(long, value_delimiter = ',')]
    pub split: Option<Vec<f64>>,
    /// Output dataset directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also keep the unpacked renders under `<out>/raw`
    #[arg(long)]
    pub keep_raw: bool,
    /// Overwrite existing outputs
    #[arg(long)]
    #[serde(skip_serializing)]
    pub force: bool,
    #[command(flatten)]
    pub camera: CameraArgs,
}
overlay!(SynthArgs { scene, states, width, height, side, split, out; keep_raw, force; nested camera });

#[derive(Args, Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct PackArgs {
    /// Raw render directory (`photo/` and `label/`)
    #[arg(long)]
    pub raw: Option<PathBuf>,
    /// Scene manifest supplying the palette; default palette otherwise
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Composite half side in pixels
    #[arg(long)]
    pub side: Option<u32>,
    /// Train/val/test fractions, comma separated
    #[arg(long, value_delimiter = ',')]
    pub split: Option<Vec<f64>>,
    /// Output dataset directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overwrite existing outputs
    #[arg(long)]
    #[serde(skip_serializing)]
    pub force: bool,
}
overlay!(PackArgs { raw, scene, side, split, out; force });

#[derive(Args, Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainArgs {
    /// Dataset directory written by `synth` or `pack`
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Color smoothing radius; 1 disables smoothing
    #[arg(long)]
    pub smoothing: Option<u32>,
    /// Output directory for `model.json`
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overwrite existing outputs
    #[arg(long)]
    #[serde(skip_serializing)]
    pub force: bool,
}
overlay!(TrainArgs { dataset, smoothing, out; force });

#[derive(Args, Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct PredictArgs {
    /// Model file written by `train-baseline`
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dataset directory
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Split to predict: train, val or test
    #[arg(long)]
    pub split: Option<String>,
    /// Output directory; receives `pred/` and `gt/`
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overwrite existing outputs
    #[arg(long)]
    #[serde(skip_serializing)]
    pub force: bool,
}
overlay!(PredictArgs { model, dataset, split, out; force });

#[derive(Args, Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EvalArgs {
    /// Directory of predicted label images
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Directory of ground-truth label images with the same names
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Average over all six classes instead of those present
    #[arg(long)]
    pub all_classes: bool,
    /// Directory of same-named masks; black pixels are excluded
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// RGB distance beyond which a predicted pixel counts as off-palette
    #[arg(long)]
    pub drift_threshold: Option<f64>,
    /// Scene manifest supplying the palette; default palette otherwise
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Report directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overwrite existing outputs
    #[arg(long)]
    #[serde(skip_serializing)]
    pub force: bool,
}
overlay!(EvalArgs { pred, gt, mask, drift_threshold, scene, out; all_classes, force });

#[derive(Args, Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct BlendArgs {
    /// Mesh (OBJ subset)
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Pose file matching the label images
    #[arg(long)]
    pub poses: Option<PathBuf>,
    /// Directory of label images named `vVVV.png` by view id
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Texel density on the mesh surface
    #[arg(long)]
    pub texels_per_meter: Option<f64>,
    /// Scene manifest supplying the palette; default palette otherwise
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overwrite existing outputs
    #[arg(long)]
    #[serde(skip_serializing)]
    pub force: bool,
}
overlay!(BlendArgs { mesh, poses, labels, texels_per_meter, scene, out; force });

#[derive(Args, Clone, Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct DemoArgs {
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Render resolution and composite half side
    #[arg(long)]
    pub side: Option<u32>,
    /// Lighting states swept around the building
    #[arg(long)]
    pub states: Option<usize>,
    /// Color smoothing radius for the baseline
    #[arg(long)]
    pub smoothing: Option<u32>,
    /// Texel density for blending
    #[arg(long)]
    pub texels_per_meter: Option<f64>,
    /// Train/val/test fractions, comma separated
    #[arg(long, value_delimiter = ',')]
    pub split: Option<Vec<f64>>,
    /// Overwrite existing outputs
    #[arg(long)]
    #[serde(skip_serializing)]
    pub force: bool,
    #[command(flatten)]
    pub camera: CameraArgs,
}
overlay!(DemoArgs { out, side, states, smoothing, texels_per_meter, split; force; nested camera });

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub camera: CameraArgs,
    pub synth: SynthArgs,
    pub pack: PackArgs,
    pub train_baseline: TrainArgs,
    pub predict: PredictArgs,
    pub eval: EvalArgs,
    pub blend: BlendArgs,
    pub demo: DemoArgs,
}

impl ConfigFile {
    /// Reads the file and resolves its relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(q) = p.as_mut().filter(|q| q.is_relative()) {
                *q = base.join(&*q);
            }
        };
        fix(&mut cfg.camera.poses);
        for p in [&mut cfg.synth.scene, &mut cfg.synth.out, &mut cfg.pack.raw, &mut cfg.pack.scene, &mut cfg.pack.out] {
            fix(p);
        }
        for p in [&mut cfg.train_baseline.dataset, &mut cfg.train_baseline.out, &mut cfg.predict.model] {
            fix(p);
        }
        for p in [&mut cfg.predict.dataset, &mut cfg.predict.out, &mut cfg.eval.pred, &mut cfg.eval.gt, &mut cfg.eval.mask] {
            fix(p);
        }
        for p in [&mut cfg.eval.scene, &mut cfg.eval.out, &mut cfg.blend.mesh, &mut cfg.blend.poses, &mut cfg.blend.labels] {
            fix(p);
        }
        for p in [&mut cfg.blend.scene, &mut cfg.blend.out, &mut cfg.demo.out] {
            fix(p);
        }
        Ok(cfg)
    }
}
