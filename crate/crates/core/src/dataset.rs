//! Packing rendered pairs into the side-by-side training dataset.
//!
//! Each composite is `2·side × side`: the photoreal image resized bilinearly on the left,
//! the label image resized nearest-neighbour on the right. Splits are assigned per view so
//! that all lighting states of one view land in the same split.
//!
//! Layout: `<out>/{train,val,test}/s{state:03}_v{view:03}.png` and `<out>/manifest.json`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::CameraPose;
use crate::error::{Error, IoContext, Result};
use crate::raster::{IdBuffer, Image};
use crate::render::Renderer;
pub use crate::render::RenderPair;
use crate::scalar::Real;
use crate::scene::{ClassPalette, SceneState, SemanticScene};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MIN_SIDE: u32 = 8;
pub const DEFAULT_SIDE: u32 = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.dir_name() == s)
            .ok_or_else(|| Error::InvalidDataset(format!("unknown split \"{s}\"")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.9, val: 0.05, test: 0.05 }
    }
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let f = Self { train, val, test };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !(*p >= 0.0 && *p <= 1.0)) {
            return Err(Error::InvalidDataset(format!("split fractions {parts:?} outside [0,1]")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDataset(format!("split fractions {parts:?} do not sum to 1")));
        }
        Ok(())
    }
}

/// Seeded shuffle of the distinct view ids, cut into train/val/test by rounded fractions.
pub fn assign_splits(view_ids: &[u32], fractions: &SplitFractions, seed: u64) -> Result<BTreeMap<u32, Split>> {
    fractions.validate()?;
    let mut views: Vec<u32> = view_ids.to_vec();
    views.sort_unstable();
    views.dedup();
    views.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = views.len();
    let n_train = ((n as f64 * fractions.train).round() as usize).min(n);
    let n_val = ((n as f64 * fractions.val).round() as usize).min(n - n_train);
    Ok(views
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            (v, split)
        })
        .collect())
}

pub fn composite_name(state_id: u32, view_id: u32) -> String {
    format!("s{state_id:03}_v{view_id:03}.png")
}

/// Resizes both halves to `side×side` and stitches photoreal | label.
pub fn pack_pair(pair: &RenderPair, side: u32) -> Result<Image> {
    if side < MIN_SIDE {
        return Err(Error::InvalidDataset(format!("composite side {side} below minimum {MIN_SIDE}")));
    }
    pair.validate()?;
    let left = pair.photoreal.resize_bilinear(side, side);
    let right = pair.label.resize_nearest(side, side);
    left.hstack(&right)
}

/// Splits a composite into its left (input) and right (target) halves.
pub fn unpack_composite(img: &Image) -> Result<(Image, Image)> {
    if img.width() % 2 != 0 {
        return Err(Error::InvalidImage(format!("composite width {} is odd", img.width())));
    }
    let half = img.width() / 2;
    Ok((img.crop_columns(0, half), img.crop_columns(half, half)))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the dataset root, e.g. `train/s000_v003.png`.
    pub file: String,
    pub view_id: u32,
    pub state_id: u32,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub palette: ClassPalette,
    pub image_size: u32,
    pub seed: u64,
    pub split_fractions: SplitFractions,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        self.split_fractions.validate()?;
        let mut names: Vec<&str> = self.entries.iter().map(|e| e.file.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidDataset(format!("duplicate composite {}", w[0])));
        }
        let mut per_view: BTreeMap<u32, Split> = BTreeMap::new();
        for e in &self.entries {
            if *per_view.entry(e.view_id).or_insert(e.split) != e.split {
                return Err(Error::InvalidDataset(format!("view {} appears in two splits", e.view_id)));
            }
        }
        Ok(())
    }

    pub fn entries_in(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn load(dataset_dir: &Path) -> Result<Self> {
        let path = dataset_dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).at(&path)?;
        let m: Self = serde_json::from_str(&text).map_err(|source| Error::Json { path: path.clone(), source })?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, dataset_dir: &Path) -> Result<()> {
        let path = dataset_dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).map_err(|source| Error::Json { path: path.clone(), source })?;
        text.push('\n');
        fs::write(&path, text).at(&path)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetOptions {
    pub side: u32,
    pub fractions: SplitFractions,
    pub seed: u64,
    pub force: bool,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self { side: DEFAULT_SIDE, fractions: SplitFractions::default(), seed: 0, force: false }
    }
}

/// Writes composites into a dataset directory and records them for the manifest.
pub struct DatasetWriter {
    root: PathBuf,
    splits: BTreeMap<u32, Split>,
    palette: ClassPalette,
    options: DatasetOptions,
    entries: Vec<ManifestEntry>,
}

impl DatasetWriter {
    /// Prepares `root`. An existing dataset there is an error unless `options.force`, in
    /// which case its manifest and split directories are removed first.
    pub fn create(root: &Path, view_ids: &[u32], palette: ClassPalette, options: DatasetOptions) -> Result<Self> {
        if options.side < MIN_SIDE {
            return Err(Error::InvalidDataset(format!("composite side {} below minimum {MIN_SIDE}", options.side)));
        }
        let splits = assign_splits(view_ids, &options.fractions, options.seed)?;
        let manifest = root.join(MANIFEST_FILE);
        let split_dirs: Vec<PathBuf> = Split::ALL.iter().map(|s| root.join(s.dir_name())).collect();
        let occupied = manifest.exists()
            || split_dirs
                .iter()
                .any(|d| d.read_dir().map(|mut it| it.next().is_some()).unwrap_or(false));
        if occupied {
            if !options.force {
                return Err(Error::DatasetExists(root.to_path_buf()));
            }
            if manifest.exists() {
                fs::remove_file(&manifest).at(&manifest)?;
            }
            for d in &split_dirs {
                if d.exists() {
                    fs::remove_dir_all(d).at(d)?;
                }
            }
        }
        for d in &split_dirs {
            fs::create_dir_all(d).at(d)?;
        }
        Ok(Self { root: root.to_path_buf(), splits, palette, options, entries: Vec::new() })
    }

    pub fn split_of(&self, view_id: u32) -> Option<Split> {
        self.splits.get(&view_id).copied()
    }

    /// Packs and writes a batch of pairs in parallel.
    pub fn write_pairs(&mut self, pairs: &[RenderPair]) -> Result<()> {
        let jobs = pairs
            .iter()
            .map(|p| {
                let split = self
                    .split_of(p.view_id)
                    .ok_or_else(|| Error::InvalidDataset(format!("view {} was not registered", p.view_id)))?;
                let file = format!("{}/{}", split.dir_name(), composite_name(p.state_id, p.view_id));
                Ok((p, ManifestEntry { file, view_id: p.view_id, state_id: p.state_id, split }))
            })
            .collect::<Result<Vec<_>>>()?;
        let side = self.options.side;
        let root = &self.root;
        jobs.par_iter().try_for_each(|(pair, entry)| {
            let composite = pack_pair(pair, side)?;
            composite.save_png(&root.join(&entry.file))
        })?;
        self.entries.extend(jobs.into_iter().map(|(_, e)| e));
        Ok(())
    }

    /// Sorts entries, writes the manifest and returns it.
    pub fn finish(mut self) -> Result<DatasetManifest> {
        self.entries.sort_by(|a, b| (a.state_id, a.view_id).cmp(&(b.state_id, b.view_id)));
        let manifest = DatasetManifest {
            entries: self.entries,
            palette: self.palette,
            image_size: self.options.side,
            seed: self.options.seed,
            split_fractions: self.options.fractions,
        };
        manifest.validate()?;
        manifest.save(&self.root)?;
        Ok(manifest)
    }
}

/// Renders every view × state and writes the packed dataset. Returns the manifest.
pub fn build_dataset<T: Real>(
    renderer: &Renderer<'_, T>,
    poses: &[CameraPose<T>],
    states: &[SceneState<T>],
    width: u32,
    height: u32,
    out_dir: &Path,
    options: DatasetOptions,
) -> Result<DatasetManifest> {
    build_dataset_with(renderer, poses, states, width, height, out_dir, options, |_| Ok(()))
}

/// As [`build_dataset`], also handing every rendered pair to `observer` (in emission order).
#[allow(clippy::too_many_arguments)]
pub fn build_dataset_with<T: Real, F>(
    renderer: &Renderer<'_, T>,
    poses: &[CameraPose<T>],
    states: &[SceneState<T>],
    width: u32,
    height: u32,
    out_dir: &Path,
    options: DatasetOptions,
    mut observer: F,
) -> Result<DatasetManifest>
where
    F: FnMut(&RenderPair) -> Result<()>,
{
    if poses.is_empty() {
        return Err(Error::EmptyRig);
    }
    if states.is_empty() {
        return Err(Error::NoStates);
    }
    let view_ids: Vec<u32> = poses.iter().map(|p| p.view_id).collect();
    let mut writer = DatasetWriter::create(out_dir, &view_ids, renderer.scene().palette, options)?;
    let batch = states.len().max(rayon::current_num_threads());
    let mut pending = Vec::with_capacity(batch);
    renderer.render_batch(poses, states, width, height, |pair| {
        observer(&pair)?;
        pending.push(pair);
        if pending.len() >= batch {
            writer.write_pairs(&pending)?;
            pending.clear();
        }
        Ok(())
    })?;
    writer.write_pairs(&pending)?;
    writer.finish()
}

/// Convenience wrapper building a [`Renderer`] for `scene` and rendering all its states.
pub fn build_scene_dataset<T: Real>(
    scene: &SemanticScene<T>,
    poses: &[CameraPose<T>],
    width: u32,
    height: u32,
    out_dir: &Path,
    options: DatasetOptions,
) -> Result<DatasetManifest> {
    build_dataset(&Renderer::new(scene), poses, &scene.states, width, height, out_dir, options)
}

// ---------------------------------------------------------------------------
// Raw renders (pairs produced elsewhere, packed later)

pub const RAW_PHOTO_DIR: &str = "photo";
pub const RAW_LABEL_DIR: &str = "label";

pub fn raw_label_name(view_id: u32) -> String {
    format!("v{view_id:03}.png")
}

/// Writes the photoreal image to `raw/photo/sSSS_vVVV.png` and, once per view, the label
/// image to `raw/label/vVVV.png`.
pub fn write_raw_pair(pair: &RenderPair, raw_dir: &Path) -> Result<()> {
    let photo_dir = raw_dir.join(RAW_PHOTO_DIR);
    let label_dir = raw_dir.join(RAW_LABEL_DIR);
    fs::create_dir_all(&photo_dir).at(&photo_dir)?;
    fs::create_dir_all(&label_dir).at(&label_dir)?;
    pair.photoreal.save_png(&photo_dir.join(composite_name(pair.state_id, pair.view_id)))?;
    let label_path = label_dir.join(raw_label_name(pair.view_id));
    if !label_path.exists() {
        pair.label.save_png(&label_path)?;
    }
    Ok(())
}

fn parse_photo_name(name: &str) -> Option<(u32, u32)> {
    let stem = name.strip_suffix(".png")?.strip_prefix('s')?;
    let (s, v) = stem.split_once("_v")?;
    Some((s.parse().ok()?, v.parse().ok()?))
}

/// Reads a raw render directory (`photo/sSSS_vVVV.png` + `label/vVVV.png`) as pairs,
/// sorted by view then state. Labels must be palette-pure.
pub fn read_raw_pairs(raw_dir: &Path, palette: &ClassPalette) -> Result<Vec<RenderPair>> {
    let photo_dir = raw_dir.join(RAW_PHOTO_DIR);
    let mut keys = Vec::new();
    for entry in fs::read_dir(&photo_dir).at(&photo_dir)? {
        let entry = entry.at(&photo_dir)?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(k) = parse_photo_name(&name) {
            keys.push(k);
        }
    }
    keys.sort_by_key(|&(s, v)| (v, s));
    let mut labels: BTreeMap<u32, (std::sync::Arc<Image>, std::sync::Arc<IdBuffer>)> = BTreeMap::new();
    let mut pairs = Vec::with_capacity(keys.len());
    for (state_id, view_id) in keys {
        if !labels.contains_key(&view_id) {
            let path = raw_dir.join(RAW_LABEL_DIR).join(raw_label_name(view_id));
            let label = Image::load(&path)?;
            let ids = IdBuffer::decode(&label, palette)
                .map_err(|e| Error::InvalidImage(format!("{}: {e}", path.display())))?;
            labels.insert(view_id, (label.into(), ids.into()));
        }
        let (label, ids) = labels[&view_id].clone();
        let photoreal = Image::load(&photo_dir.join(composite_name(state_id, view_id)))?;
        let pair = RenderPair { photoreal, label, id_buffer: ids, view_id, state_id };
        pair.validate()?;
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Packs a raw render directory into a dataset.
pub fn pack_raw_dir(raw_dir: &Path, out_dir: &Path, palette: ClassPalette, options: DatasetOptions) -> Result<DatasetManifest> {
    let pairs = read_raw_pairs(raw_dir, &palette)?;
    if pairs.is_empty() {
        return Err(Error::EmptyRig);
    }
    let views: Vec<u32> = pairs.iter().map(|p| p.view_id).collect();
    let mut writer = DatasetWriter::create(out_dir, &views, palette, options)?;
    writer.write_pairs(&pairs)?;
    writer.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::LabelMap;
    use crate::scene::{default_palette, ClassId};
    use std::sync::Arc;

    fn pair(w: u32, h: u32) -> RenderPair {
        let mut ids = LabelMap::new(w, h, ClassId::Background);
        let mut photo = Image::new(w, h, [0; 3]);
        for y in 0..h {
            for x in 0..w {
                ids.set(x, y, ClassId::ALL[((x * 6) / w) as usize]);
                photo.set(x, y, [(x % 256) as u8, (y % 256) as u8, 77]);
            }
        }
        let label = ids.to_image(&default_palette());
        RenderPair { photoreal: photo, label: Arc::new(label), id_buffer: Arc::new(ids), view_id: 3, state_id: 1 }
    }

    #[test]
    fn composite_shape_and_palette_purity() {
        let p = pair(800, 600);
        let c = pack_pair(&p, 256).unwrap();
        assert_eq!(c.dimensions(), (512, 256));
        let (_, right) = unpack_composite(&c).unwrap();
        let palette = default_palette();
        assert!(right.pixels().iter().all(|rgb| palette.decode(*rgb).is_some()));
        assert!(pack_pair(&p, 7).is_err());
    }

    #[test]
    fn identity_size_keeps_label_exactly() {
        let p = pair(256, 256);
        let c = pack_pair(&p, 256).unwrap();
        let (left, right) = unpack_composite(&c).unwrap();
        assert_eq!(right, *p.label);
        assert_eq!(left, p.photoreal);
    }

    #[test]
    fn unpack_rejects_odd_width() {
        assert!(unpack_composite(&Image::new(511, 256, [0; 3])).is_err());
        let (a, b) = unpack_composite(&Image::new(512, 256, [1; 3])).unwrap();
        assert_eq!((a.dimensions(), b.dimensions()), ((256, 256), (256, 256)));
    }

    #[test]
    fn splits_partition_views() {
        let views: Vec<u32> = (0..110).collect();
        let s = assign_splits(&views, &SplitFractions::default(), 42).unwrap();
        assert_eq!(s.len(), 110);
        let count = |x| s.values().filter(|v| **v == x).count();
        assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (99, 6, 5));
        assert_eq!(s, assign_splits(&views, &SplitFractions::default(), 42).unwrap());
        assert_ne!(s, assign_splits(&views, &SplitFractions::default(), 43).unwrap());
        let all = assign_splits(&views, &SplitFractions::new(1.0, 0.0, 0.0).unwrap(), 1).unwrap();
        assert!(all.values().all(|v| *v == Split::Train));
        assert!(SplitFractions::new(0.5, 0.5, 0.5).is_err());
    }

    #[test]
    fn manifest_rejects_view_leakage() {
        let entry = |file: &str, view_id, split| ManifestEntry { file: file.into(), view_id, state_id: 0, split };
        let m = DatasetManifest {
            entries: vec![entry("train/a.png", 1, Split::Train), entry("test/b.png", 1, Split::Test)],
            palette: default_palette(),
            image_size: 64,
            seed: 0,
            split_fractions: SplitFractions::default(),
        };
        assert!(m.validate().is_err());
    }

    #[test]
    fn photo_names_parse() {
        assert_eq!(parse_photo_name("s012_v103.png"), Some((12, 103)));
        assert_eq!(parse_photo_name("v003.png"), None);
    }
}
