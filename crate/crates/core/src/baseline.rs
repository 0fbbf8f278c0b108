//! Nearest-centroid per-pixel classifier over (color, position) features.
//!
//! Stand-in for an image-to-image network so the synthesize → train → predict → evaluate
//! loop can run end to end. Features are `(r, g, b, x, y)` with color in [0,1] and pixel
//! centres normalised to [0,1].

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{unpack_composite, DatasetManifest, Split};
use crate::error::{Error, IoContext, Result};
use crate::eval::quantize;
use crate::raster::{Image, LabelMap};
use crate::scene::{ClassId, ClassPalette, NUM_CLASSES};

pub const FEATURES: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub class: ClassId,
    pub mean: [f64; FEATURES],
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    /// Color smoothing radius; 1 means no smoothing, `k` averages a `(2k−1)²` window.
    pub k: u32,
    pub palette: ClassPalette,
    /// Sorted by class, one per class seen in training.
    pub centroids: Vec<Centroid>,
}

/// Per-class feature sums; merge by addition in any order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FeatureSums {
    sums: [[f64; FEATURES]; NUM_CLASSES],
    counts: [u64; NUM_CLASSES],
}

impl FeatureSums {
    pub fn merge(mut self, o: &Self) -> Self {
        for c in 0..NUM_CLASSES {
            for f in 0..FEATURES {
                self.sums[c][f] += o.sums[c][f];
            }
            self.counts[c] += o.counts[c];
        }
        self
    }
}

/// Box-averaged colors in [0,1]; `k = 1` is the identity.
fn smoothed_colors(photo: &Image, k: u32) -> Vec<[f64; 3]> {
    let (w, h) = photo.dimensions();
    let r = k.saturating_sub(1) as i64;
    let mut out = Vec::with_capacity(photo.pixels().len());
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut acc = [0.0; 3];
            let mut n = 0.0;
            for yy in (y - r).max(0)..=(y + r).min(h as i64 - 1) {
                for xx in (x - r).max(0)..=(x + r).min(w as i64 - 1) {
                    let p = photo.get(xx as u32, yy as u32);
                    for (a, v) in acc.iter_mut().zip(p) {
                        *a += v as f64;
                    }
                    n += 1.0;
                }
            }
            out.push(acc.map(|a| a / (n * 255.0)));
        }
    }
    out
}

fn features(photo: &Image, k: u32) -> Vec<[f64; FEATURES]> {
    let (w, h) = photo.dimensions();
    smoothed_colors(photo, k)
        .into_iter()
        .enumerate()
        .map(|(i, [r, g, b])| {
            let x = (i as u32 % w) as f64;
            let y = (i as u32 / w) as f64;
            [r, g, b, (x + 0.5) / w as f64, (y + 0.5) / h as f64]
        })
        .collect()
}

/// Feature sums of one labelled image.
pub fn accumulate(photo: &Image, labels: &LabelMap, k: u32) -> Result<FeatureSums> {
    if photo.dimensions() != labels.dimensions() {
        return Err(Error::DimensionMismatch(format!(
            "photo {:?} vs labels {:?}",
            photo.dimensions(),
            labels.dimensions()
        )));
    }
    let mut s = FeatureSums::default();
    for (f, c) in features(photo, k).iter().zip(labels.classes()) {
        let i = c.index();
        for (acc, v) in s.sums[i].iter_mut().zip(f) {
            *acc += v;
        }
        s.counts[i] += 1;
    }
    Ok(s)
}

impl BaselineModel {
    pub fn from_sums(sums: &FeatureSums, k: u32, palette: ClassPalette) -> Result<Self> {
        let centroids: Vec<Centroid> = ClassId::ALL
            .into_iter()
            .filter(|c| sums.counts[c.index()] > 0)
            .map(|c| {
                let n = sums.counts[c.index()];
                Centroid { class: c, mean: sums.sums[c.index()].map(|s| s / n as f64), count: n }
            })
            .collect();
        if centroids.is_empty() {
            return Err(Error::EmptyTrainSplit);
        }
        Ok(Self { k: k.max(1), palette, centroids })
    }

    /// Centroid color on the 0–255 scale.
    pub fn centroid_rgb(&self, class: ClassId) -> Option<[f64; 3]> {
        self.centroids
            .iter()
            .find(|c| c.class == class)
            .map(|c| [c.mean[0] * 255.0, c.mean[1] * 255.0, c.mean[2] * 255.0])
    }

    #[inline]
    fn classify(&self, f: &[f64; FEATURES]) -> ClassId {
        let mut best = (self.centroids[0].class, f64::INFINITY);
        for c in &self.centroids {
            let d: f64 = c.mean.iter().zip(f).map(|(m, v)| (m - v) * (m - v)).sum();
            if d < best.1 {
                best = (c.class, d);
            }
        }
        best.0
    }

    pub fn predict_labels(&self, photo: &Image) -> LabelMap {
        let classes = features(photo, self.k).par_iter().map(|f| self.classify(f)).collect();
        LabelMap::from_classes(photo.width(), photo.height(), classes).expect("same dimensions")
    }

    pub fn validate(&self) -> Result<()> {
        if self.centroids.is_empty() {
            return Err(Error::InvalidModel("no centroids".into()));
        }
        if self.centroids.iter().any(|c| c.count == 0) {
            return Err(Error::InvalidModel("centroid with zero count".into()));
        }
        if self.centroids.windows(2).any(|w| w[0].class >= w[1].class) {
            return Err(Error::InvalidModel("centroids must be unique and sorted by class".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
        text.push('\n');
        fs::write(path, text).at(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).at(path)?;
        let m: Self = serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
        m.validate()?;
        Ok(m)
    }
}

/// Palette image of the nearest-centroid prediction.
pub fn predict(model: &BaselineModel, photo: &Image) -> Image {
    model.predict_labels(photo).to_image(&model.palette)
}

/// Fits centroids over every pixel of the manifest's train split; classes come from the
/// composites' right halves.
pub fn train_baseline(dataset_dir: &Path, manifest: &DatasetManifest, k: u32) -> Result<BaselineModel> {
    let train: Vec<_> = manifest.entries_in(Split::Train).collect();
    if train.is_empty() {
        return Err(Error::EmptyTrainSplit);
    }
    let palette = manifest.palette;
    let partials = train
        .par_iter()
        .map(|e| {
            let composite = Image::load(&dataset_dir.join(&e.file))?;
            let (photo, label) = unpack_composite(&composite)?;
            accumulate(&photo, &quantize(&label, &palette), k)
        })
        .collect::<Result<Vec<_>>>()?;
    let sums = partials.iter().fold(FeatureSums::default(), |acc, p| acc.merge(p));
    BaselineModel::from_sums(&sums, k, palette)
}

/// Trains on in-memory `(photo, labels)` pairs.
pub fn train_on_pairs<'a>(
    pairs: impl IntoIterator<Item = (&'a Image, &'a LabelMap)>,
    k: u32,
    palette: ClassPalette,
) -> Result<BaselineModel> {
    let mut sums = FeatureSums::default();
    for (photo, labels) in pairs {
        sums = sums.merge(&accumulate(photo, labels, k)?);
    }
    BaselineModel::from_sums(&sums, k, palette)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::default_palette;

    #[test]
    fn single_color_class() {
        let photo = Image::new(4, 4, [255, 0, 0]);
        let labels = LabelMap::new(4, 4, ClassId::Wall);
        let m = train_on_pairs([(&photo, &labels)], 1, default_palette()).unwrap();
        assert_eq!(m.centroids.len(), 1);
        let rgb = m.centroid_rgb(ClassId::Wall).unwrap();
        assert!((rgb[0] - 255.0).abs() < 1e-9 && rgb[1].abs() < 1e-9 && rgb[2].abs() < 1e-9);
    }

    #[test]
    fn all_background_gives_one_centroid() {
        let photo = Image::new(3, 3, [12, 40, 90]);
        let labels = LabelMap::new(3, 3, ClassId::Background);
        let m = train_on_pairs([(&photo, &labels)], 1, default_palette()).unwrap();
        assert_eq!(m.centroids.iter().map(|c| c.class).collect::<Vec<_>>(), [ClassId::Background]);
        assert!(predict(&m, &Image::new(2, 2, [255; 3])).pixels().iter().all(|p| *p == [0, 0, 0]));
    }

    #[test]
    fn checker_two_class_means() {
        // Oracle: direct per-class mean over the labelled pixels.
        let (w, h) = (6u32, 4u32);
        let mut photo = Image::new(w, h, [0; 3]);
        let mut labels = LabelMap::new(w, h, ClassId::Background);
        let mut oracle = [[0.0f64; 5]; 2];
        let mut n = [0.0f64; 2];
        for y in 0..h {
            for x in 0..w {
                let roof = (x + y) % 2 == 0;
                let rgb = if roof { [20 + x as u8, 200, 10] } else { [200, 30, 40 + y as u8] };
                photo.set(x, y, rgb);
                labels.set(x, y, if roof { ClassId::Roof } else { ClassId::Wall });
                let f = [rgb[0] as f64 / 255.0, rgb[1] as f64 / 255.0, rgb[2] as f64 / 255.0, (x as f64 + 0.5) / w as f64, (y as f64 + 0.5) / h as f64];
                let i = roof as usize;
                for k in 0..5 {
                    oracle[i][k] += f[k];
                }
                n[i] += 1.0;
            }
        }
        let m = train_on_pairs([(&photo, &labels)], 1, default_palette()).unwrap();
        for (i, class) in [(0, ClassId::Wall), (1, ClassId::Roof)] {
            let c = m.centroids.iter().find(|c| c.class == class).unwrap();
            for k in 0..5 {
                assert!((c.mean[k] - oracle[i][k] / n[i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn exact_centroid_and_tie_rule() {
        let model = BaselineModel {
            k: 1,
            palette: default_palette(),
            centroids: vec![
                Centroid { class: ClassId::Wall, mean: [0.0, 0.0, 0.0, 0.5, 0.5], count: 1 },
                Centroid { class: ClassId::Roof, mean: [1.0, 1.0, 1.0, 0.5, 0.5], count: 1 },
            ],
        };
        assert_eq!(model.classify(&[1.0, 1.0, 1.0, 0.5, 0.5]), ClassId::Roof);
        assert_eq!(model.classify(&[0.5, 0.5, 0.5, 0.5, 0.5]), ClassId::Wall);
    }

    #[test]
    fn smoothing_window() {
        let mut photo = Image::new(3, 3, [0; 3]);
        photo.set(1, 1, [255, 255, 255]);
        assert_eq!(smoothed_colors(&photo, 1)[4], [1.0; 3]);
        let s = smoothed_colors(&photo, 2);
        assert!((s[4][0] - 1.0 / 9.0).abs() < 1e-12);
        assert!((s[0][0] - 1.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn model_file_round_trip() {
        let photo = Image::new(2, 2, [1, 2, 3]);
        let labels = LabelMap::new(2, 2, ClassId::Door);
        let m = train_on_pairs([(&photo, &labels)], 2, default_palette()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        m.save(&p).unwrap();
        assert_eq!(BaselineModel::load(&p).unwrap(), m);
    }
}
