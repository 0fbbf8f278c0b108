//! Segmentation scoring: color quantization, per-class binary confusion counts and the
//! derived accuracy / precision / recall / F1 / IoU metrics.
//!
//! Metric ratios are generic over [`Ratio`], so the same code runs in `f64` and in exact
//! rational arithmetic.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::ops::{Add, AddAssign};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::raster::{Image, LabelMap};
use crate::scalar::Ratio;
use crate::scene::{ClassId, ClassPalette, Rgb, NUM_CLASSES};

/// Predicted pixels farther than this (Euclidean RGB) from every palette color count as drift.
pub const DEFAULT_DRIFT_THRESHOLD: f64 = 64.0;

#[inline]
fn dist2(a: Rgb, b: Rgb) -> u32 {
    a.iter()
        .zip(b)
        .map(|(&x, y)| {
            let d = x as i32 - y as i32;
            (d * d) as u32
        })
        .sum()
}

/// Nearest palette class and its squared distance; ties go to the lower class id.
#[inline]
pub fn nearest_class(rgb: Rgb, palette: &ClassPalette) -> (ClassId, u32) {
    let mut best = (ClassId::Background, u32::MAX);
    for (class, color) in palette.iter() {
        let d = dist2(rgb, color);
        if d < best.1 {
            best = (class, d);
        }
    }
    best
}

/// Maps every pixel to its nearest palette class.
pub fn quantize(img: &Image, palette: &ClassPalette) -> LabelMap {
    quantize_with_drift(img, palette, DEFAULT_DRIFT_THRESHOLD).0
}

/// As [`quantize`], also counting pixels farther than `threshold` from the palette.
pub fn quantize_with_drift(img: &Image, palette: &ClassPalette, threshold: f64) -> (LabelMap, u64) {
    let mut drift = 0u64;
    let classes = img
        .pixels()
        .iter()
        .map(|&rgb| {
            let (c, d2) = nearest_class(rgb, palette);
            if d2 as f64 > threshold * threshold {
                drift += 1;
            }
            c
        })
        .collect();
    let map = LabelMap::from_classes(img.width(), img.height(), classes).expect("same dimensions");
    (map, drift)
}

/// Pixels to evaluate; `false` entries are excluded from every count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PixelMask {
    width: u32,
    height: u32,
    include: Vec<bool>,
}

impl PixelMask {
    pub fn new(width: u32, height: u32, include: Vec<bool>) -> Result<Self> {
        if include.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch("mask size does not match its dimensions".into()));
        }
        Ok(Self { width, height, include })
    }

    /// Non-black pixels are included.
    pub fn from_image(img: &Image) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            include: img.pixels().iter().map(|p| *p != [0, 0, 0]).collect(),
        }
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }
}

/// Ground-truth × predicted pixel counts. All per-class binary tallies derive from it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    /// `matrix[gt][pred]`.
    pub matrix: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

/// One class's binary classification tallies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.matrix.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.matrix[i][i]).sum()
    }

    pub fn class(&self, c: ClassId) -> BinaryCounts {
        let i = c.index();
        let tp = self.matrix[i][i];
        let row: u64 = self.matrix[i].iter().sum();
        let col: u64 = self.matrix.iter().map(|r| r[i]).sum();
        let fp = col - tp;
        let fn_ = row - tp;
        BinaryCounts { tp, fp, fn_, tn: self.total() - tp - fp - fn_ }
    }

    /// Class appears in the ground truth or the prediction.
    pub fn is_present(&self, c: ClassId) -> bool {
        let b = self.class(c);
        b.tp + b.fp + b.fn_ > 0
    }
}

impl Add for ConfusionCounts {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        for (row, orow) in self.matrix.iter_mut().zip(o.matrix) {
            for (a, b) in row.iter_mut().zip(orow) {
                *a += b;
            }
        }
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

pub fn confusion(gt: &LabelMap, pred: &LabelMap, mask: Option<&PixelMask>) -> Result<ConfusionCounts> {
    if gt.dimensions() != pred.dimensions() {
        return Err(Error::DimensionMismatch(format!(
            "ground truth {:?} vs prediction {:?}",
            gt.dimensions(),
            pred.dimensions()
        )));
    }
    if let Some(m) = mask {
        if m.dimensions() != gt.dimensions() {
            return Err(Error::DimensionMismatch(format!("mask {:?} vs labels {:?}", m.dimensions(), gt.dimensions())));
        }
    }
    let mut counts = ConfusionCounts::default();
    for (i, (&g, &p)) in gt.classes().iter().zip(pred.classes()).enumerate() {
        if mask.is_some_and(|m| !m.include[i]) {
            continue;
        }
        counts.matrix[g.index()][p.index()] += 1;
    }
    Ok(counts)
}

/// Which classes enter macro averages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassSelection {
    /// Classes present in ground truth or prediction; undefined (0/0) ratios are skipped.
    #[default]
    Present,
    /// All six classes; undefined ratios count as zero.
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics<T> {
    pub counts: BinaryCounts,
    /// `(tp + tn) / total`.
    pub accuracy: T,
    pub precision: Option<T>,
    pub recall: Option<T>,
    pub f1: Option<T>,
    pub iou: Option<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport<T> {
    pub total_pixels: u64,
    pub global_accuracy: T,
    pub per_class: BTreeMap<ClassId, ClassMetrics<T>>,
    pub precision_macro: T,
    pub precision_micro: T,
    pub recall_macro: T,
    pub recall_micro: T,
    pub f1_macro: T,
    pub f1_micro: T,
    pub mean_iou: T,
    pub selection: ClassSelection,
    pub classes_included: Vec<ClassId>,
    /// `(class, metric)` pairs whose ratio was 0/0.
    pub undefined: Vec<(ClassId, String)>,
}

impl<T: Copy> MetricsReport<T> {
    pub fn per_class_accuracy(&self, c: ClassId) -> T {
        self.per_class[&c].accuracy
    }

    pub fn iou(&self, c: ClassId) -> Option<T> {
        self.per_class[&c].iou
    }
}

fn ratio<T: Ratio>(num: u64, den: u64) -> Option<T> {
    (den > 0).then(|| T::quotient(num, den))
}

/// Derives all metrics from pooled counts.
///
/// F1 is evaluated as `2tp / (2tp + fp + fn)`, which equals the harmonic mean of precision
/// and recall wherever that is defined and stays defined when only one of them is.
pub fn metrics<T: Ratio>(counts: &ConfusionCounts, selection: ClassSelection) -> Result<MetricsReport<T>> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::EmptyEvaluation("zero pixels evaluated".into()));
    }
    let mut per_class = BTreeMap::new();
    let mut undefined = Vec::new();
    for c in ClassId::ALL {
        let b = counts.class(c);
        let m = ClassMetrics {
            counts: b,
            accuracy: T::quotient(b.tp + b.tn, total),
            precision: ratio(b.tp, b.tp + b.fp),
            recall: ratio(b.tp, b.tp + b.fn_),
            f1: ratio(2 * b.tp, 2 * b.tp + b.fp + b.fn_),
            iou: ratio(b.tp, b.tp + b.fp + b.fn_),
        };
        per_class.insert(c, m);
    }
    let classes_included: Vec<ClassId> = match selection {
        ClassSelection::Present => ClassId::ALL.into_iter().filter(|&c| counts.is_present(c)).collect(),
        ClassSelection::All => ClassId::ALL.to_vec(),
    };
    for &c in &classes_included {
        let m = &per_class[&c];
        for (name, v) in [("precision", m.precision), ("recall", m.recall), ("f1", m.f1), ("iou", m.iou)] {
            if v.is_none() {
                undefined.push((c, name.to_string()));
            }
        }
    }

    let macro_avg = |get: fn(&ClassMetrics<T>) -> Option<T>| -> T {
        let mut sum = T::zero();
        let mut n = 0u64;
        for c in &classes_included {
            match (get(&per_class[c]), selection) {
                (Some(v), _) => {
                    sum = sum + v;
                    n += 1;
                }
                (None, ClassSelection::All) => n += 1,
                (None, ClassSelection::Present) => {}
            }
        }
        if n == 0 {
            T::zero()
        } else {
            sum / T::from_count(n)
        }
    };

    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for c in &classes_included {
        let b = per_class[c].counts;
        tp += b.tp;
        fp += b.fp;
        fn_ += b.fn_;
    }

    Ok(MetricsReport {
        total_pixels: total,
        global_accuracy: T::quotient(counts.correct(), total),
        precision_macro: macro_avg(|m| m.precision),
        precision_micro: ratio(tp, tp + fp).unwrap_or_else(T::zero),
        recall_macro: macro_avg(|m| m.recall),
        recall_micro: ratio(tp, tp + fn_).unwrap_or_else(T::zero),
        f1_macro: macro_avg(|m| m.f1),
        f1_micro: ratio(2 * tp, 2 * tp + fp + fn_).unwrap_or_else(T::zero),
        mean_iou: macro_avg(|m| m.iou),
        per_class,
        selection,
        classes_included,
        undefined,
    })
}

// ---------------------------------------------------------------------------
// Directory evaluation

#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    pub selection: ClassSelection,
    pub drift_threshold: Option<f64>,
    pub mask_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub name: String,
    pub counts: ConfusionCounts,
    pub drift_pixels: u64,
    /// `None` when the mask excluded every pixel.
    pub metrics: Option<MetricsReport<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub images: usize,
    pub counts: ConfusionCounts,
    pub metrics: MetricsReport<f64>,
    pub drift_threshold: f64,
    pub drift_pixels: u64,
    pub predicted_pixels: u64,
    pub drift_fraction: f64,
    pub per_image: Vec<ImageReport>,
}

fn png_names(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).at(dir)? {
        let entry = entry.at(dir)?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".png") && entry.path().is_file() {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

/// Scores every prediction in `pred_dir` against the same-named ground truth in `gt_dir`.
/// Predictions are quantized; ground truth must be palette-pure.
pub fn evaluate_run(pred_dir: &Path, gt_dir: &Path, palette: &ClassPalette, options: &EvalOptions) -> Result<RunReport> {
    let pred = png_names(pred_dir)?;
    let gt = png_names(gt_dir)?;
    let only_pred: Vec<&String> = pred.iter().filter(|n| gt.binary_search(n).is_err()).collect();
    let only_gt: Vec<&String> = gt.iter().filter(|n| pred.binary_search(n).is_err()).collect();
    let common: Vec<&String> = pred.iter().filter(|n| gt.binary_search(n).is_ok()).collect();
    if common.is_empty() {
        return Err(Error::EmptyEvaluation(format!(
            "no matching file names between {} and {}",
            pred_dir.display(),
            gt_dir.display()
        )));
    }
    if !only_pred.is_empty() || !only_gt.is_empty() {
        return Err(Error::UnmatchedFiles(format!(
            "only in predictions: {only_pred:?}; only in ground truth: {only_gt:?}"
        )));
    }
    let threshold = options.drift_threshold.unwrap_or(DEFAULT_DRIFT_THRESHOLD);
    let selection = options.selection;

    let per_image = common
        .par_iter()
        .map(|name| -> Result<(ImageReport, u64)> {
            let pred_img = Image::load(&pred_dir.join(name))?;
            let gt_path = gt_dir.join(name);
            let gt_map = LabelMap::decode(&Image::load(&gt_path)?, palette)
                .map_err(|e| Error::InvalidImage(format!("{}: {e}", gt_path.display())))?;
            let (pred_map, drift) = quantize_with_drift(&pred_img, palette, threshold);
            let mask = match &options.mask_dir {
                Some(dir) => Some(PixelMask::from_image(&Image::load(&dir.join(name))?)),
                None => None,
            };
            let counts = confusion(&gt_map, &pred_map, mask.as_ref())
                .map_err(|e| Error::DimensionMismatch(format!("{name}: {e}")))?;
            let metrics = (counts.total() > 0).then(|| metrics(&counts, selection)).transpose()?;
            let pixels = pred_img.pixels().len() as u64;
            Ok((ImageReport { name: (*name).clone(), counts, drift_pixels: drift, metrics }, pixels))
        })
        .collect::<Result<Vec<_>>>()?;

    let counts: ConfusionCounts = per_image.iter().map(|(r, _)| r.counts).sum();
    let drift_pixels = per_image.iter().map(|(r, _)| r.drift_pixels).sum();
    let predicted_pixels: u64 = per_image.iter().map(|(_, n)| n).sum();
    Ok(RunReport {
        images: per_image.len(),
        counts,
        metrics: metrics(&counts, selection)?,
        drift_threshold: threshold,
        drift_pixels,
        predicted_pixels,
        drift_fraction: drift_pixels as f64 / predicted_pixels as f64,
        per_image: per_image.into_iter().map(|(r, _)| r).collect(),
    })
}

fn title(c: ClassId) -> String {
    let n = c.name();
    n[..1].to_uppercase() + &n[1..]
}

/// Plain-text summary table: global accuracy, per-object accuracy, precision, recall, F1, mIoU.
pub fn format_table(report: &MetricsReport<f64>, drift_fraction: Option<f64>) -> String {
    let mut out = String::new();
    let row = |out: &mut String, k: &str, v: String| {
        let _ = writeln!(out, "{k:<24}{v:>10}");
    };
    row(&mut out, "Metric", "Value".into());
    row(&mut out, "Accuracy (%)", format!("{:.2}", report.global_accuracy * 100.0));
    for c in [ClassId::Wall, ClassId::Window, ClassId::Door, ClassId::Column, ClassId::Roof, ClassId::Background] {
        row(&mut out, &format!("{} (%)", title(c)), format!("{:.2}", report.per_class_accuracy(c) * 100.0));
    }
    row(&mut out, "Precision (macro)", format!("{:.3}", report.precision_macro));
    row(&mut out, "Precision (micro)", format!("{:.3}", report.precision_micro));
    row(&mut out, "Recall (macro)", format!("{:.3}", report.recall_macro));
    row(&mut out, "Recall (micro)", format!("{:.3}", report.recall_micro));
    row(&mut out, "F1 (macro)", format!("{:.3}", report.f1_macro));
    row(&mut out, "F1 (micro)", format!("{:.3}", report.f1_micro));
    row(&mut out, "mIoU", format!("{:.3}", report.mean_iou));
    if let Some(d) = drift_fraction {
        row(&mut out, "Off-palette drift (%)", format!("{:.2}", d * 100.0));
    }
    let included: Vec<&str> = report.classes_included.iter().map(|c| c.name()).collect();
    let _ = writeln!(out, "\nclasses averaged ({:?}): {}", report.selection, included.join(", "));
    if !report.undefined.is_empty() {
        let flags: Vec<String> = report.undefined.iter().map(|(c, m)| format!("{c}:{m}")).collect();
        let _ = writeln!(out, "undefined (0/0): {}", flags.join(", "));
    }
    out
}

/// Writes `metrics.txt` and `metrics.json` into `dir`.
pub fn write_run_report(report: &RunReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).at(dir)?;
    let txt = dir.join("metrics.txt");
    fs::write(&txt, format_table(&report.metrics, Some(report.drift_fraction))).at(&txt)?;
    let json = dir.join("metrics.json");
    let mut text = serde_json::to_string_pretty(report).map_err(|source| Error::Json { path: json.clone(), source })?;
    text.push('\n');
    fs::write(&json, text).at(&json)
}

pub fn load_run_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).at(path)?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
}
