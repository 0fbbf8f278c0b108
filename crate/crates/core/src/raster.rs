//! 8-bit RGB images and per-pixel class maps.

use std::path::Path;

use image::imageops::{self, FilterType};
use image::{ImageFormat, RgbImage};

use crate::error::{Error, IoContext, Result};
use crate::scene::{ClassId, ClassPalette, Rgb};

/// Row-major 8-bit RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<Rgb>,
}

impl Image {
    pub fn new(width: u32, height: u32, fill: Rgb) -> Self {
        Self { width, height, pixels: vec![fill; width as usize * height as usize] }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<Rgb>) -> Result<Self> {
        if pixels.len() != width as usize * height as usize {
            return Err(Error::InvalidImage(format!(
                "{} pixels for a {width}×{height} image",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Rgb {
        self.pixels[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, rgb: Rgb) {
        let w = self.width;
        self.pixels[(y * w + x) as usize] = rgb;
    }

    pub fn to_rgb_image(&self) -> RgbImage {
        RgbImage::from_raw(self.width, self.height, self.pixels.concat()).expect("consistent buffer")
    }

    pub fn from_rgb_image(img: &RgbImage) -> Self {
        let pixels = img.pixels().map(|p| p.0).collect();
        Self { width: img.width(), height: img.height(), pixels }
    }

    /// Columns `[x0, x0 + w)` of every row.
    pub fn crop_columns(&self, x0: u32, w: u32) -> Self {
        let mut pixels = Vec::with_capacity(w as usize * self.height as usize);
        for y in 0..self.height {
            let row = (y * self.width) as usize;
            pixels.extend_from_slice(&self.pixels[row + x0 as usize..row + (x0 + w) as usize]);
        }
        Self { width: w, height: self.height, pixels }
    }

    /// Places `right` to the right of `self`. Heights must match.
    pub fn hstack(&self, right: &Image) -> Result<Self> {
        if self.height != right.height {
            return Err(Error::DimensionMismatch(format!(
                "cannot stitch heights {} and {}",
                self.height, right.height
            )));
        }
        let mut pixels = Vec::with_capacity(self.pixels.len() + right.pixels.len());
        for y in 0..self.height as usize {
            pixels.extend_from_slice(&self.pixels[y * self.width as usize..(y + 1) * self.width as usize]);
            pixels.extend_from_slice(&right.pixels[y * right.width as usize..(y + 1) * right.width as usize]);
        }
        Ok(Self { width: self.width + right.width, height: self.height, pixels })
    }

    /// Bilinear resample to `w×h` (non-uniform scale, no crop).
    pub fn resize_bilinear(&self, w: u32, h: u32) -> Self {
        if (w, h) == self.dimensions() {
            return self.clone();
        }
        Self::from_rgb_image(&imageops::resize(&self.to_rgb_image(), w, h, FilterType::Triangle))
    }

    /// Nearest-neighbour resample; never introduces new colors.
    pub fn resize_nearest(&self, w: u32, h: u32) -> Self {
        if (w, h) == self.dimensions() {
            return self.clone();
        }
        Self::from_rgb_image(&imageops::resize(&self.to_rgb_image(), w, h, FilterType::Nearest))
    }

    /// Writes a lossless PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb_image()
            .save_with_format(path, ImageFormat::Png)
            .map_err(|source| Error::Codec { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).at(path)?;
        let img = image::load_from_memory(&bytes)
            .map_err(|source| Error::Codec { path: path.to_path_buf(), source })?;
        Ok(Self::from_rgb_image(&img.to_rgb8()))
    }
}

/// Row-major class per pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: u32,
    height: u32,
    classes: Vec<ClassId>,
}

/// Class channel produced alongside a label render; background where no surface was hit.
pub type IdBuffer = LabelMap;

impl LabelMap {
    pub fn new(width: u32, height: u32, fill: ClassId) -> Self {
        Self { width, height, classes: vec![fill; width as usize * height as usize] }
    }

    pub fn from_classes(width: u32, height: u32, classes: Vec<ClassId>) -> Result<Self> {
        if classes.len() != width as usize * height as usize {
            return Err(Error::InvalidImage(format!(
                "{} labels for a {width}×{height} map",
                classes.len()
            )));
        }
        Ok(Self { width, height, classes })
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> ClassId {
        self.classes[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, c: ClassId) {
        let w = self.width;
        self.classes[(y * w + x) as usize] = c;
    }

    /// Palette rendering of the map.
    pub fn to_image(&self, palette: &ClassPalette) -> Image {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.classes.iter().map(|&c| palette.color(c)).collect(),
        }
    }

    /// Exact palette decode; fails on the first off-palette pixel.
    pub fn decode(img: &Image, palette: &ClassPalette) -> Result<Self> {
        let classes = img
            .pixels()
            .iter()
            .enumerate()
            .map(|(i, &rgb)| {
                palette.decode(rgb).ok_or_else(|| {
                    Error::InvalidImage(format!(
                        "off-palette color {rgb:?} at pixel ({}, {})",
                        i as u32 % img.width(),
                        i as u32 / img.width()
                    ))
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { width: img.width(), height: img.height(), classes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::default_palette;

    fn gradient(w: u32, h: u32) -> Image {
        let mut img = Image::new(w, h, [0; 3]);
        for y in 0..h {
            for x in 0..w {
                img.set(x, y, [(x * 7 % 256) as u8, (y * 13 % 256) as u8, ((x + y) % 256) as u8]);
            }
        }
        img
    }

    #[test]
    fn stack_and_crop_are_inverse() {
        let a = gradient(5, 4);
        let b = gradient(3, 4);
        let s = a.hstack(&b).unwrap();
        assert_eq!(s.dimensions(), (8, 4));
        assert_eq!(s.crop_columns(0, 5), a);
        assert_eq!(s.crop_columns(5, 3), b);
        assert!(a.hstack(&gradient(3, 5)).is_err());
    }

    #[test]
    fn nearest_resize_keeps_palette() {
        let p = default_palette();
        let mut labels = LabelMap::new(37, 23, ClassId::Background);
        for y in 0..23 {
            for x in 0..37 {
                labels.set(x, y, ClassId::ALL[((x / 5 + y / 3) % 6) as usize]);
            }
        }
        let img = labels.to_image(&p);
        for (w, h) in [(16, 16), (64, 64), (37, 23), (100, 7)] {
            let r = img.resize_nearest(w, h);
            assert_eq!(r.dimensions(), (w, h));
            assert!(r.pixels().iter().all(|c| p.decode(*c).is_some()));
        }
        assert_eq!(img.resize_nearest(37, 23), img);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = gradient(9, 6);
        let path = dir.path().join("g.png");
        img.save_png(&path).unwrap();
        assert_eq!(Image::load(&path).unwrap(), img);
    }

    #[test]
    fn decode_rejects_off_palette() {
        let p = default_palette();
        let mut img = Image::new(2, 2, [0, 0, 255]);
        assert!(LabelMap::decode(&img, &p).unwrap().classes().iter().all(|&c| c == ClassId::Wall));
        img.set(1, 1, [1, 2, 3]);
        assert!(LabelMap::decode(&img, &p).is_err());
        assert!(Image::from_pixels(2, 2, vec![[0; 3]; 3]).is_err());
    }
}
