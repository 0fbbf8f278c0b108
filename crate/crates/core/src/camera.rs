//! Camera poses: orbit generation, pose files and the pinhole model shared by the
//! renderer and the mesh projector.
//!
//! Conventions: world up is +z, azimuth 0 lies on +x and grows counter-clockwise,
//! focal lengths are 35 mm-equivalent (36 mm sensor width).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::geometry::{Ray, Vec3};
use crate::scalar::Real;

pub const SENSOR_WIDTH_MM: f64 = 36.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraPose<T> {
    pub position: Vec3<T>,
    pub look_at: Vec3<T>,
    pub up: Vec3<T>,
    /// Millimetres, 35 mm-equivalent.
    pub focal_length: T,
    pub view_id: u32,
}

impl<T: Real> CameraPose<T> {
    pub fn new(position: Vec3<T>, look_at: Vec3<T>, focal_length: T, view_id: u32) -> Result<Self> {
        let pose = Self { position, look_at, up: Vec3::new(T::zero(), T::zero(), T::one()), focal_length, view_id };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<()> {
        if self.position == self.look_at {
            return Err(Error::InvalidCamera(format!("view {}: position equals look_at", self.view_id)));
        }
        if !(self.position.is_finite() && self.look_at.is_finite()) {
            return Err(Error::InvalidCamera(format!("view {}: non-finite coordinates", self.view_id)));
        }
        if (self.up.norm().as_f64() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidCamera(format!("view {}: up vector is not unit length", self.view_id)));
        }
        if !(self.focal_length > T::zero()) {
            return Err(Error::InvalidCamera(format!("view {}: focal length must be positive", self.view_id)));
        }
        Ok(())
    }

    pub fn forward(&self) -> Vec3<T> {
        (self.look_at - self.position).normalized().expect("validated pose")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitConfig<T> {
    pub center: Vec3<T>,
    pub radius: T,
    /// Ring elevations in degrees, strictly between -90 and 90.
    pub elevations: Vec<T>,
    pub views_per_ring: usize,
    pub focal_length: T,
}

impl<T: Real> OrbitConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > T::zero()) {
            return Err(Error::InvalidCamera("orbit radius must be positive".into()));
        }
        if self.views_per_ring == 0 || self.elevations.is_empty() {
            return Err(Error::InvalidCamera("orbit needs at least one view".into()));
        }
        if let Some(e) = self.elevations.iter().find(|e| !(e.abs() < T::lit(90.0))) {
            return Err(Error::InvalidCamera(format!("elevation {e} must lie strictly within ±90°")));
        }
        if !(self.focal_length > T::zero()) {
            return Err(Error::InvalidCamera("focal length must be positive".into()));
        }
        Ok(())
    }

    pub fn view_count(&self) -> usize {
        self.elevations.len() * self.views_per_ring
    }
}

/// Evenly spaced orbit, ring-major then azimuth ascending; every pose looks at the centre.
pub fn generate_orbit<T: Real>(cfg: &OrbitConfig<T>) -> Result<Vec<CameraPose<T>>> {
    cfg.validate()?;
    let mut poses = Vec::with_capacity(cfg.view_count());
    let n = T::from_usize_lossy(cfg.views_per_ring);
    for elevation in &cfg.elevations {
        let (se, ce) = elevation.to_radians().sin_cos();
        for k in 0..cfg.views_per_ring {
            let az = T::TAU() * T::from_usize_lossy(k) / n;
            let (sa, ca) = az.sin_cos();
            let offset = Vec3::new(ce * ca, ce * sa, se) * cfg.radius;
            let view_id = poses.len() as u32;
            poses.push(CameraPose::new(cfg.center + offset, cfg.center, cfg.focal_length, view_id)?);
        }
    }
    Ok(poses)
}

/// One pose per line: `px py pz lx ly lz focal`. `#` starts a comment.
pub fn parse_poses<T: Real>(text: &str, path: &Path) -> Result<Vec<CameraPose<T>>> {
    let mut poses = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let l = raw.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { path: path.to_path_buf(), line: i + 1, message };
        let nums = l
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| parse_err(format!("bad number \"{t}\""))))
            .collect::<Result<Vec<_>>>()?;
        if nums.len() != 7 {
            return Err(parse_err(format!("expected 7 numbers, found {}", nums.len())));
        }
        let pose = CameraPose::new(
            Vec3::from_f64([nums[0], nums[1], nums[2]]),
            Vec3::from_f64([nums[3], nums[4], nums[5]]),
            T::lit(nums[6]),
            poses.len() as u32,
        )
        .map_err(|e| parse_err(e.to_string()))?;
        poses.push(pose);
    }
    Ok(poses)
}

pub fn import_poses<T: Real>(path: &Path) -> Result<Vec<CameraPose<T>>> {
    let text = fs::read_to_string(path).at(path)?;
    parse_poses(&text, path)
}

pub fn format_poses<T: Real>(poses: &[CameraPose<T>]) -> String {
    let mut out = String::from("# px py pz lx ly lz focal_mm\n");
    for p in poses {
        let [px, py, pz] = p.position.to_f64();
        let [lx, ly, lz] = p.look_at.to_f64();
        let _ = writeln!(out, "{px:?} {py:?} {pz:?} {lx:?} {ly:?} {lz:?} {:?}", p.focal_length.as_f64());
    }
    out
}

pub fn write_poses<T: Real>(poses: &[CameraPose<T>], path: &Path) -> Result<()> {
    fs::write(path, format_poses(poses)).at(path)
}

/// Pinhole camera for a pose at a given resolution. Pixel `(x, y)` has its centre at
/// `(x + 0.5, y + 0.5)`; `y` grows downward.
#[derive(Clone, Copy, Debug)]
pub struct PinholeCamera<T> {
    pub origin: Vec3<T>,
    forward: Vec3<T>,
    right: Vec3<T>,
    down: Vec3<T>,
    focal_px: T,
    half_w: T,
    half_h: T,
    pub width: u32,
    pub height: u32,
}

impl<T: Real> PinholeCamera<T> {
    pub fn new(pose: &CameraPose<T>, width: u32, height: u32) -> Result<Self> {
        pose.validate()?;
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage("zero-sized render".into()));
        }
        let forward = pose.forward();
        let right = forward
            .cross(pose.up)
            .normalized()
            .filter(|r| r.norm() > T::lit(0.5))
            // Looking straight along `up`: fall back to +y as the up hint.
            .or_else(|| forward.cross(Vec3::new(T::zero(), T::one(), T::zero())).normalized())
            .ok_or_else(|| Error::InvalidCamera("cannot build camera basis".into()))?;
        let down = forward.cross(right);
        let w = T::from_u32(width).unwrap();
        Ok(Self {
            origin: pose.position,
            forward,
            right,
            down,
            focal_px: pose.focal_length / T::lit(SENSOR_WIDTH_MM) * w,
            half_w: w * T::lit(0.5),
            half_h: T::from_u32(height).unwrap() * T::lit(0.5),
            width,
            height,
        })
    }

    /// Primary ray through the centre of pixel `(x, y)`; direction is unit length.
    pub fn ray(&self, x: u32, y: u32) -> Ray<T> {
        let half = T::lit(0.5);
        let u = T::from_u32(x).unwrap() + half - self.half_w;
        let v = T::from_u32(y).unwrap() + half - self.half_h;
        let dir = self.forward * self.focal_px + self.right * u + self.down * v;
        Ray::new(self.origin, dir.normalized().expect("finite ray"))
    }

    /// Continuous image coordinates and depth along the optical axis; `None` behind the camera.
    pub fn project(&self, p: Vec3<T>) -> Option<(T, T, T)> {
        let d = p - self.origin;
        let depth = d.dot(self.forward);
        if !(depth > T::zero()) {
            return None;
        }
        let u = d.dot(self.right) / depth * self.focal_px + self.half_w;
        let v = d.dot(self.down) / depth * self.focal_px + self.half_h;
        Some((u, v, depth))
    }

    /// Pixel containing the projection of `p`, if inside the image.
    pub fn project_to_pixel(&self, p: Vec3<T>) -> Option<(u32, u32)> {
        let (u, v, _) = self.project(p)?;
        let (x, y) = (u.floor(), v.floor());
        let inside = x >= T::zero()
            && y >= T::zero()
            && x < T::from_u32(self.width).unwrap()
            && y < T::from_u32(self.height).unwrap();
        inside.then(|| (x.to_u32().unwrap(), y.to_u32().unwrap()))
    }
}
