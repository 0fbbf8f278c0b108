//! Ray-cast rendering of pixel-aligned photoreal and label images.
//!
//! One primary ray per pixel centre. The photoreal pass shades Lambertian surfaces with a
//! hard shadow ray toward the sun; the label pass writes flat palette colors with no
//! lighting, filtering or anti-aliasing, so its pixels decode exactly to the class buffer.

use std::sync::Arc;

use rayon::prelude::*;

use crate::camera::{CameraPose, PinholeCamera};
use crate::error::{Error, Result};
use crate::geometry::{Bvh, Hit, Vec3};
use crate::raster::{IdBuffer, Image};
use crate::scalar::Real;
use crate::scene::{ClassId, Rgb, SceneState, SemanticScene};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderOptions {
    /// Apply the sRGB transfer curve to the photoreal pass.
    pub srgb: bool,
    /// Photoreal color where no surface is hit.
    pub sky: Rgb,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { srgb: false, sky: [135, 170, 205] }
    }
}

/// A photoreal render and the label render of the same view.
#[derive(Clone, Debug)]
pub struct RenderPair {
    pub photoreal: Image,
    pub label: Arc<Image>,
    pub id_buffer: Arc<IdBuffer>,
    pub view_id: u32,
    pub state_id: u32,
}

impl RenderPair {
    pub fn validate(&self) -> Result<()> {
        let d = self.photoreal.dimensions();
        if self.label.dimensions() != d || self.id_buffer.dimensions() != d {
            return Err(Error::DimensionMismatch(format!(
                "pair s{}_v{}: photoreal {:?}, label {:?}, ids {:?}",
                self.state_id,
                self.view_id,
                d,
                self.label.dimensions(),
                self.id_buffer.dimensions()
            )));
        }
        Ok(())
    }
}

/// Clamps to [0,1] and rounds half up onto 0..=255.
#[inline]
pub fn to_u8<T: Real>(v: T) -> u8 {
    let c = v.max(T::zero()).min(T::one());
    (c * T::lit(255.0) + T::lit(0.5)).floor().to_u8().unwrap_or(255)
}

#[inline]
fn srgb_encode<T: Real>(c: T) -> T {
    if c <= T::lit(0.0031308) {
        c * T::lit(12.92)
    } else {
        T::lit(1.055) * c.powf(T::lit(1.0 / 2.4)) - T::lit(0.055)
    }
}

/// Lambert term with ambient: `clamp(ambient·albedo + intensity·max(0, n·l)·albedo·visibility)`.
#[inline]
pub fn shade<T: Real>(albedo: Vec3<T>, n_dot_l: T, visible: bool, state: &SceneState<T>) -> Vec3<T> {
    let direct = if visible { state.sun_intensity * n_dot_l.max(T::zero()) } else { T::zero() };
    let k = state.ambient + direct;
    let clamp = |c: T| c.max(T::zero()).min(T::one());
    let v = albedo * k;
    Vec3::new(clamp(v.x), clamp(v.y), clamp(v.z))
}

/// Scene plus its acceleration structure. Immutable; share freely between workers.
pub struct Renderer<'a, T> {
    scene: &'a SemanticScene<T>,
    bvh: Bvh<T>,
    normals: Vec<Vec<Vec3<T>>>,
    pub options: RenderOptions,
}

impl<'a, T: Real> Renderer<'a, T> {
    pub fn new(scene: &'a SemanticScene<T>) -> Self {
        let bvh = Bvh::build(scene.triangles());
        let normals = scene
            .objects
            .iter()
            .map(|o| (0..o.mesh.faces.len()).map(|f| o.mesh.face_normal(f)).collect())
            .collect();
        Self { scene, bvh, normals, options: RenderOptions::default() }
    }

    pub fn with_options(mut self, options: RenderOptions) -> Self {
        self.options = options;
        self
    }

    pub fn scene(&self) -> &SemanticScene<T> {
        self.scene
    }

    pub fn bvh(&self) -> &Bvh<T> {
        &self.bvh
    }

    pub fn face_normal(&self, hit: &Hit<T>) -> Vec3<T> {
        self.normals[hit.prim.object as usize][hit.prim.triangle as usize]
    }

    /// Class of the nearest surface along the pixel's primary ray.
    pub fn trace_class(&self, cam: &PinholeCamera<T>, x: u32, y: u32) -> ClassId {
        let ray = cam.ray(x, y);
        match self.bvh.nearest(&ray, T::geometric_epsilon(), T::infinity()) {
            Some(hit) => self.scene.objects[hit.prim.object as usize].class,
            None => ClassId::Background,
        }
    }

    fn trace_photoreal(&self, cam: &PinholeCamera<T>, state: &SceneState<T>, x: u32, y: u32) -> Rgb {
        let ray = cam.ray(x, y);
        let Some(hit) = self.bvh.nearest(&ray, T::geometric_epsilon(), T::infinity()) else {
            return self.options.sky;
        };
        let p = ray.at(hit.t);
        let mut n = self.face_normal(&hit);
        if n.dot(ray.dir) > T::zero() {
            n = -n;
        }
        let to_sun = -state.sun_direction;
        let n_dot_l = n.dot(to_sun).max(T::zero());
        let visible = n_dot_l > T::zero()
            && state.sun_intensity > T::zero()
            && !self.bvh.occluded(
                &crate::geometry::Ray::new(p + n * T::ray_offset(), to_sun),
                T::geometric_epsilon(),
                T::infinity(),
                Some(hit.prim),
            );
        let object = &self.scene.objects[hit.prim.object as usize];
        let albedo = object.material.albedo_at(p, self.scene.seed);
        let c = shade(albedo, n_dot_l, visible, state);
        let encode = |v: T| to_u8(if self.options.srgb { srgb_encode(v) } else { v });
        [encode(c.x), encode(c.y), encode(c.z)]
    }

    pub fn render_photoreal(&self, pose: &CameraPose<T>, state: &SceneState<T>, width: u32, height: u32) -> Result<Image> {
        let cam = PinholeCamera::new(pose, width, height)?;
        let pixels: Vec<Rgb> = (0..height)
            .into_par_iter()
            .flat_map_iter(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| self.trace_photoreal(&cam, state, x, y))
            .collect();
        Image::from_pixels(width, height, pixels)
    }

    pub fn render_label(&self, pose: &CameraPose<T>, width: u32, height: u32) -> Result<(Image, IdBuffer)> {
        let cam = PinholeCamera::new(pose, width, height)?;
        let classes: Vec<ClassId> = (0..height)
            .into_par_iter()
            .flat_map_iter(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| self.trace_class(&cam, x, y))
            .collect();
        let ids = IdBuffer::from_classes(width, height, classes)?;
        Ok((ids.to_image(&self.scene.palette), ids))
    }

    /// Renders every pose once as a label image and once per state as a photoreal image,
    /// handing pairs to `sink` pose-major, then in state order. Output content does not
    /// depend on the worker count.
    pub fn render_batch<F>(
        &self,
        poses: &[CameraPose<T>],
        states: &[SceneState<T>],
        width: u32,
        height: u32,
        mut sink: F,
    ) -> Result<usize>
    where
        F: FnMut(RenderPair) -> Result<()>,
    {
        if poses.is_empty() {
            return Err(Error::EmptyRig);
        }
        if states.is_empty() {
            return Err(Error::NoStates);
        }
        let mut emitted = 0;
        for pose in poses {
            let (label, ids) = self.render_label(pose, width, height)?;
            let (label, ids) = (Arc::new(label), Arc::new(ids));
            let photos: Vec<Image> = states
                .par_iter()
                .map(|s| self.render_photoreal(pose, s, width, height))
                .collect::<Result<_>>()?;
            for (photo, state) in photos.into_iter().zip(states) {
                sink(RenderPair {
                    photoreal: photo,
                    label: Arc::clone(&label),
                    id_buffer: Arc::clone(&ids),
                    view_id: pose.view_id,
                    state_id: state.id,
                })?;
                emitted += 1;
            }
        }
        Ok(emitted)
    }
}

pub fn render_photoreal<T: Real>(
    scene: &SemanticScene<T>,
    pose: &CameraPose<T>,
    state: &SceneState<T>,
    width: u32,
    height: u32,
) -> Result<Image> {
    Renderer::new(scene).render_photoreal(pose, state, width, height)
}

pub fn render_label<T: Real>(scene: &SemanticScene<T>, pose: &CameraPose<T>, width: u32, height: u32) -> Result<(Image, IdBuffer)> {
    Renderer::new(scene).render_label(pose, width, height)
}
