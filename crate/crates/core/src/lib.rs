//! Synthetic paired training data for building-object segmentation.
//!
//! A semantically tagged scene is rendered from an orbit of cameras twice per view: a
//! shaded "photoreal" pass for every lighting state and a flat palette-colored label pass.
//! Pairs are packed into side-by-side composites, a baseline per-pixel classifier closes
//! the train/predict loop, predictions are scored with per-class confusion metrics, and
//! per-view predictions can be fused onto the mesh by weighted voting.
//!
//! The geometric core is generic over [`Real`] (f32 or f64); the aliases below fix it to
//! f64, which is what the pipeline and CLI use.

pub mod align;
pub mod baseline;
pub mod blend;
pub mod camera;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fixture;
pub mod geometry;
pub mod pipeline;
pub mod raster;
pub mod render;
pub mod scalar;
pub mod scene;

pub use error::{Error, Result};
pub use raster::{IdBuffer, Image, LabelMap};
pub use scalar::{Ratio, Real};
pub use scene::{default_palette, ClassId, ClassPalette, Rgb, NUM_CLASSES};

pub type Vec3f = geometry::Vec3<f64>;
pub type Mat3f = geometry::Mat3<f64>;
pub type Scene = scene::SemanticScene<f64>;
pub type SceneObject = scene::SemanticObject<f64>;
pub type State = scene::SceneState<f64>;
pub type Pose = camera::CameraPose<f64>;
pub type Orbit = camera::OrbitConfig<f64>;
pub type Similarity = align::SimilarityTransform<f64>;
