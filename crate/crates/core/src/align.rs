//! Similarity registration of the semantic model onto a reference model from three
//! picked point pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mat3, Vec3};
use crate::scalar::Real;
use crate::scene::SemanticScene;

/// Minimum triangle area (m²) for a usable correspondence triple.
pub const MIN_TRIPLE_AREA: f64 = 1e-9;

/// Three source points and the three points they should land on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correspondences<T> {
    pub src: [Vec3<T>; 3],
    pub dst: [Vec3<T>; 3],
}

/// `p ↦ scale · rotation · p + translation`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform<T> {
    pub rotation: Mat3<T>,
    pub translation: Vec3<T>,
    pub scale: T,
}

impl<T: Real> SimilarityTransform<T> {
    pub fn identity() -> Self {
        Self { rotation: Mat3::identity(), translation: Vec3::zero(), scale: T::one() }
    }

    pub fn new(rotation: Mat3<T>, translation: Vec3<T>, scale: T) -> Result<Self> {
        let tol = T::lit(1e-9);
        if !(scale > T::zero()) {
            return Err(Error::DegenerateConfiguration("scale must be positive".into()));
        }
        if rotation.orthonormality_error() > tol || (rotation.determinant() - T::one()).abs() > tol {
            return Err(Error::DegenerateConfiguration("rotation is not a proper rotation".into()));
        }
        Ok(Self { rotation, translation, scale })
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == Mat3::identity() && self.translation == Vec3::zero() && self.scale == T::one()
    }

    #[inline]
    pub fn apply(&self, p: Vec3<T>) -> Vec3<T> {
        self.rotation.mul_vec(p) * self.scale + self.translation
    }

    /// Largest ‖T(srcᵢ) − dstᵢ‖ over the pairs.
    pub fn max_residual(&self, src: &[Vec3<T>], dst: &[Vec3<T>]) -> T {
        src.iter()
            .zip(dst)
            .map(|(s, d)| self.apply(*s).distance(*d))
            .fold(T::zero(), T::max)
    }

    /// Root-mean-square residual over the pairs.
    pub fn rms_residual(&self, src: &[Vec3<T>], dst: &[Vec3<T>]) -> T {
        let n = src.len().min(dst.len());
        if n == 0 {
            return T::zero();
        }
        let sum = src
            .iter()
            .zip(dst)
            .fold(T::zero(), |acc, (s, d)| acc + (self.apply(*s) - *d).norm_squared());
        (sum / T::from_usize_lossy(n)).sqrt()
    }
}

fn frame<T: Real>(p: &[Vec3<T>; 3], which: &str) -> Result<Mat3<T>> {
    let e1 = p[1] - p[0];
    let e2 = p[2] - p[0];
    let normal = e1.cross(e2);
    let area = normal.norm() * T::lit(0.5);
    if !(area.as_f64() > MIN_TRIPLE_AREA) {
        return Err(Error::DegenerateConfiguration(format!(
            "{which} points are collinear or coincident (area {area})"
        )));
    }
    let x = e1.normalized().expect("non-zero edge");
    let z = normal.normalized().expect("non-zero normal");
    let y = z.cross(x);
    Ok(Mat3::from_columns(x, y, z))
}

/// Closed-form similarity from three correspondences.
///
/// Rotation aligns orthonormal frames built from the first edge and the triangle normal;
/// scale is the least-squares ratio of matching edge lengths; translation maps the source
/// centroid onto the destination centroid. Exact (to rounding) for similar triangles.
/// Mirrored triples still yield a proper rotation, with a non-zero residual.
pub fn align_from_three_points<T: Real>(src: &[Vec3<T>; 3], dst: &[Vec3<T>; 3]) -> Result<SimilarityTransform<T>> {
    let fs = frame(src, "source")?;
    let fd = frame(dst, "destination")?;
    let rotation = fd.mul_mat(&fs.transpose());

    let mut num = T::zero();
    let mut den = T::zero();
    for (i, j) in [(0, 1), (1, 2), (2, 0)] {
        let ls = src[i].distance(src[j]);
        let ld = dst[i].distance(dst[j]);
        num = num + ls * ld;
        den = den + ls * ls;
    }
    let scale = num / den;

    let third = T::lit(3.0);
    let cs = (src[0] + src[1] + src[2]) / third;
    let cd = (dst[0] + dst[1] + dst[2]) / third;
    let translation = cd - rotation.mul_vec(cs) * scale;
    Ok(SimilarityTransform { rotation, translation, scale })
}

pub fn align_correspondences<T: Real>(c: &Correspondences<T>) -> Result<SimilarityTransform<T>> {
    align_from_three_points(&c.src, &c.dst)
}

/// Maps every vertex through `t`; classes, materials and states are untouched.
/// Picked source points move with the geometry.
pub fn apply_transform<T: Real>(t: &SimilarityTransform<T>, scene: &SemanticScene<T>) -> SemanticScene<T> {
    let mut out = scene.clone();
    if t.is_identity() {
        return out;
    }
    for obj in &mut out.objects {
        for v in &mut obj.mesh.vertices {
            *v = t.apply(*v);
        }
    }
    if let Some(c) = &mut out.correspondences {
        for p in &mut c.src {
            *p = t.apply(*p);
        }
    }
    out
}
