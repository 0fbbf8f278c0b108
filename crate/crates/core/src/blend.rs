//! Multi-view label fusion onto a mesh.
//!
//! Every triangle carries a regular texel grid: with `n` subdivisions per edge the triangle
//! splits into `n²` congruent sub-triangles whose centroids are the texel centres. Each view
//! projects visible texels into its label map and casts a vote weighted by the cosine
//! between surface normal and view direction; fusion takes the weighted majority.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::camera::{CameraPose, PinholeCamera};
use crate::error::{Error, IoContext, Result};
use crate::geometry::{Bvh, PrimId, Ray, Vec3};
use crate::raster::{Image, LabelMap};
use crate::scalar::Real;
use crate::scene::{parse_mesh, ClassId, ClassPalette, TriMesh, NUM_CLASSES};

pub const DEFAULT_TEXELS_PER_METER: f64 = 64.0;
const ATLAS_WIDTH: u32 = 256;

/// Subdivisions along each edge of a face at the given density (at least one).
pub fn face_resolution<T: Real>(tri: &[Vec3<T>; 3], texels_per_meter: T) -> u32 {
    let longest = tri[0].distance(tri[1]).max(tri[1].distance(tri[2])).max(tri[2].distance(tri[0]));
    (longest * texels_per_meter).ceil().to_u32().unwrap_or(1).max(1)
}

/// Barycentric `(b1, b2)` of every texel centre for an `n`-subdivided face.
fn texel_barycentrics(n: u32) -> impl Iterator<Item = (f64, f64)> {
    let nf = n as f64;
    (0..n).flat_map(move |i| {
        (0..n - i).flat_map(move |j| {
            let up = std::iter::once(((i as f64 + 1.0 / 3.0) / nf, (j as f64 + 1.0 / 3.0) / nf));
            let down = (j + 1 < n - i).then(|| ((i as f64 + 2.0 / 3.0) / nf, (j as f64 + 2.0 / 3.0) / nf));
            up.chain(down)
        })
    })
}

/// Mesh plus texel layout and visibility structure.
pub struct BlendTarget<T> {
    pub mesh: TriMesh<T>,
    pub texels_per_meter: T,
    face_resolution: Vec<u32>,
    face_offset: Vec<u32>,
    centers: Vec<Vec3<T>>,
    texel_face: Vec<u32>,
    normals: Vec<Vec3<T>>,
    bvh: Bvh<T>,
}

impl<T: Real> BlendTarget<T> {
    pub fn new(mesh: TriMesh<T>, texels_per_meter: T) -> Result<Self> {
        mesh.validate()?;
        if !(texels_per_meter > T::zero()) {
            return Err(Error::InvalidScene("texel density must be positive".into()));
        }
        let resolution = (0..mesh.faces.len())
            .map(|f| face_resolution(&mesh.triangle(f), texels_per_meter))
            .collect();
        Self::with_resolution(mesh, texels_per_meter, resolution)
    }

    fn with_resolution(mesh: TriMesh<T>, texels_per_meter: T, face_resolution: Vec<u32>) -> Result<Self> {
        if face_resolution.len() != mesh.faces.len() || face_resolution.contains(&0) {
            return Err(Error::InvalidScene("one positive resolution per face required".into()));
        }
        let mut face_offset = Vec::with_capacity(face_resolution.len());
        let mut centers = Vec::new();
        let mut texel_face = Vec::new();
        for (f, &n) in face_resolution.iter().enumerate() {
            face_offset.push(centers.len() as u32);
            let [a, b, c] = mesh.triangle(f);
            for (b1, b2) in texel_barycentrics(n) {
                let (b1, b2) = (T::lit(b1), T::lit(b2));
                centers.push(a + (b - a) * b1 + (c - a) * b2);
                texel_face.push(f as u32);
            }
        }
        let normals = (0..mesh.faces.len()).map(|f| mesh.face_normal(f)).collect();
        let bvh = Bvh::build(
            (0..mesh.faces.len()).map(|f| (PrimId { object: 0, triangle: f as u32 }, mesh.triangle(f))),
        );
        Ok(Self { mesh, texels_per_meter, face_resolution, face_offset, centers, texel_face, normals, bvh })
    }

    pub fn texel_count(&self) -> usize {
        self.centers.len()
    }

    pub fn texel_center(&self, texel: usize) -> Vec3<T> {
        self.centers[texel]
    }

    pub fn texel_face(&self, texel: usize) -> usize {
        self.texel_face[texel] as usize
    }

    pub fn face_texels(&self, face: usize) -> std::ops::Range<usize> {
        let start = self.face_offset[face] as usize;
        let n = self.face_resolution[face] as usize;
        start..start + n * n
    }

    pub fn face_resolutions(&self) -> &[u32] {
        &self.face_resolution
    }

    /// Votes cast by one view. Texels that face away, fall outside the image, or are
    /// hidden behind other faces contribute nothing.
    pub fn project_view(&self, pose: &CameraPose<T>, labels: &LabelMap) -> Result<ViewObservations<T>> {
        let cam = PinholeCamera::new(pose, labels.width(), labels.height())?;
        let votes = (0..self.centers.len())
            .into_par_iter()
            .filter_map(|texel| {
                let p = self.centers[texel];
                let face = self.texel_face[texel];
                let n = self.normals[face as usize];
                let to_cam = cam.origin - p;
                let dist = to_cam.norm();
                let weight = n.dot(to_cam) / dist;
                if !(weight > T::zero()) {
                    return None;
                }
                let (x, y) = cam.project_to_pixel(p)?;
                let dir = to_cam / dist;
                let ray = Ray::new(p + n * T::ray_offset(), dir);
                let skip = Some(PrimId { object: 0, triangle: face });
                if self.bvh.occluded(&ray, T::geometric_epsilon(), dist, skip) {
                    return None;
                }
                Some(Vote { texel: texel as u32, class: labels.get(x, y), weight })
            })
            .collect();
        Ok(ViewObservations { view_id: pose.view_id, votes })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vote<T> {
    pub texel: u32,
    pub class: ClassId,
    pub weight: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViewObservations<T> {
    pub view_id: u32,
    pub votes: Vec<Vote<T>>,
}

/// Per-texel vote histograms and the fused class.
#[derive(Clone, Debug, PartialEq)]
pub struct Fusion<T> {
    pub weights: Vec<[T; NUM_CLASSES]>,
    pub counts: Vec<[u32; NUM_CLASSES]>,
    pub fused: Vec<ClassId>,
}

impl<T: Real> Fusion<T> {
    pub fn observation_count(&self, texel: usize) -> u32 {
        self.counts[texel].iter().sum()
    }
}

/// Weighted majority per texel. Ties on weight go to the class with more observations,
/// then to the lower class id; unobserved texels are background.
pub fn fuse_class<T: Real>(weights: &[T; NUM_CLASSES], counts: &[u32; NUM_CLASSES]) -> ClassId {
    if counts.iter().all(|&c| c == 0) {
        return ClassId::Background;
    }
    let mut best = 0usize;
    for c in 1..NUM_CLASSES {
        let better = weights[c] > weights[best] || (weights[c] == weights[best] && counts[c] > counts[best]);
        if better {
            best = c;
        }
    }
    ClassId::ALL[best]
}

/// Accumulates observations over any number of views. Zero-weight votes are ignored.
pub fn fuse<T: Real>(texel_count: usize, views: &[ViewObservations<T>]) -> Fusion<T> {
    let mut weights = vec![[T::zero(); NUM_CLASSES]; texel_count];
    let mut counts = vec![[0u32; NUM_CLASSES]; texel_count];
    for view in views {
        for v in &view.votes {
            if !(v.weight > T::zero()) {
                continue;
            }
            let t = v.texel as usize;
            let c = v.class.index();
            weights[t][c] = weights[t][c] + v.weight;
            counts[t][c] += 1;
        }
    }
    let fused = weights.iter().zip(&counts).map(|(w, c)| fuse_class(w, c)).collect();
    Fusion { weights, counts, fused }
}

/// Mesh whose texels carry fused class labels.
pub struct SemanticMesh<T> {
    pub target: BlendTarget<T>,
    pub fusion: Fusion<T>,
}

impl<T: Real> SemanticMesh<T> {
    pub fn fused(&self) -> &[ClassId] {
        &self.fusion.fused
    }
}

/// Projects each `(pose, labels)` view and fuses the votes.
pub fn blend_views<'a, T: Real>(
    target: BlendTarget<T>,
    views: impl IntoIterator<Item = (&'a CameraPose<T>, &'a LabelMap)>,
) -> Result<SemanticMesh<T>> {
    let observations = views
        .into_iter()
        .map(|(pose, labels)| target.project_view(pose, labels))
        .collect::<Result<Vec<_>>>()?;
    if observations.is_empty() {
        return Err(Error::EmptyRig);
    }
    let fusion = fuse(target.texel_count(), &observations);
    Ok(SemanticMesh { target, fusion })
}

/// Writes `<path>` (mesh + per-face texel resolution) and a sibling PNG texture holding
/// the fused classes as palette colors, texel `k` at `(k mod W, k div W)`.
pub fn export_semantic_mesh<T: Real>(sm: &SemanticMesh<T>, palette: &ClassPalette, path: &Path) -> Result<PathBuf> {
    let texture_path = path.with_extension("png");
    let texture_name = texture_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| Error::InvalidScene("export path has no file name".into()))?;
    let n = sm.fusion.fused.len() as u32;
    let w = ATLAS_WIDTH.min(n.max(1));
    let h = n.div_ceil(w).max(1);
    let mut tex = Image::new(w, h, palette.color(ClassId::Background));
    for (k, c) in sm.fusion.fused.iter().enumerate() {
        tex.set(k as u32 % w, k as u32 / w, palette.color(*c));
    }
    tex.save_png(&texture_path)?;

    let mesh = &sm.target.mesh;
    let mut out = String::from("semantic-mesh 1\n");
    let _ = writeln!(out, "texels_per_meter {:?}", sm.target.texels_per_meter.as_f64());
    let _ = writeln!(out, "texture {texture_name}");
    let _ = writeln!(out, "atlas_width {w}");
    for v in &mesh.vertices {
        let [x, y, z] = v.to_f64();
        let _ = writeln!(out, "v {x:?} {y:?} {z:?}");
    }
    for (f, [a, b, c]) in mesh.faces.iter().enumerate() {
        let _ = writeln!(out, "f {} {} {} {}", a + 1, b + 1, c + 1, sm.target.face_resolution[f]);
    }
    fs::write(path, out).at(path)?;
    Ok(texture_path)
}

/// A semantic mesh as read back from disk: geometry, texel layout and fused classes.
pub struct ImportedSemanticMesh<T> {
    pub target: BlendTarget<T>,
    pub fused: Vec<ClassId>,
}

pub fn import_semantic_mesh<T: Real>(path: &Path, palette: &ClassPalette) -> Result<ImportedSemanticMesh<T>> {
    let text = fs::read_to_string(path).at(path)?;
    let err = |line: usize, m: &str| Error::Parse { path: path.to_path_buf(), line, message: m.to_string() };
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, l)| l.trim()) != Some("semantic-mesh 1") {
        return Err(err(1, "missing \"semantic-mesh 1\" header"));
    }
    let mut tpm = None;
    let mut texture = None;
    let mut atlas_width = None;
    let mut mesh_text = String::new();
    let mut resolutions = Vec::new();
    for (i, l) in lines {
        let mut toks = l.split_whitespace();
        match toks.next() {
            Some("texels_per_meter") => tpm = toks.next().and_then(|t| t.parse::<f64>().ok()),
            Some("texture") => texture = toks.next().map(str::to_string),
            Some("atlas_width") => atlas_width = toks.next().and_then(|t| t.parse::<u32>().ok()),
            Some("f") => {
                let parts: Vec<&str> = toks.collect();
                if parts.len() != 4 {
                    return Err(err(i + 1, "face record needs three indices and a resolution"));
                }
                resolutions.push(parts[3].parse::<u32>().map_err(|_| err(i + 1, "bad resolution"))?);
                let _ = writeln!(mesh_text, "f {} {} {}", parts[0], parts[1], parts[2]);
            }
            _ => {
                mesh_text.push_str(l);
                mesh_text.push('\n');
            }
        }
    }
    let tpm = tpm.ok_or_else(|| err(0, "missing texels_per_meter"))?;
    let texture = texture.ok_or_else(|| err(0, "missing texture"))?;
    let w = atlas_width.ok_or_else(|| err(0, "missing atlas_width"))?;
    let mesh: TriMesh<T> = parse_mesh(&mesh_text, path)?;
    let target = BlendTarget::with_resolution(mesh, T::lit(tpm), resolutions)?;
    let texture_path = path.parent().unwrap_or(Path::new(".")).join(texture);
    let tex = Image::load(&texture_path)?;
    if tex.width() != w {
        return Err(Error::InvalidImage(format!("texture width {} does not match atlas width {w}", tex.width())));
    }
    let n = target.texel_count() as u32;
    if (tex.width() * tex.height()) < n {
        return Err(Error::InvalidImage("texture smaller than texel count".into()));
    }
    let fused = (0..n)
        .map(|k| {
            let rgb = tex.get(k % w, k / w);
            palette
                .decode(rgb)
                .ok_or_else(|| Error::InvalidImage(format!("off-palette texel {k}: {rgb:?}")))
        })
        .collect::<Result<_>>()?;
    Ok(ImportedSemanticMesh { target, fused })
}

/// Outcome of the synthetic voting experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlendingTrial {
    pub texels: usize,
    pub views: usize,
    pub corruption: f64,
    pub single_view_error: f64,
    pub fused_error: f64,
}

/// Equal-weight votes from `views` views per texel; each view independently replaces the
/// true class with a uniformly drawn wrong class with probability `corruption`.
/// Errors are measured against the true class per texel.
pub fn simulate_blending(texels: usize, views: usize, corruption: f64, seed: u64) -> BlendingTrial {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let truth: Vec<ClassId> = (0..texels).map(|_| ClassId::ALL[rng.random_range(0..NUM_CLASSES)]).collect();
    let observations: Vec<ViewObservations<f64>> = (0..views)
        .map(|v| ViewObservations {
            view_id: v as u32,
            votes: truth
                .iter()
                .enumerate()
                .map(|(t, &c)| {
                    let class = if rng.random_bool(corruption) {
                        let k = rng.random_range(0..NUM_CLASSES - 1);
                        ClassId::ALL[if k >= c.index() { k + 1 } else { k }]
                    } else {
                        c
                    };
                    Vote { texel: t as u32, class, weight: 1.0 }
                })
                .collect(),
        })
        .collect();
    let single_wrong = observations[0].votes.iter().zip(&truth).filter(|(v, t)| v.class != **t).count();
    let fusion = fuse(texels, &observations);
    let fused_wrong = fusion.fused.iter().zip(&truth).filter(|(f, t)| f != t).count();
    BlendingTrial {
        texels,
        views,
        corruption,
        single_view_error: single_wrong as f64 / texels as f64,
        fused_error: fused_wrong as f64 / texels as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wall(y: f64) -> TriMesh<f64> {
        // Quad in the plane y = const facing +y.
        TriMesh::quad([[-2.0, y, -2.0], [-2.0, y, 2.0], [2.0, y, 2.0], [2.0, y, -2.0]].map(Vec3::from_f64)).unwrap()
    }

    #[test]
    fn texel_grid_tiles_the_face() {
        for n in 1..6u32 {
            let b: Vec<_> = texel_barycentrics(n).collect();
            assert_eq!(b.len(), (n * n) as usize);
            assert!(b.iter().all(|&(u, v)| u > 0.0 && v > 0.0 && u + v < 1.0));
        }
        let tri = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.5, 0.5, 0.0)];
        assert_eq!(face_resolution(&tri, 64.0), 64);
        assert_eq!(face_resolution(&tri, 0.1), 1);
    }

    #[test]
    fn head_on_texel_gets_unit_weight() {
        let mesh: TriMesh<f64> = TriMesh::quad([[-1.0, 0.0, -1.0], [-1.0, 0.0, 1.0], [1.0, 0.0, 1.0], [1.0, 0.0, -1.0]].map(Vec3::from_f64)).unwrap();
        let target = BlendTarget::new(mesh, 0.1).unwrap();
        assert_eq!(target.texel_count(), 2);
        let c = target.texel_center(0);
        let pose = CameraPose::new(c + Vec3::new(0.0, 5.0, 0.0), c, 35.0, 0).unwrap();
        let labels = LabelMap::new(16, 16, ClassId::Roof);
        let obs = target.project_view(&pose, &labels).unwrap();
        let v = obs.votes.iter().find(|v| v.texel == 0).unwrap();
        assert_eq!(v.class, ClassId::Roof);
        assert!((v.weight - 1.0f64).abs() < 1e-12);
    }

    #[test]
    fn occluded_and_backfacing_texels_get_no_votes() {
        let mut mesh = wall(0.0);
        let front = wall(1.0);
        let off = mesh.vertices.len() as u32;
        mesh.vertices.extend(front.vertices);
        mesh.faces.extend(front.faces.iter().map(|f| f.map(|i| i + off)));
        let target = BlendTarget::new(mesh, 1.0).unwrap();
        let pose = CameraPose::new(Vec3::new(0.0, 10.0, 0.0), Vec3::zero(), 20.0, 0).unwrap();
        let labels = LabelMap::new(64, 64, ClassId::Wall);
        let obs = target.project_view(&pose, &labels).unwrap();
        let back_face_texels: Vec<usize> = (0..2).flat_map(|f| target.face_texels(f)).collect();
        assert!(obs.votes.iter().all(|v| !back_face_texels.contains(&(v.texel as usize))));
        assert!(!obs.votes.is_empty());
        // From behind, the +y-facing surfaces face away.
        let behind = CameraPose::new(Vec3::new(0.0, -10.0, 0.0), Vec3::zero(), 20.0, 1).unwrap();
        assert!(target.project_view(&behind, &labels).unwrap().votes.is_empty());
    }

    #[test]
    fn grazing_view_records_nothing() {
        let target = BlendTarget::new(wall(0.0), 1.0).unwrap();
        // Camera in the wall's plane: cos θ = 0 for every texel.
        let pose = CameraPose::new(Vec3::new(-10.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 0.0), 20.0, 0).unwrap();
        let obs = target.project_view(&pose, &LabelMap::new(32, 32, ClassId::Door)).unwrap();
        assert!(obs.votes.is_empty());
    }

    fn obs(votes: &[(u32, ClassId, f64)]) -> ViewObservations<f64> {
        ViewObservations { view_id: 0, votes: votes.iter().map(|&(texel, class, weight)| Vote { texel, class, weight }).collect() }
    }

    #[test]
    fn fusion_rules() {
        use ClassId::*;
        let unanimous = fuse(1, &[obs(&[(0, Roof, 0.3)]), obs(&[(0, Roof, 0.9)]), obs(&[(0, Roof, 0.1)])]);
        assert_eq!(unanimous.fused, [Roof]);
        assert_eq!(unanimous.observation_count(0), 3);
        let tie = fuse(1, &[obs(&[(0, Door, 0.5)]), obs(&[(0, Window, 0.5)])]);
        assert_eq!(tie.fused, [Window]);
        // Equal weight, more observations wins.
        let counted = fuse(1, &[obs(&[(0, Window, 1.0)]), obs(&[(0, Door, 0.5)]), obs(&[(0, Door, 0.5)])]);
        assert_eq!(counted.fused, [Door]);
        let empty = fuse(2, &[obs(&[(1, Wall, 0.0)])]);
        assert_eq!(empty.fused, [Background, Background]);
    }

    #[test]
    fn export_import_round_trip() {
        let palette = crate::scene::default_palette();
        let target = BlendTarget::new(wall(0.0), 2.0).unwrap();
        let n = target.texel_count();
        let votes: Vec<(u32, ClassId, f64)> = (0..n).map(|t| (t as u32, ClassId::ALL[t % 6], 1.0)).collect();
        let fusion = fuse(n, &[obs(&votes)]);
        let sm = SemanticMesh { target, fusion };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("house.smesh");
        export_semantic_mesh(&sm, &palette, &path).unwrap();
        let back: ImportedSemanticMesh<f64> = import_semantic_mesh(&path, &palette).unwrap();
        assert_eq!(back.fused, sm.fusion.fused);
        assert_eq!(back.target.face_resolutions(), sm.target.face_resolutions());
        assert_eq!(back.target.mesh, sm.target.mesh);
    }

    #[test]
    fn unanimous_roof_texture_is_green() {
        let palette = crate::scene::default_palette();
        let target = BlendTarget::new(wall(0.0), 1.5).unwrap();
        let n = target.texel_count();
        let votes: Vec<_> = (0..n).map(|t| (t as u32, ClassId::Roof, 0.7)).collect();
        let sm = SemanticMesh { fusion: fuse(n, &[obs(&votes)]), target };
        let dir = tempfile::tempdir().unwrap();
        let tex = export_semantic_mesh(&sm, &palette, &dir.path().join("r.smesh")).unwrap();
        let img = Image::load(&tex).unwrap();
        assert!(img.pixels()[..n].iter().all(|p| *p == [0, 255, 0]));

        let empty = SemanticMesh { fusion: fuse(n, &[]), target: BlendTarget::new(wall(0.0), 1.5).unwrap() };
        let tex = export_semantic_mesh(&empty, &palette, &dir.path().join("e.smesh")).unwrap();
        assert!(Image::load(&tex).unwrap().pixels().iter().all(|p| *p == [0, 0, 0]));
    }
}
