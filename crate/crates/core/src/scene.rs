//! Semantic scene: tagged meshes, materials, lighting states and the class palette.
//!
//! Scenes are loaded from a line-oriented manifest; the grammar is documented in
//! `docs/formats.md`. Meshes live in separate ASCII files (`v`/`f` records, 1-based
//! indices) referenced relative to the manifest.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::align::Correspondences;
use crate::error::{Error, IoContext, Result};
use crate::geometry::{PrimId, Vec3};
use crate::scalar::Real;

/// Building-object class. Ordinals are fixed and total.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum ClassId {
    Background = 0,
    Wall = 1,
    Window = 2,
    Door = 3,
    Column = 4,
    Roof = 5,
}

pub const NUM_CLASSES: usize = 6;

impl ClassId {
    pub const ALL: [ClassId; NUM_CLASSES] = [
        ClassId::Background,
        ClassId::Wall,
        ClassId::Window,
        ClassId::Door,
        ClassId::Column,
        ClassId::Roof,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassId::Background => "background",
            ClassId::Wall => "wall",
            ClassId::Window => "window",
            ClassId::Door => "door",
            ClassId::Column => "column",
            ClassId::Roof => "roof",
        }
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownClass(s.to_string()))
    }
}

pub type Rgb = [u8; 3];

/// Class ↔ RGB mapping. All six classes present and pairwise distinct.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPalette {
    colors: [Rgb; NUM_CLASSES],
}

impl ClassPalette {
    pub fn new(colors: [Rgb; NUM_CLASSES]) -> Result<Self> {
        for i in 0..NUM_CLASSES {
            for j in i + 1..NUM_CLASSES {
                if colors[i] == colors[j] {
                    return Err(Error::InvalidPalette(format!(
                        "{} and {} share color {:?}",
                        ClassId::ALL[i],
                        ClassId::ALL[j],
                        colors[i]
                    )));
                }
            }
        }
        Ok(Self { colors })
    }

    #[inline]
    pub fn color(&self, class: ClassId) -> Rgb {
        self.colors[class.index()]
    }

    pub fn colors(&self) -> &[Rgb; NUM_CLASSES] {
        &self.colors
    }

    /// Exact reverse lookup; `None` for off-palette colors.
    pub fn decode(&self, rgb: Rgb) -> Option<ClassId> {
        self.colors.iter().position(|c| *c == rgb).and_then(ClassId::from_index)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClassId, Rgb)> + '_ {
        ClassId::ALL.into_iter().map(|c| (c, self.color(c)))
    }
}

impl Default for ClassPalette {
    fn default() -> Self {
        default_palette()
    }
}

/// Background black, wall blue, window cyan, door purple, column red, roof green.
pub fn default_palette() -> ClassPalette {
    ClassPalette {
        colors: [
            [0, 0, 0],
            [0, 0, 255],
            [0, 255, 255],
            [128, 0, 128],
            [255, 0, 0],
            [0, 255, 0],
        ],
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Texture<T> {
    None,
    Checker { scale: T },
    Noise { scale: T },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material<T> {
    pub albedo: Vec3<T>,
    pub texture: Texture<T>,
}

impl<T: Real> Material<T> {
    pub fn new(albedo: Vec3<T>, texture: Texture<T>) -> Result<Self> {
        let ok = |c: T| c >= T::zero() && c <= T::one();
        if !(ok(albedo.x) && ok(albedo.y) && ok(albedo.z)) {
            return Err(Error::InvalidScene(format!("albedo {albedo:?} outside [0,1]")));
        }
        match texture {
            Texture::Checker { scale } | Texture::Noise { scale } if !(scale > T::zero()) => {
                return Err(Error::InvalidScene("texture scale must be positive".into()))
            }
            _ => {}
        }
        Ok(Self { albedo, texture })
    }

    pub fn flat(albedo: Vec3<T>) -> Self {
        Self { albedo, texture: Texture::None }
    }

    /// Albedo at world point `p`, modulated by the procedural texture. Stays within [0,1].
    pub fn albedo_at(&self, p: Vec3<T>, seed: u64) -> Vec3<T> {
        match self.texture {
            Texture::None => self.albedo,
            Texture::Checker { scale } => {
                let cell = |x: T| (x / scale).floor().to_i64().unwrap_or(0);
                let parity = (cell(p.x) + cell(p.y) + cell(p.z)).rem_euclid(2);
                let factor = if parity == 0 { T::one() } else { T::lit(0.7) };
                self.albedo * factor
            }
            Texture::Noise { scale } => {
                let n = value_noise(p / scale, seed);
                self.albedo * (T::lit(0.7) + T::lit(0.3) * n)
            }
        }
    }
}

fn hash3(seed: u64, x: i64, y: i64, z: i64) -> u64 {
    // splitmix64 finaliser over a mixed lattice key
    let mut h = seed
        ^ (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ (z as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
    h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^ (h >> 31)
}

/// Trilinear value noise in [0,1].
fn value_noise<T: Real>(p: Vec3<T>, seed: u64) -> T {
    let (fx, fy, fz) = (p.x.floor(), p.y.floor(), p.z.floor());
    let (ix, iy, iz) = (
        fx.to_i64().unwrap_or(0),
        fy.to_i64().unwrap_or(0),
        fz.to_i64().unwrap_or(0),
    );
    let (tx, ty, tz) = (p.x - fx, p.y - fy, p.z - fz);
    let lattice = |dx: i64, dy: i64, dz: i64| {
        let h = hash3(seed, ix + dx, iy + dy, iz + dz);
        T::lit((h >> 11) as f64 / (1u64 << 53) as f64)
    };
    let lerp = |a: T, b: T, t: T| a + (b - a) * t;
    let x00 = lerp(lattice(0, 0, 0), lattice(1, 0, 0), tx);
    let x10 = lerp(lattice(0, 1, 0), lattice(1, 1, 0), tx);
    let x01 = lerp(lattice(0, 0, 1), lattice(1, 0, 1), tx);
    let x11 = lerp(lattice(0, 1, 1), lattice(1, 1, 1), tx);
    lerp(lerp(x00, x10, ty), lerp(x01, x11, ty), tz)
}

/// Indexed triangle mesh, vertices in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriMesh<T> {
    pub vertices: Vec<Vec3<T>>,
    pub faces: Vec<[u32; 3]>,
}

/// Triangles with area at or below this (m²) are rejected as degenerate.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

impl<T: Real> TriMesh<T> {
    pub fn new(vertices: Vec<Vec3<T>>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let mesh = Self { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        if self.faces.is_empty() {
            return Err(Error::DegenerateGeometry("mesh has no triangles".into()));
        }
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v as usize >= self.vertices.len()) {
                return Err(Error::DegenerateGeometry(format!(
                    "face {i} references vertex out of range ({} vertices)",
                    self.vertices.len()
                )));
            }
            let area = self.triangle_area(i);
            if !(area.as_f64() > MIN_TRIANGLE_AREA) {
                return Err(Error::DegenerateGeometry(format!("face {i} has zero area")));
            }
        }
        if self.vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateGeometry("non-finite vertex".into()));
        }
        Ok(())
    }

    /// Axis-aligned quad from four corners in order, split along the 0–2 diagonal.
    pub fn quad(corners: [Vec3<T>; 4]) -> Result<Self> {
        Self::new(corners.to_vec(), vec![[0, 1, 2], [0, 2, 3]])
    }

    /// Closed box with outward-facing triangles.
    pub fn cuboid(min: Vec3<T>, max: Vec3<T>) -> Result<Self> {
        let v = |x: bool, y: bool, z: bool| {
            Vec3::new(
                if x { max.x } else { min.x },
                if y { max.y } else { min.y },
                if z { max.z } else { min.z },
            )
        };
        let vertices = vec![
            v(false, false, false),
            v(true, false, false),
            v(true, true, false),
            v(false, true, false),
            v(false, false, true),
            v(true, false, true),
            v(true, true, true),
            v(false, true, true),
        ];
        let faces = vec![
            [0, 2, 1], [0, 3, 2], // -z
            [4, 5, 6], [4, 6, 7], // +z
            [0, 1, 5], [0, 5, 4], // -y
            [2, 3, 7], [2, 7, 6], // +y
            [1, 2, 6], [1, 6, 5], // +x
            [0, 4, 7], [0, 7, 3], // -x
        ];
        Self::new(vertices, faces)
    }

    pub fn triangle(&self, face: usize) -> [Vec3<T>; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn triangle_area(&self, face: usize) -> T {
        let [a, b, c] = self.triangle(face);
        (b - a).cross(c - a).norm() * T::lit(0.5)
    }

    /// Unit normal following the counter-clockwise winding.
    pub fn face_normal(&self, face: usize) -> Vec3<T> {
        let [a, b, c] = self.triangle(face);
        (b - a).cross(c - a).normalized().unwrap_or_else(Vec3::zero)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemanticObject<T> {
    pub name: String,
    pub class: ClassId,
    pub mesh: TriMesh<T>,
    pub material: Material<T>,
}

/// One photoreal lighting configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneState<T> {
    pub id: u32,
    /// Direction the sunlight travels (from the sun toward the scene).
    pub sun_direction: Vec3<T>,
    pub sun_intensity: T,
    pub ambient: T,
}

impl<T: Real> SceneState<T> {
    pub fn new(id: u32, sun_direction: Vec3<T>, sun_intensity: T, ambient: T) -> Result<Self> {
        let state = Self { id, sun_direction, sun_intensity, ambient };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if (self.sun_direction.norm().as_f64() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidScene(format!("state {}: sun direction is not unit length", self.id)));
        }
        if !(self.sun_intensity >= T::zero()) {
            return Err(Error::InvalidScene(format!("state {}: negative sun intensity", self.id)));
        }
        if !(self.ambient >= T::zero() && self.ambient <= T::one()) {
            return Err(Error::InvalidScene(format!("state {}: ambient outside [0,1]", self.id)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemanticScene<T> {
    pub objects: Vec<SemanticObject<T>>,
    pub states: Vec<SceneState<T>>,
    pub palette: ClassPalette,
    /// Seed for procedural textures.
    pub seed: u64,
    /// Optional picked point pairs registering this scene onto a reference model.
    pub correspondences: Option<Correspondences<T>>,
}

impl<T: Real> SemanticScene<T> {
    pub fn new(objects: Vec<SemanticObject<T>>, states: Vec<SceneState<T>>, palette: ClassPalette) -> Result<Self> {
        let scene = Self { objects, states, palette, seed: 0, correspondences: None };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if self.objects.is_empty() {
            return Err(Error::InvalidScene("scene has no objects".into()));
        }
        if self.states.is_empty() {
            return Err(Error::InvalidScene("scene has no states".into()));
        }
        for obj in &self.objects {
            obj.mesh
                .validate()
                .map_err(|e| Error::DegenerateGeometry(format!("object {}: {e}", obj.name)))?;
        }
        for s in &self.states {
            s.validate()?;
        }
        let mut ids: Vec<u32> = self.states.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidScene("duplicate state id".into()));
        }
        Ok(())
    }

    pub fn state(&self, id: u32) -> Option<&SceneState<T>> {
        self.states.iter().find(|s| s.id == id)
    }

    /// Every triangle of every object, tagged with its object/triangle index.
    pub fn triangles(&self) -> impl Iterator<Item = (PrimId, [Vec3<T>; 3])> + '_ {
        self.objects.iter().enumerate().flat_map(|(oi, obj)| {
            (0..obj.mesh.faces.len()).map(move |fi| {
                (PrimId { object: oi as u32, triangle: fi as u32 }, obj.mesh.triangle(fi))
            })
        })
    }

    pub fn triangle_count(&self) -> usize {
        self.objects.iter().map(|o| o.mesh.faces.len()).sum()
    }

    /// All objects concatenated into one mesh, with the class of every face.
    pub fn merged_mesh(&self) -> (TriMesh<T>, Vec<ClassId>) {
        let mut mesh = TriMesh { vertices: Vec::new(), faces: Vec::new() };
        let mut classes = Vec::new();
        for obj in &self.objects {
            let base = mesh.vertices.len() as u32;
            mesh.vertices.extend_from_slice(&obj.mesh.vertices);
            mesh.faces.extend(obj.mesh.faces.iter().map(|f| f.map(|i| i + base)));
            classes.extend(std::iter::repeat_n(obj.class, obj.mesh.faces.len()));
        }
        (mesh, classes)
    }
}

// ---------------------------------------------------------------------------
// Text formats

struct LineCursor<'a> {
    path: &'a Path,
    line: usize,
}

impl LineCursor<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { path: self.path.to_path_buf(), line: self.line, message: message.into() }
    }

    fn num<N: FromStr>(&self, tok: Option<&str>, what: &str) -> Result<N> {
        let tok = tok.ok_or_else(|| self.err(format!("missing {what}")))?;
        tok.parse().map_err(|_| self.err(format!("bad {what} \"{tok}\"")))
    }

    fn vec3<T: Real>(&self, toks: &mut std::str::SplitWhitespace<'_>, what: &str) -> Result<Vec3<T>> {
        let x: f64 = self.num(toks.next(), what)?;
        let y: f64 = self.num(toks.next(), what)?;
        let z: f64 = self.num(toks.next(), what)?;
        Ok(Vec3::from_f64([x, y, z]))
    }

    fn end(&self, toks: &mut std::str::SplitWhitespace<'_>) -> Result<()> {
        match toks.next() {
            None => Ok(()),
            Some(t) => Err(self.err(format!("unexpected token \"{t}\""))),
        }
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

/// Parses an ASCII triangle mesh: `v x y z` and `f i j k [...]` records, 1-based indices.
/// Polygons with more than three corners are fan-triangulated; `i/j/k` index forms use the
/// first component.
pub fn parse_mesh<T: Real>(text: &str, path: &Path) -> Result<TriMesh<T>> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (line, l) in content_lines(text) {
        let cur = LineCursor { path, line };
        let mut toks = l.split_whitespace();
        match toks.next() {
            Some("v") => {
                vertices.push(cur.vec3(&mut toks, "vertex coordinate")?);
                cur.end(&mut toks)?;
            }
            Some("f") => {
                let idx: Vec<u32> = toks
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or(t);
                        match first.parse::<u32>() {
                            Ok(i) if i >= 1 => Ok(i - 1),
                            _ => Err(cur.err(format!("bad face index \"{t}\""))),
                        }
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(cur.err("face needs at least three vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            Some("vn" | "vt" | "o" | "g" | "s" | "usemtl" | "mtllib") => {}
            Some(other) => return Err(cur.err(format!("unknown record \"{other}\""))),
            None => {}
        }
    }
    TriMesh::new(vertices, faces).map_err(|e| match e {
        Error::DegenerateGeometry(m) => Error::DegenerateGeometry(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn load_mesh<T: Real>(path: &Path) -> Result<TriMesh<T>> {
    if !path.is_file() {
        return Err(Error::MissingMesh(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).at(path)?;
    parse_mesh(&text, path)
}

pub fn format_mesh<T: Real>(mesh: &TriMesh<T>) -> String {
    let mut out = String::new();
    for v in &mesh.vertices {
        let [x, y, z] = v.to_f64();
        let _ = writeln!(out, "v {x:?} {y:?} {z:?}");
    }
    for [a, b, c] in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", a + 1, b + 1, c + 1);
    }
    out
}

pub fn write_mesh<T: Real>(mesh: &TriMesh<T>, path: &Path) -> Result<()> {
    fs::write(path, format_mesh(mesh)).at(path)
}

#[derive(Default)]
struct ObjectDraft {
    name: String,
    class: Option<ClassId>,
    mesh: Option<PathBuf>,
    albedo: Option<[f64; 3]>,
    texture: Option<(String, f64)>,
    line: usize,
}

#[derive(Default)]
struct StateDraft {
    id: u32,
    sun: Option<[f64; 3]>,
    intensity: Option<f64>,
    ambient: Option<f64>,
    line: usize,
}

enum Block {
    Top,
    Object(ObjectDraft),
    State(StateDraft),
    Align { src: Vec<[f64; 3]>, dst: Vec<[f64; 3]>, line: usize },
}

/// Loads and validates a scene manifest. Mesh paths resolve relative to the manifest.
pub fn load_scene<T: Real>(manifest_path: &Path) -> Result<SemanticScene<T>> {
    let text = fs::read_to_string(manifest_path).at(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    parse_scene(&text, manifest_path, base)
}

pub fn parse_scene<T: Real>(text: &str, path: &Path, base: &Path) -> Result<SemanticScene<T>> {
    let mut palette = *default_palette().colors();
    let mut seed = 0u64;
    let mut objects = Vec::new();
    let mut states = Vec::new();
    let mut correspondences = None;
    let mut block = Block::Top;

    let read3 = |cur: &LineCursor, toks: &mut std::str::SplitWhitespace<'_>, what: &str| -> Result<[f64; 3]> {
        let v: Vec3<f64> = cur.vec3(toks, what)?;
        cur.end(toks)?;
        Ok(v.to_f64())
    };

    for (line, l) in content_lines(text) {
        let cur = LineCursor { path, line };
        let mut toks = l.split_whitespace();
        let key = toks.next().unwrap_or_default();
        match (&mut block, key) {
            (Block::Top, "seed") => {
                seed = cur.num(toks.next(), "seed")?;
                cur.end(&mut toks)?;
            }
            (Block::Top, "palette") => {
                let class: ClassId = toks.next().ok_or_else(|| cur.err("missing class"))?.parse()?;
                let mut rgb = [0u8; 3];
                for c in &mut rgb {
                    *c = cur.num(toks.next(), "8-bit channel")?;
                }
                cur.end(&mut toks)?;
                palette[class.index()] = rgb;
            }
            (Block::Top, "object") => {
                let name = toks.collect::<Vec<_>>().join(" ");
                if name.is_empty() {
                    return Err(cur.err("object needs a name"));
                }
                block = Block::Object(ObjectDraft { name, line, ..Default::default() });
            }
            (Block::Top, "state") => {
                let id = cur.num(toks.next(), "state id")?;
                cur.end(&mut toks)?;
                block = Block::State(StateDraft { id, line, ..Default::default() });
            }
            (Block::Top, "align") => {
                cur.end(&mut toks)?;
                block = Block::Align { src: Vec::new(), dst: Vec::new(), line };
            }
            (Block::Object(d), "class") => {
                d.class = Some(toks.next().ok_or_else(|| cur.err("missing class"))?.parse()?);
                cur.end(&mut toks)?;
            }
            (Block::Object(d), "mesh") => {
                let rel = toks.collect::<Vec<_>>().join(" ");
                if rel.is_empty() {
                    return Err(cur.err("missing mesh path"));
                }
                d.mesh = Some(base.join(rel));
            }
            (Block::Object(d), "albedo") => d.albedo = Some(read3(&cur, &mut toks, "albedo")?),
            (Block::Object(d), "texture") => {
                let kind = toks.next().ok_or_else(|| cur.err("missing texture kind"))?.to_string();
                let scale = if kind == "none" { 1.0 } else { cur.num(toks.next(), "texture scale")? };
                cur.end(&mut toks)?;
                d.texture = Some((kind, scale));
            }
            (Block::State(d), "sun") => d.sun = Some(read3(&cur, &mut toks, "sun direction")?),
            (Block::State(d), "intensity") => {
                d.intensity = Some(cur.num(toks.next(), "intensity")?);
                cur.end(&mut toks)?;
            }
            (Block::State(d), "ambient") => {
                d.ambient = Some(cur.num(toks.next(), "ambient")?);
                cur.end(&mut toks)?;
            }
            (Block::Align { src, .. }, "src") => src.push(read3(&cur, &mut toks, "point")?),
            (Block::Align { dst, .. }, "dst") => dst.push(read3(&cur, &mut toks, "point")?),
            (_, "end") => {
                cur.end(&mut toks)?;
                match std::mem::replace(&mut block, Block::Top) {
                    Block::Top => return Err(cur.err("\"end\" outside a block")),
                    Block::Object(d) => objects.push(finish_object(d, path)?),
                    Block::State(d) => states.push(finish_state(d, path)?),
                    Block::Align { src, dst, line } => {
                        let cur = LineCursor { path, line };
                        if src.len() != 3 || dst.len() != 3 {
                            return Err(cur.err("align block needs exactly three src and three dst points"));
                        }
                        let conv = |v: &[[f64; 3]]| [Vec3::from_f64(v[0]), Vec3::from_f64(v[1]), Vec3::from_f64(v[2])];
                        correspondences = Some(Correspondences { src: conv(&src), dst: conv(&dst) });
                    }
                }
            }
            (_, other) => return Err(cur.err(format!("unexpected \"{other}\""))),
        }
    }
    if !matches!(block, Block::Top) {
        return Err(Error::Parse { path: path.to_path_buf(), line: text.lines().count(), message: "unterminated block".into() });
    }
    let palette = ClassPalette::new(palette)?;
    let scene = SemanticScene { objects, states, palette, seed, correspondences };
    scene.validate()?;
    Ok(scene)
}

fn finish_object<T: Real>(d: ObjectDraft, path: &Path) -> Result<SemanticObject<T>> {
    let cur = LineCursor { path, line: d.line };
    let class = d.class.ok_or_else(|| cur.err(format!("object {} has no class", d.name)))?;
    let mesh_path = d.mesh.ok_or_else(|| cur.err(format!("object {} has no mesh", d.name)))?;
    let mesh = load_mesh(&mesh_path)?;
    let albedo = Vec3::from_f64(d.albedo.unwrap_or([0.8, 0.8, 0.8]));
    let texture = match d.texture {
        None => Texture::None,
        Some((kind, scale)) => match kind.as_str() {
            "none" => Texture::None,
            "checker" => Texture::Checker { scale: T::lit(scale) },
            "noise" => Texture::Noise { scale: T::lit(scale) },
            other => return Err(cur.err(format!("unknown texture \"{other}\""))),
        },
    };
    let material = Material::new(albedo, texture).map_err(|e| cur.err(e.to_string()))?;
    Ok(SemanticObject { name: d.name, class, mesh, material })
}

fn finish_state<T: Real>(d: StateDraft, path: &Path) -> Result<SceneState<T>> {
    let cur = LineCursor { path, line: d.line };
    let sun: Vec3<T> = Vec3::from_f64(d.sun.ok_or_else(|| cur.err("state has no sun direction"))?);
    // Already-unit directions are kept bit-for-bit so manifests round-trip exactly.
    let sun = if (sun.norm().as_f64() - 1.0).abs() <= 1e-12 {
        sun
    } else {
        sun.normalized().ok_or_else(|| cur.err("zero sun direction"))?
    };
    SceneState::new(
        d.id,
        sun,
        T::lit(d.intensity.unwrap_or(1.0)),
        T::lit(d.ambient.unwrap_or(0.2)),
    )
    .map_err(|e| cur.err(e.to_string()))
}

fn file_stem_for(index: usize, name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{index:03}_{clean}.obj")
}

/// Renders a manifest referencing `meshes/NNN_name.obj` files.
pub fn format_scene<T: Real>(scene: &SemanticScene<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "seed {}", scene.seed);
    for (class, [r, g, b]) in scene.palette.iter() {
        let _ = writeln!(out, "palette {class} {r} {g} {b}");
    }
    for (i, obj) in scene.objects.iter().enumerate() {
        let [r, g, b] = obj.material.albedo.to_f64();
        let _ = writeln!(out, "\nobject {}", obj.name);
        let _ = writeln!(out, "  class {}", obj.class);
        let _ = writeln!(out, "  mesh meshes/{}", file_stem_for(i, &obj.name));
        let _ = writeln!(out, "  albedo {r:?} {g:?} {b:?}");
        match obj.material.texture {
            Texture::None => {}
            Texture::Checker { scale } => {
                let _ = writeln!(out, "  texture checker {:?}", scale.as_f64());
            }
            Texture::Noise { scale } => {
                let _ = writeln!(out, "  texture noise {:?}", scale.as_f64());
            }
        }
        out.push_str("end\n");
    }
    for s in &scene.states {
        let [x, y, z] = s.sun_direction.to_f64();
        let _ = writeln!(out, "\nstate {}", s.id);
        let _ = writeln!(out, "  sun {x:?} {y:?} {z:?}");
        let _ = writeln!(out, "  intensity {:?}", s.sun_intensity.as_f64());
        let _ = writeln!(out, "  ambient {:?}", s.ambient.as_f64());
        out.push_str("end\n");
    }
    if let Some(c) = &scene.correspondences {
        out.push_str("\nalign\n");
        for (tag, pts) in [("src", &c.src), ("dst", &c.dst)] {
            for p in pts {
                let [x, y, z] = p.to_f64();
                let _ = writeln!(out, "  {tag} {x:?} {y:?} {z:?}");
            }
        }
        out.push_str("end\n");
    }
    out
}

/// Writes `scene.manifest` plus one mesh file per object into `dir`. Returns the manifest path.
pub fn write_scene<T: Real>(scene: &SemanticScene<T>, dir: &Path) -> Result<PathBuf> {
    let mesh_dir = dir.join("meshes");
    fs::create_dir_all(&mesh_dir).at(&mesh_dir)?;
    for (i, obj) in scene.objects.iter().enumerate() {
        write_mesh(&obj.mesh, &mesh_dir.join(file_stem_for(i, &obj.name)))?;
    }
    let manifest = dir.join("scene.manifest");
    fs::write(&manifest, format_scene(scene)).at(&manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    const QUAD: &str = "v 0 0 0\nv 4 0 0\nv 4 0 3\nv 0 0 3\nf 1 2 3 4\n";

    #[test]
    fn minimal_manifest_loads() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "wall.obj", QUAD);
        let m = write(
            dir.path(),
            "scene.manifest",
            "object north wall\n class wall\n mesh wall.obj\nend\nstate 0\n sun 0 0 -1\nend\n",
        );
        let scene: SemanticScene<f64> = load_scene(&m).unwrap();
        assert_eq!(scene.objects.len(), 1);
        assert_eq!(scene.objects[0].name, "north wall");
        assert_eq!(scene.objects[0].mesh.faces.len(), 2);
        assert_eq!(scene.states.len(), 1);
        assert_eq!(scene.palette, default_palette());
    }

    #[test]
    fn unknown_class_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "c.obj", QUAD);
        let m = write(dir.path(), "s.manifest", "object c\n class chimney\n mesh c.obj\nend\nstate 0\n sun 0 0 -1\nend\n");
        let err = load_scene::<f64>(&m).unwrap_err();
        assert!(matches!(err, Error::UnknownClass(ref c) if c == "chimney"), "{err}");
        assert!(err.to_string().contains("unknown class"));
    }

    #[test]
    fn missing_mesh_and_degenerate_geometry() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(dir.path(), "s.manifest", "object a\n class wall\n mesh nope.obj\nend\nstate 0\n sun 0 0 -1\nend\n");
        assert!(matches!(load_scene::<f64>(&m), Err(Error::MissingMesh(_))));

        write(dir.path(), "flat.obj", "v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n");
        let m = write(dir.path(), "s.manifest", "object a\n class wall\n mesh flat.obj\nend\nstate 0\n sun 0 0 -1\nend\n");
        assert!(matches!(load_scene::<f64>(&m), Err(Error::DegenerateGeometry(_))));

        write(dir.path(), "oob.obj", "v 0 0 0\nv 1 0 0\nf 1 2 3\n");
        let m = write(dir.path(), "s.manifest", "object a\n class wall\n mesh oob.obj\nend\nstate 0\n sun 0 0 -1\nend\n");
        assert!(matches!(load_scene::<f64>(&m), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(dir.path(), "s.manifest", "seed 1\n\nbogus 3\n");
        match load_scene::<f64>(&m) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scene_requires_objects_and_unique_states() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "w.obj", QUAD);
        let m = write(dir.path(), "s.manifest", "state 0\n sun 0 0 -1\nend\n");
        assert!(matches!(load_scene::<f64>(&m), Err(Error::InvalidScene(_))));
        let m = write(
            dir.path(),
            "s.manifest",
            "object w\n class wall\n mesh w.obj\nend\nstate 1\n sun 0 0 -1\nend\nstate 1\n sun 0 1 -1\nend\n",
        );
        assert!(matches!(load_scene::<f64>(&m), Err(Error::InvalidScene(_))));
    }

    #[test]
    fn palette_override_and_duplicate_color() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "w.obj", QUAD);
        let body = "object w\n class wall\n mesh w.obj\nend\nstate 0\n sun 0 0 -1\nend\n";
        let m = write(dir.path(), "s.manifest", &format!("palette wall 10 20 30\n{body}"));
        let scene: SemanticScene<f64> = load_scene(&m).unwrap();
        assert_eq!(scene.palette.color(ClassId::Wall), [10, 20, 30]);
        let m = write(dir.path(), "s.manifest", &format!("palette wall 0 255 0\n{body}"));
        assert!(matches!(load_scene::<f64>(&m), Err(Error::InvalidPalette(_))));
    }

    #[test]
    fn default_palette_values() {
        let p = default_palette();
        assert_eq!(p.color(ClassId::Wall), [0, 0, 255]);
        assert_eq!(p.color(ClassId::Window), [0, 255, 255]);
        assert_eq!(p.color(ClassId::Door), [128, 0, 128]);
        assert_eq!(p.color(ClassId::Column), [255, 0, 0]);
        assert_eq!(p.color(ClassId::Roof), [0, 255, 0]);
        assert_eq!(p.color(ClassId::Background), [0, 0, 0]);
        assert!(ClassPalette::new(*p.colors()).is_ok());
        for c in ClassId::ALL {
            assert_eq!(p.decode(p.color(c)), Some(c));
        }
    }

    #[test]
    fn class_ordinals_are_fixed() {
        let names: Vec<_> = ClassId::ALL.iter().map(|c| (c.index(), c.name())).collect();
        assert_eq!(
            names,
            [(0, "background"), (1, "wall"), (2, "window"), (3, "door"), (4, "column"), (5, "roof")]
        );
    }

    #[test]
    fn textures_stay_in_unit_range() {
        let m = Material::new(Vec3::new(1.0, 0.5, 0.0), Texture::Noise { scale: 0.3 }).unwrap();
        for i in 0..500 {
            let p = Vec3::new(i as f64 * 0.37, -(i as f64) * 0.11, i as f64 * 0.05);
            let a = m.albedo_at(p, 9);
            assert!(a.x >= 0.0 && a.x <= 1.0 && a.y <= 0.5 && a.z == 0.0);
            assert_eq!(a, m.albedo_at(p, 9));
        }
        let c = Material::new(Vec3::splat(1.0), Texture::Checker { scale: 1.0 }).unwrap();
        assert_eq!(c.albedo_at(Vec3::new(0.5, 0.5, 0.5), 0).x, 1.0);
        assert_eq!(c.albedo_at(Vec3::new(1.5, 0.5, 0.5), 0).x, 0.7);
        assert!(Material::new(Vec3::new(1.2, 0.0, 0.0), Texture::<f64>::None).is_err());
    }
}
