//! A small gabled farmhouse used by the demo, examples and tests.
//!
//! Footprint 8 m × 6 m, eaves at 4 m, ridge at 6 m along x. The front (−y) carries the door,
//! two windows and a row of porch columns; the other walls carry windows.

use crate::camera::{generate_orbit, OrbitConfig};
use crate::error::Result;
use crate::geometry::Vec3;
use crate::scene::{default_palette, ClassId, Material, SceneState, SemanticObject, SemanticScene, Texture, TriMesh};
use crate::{Orbit, Pose, Scene};

pub const FIXTURE_SEED: u64 = 0x5eed_f00d;
pub const FIXTURE_VIEWS: usize = 10;

fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
    Vec3::new(x, y, z)
}

fn object(name: &str, class: ClassId, mesh: TriMesh<f64>, material: Material<f64>) -> SemanticObject<f64> {
    SemanticObject { name: name.to_string(), class, mesh, material }
}

fn material(class: ClassId) -> Material<f64> {
    match class {
        ClassId::Wall => Material { albedo: v(0.82, 0.72, 0.56), texture: Texture::Checker { scale: 0.5 } },
        ClassId::Window => Material { albedo: v(0.16, 0.27, 0.42), texture: Texture::None },
        ClassId::Door => Material { albedo: v(0.45, 0.26, 0.12), texture: Texture::Noise { scale: 0.3 } },
        ClassId::Column => Material { albedo: v(0.96, 0.96, 0.93), texture: Texture::None },
        ClassId::Roof => Material { albedo: v(0.58, 0.16, 0.11), texture: Texture::Noise { scale: 0.4 } },
        ClassId::Background => Material::flat(v(0.5, 0.5, 0.5)),
    }
}

fn panel(name: &str, class: ClassId, min: [f64; 3], max: [f64; 3]) -> Result<SemanticObject<f64>> {
    let mesh = TriMesh::cuboid(Vec3::from_f64(min), Vec3::from_f64(max))?;
    Ok(object(name, class, mesh, material(class)))
}

/// Sun directions swept around the building: azimuth steps evenly, elevation alternates
/// between 25° and 60°. Directions point the way light travels.
pub fn sun_sweep(count: usize) -> Result<Vec<SceneState<f64>>> {
    (0..count)
        .map(|k| {
            let az = std::f64::consts::TAU * k as f64 / count.max(1) as f64 + 0.3;
            let el = if k % 2 == 0 { 60f64 } else { 25f64 }.to_radians();
            let towards_sun = v(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            SceneState::new(k as u32, -towards_sun, 1.0, 0.25)
        })
        .collect()
}

/// The farmhouse with `states` lighting states from [`sun_sweep`].
pub fn farmhouse_with_states(states: usize) -> Result<Scene> {
    use ClassId::*;
    let mut objects = vec![panel("walls", Wall, [-4.0, -3.0, 0.0], [4.0, 3.0, 4.0])?];

    let gables = TriMesh::new(
        vec![v(-4.0, 3.0, 4.0), v(-4.0, -3.0, 4.0), v(-4.0, 0.0, 6.0), v(4.0, -3.0, 4.0), v(4.0, 3.0, 4.0), v(4.0, 0.0, 6.0)],
        vec![[0, 1, 2], [3, 4, 5]],
    )?;
    objects.push(object("gables", Wall, gables, material(Wall)));

    let roof = TriMesh::new(
        vec![
            v(-4.3, -3.3, 3.8),
            v(4.3, -3.3, 3.8),
            v(4.3, 0.0, 6.0),
            v(-4.3, 0.0, 6.0),
            v(4.3, 3.3, 3.8),
            v(-4.3, 3.3, 3.8),
        ],
        vec![[0, 1, 2], [0, 2, 3], [4, 5, 3], [4, 3, 2]],
    )?;
    objects.push(object("roof", Roof, roof, material(Roof)));

    objects.push(panel("door", Door, [-0.6, -3.1, 0.0], [0.6, -2.95, 2.3])?);
    for (i, x) in [-2.8, 1.6].into_iter().enumerate() {
        objects.push(panel(&format!("window_front_{i}"), Window, [x, -3.08, 1.3], [x + 1.2, -2.95, 2.7])?);
    }
    for (i, x) in [-3.0, -0.6, 1.8].into_iter().enumerate() {
        objects.push(panel(&format!("window_back_{i}"), Window, [x, 2.95, 1.3], [x + 1.2, 3.08, 2.7])?);
    }
    objects.push(panel("window_west", Window, [-4.08, -0.7, 1.3], [-3.95, 0.7, 2.7])?);
    objects.push(panel("window_east", Window, [3.95, -0.7, 1.3], [4.08, 0.7, 2.7])?);
    for (i, x) in [-3.4, -1.6, 1.3, 3.1].into_iter().enumerate() {
        objects.push(panel(&format!("column_{i}"), Column, [x, -4.6, 0.0], [x + 0.3, -4.3, 3.2])?);
    }

    let mut scene = SemanticScene::new(objects, sun_sweep(states)?, default_palette())?;
    scene.seed = FIXTURE_SEED;
    Ok(scene)
}

/// The farmhouse with four lighting states.
pub fn farmhouse() -> Result<Scene> {
    farmhouse_with_states(4)
}

/// Orbit framing the farmhouse. `views_per_ring` and `elevations` set the view count.
pub fn farmhouse_orbit(elevations: Vec<f64>, views_per_ring: usize) -> Orbit {
    OrbitConfig { center: v(0.0, 0.0, 2.5), radius: 20.0, elevations, views_per_ring, focal_length: 35.0 }
}

/// The ten-view rig: one ring at 20° elevation.
pub fn fixture_poses() -> Result<Vec<Pose>> {
    generate_orbit(&farmhouse_orbit(vec![20.0], FIXTURE_VIEWS))
}
