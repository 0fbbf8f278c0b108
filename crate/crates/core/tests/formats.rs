use std::path::Path;

use proptest::prelude::*;

use labelforge::camera::{format_poses, parse_poses, CameraPose};
use labelforge::fixture::{farmhouse, fixture_poses};
use labelforge::geometry::Vec3;
use labelforge::scene::{format_mesh, load_scene, parse_mesh, write_scene, TriMesh};

fn coord() -> impl Strategy<Value = f64> {
    -1e3f64..1e3
}

fn point() -> impl Strategy<Value = Vec3<f64>> {
    (coord(), coord(), coord()).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

proptest! {
    #[test]
    fn poses_round_trip(raw in proptest::collection::vec((point(), point(), 1.0f64..200.0), 1..8)) {
        let poses: Vec<CameraPose<f64>> = raw
            .into_iter()
            .enumerate()
            .filter_map(|(i, (p, l, f))| CameraPose::new(p, l, f, i as u32).ok())
            .collect();
        prop_assume!(!poses.is_empty());
        let back: Vec<CameraPose<f64>> = parse_poses(&format_poses(&poses), Path::new("poses.txt")).unwrap();
        prop_assert_eq!(back.len(), poses.len());
        for (a, b) in back.iter().zip(&poses) {
            prop_assert_eq!(a.position, b.position);
            prop_assert_eq!(a.look_at, b.look_at);
            prop_assert_eq!(a.focal_length, b.focal_length);
        }
    }

    #[test]
    fn mesh_round_trip(a in point(), b in point(), c in point()) {
        prop_assume!((b - a).cross(c - a).norm() > 1e-3);
        let mesh = TriMesh::new(vec![a, b, c], vec![[0, 1, 2]]).unwrap();
        let back: TriMesh<f64> = parse_mesh(&format_mesh(&mesh), Path::new("m.obj")).unwrap();
        prop_assert_eq!(back, mesh);
    }
}

#[test]
fn fixture_scene_round_trips_through_files() {
    let scene = farmhouse().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_scene(&scene, dir.path()).unwrap();
    let back = load_scene::<f64>(&manifest).unwrap();
    assert_eq!(back, scene);
}

#[test]
fn bundled_fixture_files_match_the_builder() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/farmhouse");
    let scene = load_scene::<f64>(&root.join("scene.manifest")).unwrap();
    assert_eq!(scene, farmhouse().unwrap());
    let text = std::fs::read_to_string(root.join("poses.txt")).unwrap();
    let poses: Vec<CameraPose<f64>> = parse_poses(&text, &root.join("poses.txt")).unwrap();
    assert_eq!(poses, fixture_poses().unwrap());
}
