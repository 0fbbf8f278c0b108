//! Every label pixel of the bundled ten-view fixture must decode to the class the renderer
//! recorded for it, and that class must match an independent brute-force ray cast.

use labelforge::camera::PinholeCamera;
use labelforge::fixture::{farmhouse, fixture_poses, FIXTURE_VIEWS};
use labelforge::geometry::{intersect_triangle, PrimId};
use labelforge::render::Renderer;
use labelforge::{ClassId, IdBuffer, Real, Scene};

fn brute_force_class(scene: &Scene, cam: &PinholeCamera<f64>, x: u32, y: u32) -> ClassId {
    let ray = cam.ray(x, y);
    let mut best: Option<(f64, PrimId)> = None;
    for (id, [a, b, c]) in scene.triangles() {
        if let Some((t, _, _)) = intersect_triangle(&ray, a, b, c, f64::geometric_epsilon()) {
            let closer = match best {
                None => true,
                Some((bt, bid)) => t < bt || (t == bt && id < bid),
            };
            if closer {
                best = Some((t, id));
            }
        }
    }
    best.map_or(ClassId::Background, |(_, id)| scene.objects[id.object as usize].class)
}

#[test]
fn label_pixels_decode_to_id_buffer_on_fixture() {
    let scene = farmhouse().unwrap();
    let renderer = Renderer::new(&scene);
    let poses = fixture_poses().unwrap();
    assert_eq!(poses.len(), FIXTURE_VIEWS);
    let (w, h) = (96, 72);
    let mut pixels = 0usize;
    let mut seen = [false; 6];
    for pose in &poses {
        let (label, ids) = renderer.render_label(pose, w, h).unwrap();
        let decoded = IdBuffer::decode(&label, &scene.palette).expect("label image is palette-pure");
        assert_eq!(decoded, ids, "view {}", pose.view_id);
        let cam = PinholeCamera::new(pose, w, h).unwrap();
        for y in 0..h {
            for x in 0..w {
                assert_eq!(ids.get(x, y), brute_force_class(&scene, &cam, x, y), "view {} pixel ({x},{y})", pose.view_id);
                seen[ids.get(x, y).index()] = true;
                pixels += 1;
            }
        }
    }
    assert_eq!(pixels, FIXTURE_VIEWS * (w * h) as usize);
    assert!(seen.iter().all(|&s| s), "every class visible somewhere: {seen:?}");
}

#[test]
fn photoreal_and_label_share_geometry() {
    // Background pixels in the label are exactly the sky pixels of the photoreal pass.
    let scene = farmhouse().unwrap();
    let renderer = Renderer::new(&scene);
    let sky = renderer_sky();
    for pose in fixture_poses().unwrap().iter().step_by(3) {
        let photo = renderer.render_photoreal(pose, &scene.states[1], 64, 64).unwrap();
        let (_, ids) = renderer.render_label(pose, 64, 64).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                let is_sky = photo.get(x, y) == sky;
                assert_eq!(ids.get(x, y) == ClassId::Background, is_sky, "({x},{y})");
            }
        }
    }
}

fn renderer_sky() -> labelforge::Rgb {
    labelforge::render::RenderOptions::default().sky
}
