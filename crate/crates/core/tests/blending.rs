use proptest::prelude::*;

use labelforge::blend::{fuse, fuse_class, simulate_blending, BlendTarget, ViewObservations, Vote};
use labelforge::fixture::{farmhouse, fixture_poses};
use labelforge::render::Renderer;
use labelforge::{ClassId, NUM_CLASSES};

fn binomial(n: u64, k: u64) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * (n + 1 - i) as f64 / i as f64)
}

/// P(at least 5 of 9 views corrupted) at p = 0.2.
fn majority_corrupted(views: u64, p: f64) -> f64 {
    (views / 2 + 1..=views).map(|k| binomial(views, k) * p.powi(k as i32) * (1.0 - p).powi((views - k) as i32)).sum()
}

#[test]
fn binomial_tail_value() {
    assert!((majority_corrupted(9, 0.2) - 0.01958144).abs() < 1e-12);
}

#[test]
fn nine_view_fusion_beats_single_view() {
    let texels = 200_000;
    let trial = simulate_blending(texels, 9, 0.2, 42);
    let q = majority_corrupted(9, 0.2);
    let sigma = (q * (1.0 - q) / texels as f64).sqrt();
    assert!(trial.fused_error <= q + 3.0 * sigma, "{trial:?} bound {}", q + 3.0 * sigma);
    let s = (0.2 * 0.8 / texels as f64).sqrt();
    assert!((trial.single_view_error - 0.2).abs() <= 3.0 * s, "{trial:?}");
    assert!(trial.fused_error < trial.single_view_error);
}

#[test]
fn fusion_helps_for_any_minority_corruption() {
    for (views, p) in [(3, 0.1), (5, 0.3), (7, 0.45)] {
        let t = simulate_blending(100_000, views, p, views as u64);
        let single_sigma = (p * (1.0 - p) / 1e5).sqrt();
        assert!(t.fused_error <= t.single_view_error + 3.0 * single_sigma, "{t:?}");
    }
}

#[test]
fn ground_truth_labels_fuse_to_face_classes() {
    let scene = farmhouse().unwrap();
    let renderer = Renderer::new(&scene);
    let poses = fixture_poses().unwrap();
    let (mesh, face_class) = scene.merged_mesh();
    let target = BlendTarget::new(mesh, 4.0).unwrap();
    let obs: Vec<_> = poses
        .iter()
        .map(|p| {
            let (_, ids) = renderer.render_label(p, 256, 256).unwrap();
            target.project_view(p, &ids).unwrap()
        })
        .collect();
    let fusion = fuse(target.texel_count(), &obs);
    let observed: Vec<usize> = (0..target.texel_count()).filter(|&t| fusion.observation_count(t) > 0).collect();
    let wrong = observed.iter().filter(|&&t| fusion.fused[t] != face_class[target.texel_face(t)]).count();
    // Remaining disagreements sit within a pixel of object outlines.
    let accuracy = 1.0 - wrong as f64 / observed.len() as f64;
    assert!(accuracy > 0.97, "{accuracy}");

    // A single view fused alone reproduces its own projected labels.
    let single = fuse(target.texel_count(), &obs[..1]);
    for v in &obs[0].votes {
        assert_eq!(single.fused[v.texel as usize], v.class);
    }
}

fn votes() -> impl Strategy<Value = Vec<(usize, f64)>> {
    proptest::collection::vec((0..NUM_CLASSES, 0.0f64..1.0), 0..12)
}

proptest! {
    #[test]
    fn agreeing_view_never_flips_fused_class(existing in votes(), w in 0.0f64..1.0) {
        let view = |class: usize, weight: f64| ViewObservations {
            view_id: 0,
            votes: vec![Vote { texel: 0, class: ClassId::ALL[class], weight }],
        };
        let mut views: Vec<_> = existing.iter().map(|&(c, w)| view(c, w)).collect();
        let before = fuse(1, &views);
        let current = before.fused[0];
        views.push(view(current.index(), w));
        prop_assert_eq!(fuse(1, &views).fused[0], current);
        prop_assert_eq!(before.observation_count(0), before.counts[0].iter().sum::<u32>());
    }

    #[test]
    fn fused_class_carries_maximal_weight(weights in proptest::array::uniform6(0.0f64..3.0), counts in proptest::array::uniform6(1u32..4)) {
        let c = fuse_class(&weights, &counts);
        prop_assert!(weights.iter().all(|&w| w <= weights[c.index()]));
    }
}
