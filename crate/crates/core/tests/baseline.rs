use labelforge::baseline::train_on_pairs;
use labelforge::eval::{confusion, metrics, ClassSelection};
use labelforge::fixture::{farmhouse, fixture_poses};
use labelforge::render::Renderer;
use labelforge::{ClassId, Image, LabelMap};

fn fixture_pairs(size: u32) -> (Vec<Image>, Vec<LabelMap>) {
    let scene = farmhouse().unwrap();
    let renderer = Renderer::new(&scene);
    let mut photos = Vec::new();
    let mut labels = Vec::new();
    for pose in fixture_poses().unwrap().iter().take(4) {
        for state in &scene.states {
            photos.push(renderer.render_photoreal(pose, state, size, size).unwrap());
            labels.push(renderer.render_label(pose, size, size).unwrap().1);
        }
    }
    (photos, labels)
}

#[test]
fn training_order_does_not_matter() {
    let (photos, labels) = fixture_pairs(32);
    let palette = labelforge::default_palette();
    let forward = train_on_pairs(photos.iter().zip(&labels), 2, palette).unwrap();
    let backward = train_on_pairs(photos.iter().zip(&labels).rev(), 2, palette).unwrap();
    assert_eq!(forward.centroids.len(), backward.centroids.len());
    for (a, b) in forward.centroids.iter().zip(&backward.centroids) {
        assert_eq!((a.class, a.count), (b.class, b.count));
        for (x, y) in a.mean.iter().zip(&b.mean) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn beats_constant_prediction_on_training_views() {
    let (photos, labels) = fixture_pairs(48);
    let palette = labelforge::default_palette();
    let model = train_on_pairs(photos.iter().zip(&labels), 1, palette).unwrap();
    let mut predicted = labelforge::eval::ConfusionCounts::default();
    let mut constant = labelforge::eval::ConfusionCounts::default();
    for (photo, gt) in photos.iter().zip(&labels) {
        let pred = model.predict_labels(photo);
        assert!(pred.classes().iter().all(|c| ClassId::ALL.contains(c)));
        predicted += confusion(gt, &pred, None).unwrap();
        constant += confusion(gt, &LabelMap::new(gt.width(), gt.height(), ClassId::Background), None).unwrap();
    }
    let p = metrics::<f64>(&predicted, ClassSelection::Present).unwrap();
    let c = metrics::<f64>(&constant, ClassSelection::Present).unwrap();
    assert!(p.global_accuracy > c.global_accuracy, "{} vs {}", p.global_accuracy, c.global_accuracy);
    assert!(p.mean_iou > c.mean_iou);
}
