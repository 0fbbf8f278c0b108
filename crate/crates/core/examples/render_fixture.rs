//! Renders the bundled farmhouse from every fixture view: one photoreal image per view for
//! the first lighting state plus the label image, side by side.
//!
//!     cargo run -p labelforge --example render_fixture -- <out-dir> [size]

use std::path::PathBuf;

use labelforge::fixture::{farmhouse, fixture_poses};
use labelforge::render::Renderer;
use labelforge::Image;

fn main() -> labelforge::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "fixture-views".into()));
    let size: u32 = args.next().and_then(|s| s.parse().ok()).unwrap_or(256);
    std::fs::create_dir_all(&out).map_err(|source| labelforge::Error::Io { path: out.clone(), source })?;
    let scene = farmhouse()?;
    let renderer = Renderer::new(&scene);
    for pose in fixture_poses()? {
        let photo = renderer.render_photoreal(&pose, &scene.states[0], size, size)?;
        let (label, _) = renderer.render_label(&pose, size, size)?;
        Image::hstack(&photo, &label)?.save_png(&out.join(format!("v{:03}.png", pose.view_id)))?;
    }
    Ok(())
}
