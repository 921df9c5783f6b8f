//! Sweep the camera around the subject and write one warped frame per view.
//!
//! Usage: cargo run --example novel_view [OUT_DIR]

use std::path::PathBuf;

use liquidwarp::pipeline::{default_sweep, novel_view, Resolution, ViewSpec};
use liquidwarp::raster::silhouette;
use liquidwarp::synthetic;

fn main() -> liquidwarp::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("lw-view"));
    std::fs::create_dir_all(&out)?;
    let size = Resolution::new(192, 192)?;

    let model = synthetic::humanoid();
    let (src, _) = synthetic::params_pair(3);
    let image = synthetic::render(&model, &src, size.width, size.height)?.image;
    for yaw in default_sweep() {
        let spec = ViewSpec { yaw, translate: [0.0, 0.0, 0.0], ..ViewSpec::default() };
        let result = novel_view(&model, &src, &spec, &image, size)?;
        let occupied = silhouette(&result.bundle.target_map).count();
        println!("yaw {yaw:>5.0}: {occupied} target pixels");
        result.synthesized.map(|v| v * 2.0 - 1.0).write_png(&out.join(format!("view_{:03}.png", yaw as i64)))?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
