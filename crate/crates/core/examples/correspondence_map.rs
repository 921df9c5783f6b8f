//! Rasterize the humanoid into a correspondence map and write the binary map,
//! its visualization and the silhouette.
//!
//! Usage: cargo run --example correspondence_map [OUT_DIR]

use std::path::PathBuf;

use liquidwarp::body::skin;
use liquidwarp::camera::project;
use liquidwarp::raster::{rasterize, silhouette, CorrespondenceMap};
use liquidwarp::synthetic;

fn main() -> liquidwarp::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("lw-cmap"));
    std::fs::create_dir_all(&out)?;

    let model = synthetic::humanoid();
    let (params, _) = synthetic::params_pair(0);
    let projected = project(&skin(&model, &params)?, &params.camera);
    let cmap = rasterize(&projected, 256, 256)?;

    let mask = silhouette(&cmap);
    let visible: std::collections::BTreeSet<u32> = cmap.pixels().iter().flatten().map(|f| f.face).collect();
    println!("covered pixels: {} of {}", mask.count(), 256 * 256);
    println!("visible faces: {} of {}", visible.len(), model.num_faces());
    if let Some(frag) = cmap.get(128, 128) {
        println!("center pixel: face {} weights {:?} depth {:.4}", frag.face, frag.barycentric, frag.depth);
    }

    cmap.write_bin(&out.join("C.bin"))?;
    cmap.write_visual_png(&out.join("C.png"))?;
    mask.write_png(&out.join("S.png"))?;
    let back = CorrespondenceMap::read_bin(&out.join("C.bin"))?;
    assert_eq!(silhouette(&back), mask);
    println!("wrote {}", out.display());
    Ok(())
}
