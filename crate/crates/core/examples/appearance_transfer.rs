//! Keep the head of one subject and dress it in the body appearance of
//! another.
//!
//! Usage: cargo run --example appearance_transfer [OUT_DIR]

use std::path::PathBuf;

use liquidwarp::pipeline::{swap, Resolution};
use liquidwarp::synthetic;

fn main() -> liquidwarp::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("lw-swap"));
    std::fs::create_dir_all(&out)?;
    let size = Resolution::new(256, 256)?;

    let model = synthetic::humanoid();
    let (src, reference) = synthetic::params_pair(11);
    let src_image = synthetic::render(&model, &src, size.width, size.height)?.image;
    let ref_image = synthetic::render(&model, &reference, size.width, size.height)?.image;
    let result = swap(&model, &src, &reference, &src_image, &ref_image, size)?;

    let f = &result.flows;
    println!("head pixels kept from source: {}", f.head_silhouette.count());
    println!("body pixels fetched from reference: {}", f.body_flow.valid_mask().and_not(&f.head_silhouette).count());

    src_image.write_png(&out.join("source.png"))?;
    ref_image.write_png(&out.join("reference.png"))?;
    result.preview.map(|v| v * 2.0 - 1.0).write_png(&out.join("preview.png"))?;
    f.head_flow.write_bin(&out.join("T1.bin"))?;
    f.body_flow.write_bin(&out.join("T2.bin"))?;
    println!("wrote {}", out.display());
    Ok(())
}
