//! Warp a textured source render into a reference pose and measure how close
//! the result is to rendering that pose directly.
//!
//! Usage: cargo run --example motion_imitation [OUT_DIR]

use std::path::PathBuf;

use liquidwarp::body::BodyParams;
use liquidwarp::objectives::{ssim, SsimParams};
use liquidwarp::pipeline::{imitate, Resolution};
use liquidwarp::synthetic;

fn main() -> liquidwarp::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("lw-imitate"));
    std::fs::create_dir_all(&out)?;
    let size = Resolution::new(256, 256)?;

    let model = synthetic::humanoid();
    let (src, reference) = synthetic::params_pair(42);
    let source = synthetic::render(&model, &src, size.width, size.height)?;
    let result = imitate(&model, &src, &reference, &source.image, size)?;

    // Ground truth: the source subject (its shape and camera) in the reference pose.
    let target = BodyParams { theta: reference.theta.clone(), ..src.clone() };
    let truth = synthetic::render(&model, &target, size.width, size.height)?;
    let unit = |m: &liquidwarp::tensor::FeatureMap| m.map(|v| (v + 1.0) * 0.5);
    let score = ssim(&result.synthesized, &unit(&truth.image), &SsimParams::default())?;
    let valid = result.bundle.flow.valid().iter().filter(|&&v| v).count();
    println!("valid target pixels: {valid}");
    println!("SSIM of warp vs direct render: {score:.4}");

    let to_png = |m: &liquidwarp::tensor::FeatureMap| m.map(|v| v * 2.0 - 1.0);
    source.image.write_png(&out.join("source.png"))?;
    to_png(&result.synthesized).write_png(&out.join("I_syn.png"))?;
    truth.image.write_png(&out.join("truth.png"))?;
    result.bundle.flow.write_png(&out.join("T.png"))?;
    println!("wrote {}", out.display());
    Ok(())
}
