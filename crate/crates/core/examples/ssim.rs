//! Structural similarity of an image against progressively degraded copies.

use liquidwarp::objectives::{ssim, SsimParams};
use liquidwarp::synthetic;
use liquidwarp::warp::resize_bilinear;

fn main() -> liquidwarp::Result<()> {
    let model = synthetic::humanoid();
    let (src, _) = synthetic::params_pair(1);
    let image = synthetic::render(&model, &src, 128, 128)?.image.map(|v| (v + 1.0) * 0.5);
    let params = SsimParams::default();

    println!("identical: {:.6}", ssim(&image, &image, &params)?);
    for factor in [2, 4, 8] {
        let blurred = resize_bilinear(&resize_bilinear(&image, 128 / factor, 128 / factor), 128, 128);
        println!("downsampled x{factor}: {:.6}", ssim(&image, &blurred, &params)?);
    }
    let darker = image.map(|v| v * 0.7);
    println!("30% darker: {:.6}", ssim(&image, &darker, &params)?);
    Ok(())
}
