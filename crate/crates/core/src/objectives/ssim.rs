use crate::error::{Error, Result};
use crate::tensor::FeatureMap;

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Constants of the local SSIM statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    /// Normalized 1D Gaussian; the 2D window is its outer product.
    pub fn kernel(&self) -> Vec<f64> {
        let half = (self.window as f64 - 1.0) / 2.0;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - half;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }
}

/// Single-channel plane in f64; three-channel images are reduced to luma.
pub(crate) fn gray_plane(image: &FeatureMap) -> Result<Vec<f64>> {
    match image.channels() {
        1 => Ok(image.data().iter().map(|&v| v as f64).collect()),
        3 => {
            let (r, g, b) = (image.plane(0), image.plane(1), image.plane(2));
            Ok((0..r.len())
                .map(|i| LUMA[0] * r[i] as f64 + LUMA[1] * g[i] as f64 + LUMA[2] * b[i] as f64)
                .collect())
        }
        c => Err(Error::InvalidInput(format!("ssim expects 1 or 3 channels, got {c}"))),
    }
}

/// Valid-window separable filtering of a row-major `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let k = kernel.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = kernel.iter().zip(&src[x..x + k]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

/// Mean local SSIM over every fully contained window, on images with values
/// in `[0, 1]`.
pub fn ssim(a: &FeatureMap, b: &FeatureMap, params: &SsimParams) -> Result<f64> {
    a.check_same_shape(b, "ssim images")?;
    let (h, w) = (a.height(), a.width());
    if params.window == 0 || h < params.window || w < params.window {
        return Err(Error::InvalidInput(format!(
            "ssim needs images of at least {0}x{0}, got {w}x{h}",
            params.window
        )));
    }
    let (pa, pb) = (gray_plane(a)?, gray_plane(b)?);
    let kernel = params.kernel();
    let filt = |p: &[f64]| filter_valid(p, h, w, &kernel);
    let mu_a = filt(&pa);
    let mu_b = filt(&pb);
    let aa = filt(&pa.iter().map(|v| v * v).collect::<Vec<_>>());
    let bb = filt(&pb.iter().map(|v| v * v).collect::<Vec<_>>());
    let ab = filt(&pa.iter().zip(&pb).map(|(x, y)| x * y).collect::<Vec<_>>());
    let (c1, c2) = (params.c1(), params.c2());
    let sum: f64 = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = aa[i] - ma * ma;
            let var_b = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2))
        })
        .sum();
    Ok((sum / mu_a.len() as f64).min(1.0))
}
