use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{put_f32, put_u32, read_file, write_atomic, ByteReader};
use crate::tensor::FeatureMap;

/// Maps an image to an ordered list of feature maps, one per layer.
/// Implementations must be deterministic.
pub trait FeatureExtractor: Send + Sync {
    fn extract(&self, image: &FeatureMap) -> Result<Vec<FeatureMap>>;
}

/// Single layer holding the image itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityExtractor;

impl FeatureExtractor for IdentityExtractor {
    fn extract(&self, image: &FeatureMap) -> Result<Vec<FeatureMap>> {
        Ok(vec![image.clone()])
    }
}

/// Seed of the built-in convolution stack.
pub const TOY_SEED: u64 = 0x1D57;

const CONV_MAGIC: &[u8; 4] = b"LWCX";

/// Zero-padded square convolution followed by ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    /// `out x in x k x k`, row-major.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ConvLayer {
    fn validate(&self) -> Result<()> {
        let expected = self.out_channels * self.in_channels * self.kernel * self.kernel;
        if self.kernel == 0 || self.stride == 0 || self.out_channels == 0 || self.in_channels == 0 {
            return Err(Error::format("conv stack", "zero-sized layer"));
        }
        if self.weights.len() != expected || self.bias.len() != self.out_channels {
            return Err(Error::format("conv stack", "weight count does not match layer shape"));
        }
        if !self.weights.iter().chain(&self.bias).all(|v| v.is_finite()) {
            return Err(Error::format("conv stack", "non-finite weights"));
        }
        Ok(())
    }

    fn forward(&self, x: &FeatureMap) -> Result<FeatureMap> {
        if x.channels() != self.in_channels {
            return Err(Error::dims("conv input channels", self.in_channels, x.channels()));
        }
        let (h, w) = (x.height(), x.width());
        let pad = (self.kernel / 2) as isize;
        let out_h = (h + 2 * pad as usize).saturating_sub(self.kernel) / self.stride + 1;
        let out_w = (w + 2 * pad as usize).saturating_sub(self.kernel) / self.stride + 1;
        let k = self.kernel;
        let mut out = FeatureMap::zeros(self.out_channels, out_h, out_w);
        for o in 0..self.out_channels {
            let kernels = &self.weights[o * self.in_channels * k * k..(o + 1) * self.in_channels * k * k];
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let mut acc = self.bias[o] as f64;
                    for i in 0..self.in_channels {
                        let plane = x.plane(i);
                        for ky in 0..k {
                            let y = (oy * self.stride) as isize + ky as isize - pad;
                            if y < 0 || y >= h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let xx = (ox * self.stride) as isize + kx as isize - pad;
                                if xx < 0 || xx >= w as isize {
                                    continue;
                                }
                                acc += kernels[(i * k + ky) * k + kx] as f64
                                    * plane[y as usize * w + xx as usize] as f64;
                            }
                        }
                    }
                    out.set(o, oy, ox, acc.max(0.0) as f32);
                }
            }
        }
        Ok(out)
    }
}

/// Stack of strided convolutions; every layer's activation is a feature level.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvStack {
    layers: Vec<ConvLayer>,
}

impl ConvStack {
    pub fn new(layers: Vec<ConvLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::format("conv stack", "no layers"));
        }
        for l in &layers {
            l.validate()?;
        }
        for pair in layers.windows(2) {
            if pair[1].in_channels != pair[0].out_channels {
                return Err(Error::format("conv stack", "layer channel counts do not chain"));
            }
        }
        Ok(Self { layers })
    }

    /// Three 3x3 stride-2 layers (3 -> 8 -> 16 -> 32 channels) with
    /// He-uniform weights drawn from [`TOY_SEED`].
    pub fn toy() -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(TOY_SEED);
        let layers = [(3usize, 8usize), (8, 16), (16, 32)]
            .into_iter()
            .map(|(in_c, out_c)| {
                let bound = (6.0 / (in_c * 9) as f64).sqrt() as f32;
                ConvLayer {
                    out_channels: out_c,
                    in_channels: in_c,
                    kernel: 3,
                    stride: 2,
                    weights: (0..out_c * in_c * 9).map(|_| rng.gen_range(-bound..bound)).collect(),
                    bias: (0..out_c).map(|_| rng.gen_range(-0.05..0.05)).collect(),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CONV_MAGIC);
        put_u32(&mut out, self.layers.len() as u32);
        for l in &self.layers {
            for v in [l.out_channels, l.in_channels, l.kernel, l.stride] {
                put_u32(&mut out, v as u32);
            }
            for &w in l.weights.iter().chain(&l.bias) {
                put_f32(&mut out, w);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new("conv stack", bytes);
        r.expect_magic(CONV_MAGIC)?;
        let n = r.u32()? as usize;
        let mut layers = Vec::new();
        for _ in 0..n {
            let (out_c, in_c, k, stride) = (
                r.u32()? as usize,
                r.u32()? as usize,
                r.u32()? as usize,
                r.u32()? as usize,
            );
            let count = out_c
                .checked_mul(in_c)
                .and_then(|v| v.checked_mul(k))
                .and_then(|v| v.checked_mul(k))
                .ok_or_else(|| Error::format("conv stack", "size overflow"))?;
            let weights = (0..count).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
            let bias = (0..out_c).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
            layers.push(ConvLayer {
                out_channels: out_c,
                in_channels: in_c,
                kernel: k,
                stride,
                weights,
                bias,
            });
        }
        r.finish()?;
        ConvStack::new(layers)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

impl FeatureExtractor for ConvStack {
    fn extract(&self, image: &FeatureMap) -> Result<Vec<FeatureMap>> {
        let mut features = Vec::with_capacity(self.layers.len());
        let mut x = image.clone();
        for layer in &self.layers {
            x = layer.forward(&x)?;
            features.push(x.clone());
        }
        Ok(features)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_is_deterministic_with_expected_shapes() {
        let img = FeatureMap::from_fn(3, 16, 12, |c, y, x| ((c + 2 * y + 3 * x) % 7) as f32 * 0.3 - 1.0);
        let a = ConvStack::toy().extract(&img).unwrap();
        let b = ConvStack::toy().extract(&img).unwrap();
        assert_eq!(a, b);
        let shapes: Vec<_> = a.iter().map(FeatureMap::shape).collect();
        assert_eq!(shapes, vec![(8, 8, 6), (16, 4, 3), (32, 2, 2)]);
    }

    #[test]
    fn weights_round_trip_through_file_format() {
        let stack = ConvStack::toy();
        let back = ConvStack::from_bytes(&stack.to_bytes()).unwrap();
        assert_eq!(back, stack);
        let bytes = stack.to_bytes();
        assert!(ConvStack::from_bytes(&bytes[..bytes.len() - 2]).is_err());
    }

    #[test]
    fn single_tap_convolution() {
        let layer = ConvLayer {
            out_channels: 1,
            in_channels: 1,
            kernel: 1,
            stride: 1,
            weights: vec![2.0],
            bias: vec![-1.0],
        };
        let stack = ConvStack::new(vec![layer]).unwrap();
        let img = FeatureMap::from_vec(1, 1, 3, vec![0.0, 1.0, 2.0]).unwrap();
        let out = stack.extract(&img).unwrap();
        assert_eq!(out[0].data(), &[0.0, 1.0, 3.0]);
    }

    #[test]
    fn rejects_unchained_layers() {
        let mut layers = ConvStack::toy().layers().to_vec();
        layers.swap(0, 1);
        assert!(ConvStack::new(layers).is_err());
    }
}
