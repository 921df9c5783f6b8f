//! Dense `C x H x W` float tensors, binary masks, and their file formats.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{put_f32, put_u32, read_file, write_atomic, ByteReader};

const FEATURE_MAGIC: &[u8; 4] = b"LWFM";

/// Row-major `C x H x W` float tensor. Images use `C = 3` with values in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::dims(
                "feature map data",
                format!("{channels}x{height}x{width}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f32) {
        self.data[(c * self.height + y) * self.width + x] = value;
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub(crate) fn check_same_shape(&self, other: &FeatureMap, context: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dims(
                context,
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(())
    }

    /// Elementwise product with a mask broadcast over channels.
    pub fn masked(&self, mask: &Mask) -> Result<FeatureMap> {
        self.check_mask(mask)?;
        let mut out = self.clone();
        for c in 0..self.channels {
            for (v, &m) in out.plane_mut(c).iter_mut().zip(mask.data()) {
                if !m {
                    *v = 0.0;
                }
            }
        }
        Ok(out)
    }

    pub(crate) fn check_mask(&self, mask: &Mask) -> Result<()> {
        if (self.height, self.width) != (mask.height(), mask.width()) {
            return Err(Error::dims(
                "mask",
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", mask.height(), mask.width()),
            ));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> FeatureMap {
        FeatureMap {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copies the `width x height` window whose top-left pixel is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<FeatureMap> {
        if width == 0 || height == 0 || x0 + width > self.width || y0 + height > self.height {
            return Err(Error::InvalidBox(format!(
                "{width}x{height} window at ({x0}, {y0}) in a {}x{} map",
                self.width, self.height
            )));
        }
        Ok(FeatureMap::from_fn(self.channels, height, width, |c, y, x| {
            self.get(c, y0 + y, x0 + x)
        }))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.data.len());
        out.extend_from_slice(FEATURE_MAGIC);
        put_u32(&mut out, self.channels as u32);
        put_u32(&mut out, self.height as u32);
        put_u32(&mut out, self.width as u32);
        for &v in &self.data {
            put_f32(&mut out, v);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<FeatureMap> {
        let mut r = ByteReader::new("feature map", bytes);
        r.expect_magic(FEATURE_MAGIC)?;
        let (c, h, w) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        let n = c
            .checked_mul(h)
            .and_then(|n| n.checked_mul(w))
            .ok_or_else(|| Error::format("feature map", "size overflow"))?;
        r.expect_remaining(n, 4)?;
        let data = (0..n).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        FeatureMap::from_vec(c, h, w, data)
    }

    pub fn write_bin(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn read_bin(path: &Path) -> Result<FeatureMap> {
        FeatureMap::from_bytes(&read_file(path)?)
    }

    /// Encodes a 1- or 3-channel map in `[-1, 1]` as an 8-bit PNG.
    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let to_u8 = quantize;
        let (w, h) = (self.width as u32, self.height as u32);
        let n = self.width * self.height;
        let buffer: image::DynamicImage = match self.channels {
            1 => image::GrayImage::from_raw(w, h, self.data.iter().map(|&v| to_u8(v)).collect())
                .map(image::DynamicImage::ImageLuma8),
            3 => {
                let mut raw = Vec::with_capacity(3 * n);
                for i in 0..n {
                    for c in 0..3 {
                        raw.push(to_u8(self.data[c * n + i]));
                    }
                }
                image::RgbImage::from_raw(w, h, raw).map(image::DynamicImage::ImageRgb8)
            }
            c => {
                return Err(Error::InvalidInput(format!(
                    "only 1- or 3-channel maps export to PNG, got {c}"
                )))
            }
        }
        .ok_or_else(|| Error::Invariant("PNG buffer size".into()))?;
        encode_png(&buffer)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_png_bytes()?)
    }

    /// Decodes a PNG as a 3-channel image in `[-1, 1]`.
    pub fn from_png_bytes(bytes: &[u8]) -> Result<FeatureMap> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?.to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let n = w * h;
        let mut data = vec![0.0f32; 3 * n];
        for (i, px) in img.pixels().enumerate() {
            for c in 0..3 {
                data[c * n + i] = px.0[c] as f32 / 255.0 * 2.0 - 1.0;
            }
        }
        FeatureMap::from_vec(3, h, w, data)
    }

    pub fn read_png(path: &Path) -> Result<FeatureMap> {
        FeatureMap::from_png_bytes(&read_file(path)?)
    }
}

pub(crate) fn encode_png(img: &image::DynamicImage) -> Result<Vec<u8>> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// `H x W` binary mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::dims("mask", width * height, data.len()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn and_not(&self, other: &Mask) -> Mask {
        self.zip_with(other, |a, b| a && !b)
    }

    fn zip_with(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Mask {
        assert_eq!((self.width, self.height), (other.width, other.height));
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Inclusive pixel bounds `(x_min, y_min, x_max, y_max)` of the set pixels.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bounds: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    bounds = Some(match bounds {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        bounds
    }

    /// `1.0` where set, `0.0` elsewhere, as a single-channel map.
    pub fn to_feature_map(&self) -> FeatureMap {
        FeatureMap::from_vec(
            1,
            self.height,
            self.width,
            self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
        .expect("mask dims")
    }

    /// 8-bit grayscale PNG, 255 where set.
    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let raw = self.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, raw)
            .ok_or_else(|| Error::Invariant("mask PNG size".into()))?;
        encode_png(&image::DynamicImage::ImageLuma8(img))
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_png_bytes()?)
    }

    /// Reads a grayscale PNG; any nonzero pixel is set.
    pub fn read_png(path: &Path) -> Result<Mask> {
        let img = image::load_from_memory_with_format(&read_file(path)?, image::ImageFormat::Png)?
            .to_luma8();
        Mask::new(
            img.width() as usize,
            img.height() as usize,
            img.pixels().map(|p| p.0[0] != 0).collect(),
        )
    }
}

/// `[-1, 1]` to `[0, 255]`, ties to even.
fn quantize(v: f32) -> u8 {
    quantize_scaled((v.clamp(-1.0, 1.0) as f64 + 1.0) * 127.5)
}

fn quantize_scaled(s: f64) -> u8 {
    s.round_ties_even().clamp(0.0, 255.0) as u8
}
