//! Deterministic z-buffered rasterization of projected meshes into
//! correspondence maps.
//!
//! Every pixel center is tested against every face whose bounding box covers
//! it, in face-index order. A face wins a pixel when its inclusive barycentric
//! test passes and it is nearer than the current winner by more than
//! [`DEPTH_TIE`]; otherwise the earlier face keeps the pixel. Rows are split
//! into fixed bands that may run in parallel, and since each pixel sees the
//! same sequence of comparisons the result does not depend on the schedule.

use std::path::Path;

use nalgebra::Vector2;
use rayon::prelude::*;

use crate::body::Face;
use crate::camera::{normalized_to_pixel, pixel_to_normalized, ProjectedMesh};
use crate::error::{Error, Result};
use crate::io::{put_f32, put_i32, put_u32, read_file, write_atomic, ByteReader};
use crate::tensor::{encode_png, FeatureMap, Mask};

/// Depth margin a later face must beat to take a pixel from an earlier one.
pub const DEPTH_TIE: f64 = 1e-12;

const MAP_MAGIC: &[u8; 4] = b"LWCM";
const BAND_ROWS: usize = 16;

/// One correspondence-map sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fragment {
    pub face: u32,
    pub barycentric: [f64; 3],
    pub depth: f64,
}

/// Per-pixel face index, barycentric weights and depth of the front-most face.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceMap {
    width: usize,
    height: usize,
    num_faces: usize,
    face_table: Option<u64>,
    pixels: Vec<Option<Fragment>>,
}

/// Hash of a face table, used to check that a map was rendered from it.
pub fn face_table_fingerprint(faces: &[Face]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &i in faces.iter().flatten() {
        for b in i.to_le_bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    hash ^ faces.len() as u64
}

impl CorrespondenceMap {
    pub fn empty(width: usize, height: usize, num_faces: usize) -> Self {
        Self {
            width,
            height,
            num_faces,
            face_table: None,
            pixels: vec![None; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Size of the face table the map indexes into.
    pub fn num_faces(&self) -> usize {
        self.num_faces
    }

    /// Fingerprint of the face table used to render this map, when known.
    pub fn face_table(&self) -> Option<u64> {
        self.face_table
    }

    pub fn get(&self, x: usize, y: usize) -> Option<&Fragment> {
        self.pixels[y * self.width + x].as_ref()
    }

    pub fn pixels(&self) -> &[Option<Fragment>] {
        &self.pixels
    }

    pub fn covered(&self) -> usize {
        self.pixels.iter().filter(|p| p.is_some()).count()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 20 * self.pixels.len());
        out.extend_from_slice(MAP_MAGIC);
        put_u32(&mut out, self.width as u32);
        put_u32(&mut out, self.height as u32);
        for px in &self.pixels {
            match px {
                Some(f) => {
                    put_i32(&mut out, f.face as i32);
                    for w in f.barycentric {
                        put_f32(&mut out, w as f32);
                    }
                    put_f32(&mut out, f.depth as f32);
                }
                None => {
                    put_i32(&mut out, -1);
                    for _ in 0..4 {
                        put_f32(&mut out, 0.0);
                    }
                }
            }
        }
        out
    }

    /// Parses the raw format. The face-table size is taken as one past the
    /// largest face index present.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new("correspondence map", bytes);
        r.expect_magic(MAP_MAGIC)?;
        let (w, h) = (r.u32()? as usize, r.u32()? as usize);
        let n = w
            .checked_mul(h)
            .ok_or_else(|| Error::format("correspondence map", "size overflow"))?;
        r.expect_remaining(n, 20)?;
        let mut pixels = Vec::with_capacity(n);
        let mut num_faces = 0usize;
        for _ in 0..n {
            let face = r.i32()?;
            let barycentric = [r.f32()? as f64, r.f32()? as f64, r.f32()? as f64];
            let depth = r.f32()? as f64;
            pixels.push(match face {
                -1 => None,
                f if f >= 0 => {
                    num_faces = num_faces.max(f as usize + 1);
                    Some(Fragment {
                        face: f as u32,
                        barycentric,
                        depth,
                    })
                }
                f => {
                    return Err(Error::format(
                        "correspondence map",
                        format!("invalid face index {f}"),
                    ))
                }
            });
        }
        r.finish()?;
        Ok(Self {
            width: w,
            height: h,
            num_faces,
            face_table: None,
            pixels,
        })
    }

    pub fn write_bin(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn read_bin(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }

    /// 16-bit RGB PNG of [`encode_visual`]: red holds the face bucket
    /// `floor(face * 65536 / N_f)`, green and blue the first two weights.
    pub fn to_visual_png_bytes(&self) -> Result<Vec<u8>> {
        let n_f = self.num_faces.max(1) as u64;
        let mut raw = Vec::with_capacity(3 * self.pixels.len());
        for px in &self.pixels {
            match px {
                Some(f) => {
                    raw.push((f.face as u64 * 65536 / n_f).min(65535) as u16);
                    for w in &f.barycentric[..2] {
                        raw.push((w.clamp(0.0, 1.0) * 65535.0).round() as u16);
                    }
                }
                None => raw.extend_from_slice(&[0, 0, 0]),
            }
        }
        let img = image::ImageBuffer::<image::Rgb<u16>, _>::from_raw(
            self.width as u32,
            self.height as u32,
            raw,
        )
        .ok_or_else(|| Error::Invariant("visual PNG size".into()))?;
        encode_png(&image::DynamicImage::ImageRgb16(img))
    }

    pub fn write_visual_png(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_visual_png_bytes()?)
    }
}

/// Recovers a face index from the 16-bit red channel of the visual PNG.
/// Exact for face tables of at most 65,536 faces.
pub fn decode_face_bucket(red: u16, num_faces: usize) -> u32 {
    ((red as u64 * num_faces as u64).div_ceil(65536)) as u32
}

/// Recovers a face index from channel 0 of [`encode_visual`].
pub fn decode_face_channel(value: f32, num_faces: usize) -> u32 {
    (value as f64 * num_faces as f64).round() as u32
}

struct FaceSetup {
    index: u32,
    v: [Vector2<f64>; 3],
    z: [f64; 3],
    inv_area: f64,
    x_range: (usize, usize),
    y_range: (usize, usize),
}

#[inline]
fn edge(a: &Vector2<f64>, b: &Vector2<f64>, p: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Inclusive pixel-index range whose centers may fall in `[lo, hi]`.
fn pixel_span(lo: f64, hi: f64, size: usize) -> Option<(usize, usize)> {
    let a = normalized_to_pixel(lo, size).floor() - 1.0;
    let b = normalized_to_pixel(hi, size).ceil() + 1.0;
    if b < 0.0 || a > (size - 1) as f64 {
        return None;
    }
    Some((a.max(0.0) as usize, (b as usize).min(size - 1)))
}

fn setup_faces(pm: &ProjectedMesh, width: usize, height: usize) -> Vec<FaceSetup> {
    pm.faces
        .iter()
        .enumerate()
        .filter_map(|(index, face)| {
            let v = face.map(|i| pm.coords[i as usize]);
            let z = face.map(|i| pm.depths[i as usize]);
            let area = edge(&v[0], &v[1], &v[2]);
            if area == 0.0 || !area.is_finite() {
                return None;
            }
            let (min_x, max_x) = (v[0].x.min(v[1].x).min(v[2].x), v[0].x.max(v[1].x).max(v[2].x));
            let (min_y, max_y) = (v[0].y.min(v[1].y).min(v[2].y), v[0].y.max(v[1].y).max(v[2].y));
            Some(FaceSetup {
                index: index as u32,
                v,
                z,
                inv_area: 1.0 / area,
                x_range: pixel_span(min_x, max_x, width)?,
                y_range: pixel_span(min_y, max_y, height)?,
            })
        })
        .collect()
}

/// Inclusive point-in-triangle test at `p`; barycentric weights on success.
#[inline]
fn barycentric(f: &FaceSetup, p: &Vector2<f64>) -> Option<[f64; 3]> {
    let w0 = edge(&f.v[1], &f.v[2], p) * f.inv_area;
    let w1 = edge(&f.v[2], &f.v[0], p) * f.inv_area;
    let w2 = edge(&f.v[0], &f.v[1], p) * f.inv_area;
    (w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0).then_some([w0, w1, w2])
}

fn raster_band(
    faces: &[FaceSetup],
    xs: &[f64],
    ys: &[f64],
    row0: usize,
    band: &mut [Option<Fragment>],
) {
    let width = xs.len();
    let rows = band.len() / width;
    let row1 = row0 + rows - 1;
    for f in faces {
        if f.y_range.1 < row0 || f.y_range.0 > row1 {
            continue;
        }
        for row in f.y_range.0.max(row0)..=f.y_range.1.min(row1) {
            let line = &mut band[(row - row0) * width..(row - row0 + 1) * width];
            for col in f.x_range.0..=f.x_range.1 {
                let p = Vector2::new(xs[col], ys[row]);
                let Some(w) = barycentric(f, &p) else {
                    continue;
                };
                let depth = w[0] * f.z[0] + w[1] * f.z[1] + w[2] * f.z[2];
                let slot = &mut line[col];
                if slot.is_none_or(|cur| depth < cur.depth - DEPTH_TIE) {
                    *slot = Some(Fragment {
                        face: f.index,
                        barycentric: w,
                        depth,
                    });
                }
            }
        }
    }
}

/// Renders the front-most face at every pixel center of a `width x height` image.
pub fn rasterize(pm: &ProjectedMesh, width: usize, height: usize) -> Result<CorrespondenceMap> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidInput(format!(
            "raster size must be at least 1x1, got {width}x{height}"
        )));
    }
    let faces = setup_faces(pm, width, height);
    let xs: Vec<f64> = (0..width).map(|j| pixel_to_normalized(j, width)).collect();
    let ys: Vec<f64> = (0..height).map(|i| pixel_to_normalized(i, height)).collect();
    let mut pixels = vec![None; width * height];
    pixels
        .par_chunks_mut(BAND_ROWS * width)
        .enumerate()
        .for_each(|(b, band)| raster_band(&faces, &xs, &ys, b * BAND_ROWS, band));
    Ok(CorrespondenceMap {
        width,
        height,
        num_faces: pm.faces.len(),
        face_table: Some(face_table_fingerprint(&pm.faces)),
        pixels,
    })
}

/// Pixels covered by any face.
pub fn silhouette(cmap: &CorrespondenceMap) -> Mask {
    Mask::new(
        cmap.width,
        cmap.height,
        cmap.pixels.iter().map(Option::is_some).collect(),
    )
    .expect("map dims")
}

/// Three-channel encoding `(face / N_f, w1, w2)`; uncovered pixels are zero.
pub fn encode_visual(cmap: &CorrespondenceMap) -> FeatureMap {
    let n = cmap.width * cmap.height;
    let n_f = cmap.num_faces.max(1) as f64;
    let mut data = vec![0.0f32; 3 * n];
    for (i, px) in cmap.pixels.iter().enumerate() {
        if let Some(f) = px {
            data[i] = (f.face as f64 / n_f) as f32;
            data[n + i] = f.barycentric[0] as f32;
            data[2 * n + i] = f.barycentric[1] as f32;
        }
    }
    FeatureMap::from_vec(3, cmap.height, cmap.width, data).expect("map dims")
}
