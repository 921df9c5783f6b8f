//! Transformation flows: per-target-pixel coordinates into a source image,
//! built from correspondence maps of two renders of the same face table.

mod tasks;

use std::path::Path;

use nalgebra::Vector2;
use rayon::prelude::*;

use crate::camera::{normalized_to_pixel, pixel_to_normalized, ProjectedMesh};
use crate::error::{Error, Result};
use crate::io::{put_f32, put_u32, read_file, write_atomic, ByteReader};
use crate::raster::{face_table_fingerprint, silhouette, CorrespondenceMap};
use crate::tensor::{encode_png, FeatureMap, Mask};

pub use tasks::{
    flow_for_imitation, flow_for_novel_view, flow_for_swap, rotation_from_euler_degrees,
    FlowBundle, SwapFlows,
};

/// Coordinate stored at pixels without a valid source location.
pub const INVALID: [f64; 2] = [-2.0, -2.0];

const FLOW_MAGIC: &[u8; 4] = b"LWTF";

/// `H x W` field of normalized source coordinates with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformFlow {
    width: usize,
    height: usize,
    coords: Vec<[f64; 2]>,
    valid: Vec<bool>,
}

impl TransformFlow {
    /// All pixels invalid.
    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            coords: vec![INVALID; width * height],
            valid: vec![false; width * height],
        }
    }

    /// Builds a flow from coordinates; `None` entries become invalid.
    pub fn from_coords(width: usize, height: usize, coords: Vec<Option<[f64; 2]>>) -> Result<Self> {
        if coords.len() != width * height {
            return Err(Error::dims("flow coordinates", width * height, coords.len()));
        }
        if coords.iter().flatten().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("flow coordinates must be finite".into()));
        }
        Ok(Self {
            width,
            height,
            valid: coords.iter().map(Option::is_some).collect(),
            coords: coords.into_iter().map(|c| c.unwrap_or(INVALID)).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Source coordinate at pixel `(x, y)`, or `None` if invalid.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<[f64; 2]> {
        let i = y * self.width + x;
        self.valid[i].then(|| self.coords[i])
    }

    /// Raw coordinates including the invalid sentinel.
    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_mask(&self) -> Mask {
        Mask::new(self.width, self.height, self.valid.clone()).expect("flow dims")
    }

    /// Keeps only the pixels set in `mask`.
    pub fn masked(&self, mask: &Mask) -> Result<TransformFlow> {
        if (mask.width(), mask.height()) != (self.width, self.height) {
            return Err(Error::dims(
                "flow mask",
                format!("{}x{}", self.width, self.height),
                format!("{}x{}", mask.width(), mask.height()),
            ));
        }
        let mut out = self.clone();
        for ((c, v), &m) in out.coords.iter_mut().zip(out.valid.iter_mut()).zip(mask.data()) {
            if !m {
                *c = INVALID;
                *v = false;
            }
        }
        Ok(out)
    }

    /// Header `{magic, W, H}` then per-pixel `(u, v)` as little-endian float32,
    /// sentinel included.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.coords.len());
        out.extend_from_slice(FLOW_MAGIC);
        put_u32(&mut out, self.width as u32);
        put_u32(&mut out, self.height as u32);
        for c in &self.coords {
            put_f32(&mut out, c[0] as f32);
            put_f32(&mut out, c[1] as f32);
        }
        out
    }

    /// Parses the raw format; pixels holding the sentinel are invalid.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new("flow", bytes);
        r.expect_magic(FLOW_MAGIC)?;
        let (w, h) = (r.u32()? as usize, r.u32()? as usize);
        let n = w
            .checked_mul(h)
            .ok_or_else(|| Error::format("flow", "size overflow"))?;
        r.expect_remaining(n, 8)?;
        let mut coords = Vec::with_capacity(n);
        for _ in 0..n {
            let (u, v) = (r.f32()? as f64, r.f32()? as f64);
            if !(u.is_finite() && v.is_finite()) {
                return Err(Error::format("flow", "non-finite coordinate"));
            }
            coords.push(([u, v] != INVALID).then_some([u, v]));
        }
        r.finish()?;
        TransformFlow::from_coords(w, h, coords)
    }

    pub fn write_bin(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn read_bin(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }

    /// False-color view: red/green encode the displacement from the identity
    /// grid (0.5 = none, saturating at one full image width), blue marks valid
    /// pixels. Invalid pixels are black.
    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let mut raw = Vec::with_capacity(3 * self.coords.len());
        for y in 0..self.height {
            for x in 0..self.width {
                match self.get(x, y) {
                    Some([u, v]) => {
                        let du = u - pixel_to_normalized(x, self.width);
                        let dv = v - pixel_to_normalized(y, self.height);
                        let to_u8 = |d: f64| ((d * 0.25 + 0.5).clamp(0.0, 1.0) * 255.0).round() as u8;
                        raw.extend_from_slice(&[to_u8(du), to_u8(dv), 255]);
                    }
                    None => raw.extend_from_slice(&[0, 0, 0]),
                }
            }
        }
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .ok_or_else(|| Error::Invariant("flow PNG size".into()))?;
        encode_png(&image::DynamicImage::ImageRgb8(img))
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_png_bytes()?)
    }
}

/// Identity flow: each pixel maps to its own normalized center.
pub fn mesh_grid(width: usize, height: usize) -> TransformFlow {
    let mut coords = Vec::with_capacity(width * height);
    for y in 0..height {
        let v = pixel_to_normalized(y, height);
        for x in 0..width {
            coords.push([pixel_to_normalized(x, width), v]);
        }
    }
    TransformFlow {
        width,
        height,
        coords,
        valid: vec![true; width * height],
    }
}

/// Per-face anchor: the centroid of the face's projected vertices.
pub fn face_coords(pm: &ProjectedMesh) -> Vec<Vector2<f64>> {
    pm.faces
        .iter()
        .map(|f| (pm.coords[f[0] as usize] + pm.coords[f[1] as usize] + pm.coords[f[2] as usize]) / 3.0)
        .collect()
}

fn check_face_table(src: &ProjectedMesh, target: &CorrespondenceMap) -> Result<()> {
    match target.face_table() {
        Some(fp) if fp != face_table_fingerprint(&src.faces) => Err(Error::FaceTableMismatch),
        Some(_) => Ok(()),
        None if target.num_faces() > src.faces.len() => Err(Error::FaceTableMismatch),
        None => Ok(()),
    }
}

/// For every covered target pixel, the barycentric combination of the source
/// projection of the same face's vertices.
pub fn compose_flow(src: &ProjectedMesh, target: &CorrespondenceMap) -> Result<TransformFlow> {
    check_face_table(src, target)?;
    let (w, h) = (target.width(), target.height());
    let mut coords = vec![INVALID; w * h];
    let mut valid = vec![false; w * h];
    coords
        .par_chunks_mut(w)
        .zip(valid.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (row, row_valid))| {
            for x in 0..w {
                if let Some(frag) = target.get(x, y) {
                    let face = src.faces[frag.face as usize];
                    let mut p = Vector2::zeros();
                    for (k, &vi) in face.iter().enumerate() {
                        p += src.coords[vi as usize] * frag.barycentric[k];
                    }
                    row[x] = [p.x, p.y];
                    row_valid[x] = true;
                }
            }
        });
    Ok(TransformFlow {
        width: w,
        height: h,
        coords,
        valid,
    })
}

/// Valid target pixels whose source location is hidden behind another face
/// (or falls outside the image) in the source render. Best-effort: compares
/// face indices at the nearest source pixel.
pub fn source_occlusion(
    flow: &TransformFlow,
    target: &CorrespondenceMap,
    source: &CorrespondenceMap,
) -> Result<Mask> {
    if (flow.width, flow.height) != (target.width(), target.height()) {
        return Err(Error::dims(
            "occlusion target",
            format!("{}x{}", flow.width, flow.height),
            format!("{}x{}", target.width(), target.height()),
        ));
    }
    let (sw, sh) = (source.width(), source.height());
    let mut out = vec![false; flow.width * flow.height];
    for y in 0..flow.height {
        for x in 0..flow.width {
            let (Some([u, v]), Some(frag)) = (flow.get(x, y), target.get(x, y)) else {
                continue;
            };
            let sx = normalized_to_pixel(u, sw).round();
            let sy = normalized_to_pixel(v, sh).round();
            let visible = sx >= 0.0
                && sy >= 0.0
                && (sx as usize) < sw
                && (sy as usize) < sh
                && source
                    .get(sx as usize, sy as usize)
                    .is_some_and(|s| s.face == frag.face);
            out[y * flow.width + x] = !visible;
        }
    }
    Mask::new(flow.width, flow.height, out)
}

/// Source image split by its silhouette.
#[derive(Debug, Clone)]
pub struct DecomposedSource {
    pub foreground: FeatureMap,
    pub background: FeatureMap,
    pub mask: Mask,
}

/// `foreground = I * mask`, `background = I * (1 - mask)`.
pub fn decompose(image: &FeatureMap, source_map: &CorrespondenceMap) -> Result<DecomposedSource> {
    let mask = silhouette(source_map);
    image.check_mask(&mask)?;
    let inverse = Mask::filled(mask.width(), mask.height(), true).and_not(&mask);
    Ok(DecomposedSource {
        foreground: image.masked(&mask)?,
        background: image.masked(&inverse)?,
        mask,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::raster::rasterize;

    fn square(offset: f64) -> ProjectedMesh {
        let pts = [(-0.6, -0.6), (0.6, -0.6), (0.6, 0.6), (-0.6, 0.6)];
        ProjectedMesh {
            coords: pts.iter().map(|&(x, y)| Vector2::new(x + offset, y)).collect(),
            depths: vec![0.0; 4],
            faces: Arc::new(vec![[0, 1, 2], [0, 2, 3]]),
        }
    }

    #[test]
    fn mesh_grid_corners_and_center() {
        let g = mesh_grid(2, 2);
        assert_eq!(g.coords(), &[[-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0], [1.0, 1.0]]);
        let g = mesh_grid(5, 3);
        assert_eq!(g.get(2, 1), Some([0.0, 0.0]));
    }

    #[test]
    fn centroid_and_translation() {
        let h = 3f64.sqrt() / 2.0;
        let pm = ProjectedMesh {
            coords: vec![Vector2::new(0.0, 0.0), Vector2::new(1.0, 0.0), Vector2::new(0.5, h)],
            depths: vec![0.0; 3],
            faces: Arc::new(vec![[0, 1, 2]]),
        };
        let c = face_coords(&pm)[0];
        assert!((c - Vector2::new(0.5, h / 3.0)).norm() < 1e-15);
        let a = face_coords(&square(0.0));
        let b = face_coords(&square(0.3));
        for (a, b) in a.iter().zip(&b) {
            assert!((b - a - Vector2::new(0.3, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn self_correspondence_is_identity() {
        let pm = square(0.0);
        let cmap = rasterize(&pm, 16, 16).unwrap();
        let flow = compose_flow(&pm, &cmap).unwrap();
        let grid = mesh_grid(16, 16);
        for y in 0..16 {
            for x in 0..16 {
                match flow.get(x, y) {
                    Some(c) => {
                        let g = grid.get(x, y).unwrap();
                        assert!((c[0] - g[0]).abs() < 1e-12 && (c[1] - g[1]).abs() < 1e-12);
                    }
                    None => assert!(cmap.get(x, y).is_none()),
                }
            }
        }
    }

    #[test]
    fn shifted_source_shifts_flow() {
        let target = square(0.0);
        let cmap = rasterize(&target, 16, 16).unwrap();
        let flow = compose_flow(&square(0.25), &cmap).unwrap();
        let grid = mesh_grid(16, 16);
        let mut n = 0;
        for (i, c) in flow.coords().iter().enumerate() {
            if flow.valid()[i] {
                assert!((c[0] - grid.coords()[i][0] - 0.25).abs() < 1e-4);
                assert!((c[1] - grid.coords()[i][1]).abs() < 1e-4);
                n += 1;
            }
        }
        assert!(n > 0);
    }

    #[test]
    fn face_table_mismatch_is_rejected() {
        let cmap = rasterize(&square(0.0), 8, 8).unwrap();
        let other = square(0.0).with_faces(vec![[0, 1, 2]]);
        assert!(matches!(compose_flow(&other, &cmap), Err(Error::FaceTableMismatch)));
    }

    #[test]
    fn decompose_partitions_exactly() {
        let pm = ProjectedMesh {
            coords: vec![Vector2::new(-2.0, -2.0), Vector2::new(0.0, -2.0), Vector2::new(0.0, 2.0), Vector2::new(-2.0, 2.0)],
            depths: vec![0.0; 4],
            faces: Arc::new(vec![[0, 1, 2], [0, 2, 3]]),
        };
        let cmap = rasterize(&pm, 9, 4).unwrap();
        let image = FeatureMap::from_fn(3, 4, 9, |c, y, x| (c as f32 - 1.0) * 0.3 + y as f32 * 0.01 - x as f32 * 0.07);
        let d = decompose(&image, &cmap).unwrap();
        for y in 0..4 {
            for x in 0..9 {
                assert_eq!(d.mask.get(x, y), x <= 4);
                for c in 0..3 {
                    let (f, b) = (d.foreground.get(c, y, x), d.background.get(c, y, x));
                    assert_eq!(f + b, image.get(c, y, x));
                    assert_eq!(if x <= 4 { b } else { f }, 0.0);
                }
            }
        }
        let empty = rasterize(&square(5.0), 9, 4).unwrap();
        let d = decompose(&image, &empty).unwrap();
        assert_eq!(d.background, image);
        assert!(d.foreground.data().iter().all(|&v| v == 0.0));
        assert!(decompose(&FeatureMap::zeros(3, 5, 9), &cmap).is_err());
    }

    #[test]
    fn binary_round_trip_preserves_validity() {
        let cmap = rasterize(&square(0.0), 10, 7).unwrap();
        let flow = compose_flow(&square(0.1), &cmap).unwrap();
        let back = TransformFlow::from_bytes(&flow.to_bytes()).unwrap();
        assert_eq!(back.valid(), flow.valid());
        for (a, b) in back.coords().iter().zip(flow.coords()) {
            assert!((a[0] - b[0]).abs() < 1e-6);
        }
        assert!(TransformFlow::from_bytes(&flow.to_bytes()[..20]).is_err());
    }

    #[test]
    fn masking_invalidates_outside() {
        let g = mesh_grid(3, 1);
        let m = Mask::new(3, 1, vec![true, false, true]).unwrap();
        let f = g.masked(&m).unwrap();
        assert_eq!(f.get(1, 0), None);
        assert_eq!(f.coords()[1], INVALID);
        assert_eq!(f.get(2, 0), Some([1.0, 0.0]));
    }
}
