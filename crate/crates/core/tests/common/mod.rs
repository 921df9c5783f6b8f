//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use liquidwarp::body::{BodyModel, BodyModelParts};
use liquidwarp::camera::{pixel_to_normalized, ProjectedMesh};
use liquidwarp::tensor::{FeatureMap, Mask};
use nalgebra::{Matrix2, Vector2, Vector3};
use rand::Rng;

/// Nearest face at each pixel by testing every face: barycentrics from a 2x2
/// solve, candidates sorted by depth (stable, so ties keep the lower index).
pub fn brute_force_raster(pm: &ProjectedMesh, width: usize, height: usize) -> Vec<Option<(u32, [f64; 3], f64)>> {
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let p = Vector2::new(pixel_to_normalized(x, width), pixel_to_normalized(y, height));
            let mut hits = Vec::new();
            for (i, f) in pm.faces.iter().enumerate() {
                let [a, b, c] = f.map(|v| pm.coords[v as usize]);
                let m = Matrix2::from_columns(&[b - a, c - a]);
                let Some(inv) = m.try_inverse() else { continue };
                if m.determinant() == 0.0 {
                    continue;
                }
                let st = inv * (p - a);
                let w = [1.0 - st.x - st.y, st.x, st.y];
                if w.iter().all(|&v| v >= 0.0) {
                    let z = f.iter().zip(&w).map(|(&v, wi)| wi * pm.depths[v as usize]).sum::<f64>();
                    hits.push((i as u32, w, z));
                }
            }
            hits.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap());
            out.push(hits.first().copied());
        }
    }
    out
}

/// Independent random triangles, a mix of large and small, partly off-screen.
pub fn random_mesh(rng: &mut impl Rng, faces: usize) -> ProjectedMesh {
    let mut coords = Vec::new();
    let mut depths = Vec::new();
    let mut table = Vec::new();
    for i in 0..faces {
        let center = Vector2::new(rng.gen_range(-1.1..1.1), rng.gen_range(-1.1..1.1));
        let size = if i % 3 == 0 { 0.8 } else { 0.25 };
        let base = coords.len() as u32;
        for _ in 0..3 {
            coords.push(center + Vector2::new(rng.gen_range(-size..size), rng.gen_range(-size..size)));
            depths.push(rng.gen_range(-1.0..1.0));
        }
        table.push([base, base + 1, base + 2]);
    }
    ProjectedMesh {
        coords,
        depths,
        faces: Arc::new(table),
    }
}

/// Kinematic chain along +x with joints at (0,0,0), (1,0,0), ..., one
/// marker vertex per joint (skinned to that joint's parent, or the root) and
/// a thin triangle fan so the face table is valid.
pub fn chain_model(joints: usize) -> BodyModel {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for j in 0..joints {
        vertices.push(Vector3::new(j as f64, 0.0, 0.0));
    }
    for j in 0..joints {
        vertices.push(Vector3::new(j as f64 + 0.5, 0.1, 0.0));
    }
    for j in 0..joints {
        faces.push([j as u32, (joints + j) as u32, ((j + 1) % joints) as u32]);
    }
    let n_v = vertices.len();
    let mut regressor = vec![0.0; joints * n_v];
    let mut weights = vec![0.0; n_v * joints];
    for j in 0..joints {
        regressor[j * n_v + j] = 1.0;
        let owner = j.saturating_sub(1);
        weights[j * joints + owner] = 1.0;
        weights[(joints + j) * joints + j] = 1.0;
    }
    let mut groups = BTreeMap::new();
    groups.insert("body".to_string(), (0..n_v as u32).collect());
    BodyModel::new(BodyModelParts {
        template_vertices: vertices,
        faces,
        shape_blendshapes: vec![],
        joint_regressor: regressor,
        kinematic_parents: (0..joints).map(|j| j.checked_sub(1)).collect(),
        skinning_weights: weights,
        vertex_groups: groups,
        pose_blendshapes: None,
    })
    .unwrap()
}

/// Mean SSIM by direct weighted sums over every 11x11 window of a
/// single-channel plane.
pub fn naive_ssim(a: &[f64], b: &[f64], width: usize, height: usize) -> f64 {
    const K: usize = 11;
    let mut kernel = [[0.0f64; K]; K];
    let mut total = 0.0;
    for (i, row) in kernel.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / 4.5).exp();
            total += *v;
        }
    }
    let c1 = (0.01f64).powi(2);
    let c2 = (0.03f64).powi(2);
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in 0..=height - K {
        for x in 0..=width - K {
            let mut s = [0.0f64; 5];
            for i in 0..K {
                for j in 0..K {
                    let w = kernel[i][j] / total;
                    let (va, vb) = (a[(y + i) * width + x + j], b[(y + i) * width + x + j]);
                    s[0] += w * va;
                    s[1] += w * vb;
                    s[2] += w * va * va;
                    s[3] += w * vb * vb;
                    s[4] += w * va * vb;
                }
            }
            let (ma, mb) = (s[0], s[1]);
            let (va, vb, cov) = (s[2] - ma * ma, s[3] - mb * mb, s[4] - ma * mb);
            sum += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            n += 1;
        }
    }
    sum / n as f64
}

pub fn random_map(rng: &mut impl Rng, c: usize, h: usize, w: usize, lo: f32, hi: f32) -> FeatureMap {
    FeatureMap::from_fn(c, h, w, |_, _, _| rng.gen_range(lo..hi))
}

/// Rows spanned by the set pixels, as `y1 - y0 + 1`.
pub fn mask_height(mask: &Mask) -> usize {
    mask.bounding_box().map_or(0, |(_, y0, _, y1)| y1 - y0 + 1)
}

/// Every set pixel of `a` has a set pixel of `b` within Chebyshev distance `r`.
pub fn covered_within(a: &Mask, b: &Mask, r: usize) -> bool {
    let (w, h) = (a.width(), a.height());
    (0..h).all(|y| {
        (0..w).all(|x| {
            !a.get(x, y)
                || (y.saturating_sub(r)..=(y + r).min(h - 1))
                    .any(|yy| (x.saturating_sub(r)..=(x + r).min(w - 1)).any(|xx| b.get(xx, yy)))
        })
    })
}
