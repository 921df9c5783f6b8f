//! Procedural test subject: a six-part capsule humanoid with a rest-space
//! checkerboard texture, plus helpers for seeded parameters and renders.
//!
//! Image conventions apply in model space too: `+y` points down (the head is
//! at negative `y`) and the camera looks along `+z`, so smaller `z` is nearer.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::body::{skin, BodyModel, BodyModelParts, BodyParams, Face, BODY_GROUP, HEAD_GROUP};
use crate::camera::{pixel_to_normalized, project, Camera, ProjectedMesh};
use crate::error::Result;
use crate::raster::{rasterize, CorrespondenceMap};
use crate::tensor::FeatureMap;

pub const ROOT: usize = 0;
pub const LEFT_ARM: usize = 1;
pub const RIGHT_ARM: usize = 2;
pub const LEFT_LEG: usize = 3;
pub const RIGHT_LEG: usize = 4;
pub const HEAD: usize = 5;
pub const NUM_JOINTS: usize = 6;

/// Index of the shape coefficient that stretches the body vertically.
pub const HEIGHT_BETA: usize = 0;
/// Index of the shape coefficient that widens the body.
pub const WIDTH_BETA: usize = 1;

const SEGMENTS: usize = 8;
const RINGS: usize = 4;
const CAPSULE_VERTICES: usize = SEGMENTS * RINGS + 2;

struct Capsule {
    joint: usize,
    start: Vector3<f64>,
    end: Vector3<f64>,
    radius: f64,
}

fn parts() -> [Capsule; NUM_JOINTS] {
    let c = |joint, start: [f64; 3], end: [f64; 3], radius| Capsule {
        joint,
        start: Vector3::from(start),
        end: Vector3::from(end),
        radius,
    };
    [
        c(ROOT, [0.0, -0.42, 0.0], [0.0, 0.15, 0.0], 0.17),
        c(LEFT_ARM, [-0.23, -0.38, 0.0], [-0.27, 0.10, 0.0], 0.05),
        c(RIGHT_ARM, [0.23, -0.38, 0.0], [0.27, 0.10, 0.0], 0.05),
        c(LEFT_LEG, [-0.09, 0.15, 0.0], [-0.10, 0.65, 0.0], 0.065),
        c(RIGHT_LEG, [0.09, 0.15, 0.0], [0.10, 0.65, 0.0], 0.065),
        c(HEAD, [0.0, -0.50, 0.0], [0.0, -0.64, 0.0], 0.10),
    ]
}

/// The humanoid body model: 204 vertices, 384 faces, 6 joints (every limb
/// and the head hang off the root) and two shape coefficients.
pub fn humanoid() -> BodyModel {
    let parts = parts();
    let n_v = parts.len() * CAPSULE_VERTICES;
    let mut vertices = Vec::with_capacity(n_v);
    let mut faces: Vec<Face> = Vec::new();
    let mut regressor = vec![0.0; NUM_JOINTS * n_v];
    let mut weights = vec![0.0; n_v * NUM_JOINTS];
    let mut head = Vec::new();
    let mut body = Vec::new();

    for part in &parts {
        let base = vertices.len();
        let axis = (part.end - part.start).normalize();
        let e1 = axis.cross(&Vector3::z()).normalize();
        let e2 = e1.cross(&axis);
        for k in 0..RINGS {
            let center = part.start + (part.end - part.start) * (k as f64 / (RINGS - 1) as f64);
            for j in 0..SEGMENTS {
                let phi = 2.0 * PI * j as f64 / SEGMENTS as f64;
                vertices.push(center + (e1 * phi.cos() + e2 * phi.sin()) * part.radius);
            }
        }
        vertices.push(part.start - axis * (0.6 * part.radius));
        vertices.push(part.end + axis * (0.6 * part.radius));

        let ring = |k: usize, j: usize| (base + k * SEGMENTS + j % SEGMENTS) as u32;
        let (pole_start, pole_end) = ((base + RINGS * SEGMENTS) as u32, (base + RINGS * SEGMENTS + 1) as u32);
        for j in 0..SEGMENTS {
            for k in 0..RINGS - 1 {
                faces.push([ring(k, j), ring(k, j + 1), ring(k + 1, j + 1)]);
                faces.push([ring(k, j), ring(k + 1, j + 1), ring(k + 1, j)]);
            }
            faces.push([pole_start, ring(0, j + 1), ring(0, j)]);
            faces.push([pole_end, ring(RINGS - 1, j), ring(RINGS - 1, j + 1)]);
        }

        // Limbs and head pivot at the ring where they attach; the root at the
        // torso's middle.
        let pivot_ring: Vec<usize> = if part.joint == ROOT {
            (base..base + RINGS * SEGMENTS).collect()
        } else {
            (base..base + SEGMENTS).collect()
        };
        for &v in &pivot_ring {
            regressor[part.joint * n_v + v] = 1.0 / pivot_ring.len() as f64;
        }
        for v in base..base + CAPSULE_VERTICES {
            weights[v * NUM_JOINTS + part.joint] = 1.0;
            if part.joint == HEAD { &mut head } else { &mut body }.push(v as u32);
        }
    }

    let height = vertices.iter().map(|v| Vector3::new(0.0, v.y, 0.0)).collect();
    let width = vertices.iter().map(|v| Vector3::new(v.x, 0.0, v.z)).collect();
    let mut groups = BTreeMap::new();
    groups.insert(HEAD_GROUP.to_string(), head);
    groups.insert(BODY_GROUP.to_string(), body);
    let mut parents = vec![Some(ROOT); NUM_JOINTS];
    parents[ROOT] = None;

    BodyModel::new(BodyModelParts {
        template_vertices: vertices,
        faces,
        shape_blendshapes: vec![height, width],
        joint_regressor: regressor,
        kinematic_parents: parents,
        skinning_weights: weights,
        vertex_groups: groups,
        pose_blendshapes: None,
    })
    .expect("synthetic humanoid is well formed")
}

/// Camera that frames the humanoid with a small margin for moderate shape changes.
pub fn default_camera() -> Camera {
    Camera {
        scale: 0.9,
        tx: 0.0,
        ty: 0.05,
    }
}

/// Random pose and shape. Every joint gets an axis-angle of magnitude at most
/// `max_angle` radians (the root a third of that); shape coefficients are in
/// `[-0.2, 0.2]`.
pub fn random_params(rng: &mut impl Rng, max_angle: f64) -> BodyParams {
    let mut theta = Vec::with_capacity(NUM_JOINTS);
    for j in 0..NUM_JOINTS {
        let limit = if j == ROOT { max_angle / 3.0 } else { max_angle };
        let axis = loop {
            let a = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let n = a.norm();
            if n > 1e-3 && n <= 1.0 {
                break a / n;
            }
        };
        let angle = rng.gen_range(0.0..=limit);
        let v: Vector3<f64> = axis * angle;
        theta.push([v.x, v.y, v.z]);
    }
    BodyParams {
        theta,
        beta: vec![rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)],
        camera: default_camera(),
    }
}

/// Source and reference parameters derived from one seed.
pub fn params_pair(seed: u64) -> (BodyParams, BodyParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (random_params(&mut rng, 0.6), random_params(&mut rng, 0.6))
}

const TINTS: [[f64; 3]; NUM_JOINTS] = [
    [0.85, 0.35, 0.30],
    [0.30, 0.70, 0.35],
    [0.30, 0.45, 0.85],
    [0.85, 0.75, 0.25],
    [0.70, 0.35, 0.80],
    [0.95, 0.80, 0.65],
];

/// Surface color of a rest-space point on a part, in `[0, 1]`.
pub fn texture(part: usize, rest: &Vector3<f64>) -> [f64; 3] {
    let cell = (rest * 10.0).map(f64::floor);
    let checker = (cell.x + cell.y + cell.z).rem_euclid(2.0);
    let shade = 0.55 + 0.45 * checker;
    TINTS[part % NUM_JOINTS].map(|t| t * shade)
}

/// Background color at a pixel, in `[0, 1]`. Diagonal stripes keep it
/// distinguishable from the body.
pub fn background_color(x: usize, y: usize, width: usize, height: usize) -> [f64; 3] {
    let u = pixel_to_normalized(x, width);
    let v = pixel_to_normalized(y, height);
    let stripe = if ((x + 2 * y) / 6).is_multiple_of(2) { 0.08 } else { 0.0 };
    [0.15 + 0.1 * u + stripe, 0.2 + stripe, 0.3 + 0.1 * v + stripe]
}

fn dominant_joint(model: &BodyModel, vertex: usize) -> usize {
    let w = model.skinning_weights_of(vertex);
    (0..w.len()).fold(0, |best, j| if w[j] > w[best] { j } else { best })
}

/// A textured render and its correspondence map.
pub struct Render {
    /// Image with values in `[-1, 1]`.
    pub image: FeatureMap,
    pub map: CorrespondenceMap,
    pub projection: ProjectedMesh,
}

/// Renders the model under `params` with the rest-space texture over the
/// striped background.
pub fn render(model: &BodyModel, params: &BodyParams, width: usize, height: usize) -> Result<Render> {
    let projection = project(&skin(model, params)?, &params.camera);
    let map = rasterize(&projection, width, height)?;
    let template = model.template_vertices();
    let faces = model.faces();
    let mut image = FeatureMap::zeros(3, height, width);
    for y in 0..height {
        for x in 0..width {
            let color = match map.get(x, y) {
                Some(frag) => {
                    let face = faces[frag.face as usize];
                    let rest = (0..3).fold(Vector3::zeros(), |acc, i| {
                        acc + template[face[i] as usize] * frag.barycentric[i]
                    });
                    texture(dominant_joint(model, face[0] as usize), &rest)
                }
                None => background_color(x, y, width, height),
            };
            for (c, v) in color.iter().enumerate() {
                image.set(c, y, x, (v * 2.0 - 1.0) as f32);
            }
        }
    }
    Ok(Render {
        image,
        map,
        projection,
    })
}

/// Regular grid of `cols x rows` quads covering the normalized square, each
/// split into two triangles with random depths; `84 x 82` gives 13,776 faces.
pub fn grid_mesh(cols: usize, rows: usize, seed: u64) -> ProjectedMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity((cols + 1) * (rows + 1));
    let mut depths = Vec::with_capacity(coords.capacity());
    for r in 0..=rows {
        for c in 0..=cols {
            let jitter = |rng: &mut ChaCha8Rng, n: usize| rng.gen_range(-0.3..0.3) / n as f64;
            let x = 2.0 * c as f64 / cols as f64 - 1.0 + jitter(&mut rng, cols);
            let y = 2.0 * r as f64 / rows as f64 - 1.0 + jitter(&mut rng, rows);
            coords.push(Vector2::new(x, y));
            depths.push(rng.gen_range(0.0..1.0));
        }
    }
    let idx = |r: usize, c: usize| (r * (cols + 1) + c) as u32;
    let mut faces = Vec::with_capacity(2 * cols * rows);
    for r in 0..rows {
        for c in 0..cols {
            faces.push([idx(r, c), idx(r, c + 1), idx(r + 1, c + 1)]);
            faces.push([idx(r, c), idx(r + 1, c + 1), idx(r + 1, c)]);
        }
    }
    ProjectedMesh {
        coords,
        depths,
        faces: Arc::new(faces),
    }
}
