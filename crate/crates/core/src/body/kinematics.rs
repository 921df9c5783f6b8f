use nalgebra::{Matrix3, Vector3};

use super::{BodyModel, BodyParams, Mesh};
use crate::error::{Error, Result};

/// Rotation matrix for an axis-angle vector (angle = norm, axis = direction).
pub fn rodrigues(axis_angle: Vector3<f64>) -> Matrix3<f64> {
    let angle = axis_angle.norm();
    if angle == 0.0 {
        return Matrix3::identity();
    }
    // R = I + a K + b K^2 with K the cross-product matrix of the unnormalized
    // vector, a = sin(t)/t, b = (1 - cos t)/t^2 = 2 sin^2(t/2)/t^2.
    let (a, b) = if angle < 1e-6 {
        let t2 = angle * angle;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        let half = (0.5 * angle).sin();
        (angle.sin() / angle, 2.0 * half * half / (angle * angle))
    };
    let k = axis_angle.cross_matrix();
    Matrix3::identity() + k * a + k * k * b
}

/// Rotation followed by translation: `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * point + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

/// Template plus the beta-weighted sum of shape blendshapes.
pub fn shape_deform(model: &BodyModel, beta: &[f64]) -> Result<Vec<Vector3<f64>>> {
    if beta.len() != model.num_betas() {
        return Err(Error::dims("beta", model.num_betas(), beta.len()));
    }
    let mut vertices = model.template_vertices().to_vec();
    for (coefficient, basis) in beta.iter().zip(model.shape_blendshapes()) {
        if *coefficient == 0.0 {
            continue;
        }
        for (v, d) in vertices.iter_mut().zip(basis) {
            *v += d * *coefficient;
        }
    }
    Ok(vertices)
}

pub(crate) fn regress_joints(model: &BodyModel, vertices: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    (0..model.num_joints())
        .map(|j| {
            model
                .joint_regressor_row(j)
                .iter()
                .zip(vertices)
                .filter(|(w, _)| **w != 0.0)
                .map(|(w, v)| v * *w)
                .sum()
        })
        .collect()
}

fn check_theta(model: &BodyModel, theta: &[[f64; 3]]) -> Result<()> {
    if theta.len() != model.num_joints() {
        return Err(Error::dims(
            "theta",
            format!("{} values", 3 * model.num_joints()),
            format!("{} values", 3 * theta.len()),
        ));
    }
    Ok(())
}

/// Global transform of every joint. The translation part is the posed joint
/// position; at the rest pose each rotation is the identity.
pub fn forward_kinematics(
    model: &BodyModel,
    shaped_vertices: &[Vector3<f64>],
    theta: &[[f64; 3]],
) -> Result<Vec<RigidTransform>> {
    check_theta(model, theta)?;
    if shaped_vertices.len() != model.num_vertices() {
        return Err(Error::dims(
            "shaped vertices",
            model.num_vertices(),
            shaped_vertices.len(),
        ));
    }
    let joints = regress_joints(model, shaped_vertices);
    Ok(chain_transforms(model.kinematic_parents(), &joints, theta))
}

fn chain_transforms(
    parents: &[Option<usize>],
    joints: &[Vector3<f64>],
    theta: &[[f64; 3]],
) -> Vec<RigidTransform> {
    let mut global: Vec<RigidTransform> = Vec::with_capacity(parents.len());
    for (j, parent) in parents.iter().enumerate() {
        let rotation = rodrigues(Vector3::from(theta[j]));
        let transform = match parent {
            None => RigidTransform {
                rotation,
                translation: joints[j],
            },
            Some(p) => global[*p].compose(&RigidTransform {
                rotation,
                translation: joints[j] - joints[*p],
            }),
        };
        global.push(transform);
    }
    global
}

/// Per-joint transforms mapping rest-pose (shaped) points to posed points.
pub fn skinning_transforms(
    model: &BodyModel,
    shaped_vertices: &[Vector3<f64>],
    theta: &[[f64; 3]],
) -> Result<Vec<RigidTransform>> {
    check_theta(model, theta)?;
    let joints = regress_joints(model, shaped_vertices);
    let global = chain_transforms(model.kinematic_parents(), &joints, theta);
    Ok(global
        .iter()
        .zip(&joints)
        .map(|(g, rest)| RigidTransform {
            rotation: g.rotation,
            translation: g.translation - g.rotation * rest,
        })
        .collect())
}

/// Linear blend skinning of already shape-deformed vertices.
pub fn skin_vertices(
    model: &BodyModel,
    shaped_vertices: &[Vector3<f64>],
    theta: &[[f64; 3]],
) -> Result<Vec<Vector3<f64>>> {
    let transforms = skinning_transforms(model, shaped_vertices, theta)?;
    Ok(shaped_vertices
        .iter()
        .enumerate()
        .map(|(v, rest)| {
            let mut posed = Vector3::zeros();
            for (w, t) in model.skinning_weights_of(v).iter().zip(&transforms) {
                if *w != 0.0 {
                    posed += t.apply(rest) * *w;
                }
            }
            posed
        })
        .collect())
}

/// Full body function: shape deformation, forward kinematics and skinning.
pub fn skin(model: &BodyModel, params: &BodyParams) -> Result<Mesh> {
    model.check_params(params)?;
    let shaped = shape_deform(model, &params.beta)?;
    let vertices = skin_vertices(model, &shaped, &params.theta)?;
    Ok(Mesh {
        vertices,
        faces: model.faces().clone(),
    })
}
