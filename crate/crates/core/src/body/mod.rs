//! Parametric body model: shape blendshapes, forward kinematics over a joint
//! tree, and linear blend skinning.
//!
//! The model is generic in its vertex, face, joint and shape-basis counts, so
//! a full SMPL dump and a 200-vertex synthetic humanoid are handled by the same
//! code. Pose-corrective blendshapes are not applied.

mod io;
mod kinematics;

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};

pub use io::{read_model, write_model, write_model_inline};
pub use kinematics::{
    forward_kinematics, rodrigues, shape_deform, skin, skin_vertices, skinning_transforms,
    RigidTransform,
};

/// Name of the vertex group kept from the first source in appearance transfer.
pub const HEAD_GROUP: &str = "head";
/// Name of the vertex group whose appearance is taken from the reference.
pub const BODY_GROUP: &str = "body";

pub type Face = [u32; 3];

/// Raw arrays used to assemble a [`BodyModel`]. Validated by [`BodyModel::new`].
#[derive(Debug, Clone, Default)]
pub struct BodyModelParts {
    pub template_vertices: Vec<Vector3<f64>>,
    pub faces: Vec<Face>,
    /// `N_b` bases, each holding one displacement per vertex.
    pub shape_blendshapes: Vec<Vec<Vector3<f64>>>,
    /// Row-major `N_j x N_v`.
    pub joint_regressor: Vec<f64>,
    pub kinematic_parents: Vec<Option<usize>>,
    /// Row-major `N_v x N_j`.
    pub skinning_weights: Vec<f64>,
    pub vertex_groups: BTreeMap<String, Vec<u32>>,
    /// Reserved: row-major `N_v*3 x (N_j-1)*9` pose correctives. Validated for
    /// shape when present but not applied.
    pub pose_blendshapes: Option<Vec<f64>>,
}

/// Immutable, validated body model.
#[derive(Debug, Clone)]
pub struct BodyModel {
    template_vertices: Vec<Vector3<f64>>,
    faces: Arc<Vec<Face>>,
    shape_blendshapes: Vec<Vec<Vector3<f64>>>,
    joint_regressor: Vec<f64>,
    kinematic_parents: Vec<Option<usize>>,
    skinning_weights: Vec<f64>,
    vertex_groups: BTreeMap<String, Vec<u32>>,
    pose_blendshapes: Option<Vec<f64>>,
}

const WEIGHT_SUM_TOLERANCE: f64 = 1e-6;

impl BodyModel {
    pub fn new(parts: BodyModelParts) -> Result<Self> {
        let BodyModelParts {
            template_vertices,
            faces,
            shape_blendshapes,
            joint_regressor,
            kinematic_parents,
            skinning_weights,
            vertex_groups,
            pose_blendshapes,
        } = parts;
        let bad = |msg: String| Err(Error::InvalidModel(msg));

        let n_v = template_vertices.len();
        let n_j = kinematic_parents.len();
        if n_v == 0 {
            return bad("model has no vertices".into());
        }
        if n_j == 0 {
            return bad("model has no joints".into());
        }
        if template_vertices
            .iter()
            .any(|v| !v.iter().all(|c| c.is_finite()))
        {
            return bad("template vertices contain non-finite values".into());
        }

        for (f, face) in faces.iter().enumerate() {
            if face.iter().any(|&i| i as usize >= n_v) {
                return bad(format!("face {f} references a vertex >= {n_v}"));
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return bad(format!("face {f} is degenerate: {face:?}"));
            }
        }

        for (b, basis) in shape_blendshapes.iter().enumerate() {
            if basis.len() != n_v {
                return bad(format!(
                    "shape blendshape {b} has {} displacements, expected {n_v}",
                    basis.len()
                ));
            }
            if basis.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
                return bad(format!("shape blendshape {b} contains non-finite values"));
            }
        }

        if joint_regressor.len() != n_j * n_v {
            return bad(format!(
                "joint regressor has {} entries, expected {n_j}x{n_v}",
                joint_regressor.len()
            ));
        }
        if joint_regressor.iter().any(|w| !w.is_finite()) {
            return bad("joint regressor contains non-finite values".into());
        }

        match kinematic_parents[0] {
            None => {}
            Some(p) => return bad(format!("joint 0 must be the root, has parent {p}")),
        }
        for (j, parent) in kinematic_parents.iter().enumerate().skip(1) {
            match parent {
                None => return bad(format!("joint {j} has no parent; only joint 0 may be root")),
                Some(p) if *p >= j => {
                    return bad(format!("joint {j} has parent {p}; parents must precede children"))
                }
                Some(_) => {}
            }
        }

        if skinning_weights.len() != n_v * n_j {
            return bad(format!(
                "skinning weights have {} entries, expected {n_v}x{n_j}",
                skinning_weights.len()
            ));
        }
        for (v, row) in skinning_weights.chunks_exact(n_j).enumerate() {
            if row.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return bad(format!("skinning weights of vertex {v} are negative or non-finite"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
                return bad(format!("skinning weights of vertex {v} sum to {sum}"));
            }
        }

        // head and body are disjoint; other groups may overlap freely
        let mut in_head_or_body = vec![false; n_v];
        for (name, indices) in &vertex_groups {
            let mut seen = vec![false; n_v];
            let exclusive = name == HEAD_GROUP || name == BODY_GROUP;
            for &i in indices {
                let i = i as usize;
                if i >= n_v {
                    return bad(format!("vertex group {name:?} references vertex {i} >= {n_v}"));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return bad(format!("vertex group {name:?} lists vertex {i} twice"));
                }
                if exclusive && std::mem::replace(&mut in_head_or_body[i], true) {
                    return bad(format!("vertex {i} is in both head and body groups"));
                }
            }
        }

        if let Some(pose) = &pose_blendshapes {
            let expected = n_v * 3 * n_j.saturating_sub(1) * 9;
            if pose.len() != expected {
                return bad(format!(
                    "pose blendshapes have {} entries, expected {expected}",
                    pose.len()
                ));
            }
        }

        Ok(Self {
            template_vertices,
            faces: Arc::new(faces),
            shape_blendshapes,
            joint_regressor,
            kinematic_parents,
            skinning_weights,
            vertex_groups,
            pose_blendshapes,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.template_vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn num_joints(&self) -> usize {
        self.kinematic_parents.len()
    }

    pub fn num_betas(&self) -> usize {
        self.shape_blendshapes.len()
    }

    pub fn template_vertices(&self) -> &[Vector3<f64>] {
        &self.template_vertices
    }

    pub fn faces(&self) -> &Arc<Vec<Face>> {
        &self.faces
    }

    pub fn shape_blendshapes(&self) -> &[Vec<Vector3<f64>>] {
        &self.shape_blendshapes
    }

    /// Row `j` of the joint regressor.
    pub fn joint_regressor_row(&self, joint: usize) -> &[f64] {
        let n_v = self.num_vertices();
        &self.joint_regressor[joint * n_v..(joint + 1) * n_v]
    }

    pub fn kinematic_parents(&self) -> &[Option<usize>] {
        &self.kinematic_parents
    }

    /// Skinning weights of vertex `v`, one per joint.
    pub fn skinning_weights_of(&self, vertex: usize) -> &[f64] {
        let n_j = self.num_joints();
        &self.skinning_weights[vertex * n_j..(vertex + 1) * n_j]
    }

    pub fn vertex_groups(&self) -> &BTreeMap<String, Vec<u32>> {
        &self.vertex_groups
    }

    pub fn vertex_group(&self, name: &str) -> Result<&[u32]> {
        self.vertex_groups
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingVertexGroup(name.to_string()))
    }

    pub fn pose_blendshapes(&self) -> Option<&[f64]> {
        self.pose_blendshapes.as_deref()
    }

    /// Faces whose three vertices all belong to the named group.
    pub fn group_faces(&self, name: &str) -> Result<Vec<Face>> {
        let group = self.vertex_group(name)?;
        let mut member = vec![false; self.num_vertices()];
        for &i in group {
            member[i as usize] = true;
        }
        Ok(self
            .faces
            .iter()
            .filter(|f| f.iter().all(|&i| member[i as usize]))
            .copied()
            .collect())
    }

    pub fn rest_params(&self, camera: Camera) -> BodyParams {
        BodyParams {
            theta: vec![[0.0; 3]; self.num_joints()],
            beta: vec![0.0; self.num_betas()],
            camera,
        }
    }

    pub(crate) fn check_params(&self, params: &BodyParams) -> Result<()> {
        params.validate()?;
        if params.theta.len() != self.num_joints() {
            return Err(Error::dims(
                "theta",
                format!("{} values", 3 * self.num_joints()),
                format!("{} values", 3 * params.theta.len()),
            ));
        }
        if params.beta.len() != self.num_betas() {
            return Err(Error::dims("beta", self.num_betas(), params.beta.len()));
        }
        Ok(())
    }
}

/// Pose, shape and camera of one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsFile", into = "ParamsFile")]
pub struct BodyParams {
    /// Axis-angle rotation per joint, radians.
    pub theta: Vec<[f64; 3]>,
    pub beta: Vec<f64>,
    pub camera: Camera,
}

impl BodyParams {
    pub fn validate(&self) -> Result<()> {
        if !self.theta.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::InvalidParams("theta contains non-finite values".into()));
        }
        if !self.beta.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParams("beta contains non-finite values".into()));
        }
        self.camera.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let params: BodyParams = serde_json::from_str(text)?;
        params.validate()?;
        Ok(params)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("params serialize");
        s.push('\n');
        s
    }
}

/// On-disk params layout: `{"theta": [...], "beta": [...], "camera": [s, tx, ty]}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    theta: Vec<f64>,
    beta: Vec<f64>,
    camera: [f64; 3],
}

impl TryFrom<ParamsFile> for BodyParams {
    type Error = String;

    fn try_from(raw: ParamsFile) -> std::result::Result<Self, String> {
        if !raw.theta.len().is_multiple_of(3) {
            return Err(format!(
                "theta has {} values, not a multiple of 3",
                raw.theta.len()
            ));
        }
        Ok(BodyParams {
            theta: raw.theta.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
            beta: raw.beta,
            camera: Camera {
                scale: raw.camera[0],
                tx: raw.camera[1],
                ty: raw.camera[2],
            },
        })
    }
}

impl From<BodyParams> for ParamsFile {
    fn from(p: BodyParams) -> Self {
        ParamsFile {
            theta: p.theta.iter().flatten().copied().collect(),
            beta: p.beta,
            camera: [p.camera.scale, p.camera.tx, p.camera.ty],
        }
    }
}

/// Posed triangle mesh. Shares its face table with the model it came from.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Arc<Vec<Face>>,
}

impl Mesh {
    pub fn centroid(&self) -> Vector3<f64> {
        let sum: Vector3<f64> = self.vertices.iter().sum();
        sum / self.vertices.len().max(1) as f64
    }

    /// Same vertices, restricted face table.
    pub fn with_faces(&self, faces: Vec<Face>) -> Mesh {
        Mesh {
            vertices: self.vertices.clone(),
            faces: Arc::new(faces),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_parts() -> BodyModelParts {
        BodyModelParts {
            template_vertices: vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
            ],
            faces: vec![[0, 1, 2]],
            shape_blendshapes: vec![],
            joint_regressor: vec![1.0 / 3.0; 3],
            kinematic_parents: vec![None],
            skinning_weights: vec![1.0; 3],
            vertex_groups: BTreeMap::new(),
            pose_blendshapes: None,
        }
    }

    #[test]
    fn accepts_minimal_model() {
        let model = BodyModel::new(tiny_parts()).unwrap();
        assert_eq!(model.num_vertices(), 3);
        assert_eq!(model.num_joints(), 1);
    }

    #[test]
    fn rejects_out_of_range_face() {
        let mut parts = tiny_parts();
        parts.faces = vec![[0, 1, 3]];
        assert!(matches!(BodyModel::new(parts), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn rejects_degenerate_face() {
        let mut parts = tiny_parts();
        parts.faces = vec![[0, 1, 1]];
        assert!(BodyModel::new(parts).is_err());
    }

    #[test]
    fn rejects_unnormalized_weights() {
        let mut parts = tiny_parts();
        parts.skinning_weights = vec![1.0, 1.0, 0.9];
        assert!(BodyModel::new(parts).is_err());
    }

    #[test]
    fn rejects_negative_weights() {
        let mut parts = tiny_parts();
        parts.kinematic_parents = vec![None, Some(0)];
        parts.joint_regressor = vec![1.0 / 3.0; 6];
        parts.skinning_weights = vec![1.5, -0.5, 1.0, 0.0, 1.0, 0.0];
        assert!(BodyModel::new(parts).is_err());
    }

    #[test]
    fn rejects_parent_after_child() {
        let mut parts = tiny_parts();
        parts.kinematic_parents = vec![None, Some(2), Some(0)];
        parts.joint_regressor = vec![1.0 / 3.0; 9];
        parts.skinning_weights = vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        assert!(BodyModel::new(parts).is_err());
    }

    #[test]
    fn rejects_second_root() {
        let mut parts = tiny_parts();
        parts.kinematic_parents = vec![None, None];
        parts.joint_regressor = vec![1.0 / 3.0; 6];
        parts.skinning_weights = vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        assert!(BodyModel::new(parts).is_err());
    }

    #[test]
    fn rejects_overlapping_head_and_body() {
        let mut parts = tiny_parts();
        parts.vertex_groups.insert(HEAD_GROUP.into(), vec![0, 1]);
        parts.vertex_groups.insert(BODY_GROUP.into(), vec![1, 2]);
        assert!(BodyModel::new(parts).is_err());
    }

    #[test]
    fn missing_group_is_reported() {
        let model = BodyModel::new(tiny_parts()).unwrap();
        assert!(matches!(
            model.vertex_group(HEAD_GROUP),
            Err(Error::MissingVertexGroup(_))
        ));
    }

    #[test]
    fn params_json_layout() {
        let json = r#"{"theta":[0,0,1.5,0,0,0],"beta":[0.5],"camera":[2.0,0.1,-0.2]}"#;
        let p = BodyParams::from_json(json).unwrap();
        assert_eq!(p.theta, vec![[0.0, 0.0, 1.5], [0.0; 3]]);
        assert_eq!(p.camera.scale, 2.0);
        let back = BodyParams::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn params_reject_bad_camera_and_theta() {
        assert!(BodyParams::from_json(r#"{"theta":[0,0],"beta":[],"camera":[1,0,0]}"#).is_err());
        assert!(BodyParams::from_json(r#"{"theta":[0,0,0],"beta":[],"camera":[0,0,0]}"#).is_err());
        assert!(
            BodyParams::from_json(r#"{"theta":[0,0,0],"beta":[],"camera":[-1,0,0]}"#).is_err()
        );
    }
}
