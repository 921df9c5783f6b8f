//! Body model files: a JSON manifest whose arrays are either inlined or stored
//! in an adjacent little-endian blob. See `docs/model-format.md`.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{BodyModel, BodyModelParts};
use crate::error::{Error, Result};
use crate::io::{read_file, read_text, write_atomic};

const FORMAT: &str = "liquidwarp.body-model";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    blob: Option<String>,
    kinematic_parents: Vec<i64>,
    #[serde(default)]
    vertex_groups: BTreeMap<String, Vec<u32>>,
    arrays: Arrays,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Arrays {
    template_vertices: ArraySpec,
    faces: ArraySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shape_blendshapes: Option<ArraySpec>,
    joint_regressor: ArraySpec,
    skinning_weights: ArraySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pose_blendshapes: Option<ArraySpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Dtype {
    F32,
    U32,
    I32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArraySpec {
    shape: Vec<usize>,
    #[serde(default = "default_dtype")]
    dtype: Dtype,
    /// Byte offset into the blob.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    offset: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    data: Option<Vec<f64>>,
}

fn default_dtype() -> Dtype {
    Dtype::F32
}

fn bad(reason: impl Into<String>) -> Error {
    Error::format("body model", reason)
}

impl ArraySpec {
    fn count(&self) -> usize {
        self.shape.iter().product()
    }

    fn load(&self, name: &str, blob: Option<&[u8]>, expected_shape: &[usize]) -> Result<Vec<f64>> {
        if self.shape != expected_shape {
            return Err(bad(format!(
                "array {name} has shape {:?}, expected {expected_shape:?}",
                self.shape
            )));
        }
        let n = self.count();
        match (&self.data, self.offset) {
            (Some(data), None) => {
                if data.len() != n {
                    return Err(bad(format!(
                        "array {name} inlines {} values for shape {:?}",
                        data.len(),
                        self.shape
                    )));
                }
                Ok(data.clone())
            }
            (None, Some(offset)) => {
                let blob = blob.ok_or_else(|| bad(format!("array {name} needs a blob")))?;
                let bytes = offset
                    .checked_add(n * 4)
                    .and_then(|end| blob.get(offset..end))
                    .ok_or_else(|| bad(format!("array {name} runs past the end of the blob")))?;
                Ok(bytes
                    .chunks_exact(4)
                    .map(|c| {
                        let raw: [u8; 4] = c.try_into().unwrap();
                        match self.dtype {
                            Dtype::F32 => f32::from_le_bytes(raw) as f64,
                            Dtype::U32 => u32::from_le_bytes(raw) as f64,
                            Dtype::I32 => i32::from_le_bytes(raw) as f64,
                        }
                    })
                    .collect())
            }
            _ => Err(bad(format!(
                "array {name} must have exactly one of `data` or `offset`"
            ))),
        }
    }
}

fn to_vectors(flat: &[f64]) -> Vec<Vector3<f64>> {
    flat.chunks_exact(3)
        .map(|c| Vector3::new(c[0], c[1], c[2]))
        .collect()
}

/// Loads a body model manifest (and its blob, if it names one).
pub fn read_model(path: &Path) -> Result<BodyModel> {
    let manifest: Manifest = serde_json::from_str(&read_text(path)?)?;
    if manifest.format != FORMAT {
        return Err(bad(format!("unknown format {:?}", manifest.format)));
    }
    if manifest.version != VERSION {
        return Err(bad(format!("unsupported version {}", manifest.version)));
    }
    let blob = match &manifest.blob {
        Some(name) => {
            let dir = path.parent().unwrap_or(Path::new("."));
            Some(read_file(&dir.join(name))?)
        }
        None => None,
    };
    let blob = blob.as_deref();
    let arrays = &manifest.arrays;

    let n_v = arrays
        .template_vertices
        .shape
        .first()
        .copied()
        .ok_or_else(|| bad("template_vertices has an empty shape"))?;
    let n_f = arrays.faces.shape.first().copied().unwrap_or(0);
    let n_j = manifest.kinematic_parents.len();

    let template = arrays
        .template_vertices
        .load("template_vertices", blob, &[n_v, 3])?;
    let faces_flat = arrays.faces.load("faces", blob, &[n_f, 3])?;
    let mut faces = Vec::with_capacity(n_f);
    for c in faces_flat.chunks_exact(3) {
        let mut face = [0u32; 3];
        for (dst, &v) in face.iter_mut().zip(c) {
            if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                return Err(bad(format!("face index {v} is not a vertex index")));
            }
            *dst = v as u32;
        }
        faces.push(face);
    }

    let shape_blendshapes = match &arrays.shape_blendshapes {
        Some(spec) => {
            let n_b = spec.shape.first().copied().unwrap_or(0);
            let flat = spec.load("shape_blendshapes", blob, &[n_b, n_v, 3])?;
            flat.chunks_exact(n_v * 3).map(to_vectors).collect()
        }
        None => Vec::new(),
    };
    let joint_regressor = arrays
        .joint_regressor
        .load("joint_regressor", blob, &[n_j, n_v])?;
    let skinning_weights = arrays
        .skinning_weights
        .load("skinning_weights", blob, &[n_v, n_j])?;
    let pose_blendshapes = match &arrays.pose_blendshapes {
        Some(spec) => Some(spec.load(
            "pose_blendshapes",
            blob,
            &[n_v * 3, n_j.saturating_sub(1) * 9],
        )?),
        None => None,
    };

    let kinematic_parents = manifest
        .kinematic_parents
        .iter()
        .map(|&p| match p {
            -1 => Ok(None),
            p if p >= 0 => Ok(Some(p as usize)),
            p => Err(bad(format!("invalid parent index {p}"))),
        })
        .collect::<Result<Vec<_>>>()?;

    BodyModel::new(BodyModelParts {
        template_vertices: to_vectors(&template),
        faces,
        shape_blendshapes,
        joint_regressor,
        kinematic_parents,
        skinning_weights,
        vertex_groups: manifest.vertex_groups,
        pose_blendshapes,
    })
}

struct BlobWriter {
    bytes: Vec<u8>,
}

impl BlobWriter {
    fn f32s(&mut self, shape: Vec<usize>, values: impl Iterator<Item = f64>) -> ArraySpec {
        let offset = self.bytes.len();
        for v in values {
            self.bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        ArraySpec {
            shape,
            dtype: Dtype::F32,
            offset: Some(offset),
            data: None,
        }
    }

    fn u32s(&mut self, shape: Vec<usize>, values: impl Iterator<Item = u32>) -> ArraySpec {
        let offset = self.bytes.len();
        for v in values {
            self.bytes.extend_from_slice(&v.to_le_bytes());
        }
        ArraySpec {
            shape,
            dtype: Dtype::U32,
            offset: Some(offset),
            data: None,
        }
    }
}

fn inline(shape: Vec<usize>, values: impl Iterator<Item = f64>) -> ArraySpec {
    ArraySpec {
        shape,
        dtype: Dtype::F32,
        offset: None,
        data: Some(values.collect()),
    }
}

fn manifest_for(model: &BodyModel, arrays: Arrays, blob: Option<String>) -> Manifest {
    Manifest {
        format: FORMAT.into(),
        version: VERSION,
        blob,
        kinematic_parents: model
            .kinematic_parents()
            .iter()
            .map(|p| p.map_or(-1, |p| p as i64))
            .collect(),
        vertex_groups: model.vertex_groups().clone(),
        arrays,
    }
}

fn flat_vectors(v: &[Vector3<f64>]) -> impl Iterator<Item = f64> + '_ {
    v.iter().flat_map(|p| [p.x, p.y, p.z])
}

fn regressor_values(model: &BodyModel) -> impl Iterator<Item = f64> + '_ {
    (0..model.num_joints()).flat_map(|j| model.joint_regressor_row(j).iter().copied())
}

fn weight_values(model: &BodyModel) -> impl Iterator<Item = f64> + '_ {
    (0..model.num_vertices()).flat_map(|v| model.skinning_weights_of(v).iter().copied())
}

/// Writes `path` (manifest) and `<stem>.bin` (float32 blob) next to it.
/// Values are rounded to float32.
pub fn write_model(model: &BodyModel, path: &Path) -> Result<()> {
    let (n_v, n_j, n_b) = (model.num_vertices(), model.num_joints(), model.num_betas());
    let blob_name = format!(
        "{}.bin",
        path.file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Config(format!("bad model path {}", path.display())))?
    );
    let mut blob = BlobWriter { bytes: Vec::new() };
    let arrays = Arrays {
        template_vertices: blob.f32s(vec![n_v, 3], flat_vectors(model.template_vertices())),
        faces: blob.u32s(
            vec![model.num_faces(), 3],
            model.faces().iter().flatten().copied(),
        ),
        shape_blendshapes: (n_b > 0).then(|| {
            blob.f32s(
                vec![n_b, n_v, 3],
                model.shape_blendshapes().iter().flat_map(|b| flat_vectors(b)),
            )
        }),
        joint_regressor: blob.f32s(vec![n_j, n_v], regressor_values(model)),
        skinning_weights: blob.f32s(vec![n_v, n_j], weight_values(model)),
        pose_blendshapes: model.pose_blendshapes().map(|p| {
            blob.f32s(vec![n_v * 3, n_j.saturating_sub(1) * 9], p.iter().copied())
        }),
    };
    let manifest = manifest_for(model, arrays, Some(blob_name.clone()));
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write_atomic(&path.with_file_name(&blob_name), &blob.bytes)?;
    write_atomic(path, json.as_bytes())
}

/// Writes a self-contained manifest with every array inlined at full precision.
pub fn write_model_inline(model: &BodyModel, path: &Path) -> Result<()> {
    let (n_v, n_j, n_b) = (model.num_vertices(), model.num_joints(), model.num_betas());
    let arrays = Arrays {
        template_vertices: inline(vec![n_v, 3], flat_vectors(model.template_vertices())),
        faces: inline(
            vec![model.num_faces(), 3],
            model.faces().iter().flatten().map(|&i| i as f64),
        ),
        shape_blendshapes: (n_b > 0).then(|| {
            inline(
                vec![n_b, n_v, 3],
                model.shape_blendshapes().iter().flat_map(|b| flat_vectors(b)),
            )
        }),
        joint_regressor: inline(vec![n_j, n_v], regressor_values(model)),
        skinning_weights: inline(vec![n_v, n_j], weight_values(model)),
        pose_blendshapes: model
            .pose_blendshapes()
            .map(|p| inline(vec![n_v * 3, n_j.saturating_sub(1) * 9], p.iter().copied())),
    };
    let mut json = serde_json::to_string(&manifest_for(model, arrays, None))?;
    json.push('\n');
    write_atomic(path, json.as_bytes())
}
