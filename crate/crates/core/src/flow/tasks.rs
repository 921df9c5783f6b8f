use nalgebra::{Matrix3, Vector3};

use super::{compose_flow, mesh_grid, TransformFlow};
use crate::body::{skin, BodyModel, BodyParams, Mesh, BODY_GROUP, HEAD_GROUP};
use crate::camera::{project, ProjectedMesh};
use crate::error::{Error, Result};
use crate::raster::{rasterize, silhouette, CorrespondenceMap};
use crate::tensor::Mask;

/// Source and target renders plus the flow from target pixels to source
/// coordinates.
#[derive(Debug, Clone)]
pub struct FlowBundle {
    pub source_projection: ProjectedMesh,
    pub target_projection: ProjectedMesh,
    pub source_map: CorrespondenceMap,
    pub target_map: CorrespondenceMap,
    pub flow: TransformFlow,
}

fn bundle(source: ProjectedMesh, target: ProjectedMesh, width: usize, height: usize) -> Result<FlowBundle> {
    let source_map = rasterize(&source, width, height)?;
    let target_map = rasterize(&target, width, height)?;
    let flow = compose_flow(&source, &target_map)?;
    Ok(FlowBundle {
        source_projection: source,
        target_projection: target,
        source_map,
        target_map,
        flow,
    })
}

/// Motion imitation: the source body takes the reference pose, keeping its
/// own shape and camera.
pub fn flow_for_imitation(
    model: &BodyModel,
    src: &BodyParams,
    reference: &BodyParams,
    width: usize,
    height: usize,
) -> Result<FlowBundle> {
    model.check_params(reference)?;
    let source_mesh = skin(model, src)?;
    let target_params = BodyParams {
        theta: reference.theta.clone(),
        beta: src.beta.clone(),
        camera: src.camera,
    };
    let target_mesh = skin(model, &target_params)?;
    bundle(
        project(&source_mesh, &src.camera),
        project(&target_mesh, &src.camera),
        width,
        height,
    )
}

const ORTHONORMAL_TOLERANCE: f64 = 1e-6;

fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    let deviation = (r.transpose() * r - Matrix3::identity()).abs().max();
    if !deviation.is_finite() || deviation > ORTHONORMAL_TOLERANCE {
        return Err(Error::NotOrthonormal(deviation));
    }
    if r.determinant() < 0.0 {
        return Err(Error::InvalidInput("view rotation is a reflection".into()));
    }
    Ok(())
}

/// Rotation for a view change given in degrees: yaw about y, then pitch about
/// x, then roll about z, as the column-vector matrix `Ry * Rx * Rz`.
pub fn rotation_from_euler_degrees(yaw: f64, pitch: f64, roll: f64) -> Matrix3<f64> {
    let axis = |v: Vector3<f64>, deg: f64| crate::body::rodrigues(v * deg.to_radians());
    axis(Vector3::y(), yaw) * axis(Vector3::x(), pitch) * axis(Vector3::z(), roll)
}

/// Novel view: the source mesh rigidly moved as `(V - c) R + c + t` (row
/// vectors, `c` the vertex centroid), rendered under the source camera.
pub fn flow_for_novel_view(
    model: &BodyModel,
    src: &BodyParams,
    rotation: &Matrix3<f64>,
    translation: &Vector3<f64>,
    width: usize,
    height: usize,
) -> Result<FlowBundle> {
    check_rotation(rotation)?;
    if !translation.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("view translation must be finite".into()));
    }
    let source_mesh = skin(model, src)?;
    let center = source_mesh.centroid();
    let row_rotation = rotation.transpose();
    let target_mesh = Mesh {
        vertices: source_mesh
            .vertices
            .iter()
            .map(|v| row_rotation * (v - center) + center + translation)
            .collect(),
        faces: source_mesh.faces.clone(),
    };
    bundle(
        project(&source_mesh, &src.camera),
        project(&target_mesh, &src.camera),
        width,
        height,
    )
}

/// Flows for appearance transfer. Target pixels follow the first source's
/// layout: the head is copied in place from source one and the body is
/// fetched from the reference image.
#[derive(Debug, Clone)]
pub struct SwapFlows {
    /// Identity grid on the source head silhouette.
    pub head_flow: TransformFlow,
    /// Source-body pixels mapped into reference-image coordinates.
    pub body_flow: TransformFlow,
    pub head_silhouette: Mask,
    pub body_silhouette: Mask,
    pub source_body_map: CorrespondenceMap,
    pub reference_body_map: CorrespondenceMap,
}

pub fn flow_for_swap(
    model: &BodyModel,
    src: &BodyParams,
    reference: &BodyParams,
    width: usize,
    height: usize,
) -> Result<SwapFlows> {
    let head_faces = model.group_faces(HEAD_GROUP)?;
    let body_faces = model.group_faces(BODY_GROUP)?;
    let source_mesh = skin(model, src)?;
    let reference_mesh = skin(model, reference)?;

    let source_projection = project(&source_mesh, &src.camera);
    let head_map = rasterize(&source_projection.with_faces(head_faces), width, height)?;
    let head_silhouette = silhouette(&head_map);
    let head_flow = mesh_grid(width, height).masked(&head_silhouette)?;

    let source_body = source_projection.with_faces(body_faces.clone());
    let reference_body = project(&reference_mesh, &reference.camera).with_faces(body_faces);
    let source_body_map = rasterize(&source_body, width, height)?;
    let reference_body_map = rasterize(&reference_body, width, height)?;
    let body_flow = compose_flow(&reference_body, &source_body_map)?;

    Ok(SwapFlows {
        head_flow,
        body_flow,
        head_silhouette,
        body_silhouette: silhouette(&source_body_map),
        source_body_map,
        reference_body_map,
    })
}
