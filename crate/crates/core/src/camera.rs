//! Weak-perspective camera and the pixel/normalized coordinate convention.
//!
//! Normalized coordinates use align-corners: the center of pixel column `j`
//! sits at `2j / (W - 1) - 1`, so the first and last pixel centers are at -1
//! and +1. Rows grow downward from the top-left pixel. A one-pixel axis maps
//! to 0.

use std::sync::Arc;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::body::{Face, Mesh};
use crate::error::{Error, Result};

/// Orthographic projection followed by uniform scale and 2D offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub scale: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Camera {
            scale: 1.0,
            tx: 0.0,
            ty: 0.0,
        }
    }
}

impl Camera {
    pub fn new(scale: f64, tx: f64, ty: f64) -> Result<Self> {
        let camera = Camera { scale, tx, ty };
        camera.validate()?;
        Ok(camera)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.tx.is_finite() && self.ty.is_finite()) {
            return Err(Error::InvalidParams("camera has non-finite values".into()));
        }
        if self.scale <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "camera scale must be positive, got {}",
                self.scale
            )));
        }
        Ok(())
    }
}

/// Normalized coordinate of the center of pixel `index` along an axis of `size` pixels.
#[inline]
pub fn pixel_to_normalized(index: usize, size: usize) -> f64 {
    if size <= 1 {
        0.0
    } else {
        2.0 * index as f64 / (size - 1) as f64 - 1.0
    }
}

/// Continuous pixel coordinate of a normalized coordinate (inverse of
/// [`pixel_to_normalized`]).
#[inline]
pub fn normalized_to_pixel(coord: f64, size: usize) -> f64 {
    if size <= 1 {
        0.0
    } else {
        (coord + 1.0) * 0.5 * (size - 1) as f64
    }
}

/// Mesh vertices in normalized image space plus their depths.
#[derive(Debug, Clone)]
pub struct ProjectedMesh {
    pub coords: Vec<Vector2<f64>>,
    pub depths: Vec<f64>,
    pub faces: Arc<Vec<Face>>,
}

impl ProjectedMesh {
    /// Same vertices, restricted face table.
    pub fn with_faces(&self, faces: Vec<Face>) -> ProjectedMesh {
        ProjectedMesh {
            coords: self.coords.clone(),
            depths: self.depths.clone(),
            faces: Arc::new(faces),
        }
    }
}

/// `(x, y) -> s (x, y) + (tx, ty)`; depth is `z` unchanged.
pub fn project(mesh: &Mesh, camera: &Camera) -> ProjectedMesh {
    let offset = Vector2::new(camera.tx, camera.ty);
    ProjectedMesh {
        coords: mesh
            .vertices
            .iter()
            .map(|v| Vector2::new(v.x, v.y) * camera.scale + offset)
            .collect(),
        depths: mesh.vertices.iter().map(|v| v.z).collect(),
        faces: mesh.faces.clone(),
    }
}
