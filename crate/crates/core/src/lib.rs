//! Geometric core of a body-mesh image warping pipeline.
//!
//! A parametric body model is posed and skinned ([`body`]), projected with a
//! weak-perspective camera ([`camera`]) and rasterized into correspondence
//! maps ([`raster`]). Pairs of maps give transformation flows ([`flow`]) that
//! drive bilinear feature warping and multi-source aggregation ([`warp`]).
//! [`objectives`] evaluates the generator and discriminator losses and SSIM,
//! and [`pipeline`] wires everything into the `liquidwarp` command line tool.

pub mod body;
pub mod camera;
pub mod error;
pub mod flow;
pub mod io;
pub mod objectives;
pub mod pipeline;
pub mod raster;
pub mod synthetic;
pub mod tensor;
pub mod warp;

pub use error::{Error, Result};
