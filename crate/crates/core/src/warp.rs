//! Bilinear sampling of feature maps along a flow, multi-source aggregation,
//! and attention-based output composition.

use rayon::prelude::*;

use crate::camera::normalized_to_pixel;
use crate::error::{Error, Result};
use crate::flow::{mesh_grid, TransformFlow};
use crate::tensor::FeatureMap;

/// Sample positions this close to a pixel center are snapped onto it.
const SNAP: f64 = 1e-9;

#[derive(Clone, Copy)]
struct Taps {
    index: [usize; 4],
    weight: [f64; 4],
}

const NO_TAP: usize = usize::MAX;

impl Taps {
    const EMPTY: Taps = Taps {
        index: [NO_TAP; 4],
        weight: [0.0; 4],
    };
}

fn snap(p: f64) -> f64 {
    let r = p.round();
    if (p - r).abs() < SNAP {
        r
    } else {
        p
    }
}

fn taps_for(u: f64, v: f64, width: usize, height: usize) -> Taps {
    let px = snap(normalized_to_pixel(u, width));
    let py = snap(normalized_to_pixel(v, height));
    let (x0, y0) = (px.floor(), py.floor());
    let (fx, fy) = (px - x0, py - y0);
    let mut taps = Taps::EMPTY;
    let corners = [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x0 + 1.0, y0, fx * (1.0 - fy)),
        (x0, y0 + 1.0, (1.0 - fx) * fy),
        (x0 + 1.0, y0 + 1.0, fx * fy),
    ];
    for (k, (x, y, w)) in corners.into_iter().enumerate() {
        // zero padding outside the map; zero weights are dropped entirely
        if w != 0.0 && x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64 {
            taps.index[k] = y as usize * width + x as usize;
            taps.weight[k] = w;
        }
    }
    taps
}

/// Samples `x` at every flow coordinate (align-corners, zero padding).
/// The output has the flow's spatial size; invalid flow pixels are zero.
pub fn bilinear_sample(x: &FeatureMap, flow: &TransformFlow) -> FeatureMap {
    let (w, h) = (x.width(), x.height());
    let taps: Vec<Taps> = flow
        .coords()
        .par_iter()
        .zip(flow.valid().par_iter())
        .map(|(&[u, v], &ok)| if ok { taps_for(u, v, w, h) } else { Taps::EMPTY })
        .collect();
    let n_out = flow.width() * flow.height();
    let mut out = FeatureMap::zeros(x.channels(), flow.height(), flow.width());
    if n_out == 0 {
        return out;
    }
    out.data_mut()
        .par_chunks_mut(n_out)
        .enumerate()
        .for_each(|(c, plane)| {
            let src = x.plane(c);
            for (o, t) in plane.iter_mut().zip(&taps) {
                let mut acc = 0.0f64;
                for k in 0..4 {
                    if t.index[k] != NO_TAP {
                        acc += src[t.index[k]] as f64 * t.weight[k];
                    }
                }
                *o = acc as f32;
            }
        });
    out
}

/// Align-corners bilinear resize.
pub fn resize_bilinear(x: &FeatureMap, width: usize, height: usize) -> FeatureMap {
    bilinear_sample(x, &mesh_grid(width, height))
}

/// `target + sum_i sample(source_i, flow_i)`. With no sources the target is
/// returned unchanged.
pub fn lwb_aggregate(
    sources: &[(&FeatureMap, &TransformFlow)],
    target: &FeatureMap,
) -> Result<FeatureMap> {
    for (i, (features, flow)) in sources.iter().enumerate() {
        if features.channels() != target.channels() {
            return Err(Error::dims(
                "source channels",
                target.channels(),
                format!("{} (source {i})", features.channels()),
            ));
        }
        if (flow.height(), flow.width()) != (target.height(), target.width()) {
            return Err(Error::dims(
                "source flow",
                format!("{}x{}", target.height(), target.width()),
                format!("{}x{} (source {i})", flow.height(), flow.width()),
            ));
        }
    }
    if sources.is_empty() {
        return Ok(target.clone());
    }
    let mut acc = FeatureMap::zeros(target.channels(), target.height(), target.width());
    for (features, flow) in sources {
        let warped = bilinear_sample(features, flow);
        for (a, b) in acc.data_mut().iter_mut().zip(warped.data()) {
            *a += b;
        }
    }
    for (a, b) in acc.data_mut().iter_mut().zip(target.data()) {
        *a += b;
    }
    Ok(acc)
}

/// Attention map `A` (1 channel, clamped to `[0, 1]`) and color map `P`.
#[derive(Debug, Clone)]
pub struct AttentionPair {
    attention: FeatureMap,
    color: FeatureMap,
}

impl AttentionPair {
    pub fn new(attention: FeatureMap, color: FeatureMap) -> Result<Self> {
        if attention.channels() != 1 {
            return Err(Error::dims("attention channels", 1, attention.channels()));
        }
        if (attention.height(), attention.width()) != (color.height(), color.width()) {
            return Err(Error::dims(
                "attention/color size",
                format!("{}x{}", color.height(), color.width()),
                format!("{}x{}", attention.height(), attention.width()),
            ));
        }
        Ok(Self {
            attention: attention.map(|a| a.clamp(0.0, 1.0)),
            color,
        })
    }

    pub fn attention(&self) -> &FeatureMap {
        &self.attention
    }

    pub fn color(&self) -> &FeatureMap {
        &self.color
    }
}

/// `P * A + background * (1 - A)`, with `A` broadcast over channels.
pub fn compose_output(pair: &AttentionPair, background: &FeatureMap) -> Result<FeatureMap> {
    pair.color.check_same_shape(background, "background")?;
    let a = pair.attention.plane(0);
    let mut out = background.clone();
    for c in 0..out.channels() {
        let p = pair.color.plane(c);
        for ((o, &pv), &av) in out.plane_mut(c).iter_mut().zip(p).zip(a) {
            let (av, pv, bv) = (av as f64, pv as f64, *o as f64);
            *o = (pv * av + bv * (1.0 - av)) as f32;
        }
    }
    Ok(out)
}
