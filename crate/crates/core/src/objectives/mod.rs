//! Forward evaluation of the generator and discriminator objectives, plus SSIM.
//!
//! Sums written over pixels or patch scores are averaged by default so values
//! do not depend on resolution; [`Reduction::Sum`] gives the raw sums. The
//! total-variation term is always a raw sum.

mod extractor;
mod ssim;

use crate::error::{Error, Result};
use crate::tensor::{FeatureMap, Mask};
use crate::warp::resize_bilinear;

pub use extractor::{ConvLayer, ConvStack, FeatureExtractor, IdentityExtractor, TOY_SEED};
pub use ssim::{ssim, SsimParams};

/// Side length face crops are resized to before identity features are taken.
pub const FACE_INPUT_SIZE: usize = 112;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

impl Reduction {
    fn reduce(self, sum: f64, count: usize) -> f64 {
        match self {
            Reduction::Mean => sum / count as f64,
            Reduction::Sum => sum,
        }
    }
}

/// Mean (or summed) absolute difference.
pub fn l1_distance(a: &FeatureMap, b: &FeatureMap, reduction: Reduction) -> Result<f64> {
    a.check_same_shape(b, "l1 operands")?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).abs())
        .sum();
    Ok(reduction.reduce(sum, a.data().len().max(1)))
}

/// Mean (or summed) squared difference.
pub fn squared_distance(a: &FeatureMap, b: &FeatureMap, reduction: Reduction) -> Result<f64> {
    a.check_same_shape(b, "squared-distance operands")?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(reduction.reduce(sum, a.data().len().max(1)))
}

/// Layerwise L1 distance between the features of two images, summed over layers.
pub fn feature_distance(
    extractor: &dyn FeatureExtractor,
    a: &FeatureMap,
    b: &FeatureMap,
    reduction: Reduction,
) -> Result<f64> {
    a.check_same_shape(b, "feature-distance images")?;
    let (fa, fb) = (extractor.extract(a)?, extractor.extract(b)?);
    if fa.len() != fb.len() {
        return Err(Error::Invariant("extractor returned different layer counts".into()));
    }
    fa.iter()
        .zip(&fb)
        .map(|(x, y)| l1_distance(x, y, reduction))
        .sum()
}

/// `|f(Î_s) - f(I_s)|_1 + |f(Î_t) - f(I_r)|_1`.
pub fn perceptual_loss(
    extractor: &dyn FeatureExtractor,
    reconstructed_source: &FeatureMap,
    source: &FeatureMap,
    synthesized_target: &FeatureMap,
    reference: &FeatureMap,
    reduction: Reduction,
) -> Result<f64> {
    source.check_same_shape(reconstructed_source, "perceptual images")?;
    source.check_same_shape(synthesized_target, "perceptual images")?;
    source.check_same_shape(reference, "perceptual images")?;
    Ok(feature_distance(extractor, reconstructed_source, source, reduction)?
        + feature_distance(extractor, synthesized_target, reference, reduction)?)
}

/// Pixel rectangle; `(x, y)` is the top-left pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceBox {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl FaceBox {
    /// Bounding box of the set pixels of a mask (e.g. a rendered head silhouette).
    pub fn from_mask(mask: &Mask) -> Option<FaceBox> {
        mask.bounding_box().map(|(x0, y0, x1, y1)| FaceBox {
            x: x0,
            y: y0,
            width: x1 - x0 + 1,
            height: y1 - y0 + 1,
        })
    }
}

fn face_crop(image: &FeatureMap, face: &FaceBox) -> Result<FeatureMap> {
    let crop = image.crop(face.x, face.y, face.width, face.height)?;
    Ok(resize_bilinear(&crop, FACE_INPUT_SIZE, FACE_INPUT_SIZE))
}

/// `|g(crop(Î_t)) - g(crop(I_r))|_1` with both crops resized to
/// [`FACE_INPUT_SIZE`] squared.
pub fn face_identity_loss(
    extractor: &dyn FeatureExtractor,
    synthesized_target: &FeatureMap,
    reference: &FeatureMap,
    face: &FaceBox,
    reduction: Reduction,
) -> Result<f64> {
    synthesized_target.check_same_shape(reference, "face-identity images")?;
    let (a, b) = (face_crop(synthesized_target, face)?, face_crop(reference, face)?);
    feature_distance(extractor, &a, &b, reduction)
}

/// Patch-discriminator scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    height: usize,
    width: usize,
    scores: Vec<f64>,
}

impl ScoreMap {
    pub fn new(height: usize, width: usize, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != height * width {
            return Err(Error::dims("score map", height * width, scores.len()));
        }
        if scores.is_empty() {
            return Err(Error::InvalidInput("score map is empty".into()));
        }
        if !scores.iter().all(|s| s.is_finite()) {
            return Err(Error::InvalidInput("score map has non-finite values".into()));
        }
        Ok(Self {
            height,
            width,
            scores,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn reduce_with(&self, reduction: Reduction, f: impl Fn(f64) -> f64) -> f64 {
        reduction.reduce(self.scores.iter().map(|&s| f(s)).sum(), self.scores.len())
    }
}

/// Generator least-squares term: `D(fake)^2`, reduced.
pub fn adversarial_loss_g(fake: &ScoreMap, reduction: Reduction) -> f64 {
    fake.reduce_with(reduction, |s| s * s)
}

/// Discriminator least-squares terms: `(D(fake) + 1)^2 + (D(real) - 1)^2`, each reduced.
pub fn adversarial_loss_d(fake: &ScoreMap, real: &ScoreMap, reduction: Reduction) -> f64 {
    fake.reduce_with(reduction, |s| (s + 1.0) * (s + 1.0))
        + real.reduce_with(reduction, |s| (s - 1.0) * (s - 1.0))
}

/// Sum of squared vertical and horizontal forward differences of a
/// single-channel map of at least 2x2.
pub fn tv(map: &FeatureMap) -> Result<f64> {
    if map.channels() != 1 {
        return Err(Error::dims("total-variation channels", 1, map.channels()));
    }
    let (h, w) = (map.height(), map.width());
    if h < 2 || w < 2 {
        return Err(Error::InvalidInput(format!(
            "total variation needs at least a 2x2 map, got {h}x{w}"
        )));
    }
    let a = |y: usize, x: usize| map.get(0, y, x) as f64;
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            if y > 0 {
                let d = a(y, x) - a(y - 1, x);
                sum += d * d;
            }
            if x > 0 {
                let d = a(y, x) - a(y, x - 1);
                sum += d * d;
            }
        }
    }
    Ok(sum)
}

/// `|A_s - S_s|^2 + |A_t - S_t|^2 + TV(A_s) + TV(A_t)`.
pub fn attention_reg_loss(
    attention_source: &FeatureMap,
    silhouette_source: &FeatureMap,
    attention_target: &FeatureMap,
    silhouette_target: &FeatureMap,
    reduction: Reduction,
) -> Result<f64> {
    attention_source.check_same_shape(silhouette_source, "attention/silhouette")?;
    attention_source.check_same_shape(attention_target, "attention/silhouette")?;
    attention_source.check_same_shape(silhouette_target, "attention/silhouette")?;
    Ok(squared_distance(attention_source, silhouette_source, reduction)?
        + squared_distance(attention_target, silhouette_target, reduction)?
        + tv(attention_source)?
        + tv(attention_target)?)
}

/// Weights of the perceptual, face-identity and attention terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub perceptual: f64,
    pub face: f64,
    pub attention: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            perceptual: 10.0,
            face: 5.0,
            attention: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(perceptual: f64, face: f64, attention: f64) -> Result<Self> {
        let w = LossWeights {
            perceptual,
            face,
            attention,
        };
        if [perceptual, face, attention]
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(Error::InvalidInput(format!(
                "loss weights must be finite and nonnegative: {w:?}"
            )));
        }
        Ok(w)
    }
}

/// Per-term values of the generator objective.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeneratorTerms {
    pub perceptual: f64,
    pub face: f64,
    pub attention: f64,
    pub adversarial: f64,
}

/// `λ_p L_p + λ_f L_f + λ_a L_a + L_adv`.
pub fn total_generator_loss(weights: &LossWeights, terms: &GeneratorTerms) -> f64 {
    weights.perceptual * terms.perceptual
        + weights.face * terms.face
        + weights.attention * terms.attention
        + terms.adversarial
}
