//! End-to-end drivers behind the `liquidwarp` subcommands.
//!
//! Each `run_*` function is a pure function of its input files and config
//! and writes artifacts atomically into the output directory. The in-memory
//! stages ([`imitate`], [`novel_view`], [`swap`]) are exposed separately for
//! library use.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde_json::{Map, Value};

use crate::body::{read_model, skin, write_model, BodyModel, BodyParams, HEAD_GROUP};
use crate::camera::project;
use crate::error::{Error, Result};
use crate::flow::{
    decompose, flow_for_imitation, flow_for_novel_view, flow_for_swap, rotation_from_euler_degrees,
    source_occlusion, DecomposedSource, FlowBundle, SwapFlows,
};
use crate::io::{read_text, write_atomic};
use crate::objectives::{
    face_identity_loss, feature_distance, l1_distance, ssim, ConvStack, FaceBox, FeatureExtractor,
    IdentityExtractor, Reduction, SsimParams,
};
use crate::raster::{rasterize, silhouette};
use crate::synthetic;
use crate::tensor::{FeatureMap, Mask};
use crate::warp::{bilinear_sample, lwb_aggregate};

/// Output image size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    pub width: usize,
    pub height: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution {
            width: 256,
            height: 256,
        }
    }
}

impl Resolution {
    pub const MIN: usize = 8;

    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < Self::MIN || height < Self::MIN {
            return Err(Error::Config(format!(
                "resolution must be at least {0}x{0}, got {width}x{height}",
                Self::MIN
            )));
        }
        Ok(Resolution { width, height })
    }
}

impl FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("expected WxH, got {s:?}"));
        let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        Resolution::new(w.trim().parse().map_err(|_| bad())?, h.trim().parse().map_err(|_| bad())?)
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// Camera change for the novel-view task: Euler angles in degrees and a
/// translation in model units.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ViewSpec {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    pub translate: [f64; 3],
}

impl ViewSpec {
    fn validate(&self) -> Result<()> {
        let all = [self.yaw, self.pitch, self.roll].into_iter().chain(self.translate);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("view angles and translation must be finite".into()));
        }
        Ok(())
    }
}

/// Parses `x,y,z`.
pub fn parse_translation(s: &str) -> Result<[f64; 3]> {
    let values: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("expected x,y,z, got {s:?}")))?;
    <[f64; 3]>::try_from(values).map_err(|_| Error::Config(format!("expected x,y,z, got {s:?}")))
}

/// Yaw angles of the default view sweep: 30 to 330 degrees in 30 degree steps.
pub fn default_sweep() -> Vec<f64> {
    (1..=11).map(|i| 30.0 * i as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Imitate,
    View,
    Swap,
    Render,
}

/// Inputs of the imitate, view, swap and render subcommands.
#[derive(Debug, Clone)]
pub struct TaskConfig {
    pub task: Task,
    pub model: PathBuf,
    pub src_params: PathBuf,
    pub ref_params: Option<PathBuf>,
    pub view: Option<ViewSpec>,
    /// Yaw angles rendered by a view sweep; the view spec's yaw is added.
    pub sweep: Option<Vec<f64>>,
    /// When absent, the source is the textured render of the source params.
    pub src_image: Option<PathBuf>,
    pub ref_image: Option<PathBuf>,
    pub out: PathBuf,
    pub resolution: Resolution,
    pub dump_flow: bool,
    pub dump_maps: bool,
}

impl TaskConfig {
    pub fn new(task: Task, model: PathBuf, src_params: PathBuf, out: PathBuf) -> Self {
        TaskConfig {
            task,
            model,
            src_params,
            ref_params: None,
            view: None,
            sweep: None,
            src_image: None,
            ref_image: None,
            out,
            resolution: Resolution::default(),
            dump_flow: false,
            dump_maps: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        Resolution::new(self.resolution.width, self.resolution.height)?;
        let needs_ref = matches!(self.task, Task::Imitate | Task::Swap);
        if needs_ref && self.ref_params.is_none() {
            return Err(Error::Config("reference params are required for this task".into()));
        }
        if self.task == Task::View {
            self.view
                .ok_or_else(|| Error::Config("view task needs a view spec".into()))?
                .validate()?;
        } else if self.view.is_some() || self.sweep.is_some() {
            return Err(Error::Config("view spec is only valid for the view task".into()));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.is_empty() || sweep.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("view sweep needs finite angles".into()));
            }
        }
        let files = [Some(&self.model), Some(&self.src_params)]
            .into_iter()
            .chain([self.ref_params.as_ref(), self.src_image.as_ref(), self.ref_image.as_ref()]);
        for path in files.flatten() {
            if !path.is_file() {
                return Err(Error::Config(format!("input file {} does not exist", path.display())));
            }
        }
        Ok(())
    }
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::Config("thread count must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub fn load_params(path: &Path, model: &BodyModel) -> Result<BodyParams> {
    let params = BodyParams::from_json(&read_text(path)?)?;
    model.check_params(&params)?;
    Ok(params)
}

fn load_image(path: &Path, size: Resolution) -> Result<FeatureMap> {
    let img = FeatureMap::read_png(path)?;
    if (img.width(), img.height()) != (size.width, size.height) {
        return Err(Error::dims(
            "input image size",
            size,
            format!("{}x{} ({})", img.width(), img.height(), path.display()),
        ));
    }
    Ok(img)
}

fn image_or_render(
    path: Option<&Path>,
    model: &BodyModel,
    params: &BodyParams,
    size: Resolution,
) -> Result<FeatureMap> {
    match path {
        Some(p) => load_image(p, size),
        None => Ok(synthetic::render(model, params, size.width, size.height)?.image),
    }
}

fn to_unit(image: &FeatureMap) -> FeatureMap {
    image.map(|v| (v + 1.0) * 0.5)
}

fn from_unit(image: &FeatureMap) -> FeatureMap {
    image.map(|v| v * 2.0 - 1.0)
}

/// A source image carried along a transformation flow.
#[derive(Debug, Clone)]
pub struct Warped {
    pub bundle: FlowBundle,
    /// Source split by its silhouette, values in `[0, 1]`.
    pub source: DecomposedSource,
    /// Foreground sampled through the flow, zero where the flow is invalid.
    pub warped: FeatureMap,
    /// `warped` at valid target pixels, the source background elsewhere.
    pub synthesized: FeatureMap,
}

/// Warps `image` (values in `[-1, 1]`) through the bundle's flow.
pub fn warp_image(bundle: FlowBundle, image: &FeatureMap) -> Result<Warped> {
    let source = decompose(&to_unit(image), &bundle.source_map)?;
    let warped = bilinear_sample(&source.foreground, &bundle.flow);
    let mut synthesized = source.background.clone();
    if (synthesized.width(), synthesized.height()) != (warped.width(), warped.height()) {
        return Err(Error::dims(
            "source image",
            format!("{}x{}", warped.width(), warped.height()),
            format!("{}x{}", synthesized.width(), synthesized.height()),
        ));
    }
    let valid = bundle.flow.valid();
    for c in 0..warped.channels() {
        let w = warped.plane(c);
        for (i, out) in synthesized.plane_mut(c).iter_mut().enumerate() {
            if valid[i] {
                *out = w[i];
            }
        }
    }
    Ok(Warped {
        bundle,
        source,
        warped,
        synthesized,
    })
}

pub fn imitate(
    model: &BodyModel,
    src: &BodyParams,
    reference: &BodyParams,
    image: &FeatureMap,
    size: Resolution,
) -> Result<Warped> {
    warp_image(flow_for_imitation(model, src, reference, size.width, size.height)?, image)
}

pub fn novel_view(
    model: &BodyModel,
    src: &BodyParams,
    view: &ViewSpec,
    image: &FeatureMap,
    size: Resolution,
) -> Result<Warped> {
    view.validate()?;
    let rotation = rotation_from_euler_degrees(view.yaw, view.pitch, view.roll);
    let bundle = flow_for_novel_view(
        model,
        src,
        &rotation,
        &Vector3::from(view.translate),
        size.width,
        size.height,
    )?;
    warp_image(bundle, image)
}

/// Flows and preview of appearance transfer.
#[derive(Debug, Clone)]
pub struct Swapped {
    pub flows: SwapFlows,
    /// Head from source one and body from the reference over black, in `[0, 1]`.
    pub preview: FeatureMap,
}

/// Head pixels take priority: the body flow is restricted to pixels outside
/// the head silhouette before aggregation.
pub fn swap(
    model: &BodyModel,
    src: &BodyParams,
    reference: &BodyParams,
    src_image: &FeatureMap,
    ref_image: &FeatureMap,
    size: Resolution,
) -> Result<Swapped> {
    let flows = flow_for_swap(model, src, reference, size.width, size.height)?;
    let reference_full = full_silhouette(model, reference, size)?;
    let head_source = to_unit(src_image);
    let body_source = to_unit(ref_image).masked(&reference_full)?;
    let everywhere = Mask::filled(size.width, size.height, true);
    let body_flow = flows.body_flow.masked(&everywhere.and_not(&flows.head_silhouette))?;
    let blank = FeatureMap::zeros(head_source.channels(), size.height, size.width);
    let preview = lwb_aggregate(
        &[(&head_source, &flows.head_flow), (&body_source, &body_flow)],
        &blank,
    )?;
    Ok(Swapped { flows, preview })
}

fn full_silhouette(
    model: &BodyModel,
    params: &BodyParams,
    size: Resolution,
) -> Result<Mask> {
    let mesh = skin(model, params)?;
    let map = rasterize(&project(&mesh, &params.camera), size.width, size.height)?;
    Ok(silhouette(&map))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::File {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_warp_outputs(dir: &Path, result: &Warped, cfg: &TaskConfig) -> Result<()> {
    log::debug!("writing warp outputs to {}", dir.display());
    ensure_dir(dir)?;
    let b = &result.bundle;
    b.source_map.write_visual_png(&dir.join("C_s.png"))?;
    b.source_map.write_bin(&dir.join("C_s.bin"))?;
    b.target_map.write_visual_png(&dir.join("C_t.png"))?;
    b.target_map.write_bin(&dir.join("C_t.bin"))?;
    b.flow.write_bin(&dir.join("T.bin"))?;
    from_unit(&result.source.foreground).write_png(&dir.join("I_ft.png"))?;
    from_unit(&result.source.background).write_png(&dir.join("I_bg.png"))?;
    from_unit(&result.warped).write_png(&dir.join("I_warp.png"))?;
    from_unit(&result.synthesized).write_png(&dir.join("I_syn.png"))?;
    if cfg.dump_flow {
        b.flow.write_png(&dir.join("T.png"))?;
        source_occlusion(&b.flow, &b.target_map, &b.source_map)?.write_png(&dir.join("occlusion.png"))?;
    }
    if cfg.dump_maps {
        silhouette(&b.source_map).write_png(&dir.join("S_s.png"))?;
        silhouette(&b.target_map).write_png(&dir.join("S_t.png"))?;
    }
    Ok(())
}

pub fn run_imitate(cfg: &TaskConfig) -> Result<()> {
    cfg.validate()?;
    let model = read_model(&cfg.model)?;
    let src = load_params(&cfg.src_params, &model)?;
    let reference = load_params(cfg.ref_params.as_deref().expect("validated"), &model)?;
    let image = image_or_render(cfg.src_image.as_deref(), &model, &src, cfg.resolution)?;
    let result = imitate(&model, &src, &reference, &image, cfg.resolution)?;
    write_warp_outputs(&cfg.out, &result, cfg)
}

pub fn run_view(cfg: &TaskConfig) -> Result<()> {
    cfg.validate()?;
    let model = read_model(&cfg.model)?;
    let src = load_params(&cfg.src_params, &model)?;
    let image = image_or_render(cfg.src_image.as_deref(), &model, &src, cfg.resolution)?;
    let view = cfg.view.expect("validated");
    match &cfg.sweep {
        None => {
            let result = novel_view(&model, &src, &view, &image, cfg.resolution)?;
            write_warp_outputs(&cfg.out, &result, cfg)
        }
        Some(angles) => angles.par_iter().try_for_each(|&yaw| {
            let spec = ViewSpec {
                yaw: view.yaw + yaw,
                ..view
            };
            let result = novel_view(&model, &src, &spec, &image, cfg.resolution)?;
            write_warp_outputs(&cfg.out.join(sweep_dir_name(yaw)), &result, cfg)
        }),
    }
}

/// Subdirectory of one sweep view, e.g. `view_030`.
pub fn sweep_dir_name(yaw: f64) -> String {
    if yaw.fract() == 0.0 && yaw >= 0.0 {
        format!("view_{:03}", yaw as i64)
    } else {
        format!("view_{yaw}")
    }
}

pub fn run_swap(cfg: &TaskConfig) -> Result<()> {
    cfg.validate()?;
    let model = read_model(&cfg.model)?;
    let src = load_params(&cfg.src_params, &model)?;
    let reference = load_params(cfg.ref_params.as_deref().expect("validated"), &model)?;
    let src_image = image_or_render(cfg.src_image.as_deref(), &model, &src, cfg.resolution)?;
    let ref_image = image_or_render(cfg.ref_image.as_deref(), &model, &reference, cfg.resolution)?;
    let result = swap(&model, &src, &reference, &src_image, &ref_image, cfg.resolution)?;
    let dir = &cfg.out;
    ensure_dir(dir)?;
    let f = &result.flows;
    f.head_flow.write_bin(&dir.join("T1.bin"))?;
    f.body_flow.write_bin(&dir.join("T2.bin"))?;
    f.head_silhouette.write_png(&dir.join("S_head.png"))?;
    from_unit(&result.preview).write_png(&dir.join("preview.png"))?;
    if cfg.dump_flow {
        f.head_flow.write_png(&dir.join("T1.png"))?;
        f.body_flow.write_png(&dir.join("T2.png"))?;
    }
    if cfg.dump_maps {
        f.body_silhouette.write_png(&dir.join("S_body.png"))?;
        f.source_body_map.write_visual_png(&dir.join("C_src_body.png"))?;
        f.reference_body_map.write_visual_png(&dir.join("C_ref_body.png"))?;
    }
    Ok(())
}

/// Correspondence map (`C.bin`, `C.png`), silhouette (`S.png`) and textured
/// render (`I.png`) of the source params.
pub fn run_render(cfg: &TaskConfig) -> Result<()> {
    cfg.validate()?;
    let model = read_model(&cfg.model)?;
    let src = load_params(&cfg.src_params, &model)?;
    let r = synthetic::render(&model, &src, cfg.resolution.width, cfg.resolution.height)?;
    ensure_dir(&cfg.out)?;
    r.map.write_bin(&cfg.out.join("C.bin"))?;
    r.map.write_visual_png(&cfg.out.join("C.png"))?;
    silhouette(&r.map).write_png(&cfg.out.join("S.png"))?;
    r.image.write_png(&cfg.out.join("I.png"))?;
    Ok(())
}

/// Writes the synthetic humanoid (`model.json`, `model.bin`), seeded source
/// and reference params and their textured renders.
pub fn gen_synthetic(seed: u64, out: &Path, size: Resolution) -> Result<()> {
    ensure_dir(out)?;
    let model = synthetic::humanoid();
    write_model(&model, &out.join("model.json"))?;
    let (src, reference) = synthetic::params_pair(seed);
    for (name, params) in [("src", &src), ("ref", &reference)] {
        write_atomic(&out.join(format!("{name}_params.json")), params.to_json().as_bytes())?;
        synthetic::render(&model, params, size.width, size.height)?
            .image
            .write_png(&out.join(format!("{name}.png")))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    Ssim,
    L1,
    Perceptual,
    Face,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Ssim => "ssim",
            Metric::L1 => "l1",
            Metric::Perceptual => "perceptual",
            Metric::Face => "face",
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ssim" => Ok(Metric::Ssim),
            "l1" => Ok(Metric::L1),
            "perceptual" => Ok(Metric::Perceptual),
            "face" => Ok(Metric::Face),
            other => Err(Error::Config(format!(
                "unknown metric {other:?} (expected ssim, l1, perceptual or face)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExtractorChoice {
    Toy,
    Identity,
    External(PathBuf),
}

impl FromStr for ExtractorChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(ExtractorChoice::Toy),
            "identity" => Ok(ExtractorChoice::Identity),
            _ => match s.strip_prefix("external:") {
                Some(p) if !p.is_empty() => Ok(ExtractorChoice::External(PathBuf::from(p))),
                _ => Err(Error::Config(format!(
                    "unknown extractor {s:?} (expected toy, identity or external:<path>)"
                ))),
            },
        }
    }
}

impl ExtractorChoice {
    pub fn load(&self) -> Result<Box<dyn FeatureExtractor>> {
        Ok(match self {
            ExtractorChoice::Toy => Box::new(ConvStack::toy()),
            ExtractorChoice::Identity => Box::new(IdentityExtractor),
            ExtractorChoice::External(p) => Box::new(ConvStack::read(p)?),
        })
    }
}

/// Parses `x,y,w,h`.
pub fn parse_face_box(s: &str) -> Result<FaceBox> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("expected x,y,w,h, got {s:?}")))?;
    match v[..] {
        [x, y, width, height] => Ok(FaceBox { x, y, width, height }),
        _ => Err(Error::Config(format!("expected x,y,w,h, got {s:?}"))),
    }
}

/// Inputs of the eval subcommand.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub prediction: PathBuf,
    pub target: PathBuf,
    pub metrics: Vec<Metric>,
    pub extractor: ExtractorChoice,
    pub reduction: Reduction,
    pub face_box: Option<FaceBox>,
    /// Model and params whose head silhouette gives the face box when none is set.
    pub face_source: Option<(PathBuf, PathBuf)>,
    pub out: Option<PathBuf>,
}

/// Face box taken from the rendered head silhouette.
pub fn head_face_box(model: &BodyModel, params: &BodyParams, size: Resolution) -> Result<FaceBox> {
    let head = model.group_faces(HEAD_GROUP)?;
    let projection = project(&skin(model, params)?, &params.camera);
    let map = rasterize(&projection.with_faces(head), size.width, size.height)?;
    FaceBox::from_mask(&silhouette(&map))
        .ok_or_else(|| Error::InvalidBox("head is not visible in the render".into()))
}

/// Metric values for a prediction / ground-truth pair on images in `[-1, 1]`.
/// SSIM is computed on the images mapped to `[0, 1]`; the other metrics on the
/// images as given.
pub fn evaluate(
    prediction: &FeatureMap,
    target: &FeatureMap,
    metrics: &[Metric],
    extractor: &dyn FeatureExtractor,
    reduction: Reduction,
    face_box: Option<&FaceBox>,
) -> Result<Map<String, Value>> {
    prediction.check_same_shape(target, "evaluated images")?;
    let mut record = Map::new();
    for &m in metrics {
        let value = match m {
            Metric::Ssim => ssim(&to_unit(prediction), &to_unit(target), &SsimParams::default())?,
            Metric::L1 => l1_distance(prediction, target, reduction)?,
            Metric::Perceptual => feature_distance(extractor, prediction, target, reduction)?,
            Metric::Face => {
                let face = face_box.ok_or_else(|| Error::Config("face metric needs a face box".into()))?;
                face_identity_loss(extractor, prediction, target, face, reduction)?
            }
        };
        let number = serde_json::Number::from_f64(value)
            .ok_or_else(|| Error::Invariant(format!("{} is not finite", m.name())))?;
        record.insert(m.name().to_string(), Value::Number(number));
    }
    Ok(record)
}

/// Evaluates and returns the JSON record; also writes `eval.json` when an
/// output directory is set.
pub fn run_eval(cfg: &EvalConfig) -> Result<String> {
    if cfg.metrics.is_empty() {
        return Err(Error::Config("no metrics requested".into()));
    }
    let prediction = FeatureMap::read_png(&cfg.prediction)?;
    let target = FeatureMap::read_png(&cfg.target)?;
    let size = Resolution {
        width: target.width(),
        height: target.height(),
    };
    let face_box = match (&cfg.face_box, &cfg.face_source) {
        (Some(b), _) => Some(*b),
        (None, Some((model, params))) if cfg.metrics.contains(&Metric::Face) => {
            let model = read_model(model)?;
            let params = load_params(params, &model)?;
            Some(head_face_box(&model, &params, size)?)
        }
        _ => None,
    };
    log::debug!("face box for evaluation: {face_box:?}");
    let extractor = cfg.extractor.load()?;
    let record = evaluate(
        &prediction,
        &target,
        &cfg.metrics,
        extractor.as_ref(),
        cfg.reduction,
        face_box.as_ref(),
    )?;
    let text = serde_json::to_string_pretty(&Value::Object(record))? + "\n";
    if let Some(out) = &cfg.out {
        ensure_dir(out)?;
        write_atomic(&out.join("eval.json"), text.as_bytes())?;
    }
    Ok(text)
}
