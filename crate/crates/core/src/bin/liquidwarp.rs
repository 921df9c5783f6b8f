use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use liquidwarp::objectives::Reduction;
use liquidwarp::pipeline::{
    self, default_sweep, parse_face_box, parse_translation, EvalConfig, ExtractorChoice, Metric,
    Resolution, Task, TaskConfig, ViewSpec,
};
use liquidwarp::Error;

/// Body-mesh warping: motion imitation, novel views, appearance transfer.
#[derive(Parser)]
#[command(name = "liquidwarp", version)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "LIQUIDWARP_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    src_params: PathBuf,
    /// Source image; the textured render of the source params when omitted.
    #[arg(long)]
    src_image: Option<PathBuf>,
    #[arg(long, default_value = "256x256", value_parser = parse_resolution)]
    size: Resolution,
    #[arg(long)]
    out: PathBuf,
    /// Also write flow visualizations and the occlusion mask.
    #[arg(long)]
    dump_flow: bool,
    /// Also write silhouettes and extra correspondence renders.
    #[arg(long)]
    dump_maps: bool,
}

impl Common {
    fn config(self, task: Task) -> TaskConfig {
        let mut cfg = TaskConfig::new(task, self.model, self.src_params, self.out);
        cfg.src_image = self.src_image;
        cfg.resolution = self.size;
        cfg.dump_flow = self.dump_flow;
        cfg.dump_maps = self.dump_maps;
        cfg
    }
}

#[derive(Subcommand)]
enum Command {
    /// Repose the source into the reference pose.
    Imitate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ref_params: PathBuf,
    },
    /// Render the source from a rotated and translated viewpoint.
    View {
        #[command(flatten)]
        common: Common,
        /// Degrees about the vertical axis.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        yaw: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        pitch: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        roll: f64,
        /// Translation as x,y,z.
        #[arg(long, value_parser = parse_xyz, allow_hyphen_values = true)]
        translate: Option<[f64; 3]>,
        /// Emit one view per yaw from 30 to 330 degrees in 30 degree steps.
        #[arg(long)]
        sweep: bool,
    },
    /// Keep the source head and take the body appearance from the reference.
    Swap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ref_params: PathBuf,
        #[arg(long)]
        ref_image: Option<PathBuf>,
    },
    /// Write the correspondence map, silhouette and textured render.
    Render {
        #[command(flatten)]
        common: Common,
    },
    /// Compare a prediction image against ground truth.
    Eval {
        /// Predicted image.
        #[arg(long)]
        src_image: PathBuf,
        /// Ground-truth image.
        #[arg(long)]
        ref_image: PathBuf,
        /// Comma-separated subset of ssim,l1,perceptual,face.
        #[arg(long, default_value = "ssim")]
        metrics: String,
        /// toy, identity or external:<path>.
        #[arg(long, default_value = "toy")]
        extractor: String,
        /// Face crop as x,y,w,h.
        #[arg(long)]
        face_box: Option<String>,
        /// With --ref-params, derive the face box from the rendered head.
        #[arg(long, requires = "ref_params")]
        model: Option<PathBuf>,
        #[arg(long, requires = "model")]
        ref_params: Option<PathBuf>,
        /// Sum over elements instead of averaging.
        #[arg(long)]
        sum: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the synthetic humanoid, seeded params and renders.
    GenSynthetic {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "256x256", value_parser = parse_resolution)]
        size: Resolution,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_resolution(s: &str) -> Result<Resolution, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_xyz(s: &str) -> Result<[f64; 3], String> {
    parse_translation(s).map_err(|e| e.to_string())
}

fn run(command: Command) -> liquidwarp::Result<()> {
    match command {
        Command::Imitate { common, ref_params } => {
            let mut cfg = common.config(Task::Imitate);
            cfg.ref_params = Some(ref_params);
            pipeline::run_imitate(&cfg)
        }
        Command::View {
            common,
            yaw,
            pitch,
            roll,
            translate,
            sweep,
        } => {
            let mut cfg = common.config(Task::View);
            cfg.view = Some(ViewSpec {
                yaw,
                pitch,
                roll,
                translate: translate.unwrap_or_default(),
            });
            cfg.sweep = sweep.then(default_sweep);
            pipeline::run_view(&cfg)
        }
        Command::Swap {
            common,
            ref_params,
            ref_image,
        } => {
            let mut cfg = common.config(Task::Swap);
            cfg.ref_params = Some(ref_params);
            cfg.ref_image = ref_image;
            pipeline::run_swap(&cfg)
        }
        Command::Render { common } => pipeline::run_render(&common.config(Task::Render)),
        Command::Eval {
            src_image,
            ref_image,
            metrics,
            extractor,
            face_box,
            model,
            ref_params,
            sum,
            out,
        } => {
            let cfg = EvalConfig {
                prediction: src_image,
                target: ref_image,
                metrics: metrics
                    .split(',')
                    .map(str::parse::<Metric>)
                    .collect::<liquidwarp::Result<_>>()?,
                extractor: extractor.parse::<ExtractorChoice>()?,
                reduction: if sum { Reduction::Sum } else { Reduction::Mean },
                face_box: face_box.as_deref().map(parse_face_box).transpose()?,
                face_source: model.zip(ref_params),
                out,
            };
            print!("{}", pipeline::run_eval(&cfg)?);
            Ok(())
        }
        Command::GenSynthetic { seed, size, out } => pipeline::gen_synthetic(seed, &out, size),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match pipeline::with_threads(cli.threads, || run(cli.command)).and_then(|r| r) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("liquidwarp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
