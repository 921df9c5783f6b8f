use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use liquidwarp::body::read_model;
use liquidwarp::flow::{mesh_grid, TransformFlow};
use liquidwarp::objectives::{feature_distance, l1_distance, ssim, ConvStack, Reduction, SsimParams};
use liquidwarp::pipeline::load_params;
use liquidwarp::raster::{silhouette, CorrespondenceMap};
use liquidwarp::tensor::{FeatureMap, Mask};
use liquidwarp::warp::bilinear_sample;

fn liquidwarp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_liquidwarp")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = liquidwarp(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: PathBuf) -> String {
    path.to_string_lossy().into_owned()
}

/// Synthetic inputs at 64x64 in a fresh directory.
fn scene(seed: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let syn = dir.path().join("syn");
    ok(&["gen-synthetic", "--seed", seed, "--size", "64x64", "--out", &p(syn.clone())]);
    (dir, syn)
}

fn task_args(syn: &Path, out: &Path) -> Vec<String> {
    [
        "--model",
        &p(syn.join("model.json")),
        "--src-params",
        &p(syn.join("src_params.json")),
        "--src-image",
        &p(syn.join("src.png")),
        "--size",
        "64x64",
        "--out",
        &p(out.to_path_buf()),
    ]
    .map(String::from)
    .to_vec()
}

fn run_task(cmd: &str, syn: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec![cmd.to_string()];
    args.extend(task_args(syn, out));
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(&refs);
}

#[test]
fn gen_synthetic_is_deterministic_and_loadable() {
    let (a, syn_a) = scene("0");
    let (_b, syn_b) = scene("0");
    for name in ["model.json", "model.bin", "src_params.json", "ref_params.json", "src.png", "ref.png"] {
        assert_eq!(std::fs::read(syn_a.join(name)).unwrap(), std::fs::read(syn_b.join(name)).unwrap(), "{name}");
    }
    let model = read_model(&syn_a.join("model.json")).unwrap();
    assert_eq!(model.num_faces(), 384);
    load_params(&syn_a.join("src_params.json"), &model).unwrap();
    load_params(&syn_a.join("ref_params.json"), &model).unwrap();

    let image = FeatureMap::read_png(&syn_a.join("src.png")).unwrap();
    let warped = bilinear_sample(&image, &mesh_grid(64, 64));
    assert_eq!(warped, image);
    let again = a.path().join("again.png");
    warped.write_png(&again).unwrap();
    assert_eq!(std::fs::read(&again).unwrap(), std::fs::read(syn_a.join("src.png")).unwrap());
}

#[test]
fn seeds_give_different_scenes() {
    let (_a, syn_a) = scene("1");
    let (_b, syn_b) = scene("2");
    assert_ne!(
        std::fs::read(syn_a.join("src_params.json")).unwrap(),
        std::fs::read(syn_b.join("src_params.json")).unwrap()
    );
}

#[test]
fn render_artifacts_round_trip() {
    let (dir, syn) = scene("3");
    let out = dir.path().join("render");
    run_task("render", &syn, &out, &[]);
    let cmap = CorrespondenceMap::read_bin(&out.join("C.bin")).unwrap();
    assert_eq!(Mask::read_png(&out.join("S.png")).unwrap(), silhouette(&cmap));
    assert_eq!(FeatureMap::read_png(&out.join("I.png")).unwrap().shape(), (3, 64, 64));
    image_dims(&out.join("C.png"), 64, 64);
}

fn image_dims(path: &Path, w: u32, h: u32) {
    let img = image::open(path).unwrap();
    assert_eq!((img.width(), img.height()), (w, h));
}

#[test]
fn self_imitation_reproduces_source() {
    let (dir, syn) = scene("4");
    let out = dir.path().join("imitate");
    run_task("imitate", &syn, &out, &["--ref-params", &p(syn.join("src_params.json")), "--dump-flow", "--dump-maps"]);
    let source = FeatureMap::read_png(&syn.join("src.png")).unwrap();
    let synthesized = FeatureMap::read_png(&out.join("I_syn.png")).unwrap();
    let fg = Mask::read_png(&out.join("S_s.png")).unwrap();
    for c in 0..3 {
        for y in 0..64 {
            for x in 0..64 {
                if fg.get(x, y) {
                    assert!((source.get(c, y, x) - synthesized.get(c, y, x)).abs() <= 2.0 / 255.0 + 1e-6);
                }
            }
        }
    }
    let flow = TransformFlow::read_bin(&out.join("T.bin")).unwrap();
    assert_eq!(flow.valid_mask(), Mask::read_png(&out.join("S_t.png")).unwrap());
    for name in ["C_s.bin", "C_t.bin"] {
        CorrespondenceMap::read_bin(&out.join(name)).unwrap();
    }
    for name in ["I_ft.png", "I_bg.png", "I_warp.png", "T.png", "occlusion.png", "C_s.png", "C_t.png"] {
        image_dims(&out.join(name), 64, 64);
    }
}

#[test]
fn view_sweep_writes_eleven_sets() {
    let (dir, syn) = scene("5");
    let out = dir.path().join("sweep");
    run_task("view", &syn, &out, &["--sweep"]);
    let mut names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names.len(), 11);
    assert_eq!((names[0].as_str(), names[10].as_str()), ("view_030", "view_330"));
    for n in &names {
        let flow = TransformFlow::read_bin(&out.join(n).join("T.bin")).unwrap();
        assert!(flow.valid().iter().any(|&v| v), "{n} has an empty target");
    }
}

#[test]
fn swap_head_flow_matches_silhouette_png() {
    let (dir, syn) = scene("6");
    let out = dir.path().join("swap");
    run_task("swap", &syn, &out, &["--ref-params", &p(syn.join("ref_params.json")), "--ref-image", &p(syn.join("ref.png"))]);
    let t1 = TransformFlow::read_bin(&out.join("T1.bin")).unwrap();
    assert_eq!(t1.valid_mask(), Mask::read_png(&out.join("S_head.png")).unwrap());
    TransformFlow::read_bin(&out.join("T2.bin")).unwrap();
    image_dims(&out.join("preview.png"), 64, 64);
}

#[test]
fn eval_matches_library() {
    let (dir, syn) = scene("7");
    let out = dir.path().join("imitate");
    run_task("imitate", &syn, &out, &["--ref-params", &p(syn.join("ref_params.json"))]);
    let (pred, truth) = (out.join("I_syn.png"), syn.join("src.png"));
    let eval_dir = dir.path().join("eval");
    let stdout = ok(&[
        "eval",
        "--src-image",
        &p(pred.clone()),
        "--ref-image",
        &p(truth.clone()),
        "--metrics",
        "l1,ssim,perceptual",
        "--out",
        &p(eval_dir.clone()),
    ])
    .stdout;
    let record: serde_json::Map<String, serde_json::Value> = serde_json::from_slice(&stdout).unwrap();
    let mut keys: Vec<&str> = record.keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(keys, ["l1", "perceptual", "ssim"]);
    assert_eq!(std::fs::read(eval_dir.join("eval.json")).unwrap(), stdout);

    let (a, b) = (FeatureMap::read_png(&pred).unwrap(), FeatureMap::read_png(&truth).unwrap());
    let unit = |m: &FeatureMap| m.map(|v| (v + 1.0) * 0.5);
    let expected = [
        ("ssim", ssim(&unit(&a), &unit(&b), &SsimParams::default()).unwrap()),
        ("l1", l1_distance(&a, &b, Reduction::Mean).unwrap()),
        ("perceptual", feature_distance(&ConvStack::toy(), &a, &b, Reduction::Mean).unwrap()),
    ];
    for (k, v) in expected {
        assert!((record[k].as_f64().unwrap() - v).abs() <= 1e-12, "{k}");
    }
}

#[test]
fn eval_identical_images() {
    let (_dir, syn) = scene("8");
    let img = p(syn.join("src.png"));
    let out = ok(&["eval", "--src-image", &img, "--ref-image", &img, "--extractor", "identity", "--metrics", "ssim,l1,face", "--face-box", "4,4,20,20", "--sum"]);
    let record: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(record["ssim"].as_f64(), Some(1.0));
    assert_eq!(record["l1"].as_f64(), Some(0.0));
    assert_eq!(record["face"].as_f64(), Some(0.0));
}

#[test]
fn eval_with_external_extractor_and_head_box() {
    let (dir, syn) = scene("9");
    let weights = dir.path().join("weights.bin");
    ConvStack::toy().write(&weights).unwrap();
    let img = p(syn.join("src.png"));
    let other = p(syn.join("ref.png"));
    let ext = format!("external:{}", p(weights));
    let args = |extractor: &str| {
        let out = ok(&[
            "eval", "--src-image", &img, "--ref-image", &other, "--metrics", "face",
            "--extractor", extractor, "--model", &p(syn.join("model.json")), "--ref-params", &p(syn.join("src_params.json")),
        ]);
        out.stdout
    };
    assert_eq!(args(&ext), args("toy"));
}

#[test]
fn exit_codes() {
    let (dir, syn) = scene("10");
    let missing = p(dir.path().join("nope.json"));
    let out = liquidwarp(&["render", "--model", &missing, "--src-params", &missing, "--out", &p(dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));

    let out = liquidwarp(&["render", "--model"]);
    assert_eq!(out.status.code(), Some(2));
    let out = liquidwarp(&["imitate", "--size", "64"]);
    assert_eq!(out.status.code(), Some(2));

    let img = p(syn.join("src.png"));
    let out = liquidwarp(&["eval", "--src-image", &img, "--ref-image", &img, "--metrics", "lpips"]);
    assert_eq!(out.status.code(), Some(3));
    let out = liquidwarp(&["eval", "--src-image", &img, "--ref-image", &img, "--metrics", "face"]);
    assert_eq!(out.status.code(), Some(3));

    // Params that do not fit the model.
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"theta": [0, 0, 0], "beta": [], "camera": [1, 0, 0]}"#).unwrap();
    let mut args = vec!["render".to_string()];
    args.extend(task_args(&syn, &dir.path().join("o")));
    args[4] = p(bad);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(liquidwarp(&refs).status.code(), Some(3));

    let out = Command::new(env!("CARGO_BIN_EXE_liquidwarp"))
        .args(["gen-synthetic", "--out", &p(dir.path().join("t"))])
        .env("LIQUIDWARP_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}
