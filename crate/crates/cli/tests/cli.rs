use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nerfhmc"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn nerfhmc")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "nerfhmc {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A tiny dataset and model shared by the pipeline tests.
struct Fixture {
    _dir: TempDir,
    data: PathBuf,
    ckpt: PathBuf,
    root: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let data = root.join("data");
        ok(&[
            "make-data", "--out", s(&data), "--objects", "2", "--views", "4", "--image-size", "8", "--grid", "8",
            "--families", "two-limb", "--seed", "1",
        ]);
        let train = root.join("train");
        ok(&[
            "train", "--out", s(&train), "--dataset", s(&data), "--iterations", "3", "--encoding-order", "1",
            "--field-width", "4", "--latent-dim", "2", "--flow-hidden", "4", "--hypernet-hidden", "4",
            "--objects-per-batch", "2", "--views-per-object", "2", "--rays-per-object", "16", "--log-every", "1",
        ]);
        Fixture {
            ckpt: train.join("model.ckpt"),
            data,
            root,
            _dir: dir,
        }
    })
}

#[test]
fn no_arguments_exits_with_usage_error() {
    let out = run(&[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_flag_exits_with_usage_error() {
    let out = run(&["make-data", "--out", "/tmp/x", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_succeeds() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("infer-hmc"));
}

#[test]
fn missing_checkpoint_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "sample-prior", "--out", s(&dir.path().join("o")), "--checkpoint", s(&dir.path().join("none.ckpt")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"objects": 1, "colour": "red"}"#).unwrap();
    let out = run(&["make-data", "--out", s(&dir.path().join("o")), "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_values_are_used_and_flags_override_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"objects": 1, "views": 2, "image_size": 8, "grid": 8, "families": ["box-stack"], "seed": 4}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("o");
    ok(&["make-data", "--out", s(&out_dir), "--config", s(&cfg), "--views", "3"]);
    let resolved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(resolved["views"], 3);
    assert_eq!(resolved["objects"], 1);
    assert!(out_dir.join("object_0000/view_02.ppm").exists());
}

#[test]
fn training_writes_checkpoint_and_log() {
    let f = fixture();
    assert!(f.ckpt.exists());
    let log = std::fs::read_to_string(f.ckpt.parent().unwrap().join("train_log.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("iteration,elbo,wall_time_s"));
    assert!(lines.count() >= 3);
}

#[test]
fn prior_samples_are_rendered() {
    let f = fixture();
    let out = f.root.join("prior");
    ok(&["sample-prior", "--out", s(&out), "--checkpoint", s(&f.ckpt), "--n", "2", "--views", "2"]);
    assert!(out.join("sample_001_view_01.ppm").exists());
    assert!(out.join("samples.bin").exists());
}

fn hmc_args<'a>(out: &'a str, f: &'a Fixture) -> Vec<&'a str> {
    vec!["infer-hmc", "--out", out, "--checkpoint", s(&f.ckpt), "--dataset", s(&f.data), "--object", "1", "--view", "0"]
}

#[test]
fn full_schedule_yields_128_samples() {
    let f = fixture();
    let out = f.root.join("hmc_full");
    let mut args = hmc_args(s(&out), f);
    args.extend(["--chains", "8", "--anneal-steps", "100", "--leapfrog", "100", "--keep-last", "16"]);
    ok(&args);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_samples"], 128);
    for g in summary["grad_evals"].as_array().unwrap() {
        assert_eq!(g, 10_000);
    }
    let archive = nerfhmc::inference::SampleArchive::load(&out.join("samples.bin")).unwrap();
    assert_eq!(archive.len(), 128);
    let diag = std::fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 1 + 8 * 100);
}

#[test]
fn identical_seeds_give_identical_outputs() {
    let f = fixture();
    let a = f.root.join("rep_a");
    let b = f.root.join("rep_b");
    for out in [&a, &b] {
        let mut args = hmc_args(s(out), f);
        args.extend(["--chains", "2", "--anneal-steps", "5", "--leapfrog", "3", "--keep-last", "2", "--seed", "7"]);
        ok(&args);
    }
    for file in ["samples.bin", "diagnostics.csv", "config.json"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn inference_render_and_eval_pipeline() {
    let f = fixture();
    let hmc = f.root.join("p_hmc");
    let mut args = hmc_args(s(&hmc), f);
    args.extend(["--chains", "2", "--anneal-steps", "4", "--leapfrog", "3", "--keep-last", "2"]);
    ok(&args);

    let latent = f.root.join("p_latent");
    let mut args = hmc_args(s(&latent), f);
    args[0] = "infer-latent-only";
    args.extend(["--chains", "2", "--anneal-steps", "4", "--leapfrog", "3", "--keep-last", "2"]);
    ok(&args);
    let la = nerfhmc::inference::SampleArchive::load(&latent.join("samples.bin")).unwrap();
    assert_eq!(la.header.method, "latent-only");
    assert_eq!(la.header.state_dim, la.header.latent_dim);

    let vi = f.root.join("p_vi");
    ok(&[
        "infer-vi", "--out", s(&vi), "--checkpoint", s(&f.ckpt), "--dataset", s(&f.data), "--object", "1",
        "--steps", "20", "--samples", "4",
    ]);
    assert!(vi.join("vi_params.json").exists());
    assert_eq!(std::fs::read_to_string(vi.join("elbo.csv")).unwrap().lines().count(), 21);

    let render = f.root.join("p_render");
    ok(&[
        "render", "--out", s(&render), "--checkpoint", s(&f.ckpt), "--samples", s(&hmc.join("samples.bin")),
        "--azimuths", "0,-1.5", "--max-samples", "2",
    ]);
    assert!(render.join("sample_001_view_01.ppm").exists());

    let eval = f.root.join("p_eval");
    let archives = format!(
        "{},{},{}",
        s(&hmc.join("samples.bin")),
        s(&vi.join("samples.bin")),
        s(&latent.join("samples.bin"))
    );
    ok(&[
        "eval", "--out", s(&eval), "--checkpoint", s(&f.ckpt), "--dataset", s(&f.data), "--object", "1",
        "--samples", &archives,
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval.join("report.json")).unwrap()).unwrap();
    let reports = report.as_array().unwrap();
    assert_eq!(reports.len(), 3);
    assert_eq!(reports[0]["method"], "hmc");
    assert_eq!(reports[1]["method"], "vi");
    assert_eq!(reports[0]["n_samples"], 4);
    // Views 1 and 3 are held out by default.
    assert_eq!(reports[0]["held_out"].as_array().unwrap().len(), 2);
    assert_eq!(reports[0]["acceptance_rates"].as_array().unwrap().len(), 2);
}

#[test]
fn conditioning_on_an_image_file() {
    let f = fixture();
    let image = f.data.join("object_0000/view_01.ppm");
    let out = f.root.join("img_hmc");
    ok(&[
        "infer-hmc", "--out", s(&out), "--checkpoint", s(&f.ckpt), "--image", s(&image), "--azimuth", "-0.7",
        "--region", "left-half", "--chains", "2", "--anneal-steps", "3", "--leapfrog", "2", "--keep-last", "1",
    ]);
    assert!(out.join("samples.bin").exists());
}

#[test]
fn ablation_commands_write_their_tables() {
    let f = fixture();
    let out = f.root.join("abl_r");
    ok(&[
        "ablate-renderer", "--out", s(&out), "--checkpoint", s(&f.ckpt), "--steps", "0.001,0.01", "--chains", "2",
        "--leapfrog", "2", "--iterations", "2", "--quadrature-samples", "4",
    ]);
    let csv = std::fs::read_to_string(out.join("acceptance.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);

    let out = f.root.join("abl_a");
    ok(&[
        "ablate-annealing", "--out", s(&out), "--checkpoint", s(&f.ckpt), "--dataset", s(&f.data), "--chains", "2",
        "--anneal-steps", "3", "--leapfrog", "2",
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("annealing.json")).unwrap()).unwrap();
    assert_eq!(report["annealed_mse"].as_array().unwrap().len(), 2);
    assert!(out.join("annealing.csv").exists());
}
