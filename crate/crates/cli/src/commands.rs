//! Subcommand implementations.

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use nerfhmc::data::{build_dataset, CameraMode, CameraRig, Dataset, DatasetSpec, Family};
use nerfhmc::eval::{
    ablate_annealing as run_annealing_ablation, ablate_renderer as run_renderer_ablation, acceptance_csv,
    default_step_sweep, evaluate_states, render_states, AnnealingAblationConfig, EvalReport, ReferenceView,
    RendererAblationConfig,
};
use nerfhmc::field::FieldConfig;
use nerfhmc::inference::archive::write_diagnostics;
use nerfhmc::inference::{
    fit_vi, run_annealed_chains, sample_vi, AnnealingSchedule, ChainConfig, ChainInit, GradientEstimator,
    PosteriorTarget, RenderMode, SampleArchive, Target, ViConfig, DEFAULT_BASE_STEP,
};
use nerfhmc::model::{Model, ModelConfig, DEFAULT_ALPHA_W};
use nerfhmc::render::{render_image, FoamScene, Renderer};
use nerfhmc::vae::train::{train as run_training, TrainConfig};
use nerfhmc::vae::{AdamConfig, EncoderConfig};

use crate::options::*;
use crate::run::*;

pub fn make_data(cmd: Cmd<MakeDataOpts>) -> CliResult<()> {
    let mut o = merge(cmd.config.as_deref(), &cmd.opts)?;
    let base = DatasetSpec::desk(0);
    let size = *o.image_size.get_or_insert(base.rig.width);
    let families = o
        .families
        .get_or_insert_with(|| base.families.iter().map(Family::to_string).collect())
        .iter()
        .map(|f| f.parse())
        .collect::<nerfhmc::Result<Vec<Family>>>()
        .map_err(|e| usage(e.to_string()))?;
    if families.is_empty() {
        return Err(usage("--families must name at least one family"));
    }
    let camera_mode = match o.camera_mode.get_or_insert_with(|| "uniform-random".into()).as_str() {
        "uniform-random" => CameraMode::UniformRandom,
        "equally-spaced" => CameraMode::EquallySpaced,
        other => return Err(usage(format!("unknown camera mode `{other}`"))),
    };
    let spec = DatasetSpec {
        n_objects: *o.objects.get_or_insert(base.n_objects),
        views_per_object: *o.views.get_or_insert(base.views_per_object),
        rig: CameraRig::new(size, size),
        grid_size: *o.grid.get_or_insert(base.grid_size),
        families,
        camera_mode,
        seed: *o.seed.get_or_insert(0),
    };
    let run = RunDir::create(&cmd.out)?;
    run.write_config(&o)?;
    let ds = build_dataset(&spec)?;
    ds.save(&cmd.out)?;
    println!("wrote {} objects x {} views to {}", spec.n_objects, spec.views_per_object, cmd.out.display());
    Ok(())
}

pub fn train(cmd: Cmd<TrainOpts>) -> CliResult<()> {
    let mut o = merge(cmd.config.as_deref(), &cmd.opts)?;
    let ds = Dataset::load(required(&o.dataset, "dataset")?)?;
    let (w, h) = ds.image_size();
    if w != h {
        return Err(usage("training needs square images"));
    }
    let grid = *o.grid.get_or_insert(ds.spec.grid_size);
    let size = *o.image_size.get_or_insert(w);
    if grid != ds.spec.grid_size || size != w {
        return Err(usage(format!(
            "--grid {grid} / --image-size {size} differ from the dataset's {} / {w}",
            ds.spec.grid_size
        )));
    }
    let field = FieldConfig {
        encoding_order: *o.encoding_order.get_or_insert(3),
        hidden_width: *o.field_width.get_or_insert(16),
        hidden_layers: 2,
        grid_size: grid,
    };
    let seed = *o.seed.get_or_insert(0);
    let config = ModelConfig {
        field,
        latent_dim: *o.latent_dim.get_or_insert(8),
        flow_hidden: *o.flow_hidden.get_or_insert(32),
        hypernet_hidden: *o.hypernet_hidden.get_or_insert(64),
        hypernet_layers: *o.hypernet_layers.get_or_insert(2),
        encoder: EncoderConfig::new(size, size),
        alpha_w: *o.alpha_w.get_or_insert(DEFAULT_ALPHA_W),
        scene: FoamScene::new(grid),
        perm_seed: seed,
    };
    let tc = TrainConfig {
        iterations: *o.iterations.get_or_insert(3000),
        adam: AdamConfig {
            learning_rate: *o.learning_rate.get_or_insert(1e-3),
            ..AdamConfig::default()
        },
        s: *o.s.get_or_insert(0.1),
        objects_per_batch: *o.objects_per_batch.get_or_insert(8),
        views_per_object: *o.views_per_object.get_or_insert(5),
        rays_per_object: *o.rays_per_object.get_or_insert(256),
        likelihood_weight: 1.0,
        log_every: *o.log_every.get_or_insert(10),
        seed,
    };
    let run = RunDir::create(&cmd.out)?;
    run.write_config(&o)?;
    let model = Model::init(config, seed)?;
    let mut csv = String::from("iteration,elbo,wall_time_s\n");
    let out = run_training(model, &ds, &tc, |r| {
        let _ = writeln!(csv, "{},{},{}", r.iteration, r.elbo, r.wall_time_s);
        eprintln!("iteration {:>6}  elbo {:>14.3}  {:>8.1}s", r.iteration, r.elbo, r.wall_time_s);
    })?;
    run.write_text("train_log.csv", &csv)?;
    out.model.save(&run.path("model.ckpt"))?;
    println!("wrote {}", run.path("model.ckpt").display());
    Ok(())
}

pub fn sample_prior(cmd: Cmd<SamplePriorOpts>) -> CliResult<()> {
    let mut o = merge(cmd.config.as_deref(), &cmd.opts)?;
    let model = load_model(&o.checkpoint)?;
    let n = *o.n.get_or_insert(4);
    let n_views = *o.views.get_or_insert(4);
    let seed = *o.seed.get_or_insert(0);
    let run = RunDir::create(&cmd.out)?;
    run.write_config(&o)?;
    let rig = CameraRig::new(model.config.encoder.image_width, model.config.encoder.image_height);
    let mut states = Vec::with_capacity(n);
    for i in 0..n {
        let (state, weights) = model.sample_prior(nerfhmc::inference::hmc::mix(seed, i as u64))?;
        for v in 0..n_views {
            let az = 2.0 * std::f64::consts::PI * v as f64 / n_views as f64;
            let img = render_image(&weights, &rig.at_azimuth(az)?, &model.config.scene, Renderer::Foam)?;
            img.write_ppm(&run.path(&format!("sample_{i:03}_view_{v:02}.ppm")))?;
        }
        states.push(state.flat());
    }
    let archive = SampleArchive::from_draws(
        "prior",
        states,
        seed,
        model.config.latent_dim,
        model.config.field.weight_count(),
    );
    archive.save(&run.path("samples.bin"))?;
    println!("wrote {n} prior draws to {}", cmd.out.display());
    Ok(())
}

#[derive(Serialize)]
struct ChainSummary {
    n_samples: usize,
    seeds: Vec<u64>,
    acceptance_rates: Vec<f64>,
    final_acceptance: f64,
    grad_evals: Vec<usize>,
    runtime_s: f64,
}

pub fn infer_hmc(cmd: Cmd<HmcOpts>, with_delta: bool) -> CliResult<()> {
    let mut o = merge(cmd.config.as_deref(), &cmd.opts)?;
    let model = load_model(&o.checkpoint)?;
    let (obs, _, _) = load_observation(&mut o.obs, &model)?;
    let mode = match o.renderer.get_or_insert_with(|| "foam".into()).as_str() {
        "foam" => RenderMode::Foam,
        "quadrature" => RenderMode::ReseededQuadrature {
            n_samples: *o.quadrature_samples.get_or_insert(32),
        },
        other => return Err(usage(format!("unknown renderer `{other}`"))),
    };
    let schedule = AnnealingSchedule {
        s0: *o.s0.get_or_insert(5.0),
        s_final: *o.s_final.get_or_insert(0.1),
        n_steps: *o.anneal_steps.get_or_insert(100),
        base_step: *o.step.get_or_insert(DEFAULT_BASE_STEP),
    };
    let chains = ChainConfig {
        n_chains: *o.chains.get_or_insert(8),
        n_leapfrog: *o.leapfrog.get_or_insert(100),
        keep_last: *o.keep_last.get_or_insert(16),
        seed: *o.seed.get_or_insert(0),
    };
    schedule.validate().map_err(|e| usage(e.to_string()))?;
    let run_dir = RunDir::create(&cmd.out)?;
    run_dir.write_config(&o)?;
    let target = PosteriorTarget::new(&model, &obs, mode, with_delta)?;
    let start = Instant::now();
    let run = run_annealed_chains(&target, &schedule, &chains, &ChainInit::Prior)?;
    let runtime_s = start.elapsed().as_secs_f64();
    let method = if with_delta { "hmc" } else { "latent-only" };
    let archive = SampleArchive::from_chains(
        method,
        &run,
        &chains,
        &schedule,
        model.config.latent_dim,
        model.config.field.weight_count(),
    );
    archive.save(&run_dir.path("samples.bin"))?;
    write_diagnostics(&run_dir.path("diagnostics.csv"), &run)?;
    let summary = ChainSummary {
        n_samples: run.n_samples(),
        seeds: run.seeds.clone(),
        acceptance_rates: run.acceptance_rates(),
        final_acceptance: run.final_acceptance(),
        grad_evals: run.grad_evals.clone(),
        runtime_s,
    };
    run_dir.write_json("summary.json", &summary)?;
    println!(
        "{} samples over {} chains, mean acceptance {:.3}, state dim {}",
        summary.n_samples,
        chains.n_chains,
        summary.acceptance_rates.iter().sum::<f64>() / chains.n_chains as f64,
        target.dim()
    );
    Ok(())
}

pub fn infer_vi(cmd: Cmd<ViOpts>) -> CliResult<()> {
    let mut o = merge(cmd.config.as_deref(), &cmd.opts)?;
    let model = load_model(&o.checkpoint)?;
    let (obs, _, _) = load_observation(&mut o.obs, &model)?;
    let estimator = match o.estimator.get_or_insert_with(|| "stl".into()).as_str() {
        "stl" => GradientEstimator::Stl,
        "plain" => GradientEstimator::Plain,
        other => return Err(usage(format!("unknown estimator `{other}`"))),
    };
    let seed = *o.seed.get_or_insert(0);
    let cfg = ViConfig {
        n_steps: *o.steps.get_or_insert(1500),
        adam: AdamConfig {
            learning_rate: *o.learning_rate.get_or_insert(0.01),
            ..AdamConfig::default()
        },
        init_log_sigma: *o.init_log_sigma.get_or_insert(-2.0),
        s: *o.s.get_or_insert(0.1),
        seed,
        estimator,
    };
    let n = *o.samples.get_or_insert(16);
    let run = RunDir::create(&cmd.out)?;
    run.write_config(&o)?;
    let target = PosteriorTarget::full(&model, &obs)?;
    let fit = fit_vi(&target, &cfg, None)?;
    let draws = sample_vi(&fit.params, n, nerfhmc::inference::hmc::mix(seed, u64::MAX));
    let archive = SampleArchive::from_draws(
        "vi",
        draws,
        seed,
        model.config.latent_dim,
        model.config.field.weight_count(),
    );
    archive.save(&run.path("samples.bin"))?;
    run.write_json("vi_params.json", &fit.params)?;
    let mut csv = String::from("step,elbo\n");
    for (i, e) in fit.elbo.iter().enumerate() {
        let _ = writeln!(csv, "{i},{e}");
    }
    run.write_text("elbo.csv", &csv)?;
    println!("fitted {} steps, wrote {n} draws", cfg.n_steps);
    Ok(())
}

pub fn render(cmd: Cmd<RenderOpts>) -> CliResult<()> {
    let mut o = merge(cmd.config.as_deref(), &cmd.opts)?;
    let model = load_model(&o.checkpoint)?;
    let archive = SampleArchive::load(required(&o.samples, "samples")?)?;
    let azimuths = o.azimuths.get_or_insert_with(|| vec![0.0]).clone();
    let max = *o.max_samples.get_or_insert(archive.len());
    let run = RunDir::create(&cmd.out)?;
    run.write_config(&o)?;
    let states: Vec<Vec<f64>> = archive.full_states().into_iter().take(max).collect();
    let rig = CameraRig::new(model.config.encoder.image_width, model.config.encoder.image_height);
    for (a, &az) in azimuths.iter().enumerate() {
        let images = render_states(&model, &states, &rig.at_azimuth(az)?)?;
        for (i, img) in images.iter().enumerate() {
            img.write_ppm(&run.path(&format!("sample_{i:03}_view_{a:02}.ppm")))?;
        }
    }
    println!("rendered {} states from {} cameras", states.len(), azimuths.len());
    Ok(())
}

pub fn eval(cmd: Cmd<EvalOpts>) -> CliResult<()> {
    let mut o = merge(cmd.config.as_deref(), &cmd.opts)?;
    let model = load_model(&o.checkpoint)?;
    let paths = required(&o.samples, "samples")?.clone();
    let (_, conditioned, entry) = load_observation(&mut o.obs, &model)?;
    let held_out: Vec<ReferenceView> = match &entry {
        Some(e) => {
            let cond = o.obs.view.unwrap_or(0);
            let idx = o
                .held_out
                .get_or_insert_with(|| (0..e.views.len()).filter(|&v| v != cond).step_by(2).collect())
                .clone();
            idx.iter()
                .map(|&v| {
                    let view = e
                        .views
                        .get(v)
                        .ok_or_else(|| usage(format!("object has no view {v}")))?;
                    Ok(ReferenceView {
                        name: format!("view_{v:02}"),
                        camera: view.camera.clone(),
                        image: view.image.clone(),
                        region: nerfhmc::data::Region::Full,
                    })
                })
                .collect::<CliResult<_>>()?
        }
        None => Vec::new(),
    };
    let run = RunDir::create(&cmd.out)?;
    run.write_config(&o)?;
    let mut reports: Vec<EvalReport> = Vec::with_capacity(paths.len());
    for path in &paths {
        let start = Instant::now();
        let archive = SampleArchive::load(path)?;
        let mut report = evaluate_states(
            &model,
            &archive.header.method,
            &archive.full_states(),
            std::slice::from_ref(&conditioned),
            &held_out,
        )?;
        report.acceptance_rates = archive.header.acceptance.clone();
        report.runtime_s = start.elapsed().as_secs_f64();
        println!(
            "{:<12} samples {:>4}  conditioned PSNR {:>7.2} dB  held-out variance {:.6}",
            report.method,
            report.n_samples,
            report.conditioned[0].mean_psnr.db(),
            report.held_out_variance
        );
        reports.push(report);
    }
    run.write_json("report.json", &reports)?;
    Ok(())
}

pub fn ablate_renderer(cmd: Cmd<AblateRendererOpts>) -> CliResult<()> {
    let mut o = merge(cmd.config.as_deref(), &cmd.opts)?;
    let model = load_model(&o.checkpoint)?;
    let defaults = RendererAblationConfig::new(0);
    let cfg = RendererAblationConfig {
        steps: o.steps.get_or_insert_with(default_step_sweep).clone(),
        n_chains: *o.chains.get_or_insert(defaults.n_chains),
        n_leapfrog: *o.leapfrog.get_or_insert(defaults.n_leapfrog),
        n_iterations: *o.iterations.get_or_insert(defaults.n_iterations),
        s: *o.s.get_or_insert(defaults.s),
        quadrature_samples: *o.quadrature_samples.get_or_insert(defaults.quadrature_samples),
        azimuth: *o.azimuth.get_or_insert(defaults.azimuth),
        seed: *o.seed.get_or_insert(0),
    };
    let run = RunDir::create(&cmd.out)?;
    run.write_config(&o)?;
    let rows = run_renderer_ablation(&model, &cfg)?;
    let csv = acceptance_csv(&rows);
    run.write_text("acceptance.csv", &csv)?;
    print!("{csv}");
    Ok(())
}

pub fn ablate_annealing(cmd: Cmd<AblateAnnealingOpts>) -> CliResult<()> {
    let mut o = merge(cmd.config.as_deref(), &cmd.opts)?;
    let model = load_model(&o.checkpoint)?;
    let (obs, _, _) = load_observation(&mut o.obs, &model)?;
    let schedule = AnnealingSchedule::annealed(
        *o.anneal_steps.get_or_insert(100),
        *o.step.get_or_insert(DEFAULT_BASE_STEP),
    );
    schedule.validate().map_err(|e| usage(e.to_string()))?;
    let terminal = schedule.step_size(schedule.n_steps)?;
    let cfg = AnnealingAblationConfig {
        schedule,
        fixed_step: *o.fixed_step.get_or_insert(terminal),
        n_chains: *o.chains.get_or_insert(8),
        n_leapfrog: *o.leapfrog.get_or_insert(100),
        seed: *o.seed.get_or_insert(0),
    };
    let run = RunDir::create(&cmd.out)?;
    run.write_config(&o)?;
    let report = run_annealing_ablation(&model, &obs, &cfg)?;
    run.write_json("annealing.json", &report)?;
    let mut csv = String::from("chain,annealed_mse,fixed_mse\n");
    for (c, (a, f)) in report.annealed_mse.iter().zip(&report.fixed_mse).enumerate() {
        let _ = writeln!(csv, "{c},{a},{f}");
    }
    run.write_text("annealing.csv", &csv)?;
    println!(
        "across-chain MSE std: annealed {:.6}, fixed {:.6}",
        report.annealed_std, report.fixed_std
    );
    Ok(())
}
