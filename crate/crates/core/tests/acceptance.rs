//! Acceptance suite. Runs every criterion in sequence, prints one PASS/FAIL
//! line per criterion and exits nonzero if any fails.
//!
//! The trained-model criteria share one two-limb model trained once at the
//! start of criterion 7; criterion 8 trains its own reduced-capacity model.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nerfhmc::autodiff::{check_gradient, Tape, Var};
use nerfhmc::data::{build_dataset, crop_view, generate_object, oracle_render, CameraMode, CameraRig, DatasetSpec, Family, Region};
use nerfhmc::eval::{
    ablate_annealing, ablate_renderer, acceptance_csv, evaluate_states, observation_mse, AnnealingAblationConfig,
    ReferenceView, RendererAblationConfig,
};
use nerfhmc::field::{eval_field, positional_encode, squash_density, ConcatMlp, FieldConfig, FieldWeights, ShiftModulatedMlp};
use nerfhmc::inference::hmc::{leapfrog, StandardNormalTarget};
use nerfhmc::inference::{
    fit_vi, run_annealed_chains, sample_vi, AnnealingSchedule, ChainConfig, ChainInit, PosteriorTarget, Target, ViConfig,
};
use nerfhmc::model::{log_joint_noncentered, record_half_sse, LatentState, Model, ModelConfig, DEFAULT_ALPHA_W};
use nerfhmc::render::{render_image, FoamScene, Ray, Renderer, SampleBatch};
use nerfhmc::tensor::Matrix;
use nerfhmc::vae::train::{train, TrainConfig};
use nerfhmc::vae::elbo::{draw_noise, record_object, ElboOptions, ObjectBatch};
use nerfhmc::vae::{AdamConfig, EncoderConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

// ---------------------------------------------------------------- shared setup

const GRID: usize = 8;
const IMAGE: usize = 16;
const T_ANNEAL: usize = 50;
const N_LEAPFROG: usize = 20;

fn desk_config(hypernet_hidden: usize) -> ModelConfig {
    let field = FieldConfig {
        encoding_order: 3,
        hidden_width: 16,
        hidden_layers: 2,
        grid_size: GRID,
    };
    ModelConfig {
        field,
        latent_dim: 8,
        flow_hidden: 32,
        hypernet_hidden,
        hypernet_layers: 2,
        encoder: EncoderConfig::new(IMAGE, IMAGE),
        alpha_w: DEFAULT_ALPHA_W,
        scene: FoamScene::new(GRID),
        perm_seed: 0,
    }
}

fn rig() -> CameraRig {
    CameraRig::new(IMAGE, IMAGE)
}

fn train_two_limb(hypernet_hidden: usize) -> Model {
    let spec = DatasetSpec {
        n_objects: 64,
        views_per_object: 10,
        rig: rig(),
        grid_size: GRID,
        families: vec![Family::TwoLimb],
        camera_mode: CameraMode::UniformRandom,
        seed: 3,
    };
    let ds = build_dataset(&spec).expect("dataset");
    let cfg = TrainConfig {
        iterations: 3000,
        adam: AdamConfig {
            learning_rate: 1e-3,
            ..Default::default()
        },
        objects_per_batch: 8,
        views_per_object: 5,
        rays_per_object: 256,
        log_every: 500,
        ..Default::default()
    };
    let model = Model::init(desk_config(hypernet_hidden), 1).expect("model init");
    train(model, &ds, &cfg, |r| {
        println!("    train it {:5} elbo {:10.1} ({:.0}s)", r.iteration, r.elbo, r.wall_time_s)
    })
    .expect("training")
    .model
}

fn annealed() -> AnnealingSchedule {
    AnnealingSchedule::annealed(T_ANNEAL, nerfhmc::inference::DEFAULT_BASE_STEP)
}

/// Ground-truth render of a two-limb test object.
fn reference(obj_seed: u64, azimuth: f64, name: &str) -> (ReferenceView, nerfhmc::data::VoxelObject) {
    let obj = generate_object(obj_seed, Family::TwoLimb, GRID).expect("object");
    let camera = rig().at_azimuth(azimuth).expect("camera");
    let image = oracle_render(&obj, &camera, &FoamScene::new(GRID)).expect("oracle");
    (
        ReferenceView {
            name: name.into(),
            camera,
            image,
            region: Region::Full,
        },
        obj,
    )
}

// ---------------------------------------------------------------- criterion 1

fn architecture() -> Outcome {
    let d = FieldConfig::FULL_SCALE.weight_count();
    let f = FieldConfig::FULL_SCALE.features_per_scalar();
    let enc = positional_encode(&[0.3], FieldConfig::FULL_SCALE.encoding_order).len();
    outcome(
        d == 20_868 && f == 21 && enc == 21,
        format!("D = {d}, features per scalar = {f}, encoded length = {enc}"),
    )
}

// ---------------------------------------------------------------- criterion 2

/// Crossings found by testing every lattice plane of every axis.
fn brute_force_crossings(ray: &Ray, g: usize) -> Vec<[f64; 3]> {
    let mut ts: Vec<f64> = Vec::new();
    for axis in 0..3 {
        let d = ray.direction[axis];
        if d == 0.0 {
            continue;
        }
        for i in 0..=g {
            let c = -1.0 + 2.0 * i as f64 / g as f64;
            let t = (c - ray.origin[axis]) / d;
            if t < 0.0 {
                continue;
            }
            let p = ray.at(t);
            if (0..3).all(|a| a == axis || (p[a] >= -1.0 - 1e-9 && p[a] <= 1.0 + 1e-9)) {
                ts.push(t);
            }
        }
    }
    ts.sort_by(|a, b| a.total_cmp(b));
    ts.dedup_by(|b, a| (*b - *a).abs() < 1e-9);
    ts.into_iter().map(|t| ray.at(t)).collect()
}

fn brute_force_render(w: &FieldWeights, ray: &Ray, g: usize) -> [f64; 3] {
    let mut out = [0.0; 3];
    let mut trans = 1.0;
    for p in brute_force_crossings(ray, g) {
        let o = eval_field(w, p, ray.direction).unwrap();
        let a = squash_density(o.sigma, g);
        for c in 0..3 {
            out[c] += trans * a * o.color[c];
        }
        trans *= 1.0 - a;
    }
    out.map(|c| c + trans)
}

fn renderer_exactness() -> Outcome {
    let g = 8;
    let cfg = FieldConfig {
        encoding_order: 4,
        hidden_width: 32,
        hidden_layers: 2,
        grid_size: g,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut w = FieldWeights::random(cfg, &mut rng).into_vec();
    for v in &mut w {
        *v *= 2.0;
    }
    let w = FieldWeights::new(cfg, w).unwrap();
    let scene = FoamScene::new(g);
    let rays: Vec<Ray> = (0..1000)
        .map(|_| {
            let u: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let n = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
            let origin = u.map(|x| 3.0 * x / n);
            let target: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.2..1.2));
            Ray::new(origin, std::array::from_fn(|a| target[a] - origin[a]))
        })
        .collect();
    let batch = SampleBatch::foam(&cfg, &rays, &scene);
    let colors = batch.render(&w).unwrap();
    let mut max_dev = 0.0f64;
    for (ray, c) in rays.iter().zip(&colors) {
        let o = brute_force_render(&w, ray, g);
        for ch in 0..3 {
            max_dev = max_dev.max((o[ch] - c[ch]).abs());
        }
    }
    let max_evals = batch.samples_per_ray().max().unwrap_or(0);
    outcome(
        max_dev < 1e-6 && max_evals <= 3 * (g + 1),
        format!("max color deviation {max_dev:.2e}, max evaluations per ray {max_evals} (bound {})", 3 * (g + 1)),
    )
}

// ---------------------------------------------------------------- criterion 3

fn tiny_config() -> ModelConfig {
    let field = FieldConfig {
        encoding_order: 1,
        hidden_width: 4,
        hidden_layers: 2,
        grid_size: 4,
    };
    ModelConfig {
        field,
        latent_dim: 4,
        flow_hidden: 6,
        hypernet_hidden: 5,
        hypernet_layers: 2,
        encoder: EncoderConfig {
            image_width: 8,
            image_height: 8,
            channels: vec![3, 4],
            kernel: 3,
            camera_hidden: 4,
        },
        alpha_w: 0.05,
        scene: FoamScene::new(4),
        perm_seed: 5,
    }
}

fn differentiability() -> Outcome {
    let mut checks: Vec<(String, f64)> = Vec::new();
    let mut record = |name: &str, err: f64| checks.push((name.to_string(), err));

    // Foam render wrt field weights.
    let fcfg = FieldConfig {
        encoding_order: 2,
        hidden_width: 8,
        hidden_layers: 2,
        grid_size: 4,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let w0 = FieldWeights::random(fcfg, &mut rng).into_vec().iter().map(|v| 2.0 * v).collect::<Vec<_>>();
    let scene = FoamScene::new(4);
    let rays: Vec<Ray> = (0..4)
        .map(|i| Ray::new([3.0, 0.2 * i as f64, 2.5], [-3.0, 0.1 - 0.15 * i as f64, -2.4]))
        .collect();
    let batch = SampleBatch::foam(&fcfg, &rays, &scene);
    let proj: Vec<f64> = (0..rays.len() * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let rep = check_gradient(
        |t: &mut Tape, x: Var| {
            let c = batch.record(t, &fcfg, x);
            let p = t.constant(Matrix::from_vec(rays.len(), 3, proj.clone()));
            let m = t.mul(c, p);
            t.sum(m)
        },
        &w0,
        1e-6,
    )
    .unwrap();
    record("render", rep.max_rel_error);

    // Noncentered log joint wrt (z_tilde, delta).
    let cfg = tiny_config();
    let model = Model::init(cfg.clone(), 8).unwrap();
    let camera = CameraRig::new(6, 6).at_azimuth(0.4).unwrap();
    let (_, wtrue) = model.sample_prior(3).unwrap();
    let image = render_image(&wtrue, &camera, &cfg.scene, Renderer::Foam).unwrap();
    let obs = crop_view(&image, &camera, &Region::Full).unwrap();
    let s = 0.3;
    let x0: Vec<f64> = (0..cfg.state_dim()).map(|_| 0.5 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect();
    let obs_batch = SampleBatch::foam(&cfg.field, &obs.rays, &cfg.scene);
    let pixels = obs.pixel_matrix();
    let n = x0.len() as f64;
    let log_joint = |t: &mut Tape, x: Var| {
        let p = t.constant(Matrix::row(model.params.clone()));
        let w = model.record_weights(t, p, x, true);
        let half = record_half_sse(t, &cfg.field, w, &obs_batch, &pixels);
        let ll = t.scale(half, -1.0 / (s * s));
        let x2 = t.square(x);
        let sx2 = t.sum(x2);
        let lp = t.scale(sx2, -0.5);
        let lj = t.add(ll, lp);
        let norm = -0.5 * n * (2.0 * PI).ln() - 3.0 * obs.len() as f64 * (s * (2.0 * PI).sqrt()).ln();
        t.shift(lj, norm)
    };
    let rep = check_gradient(log_joint, &x0, 1e-6).unwrap();
    record("log joint", rep.max_rel_error);
    // The tape route must agree with the library value, and the HMC target's
    // cached gradient with differences of that value.
    let value = nerfhmc::autodiff::evaluate(log_joint, &x0).unwrap();
    let direct = log_joint_noncentered(&model, &LatentState::from_flat(&x0, cfg.latent_dim), &obs, s).unwrap();
    let value_gap = (value - direct).abs() / direct.abs().max(1.0);
    let target = PosteriorTarget::full(&model, &obs).unwrap();
    let g = target.gradient(&target.evaluate(&x0, 0).unwrap(), s);
    let mut worst = 0.0f64;
    let mut x = x0.clone();
    let h = 1e-6;
    for i in 0..x.len() {
        x[i] = x0[i] + h;
        let up = log_joint_noncentered(&model, &LatentState::from_flat(&x, cfg.latent_dim), &obs, s).unwrap();
        x[i] = x0[i] - h;
        let down = log_joint_noncentered(&model, &LatentState::from_flat(&x, cfg.latent_dim), &obs, s).unwrap();
        x[i] = x0[i];
        worst = worst.max(nerfhmc::autodiff::relative_error(g[i], (up - down) / (2.0 * h)));
    }
    record("target", worst);

    // Flow log-determinant wrt z_tilde, with nontrivial coupling weights.
    let l = cfg.layout();
    let mut params = model.params.clone();
    for v in &mut params[l.flow..l.flow + cfg.flow_layout().param_count()] {
        *v += 0.3 * rng.random_range(-1.0..1.0);
    }
    let perms = model.rc_perms();
    let flow = cfg.flow_layout();
    let z0: Vec<f64> = (0..cfg.latent_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let rep = check_gradient(
        |t: &mut Tape, x: Var| {
            let p = t.constant(Matrix::row(params.clone()));
            let (_, ld) = flow.forward(t, p, l.flow, &perms, x);
            t.sum(ld)
        },
        &z0,
        1e-6,
    )
    .unwrap();
    record("flow logdet", rep.max_rel_error);

    // ELBO wrt every learned parameter.
    let spec = DatasetSpec {
        n_objects: 1,
        views_per_object: 2,
        rig: CameraRig::new(8, 8),
        grid_size: 4,
        families: vec![Family::RandomBlobs],
        camera_mode: CameraMode::EquallySpaced,
        seed: 4,
    };
    let ds = build_dataset(&spec).unwrap();
    let views: Vec<_> = ds.entries[0].views.iter().collect();
    let rays = [(0, 10), (0, 27), (1, 35), (1, 44)];
    let object = ObjectBatch::new(&cfg, &views, Some(&rays)).unwrap();
    let eps = draw_noise(cfg.latent_dim, 1, 9).remove(0);
    let opts = ElboOptions::new(1.0);
    // Zero-initialized biases put some ReLUs exactly on their kink; check
    // at a generic nearby point instead.
    let theta: Vec<f64> = model.params.iter().map(|v| v + 0.02 * rng.random_range(-1.0..1.0)).collect();
    let rep = check_gradient(
        |t: &mut Tape, x: Var| record_object(t, &model, x, &object, &eps, opts).total,
        &theta,
        1e-5,
    )
    .unwrap();
    record(&format!("elbo ({} params, worst #{})", model.params.len(), rep.argmax), rep.max_rel_error);

    let pass = value_gap < 1e-10 && checks.iter().all(|(_, e)| *e < 1e-3);
    let lines: Vec<String> = checks.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    outcome(
        pass,
        format!("max rel err: {}; tape vs direct log joint {value_gap:.1e}", lines.join(", ")),
    )
}


// ---------------------------------------------------------------- criterion 4

fn sampler() -> Outcome {
    let dim = 10;
    let target = StandardNormalTarget { dim };
    let sched = AnnealingSchedule::fixed(1.0, 600, 0.25);
    let cfg = ChainConfig {
        n_chains: 8,
        n_leapfrog: 6,
        keep_last: 500,
        seed: 17,
    };
    let run = run_annealed_chains(&target, &sched, &cfg, &ChainInit::Prior).unwrap();
    let draws: Vec<&Vec<f64>> = run.samples.iter().flatten().collect();
    let n = draws.len() as f64;
    let mut worst_mean = 0.0f64;
    let mut worst_var = 0.0f64;
    let mut var_range = (f64::INFINITY, f64::NEG_INFINITY);
    for d in 0..dim {
        let m = draws.iter().map(|x| x[d]).sum::<f64>() / n;
        let v = draws.iter().map(|x| (x[d] - m).powi(2)).sum::<f64>() / (n - 1.0);
        worst_mean = worst_mean.max(m.abs());
        worst_var = worst_var.max((v - 1.0).abs());
        var_range = (var_range.0.min(v), var_range.1.max(v));
    }
    let moments_ok = draws.len() == 4000 && worst_mean < 0.1 && worst_var <= 0.2;

    // Reversibility on a non-Gaussian potential.
    let grad = |x: &[f64]| Some(x.iter().map(|v| -v.powi(3) - 0.5 * v).collect::<Vec<_>>());
    let q0 = [0.7, -1.1, 0.2, 1.3];
    let p0 = [0.3, 0.9, -1.4, 0.5];
    let (q1, p1) = leapfrog(&q0, &p0, 0.05, 50, &grad(&q0).unwrap(), grad).unwrap();
    let back: Vec<f64> = p1.iter().map(|v| -v).collect();
    let (q2, p2) = leapfrog(&q1, &back, 0.05, 50, &grad(&q1).unwrap(), grad).unwrap();
    let rev = (0..4)
        .map(|i| (q2[i] - q0[i]).abs().max((p2[i] + p0[i]).abs()))
        .fold(0.0, f64::max);

    // Energy error at a fixed trajectory length, halving the step.
    let energy = |q: &[f64], p: &[f64]| 0.5 * (q[0] * q[0] + p[0] * p[0]);
    let gq = |x: &[f64]| Some(vec![-x[0]]);
    let dh = |step: f64, n: usize| {
        let (q, p) = leapfrog(&[1.0], &[0.5], step, n, &[-1.0], gq).unwrap();
        (energy(&q, &p) - energy(&[1.0], &[0.5])).abs()
    };
    let ratio = dh(0.1, 10) / dh(0.05, 20);

    outcome(
        moments_ok && rev < 1e-8 && (ratio - 4.0).abs() <= 0.5,
        format!(
            "{} draws, max |mean| {worst_mean:.3}, variance in [{:.3}, {:.3}], reversibility {rev:.1e}, dH ratio {ratio:.3}",
            draws.len(),
            var_range.0,
            var_range.1
        ),
    )
}

// ---------------------------------------------------------------- criterion 5

fn renderer_ablation(model: &Model) -> Outcome {
    let cfg = RendererAblationConfig::new(7);
    let rows = ablate_renderer(model, &cfg).unwrap();
    print!("{}", acceptance_csv(&rows).lines().map(|l| format!("    {l}\n")).collect::<String>());
    let smallest = cfg.steps.iter().cloned().fold(f64::INFINITY, f64::min);
    let foam_small = rows
        .iter()
        .find(|r| r.renderer == "foam" && r.step_size == smallest)
        .map(|r| r.acceptance)
        .unwrap_or(0.0);
    let quad_max = rows
        .iter()
        .filter(|r| r.renderer != "foam")
        .map(|r| r.acceptance)
        .fold(0.0, f64::max);
    outcome(
        foam_small > 0.6 && quad_max < 0.2,
        format!("foam acceptance at step {smallest:.0e}: {foam_small:.3}; max quadrature acceptance {quad_max:.3}"),
    )
}

// ---------------------------------------------------------------- criterion 6

fn annealing_ablation(model: &Model) -> Outcome {
    let mut ann = Vec::new();
    let mut fixed = Vec::new();
    for seed in 0..3u64 {
        let (view, _) = reference(300 + seed, 0.0, "front");
        let obs = crop_view(&view.image, &view.camera, &Region::Full).unwrap();
        let schedule = annealed();
        let cfg = AnnealingAblationConfig {
            schedule,
            fixed_step: schedule.step_size(schedule.n_steps).unwrap(),
            n_chains: 8,
            n_leapfrog: N_LEAPFROG,
            seed,
        };
        let r = ablate_annealing(model, &obs, &cfg).unwrap();
        println!("    seed {seed}: annealed std {:.2e}, fixed std {:.2e}", r.annealed_std, r.fixed_std);
        ann.push(r.annealed_std);
        fixed.push(r.fixed_std);
    }
    let (a, f) = (median(&ann), median(&fixed));
    outcome(a < f, format!("median MSE std: annealed {a:.2e}, fixed temperature {f:.2e}"))
}

// ---------------------------------------------------------------- criterion 7

fn chain_config(seed: u64) -> ChainConfig {
    ChainConfig {
        n_chains: 8,
        n_leapfrog: N_LEAPFROG,
        keep_last: 4,
        seed,
    }
}

fn diversity(model: &Model) -> Outcome {
    let mut hmc_var = Vec::new();
    let mut vi_var = Vec::new();
    let mut hmc_psnr = Vec::new();
    let mut vi_psnr = Vec::new();
    for i in 0..5u64 {
        let seed = 1000 + i;
        let (cond, obj) = reference(seed, 0.0, "front");
        let held: Vec<ReferenceView> = [1.2, -1.2]
            .iter()
            .map(|&a| {
                let camera = rig().at_azimuth(a).unwrap();
                ReferenceView {
                    name: format!("azimuth {a}"),
                    image: oracle_render(&obj, &camera, &model.config.scene).unwrap(),
                    camera,
                    region: Region::Full,
                }
            })
            .collect();
        let obs = crop_view(&cond.image, &cond.camera, &Region::Full).unwrap();
        let target = PosteriorTarget::full(model, &obs).unwrap();
        let run = run_annealed_chains(&target, &annealed(), &chain_config(seed), &ChainInit::Prior).unwrap();
        let states: Vec<Vec<f64>> = run.samples.iter().flatten().cloned().collect();
        let hmc = evaluate_states(model, "hmc", &states, std::slice::from_ref(&cond), &held).unwrap();
        let vi = fit_vi(&target, &ViConfig::full_scale(seed), None).unwrap();
        let draws = sample_vi(&vi.params, states.len(), seed);
        let vir = evaluate_states(model, "vi", &draws, std::slice::from_ref(&cond), &held).unwrap();
        let (hp, vp) = (hmc.conditioned[0].mean_psnr.db(), vir.conditioned[0].mean_psnr.db());
        println!(
            "    object {seed}: HMC psnr {hp:.2} dB var {:.2e}; VI psnr {vp:.2} dB var {:.2e}",
            hmc.held_out_variance, vir.held_out_variance
        );
        hmc_var.push(hmc.held_out_variance);
        vi_var.push(vir.held_out_variance);
        hmc_psnr.push(hp);
        vi_psnr.push(vp);
    }
    let (hv, vv, hp, vp) = (median(&hmc_var), median(&vi_var), median(&hmc_psnr), median(&vi_psnr));
    outcome(
        hv > vv && hp > 20.0 && vp > 20.0,
        format!("median held-out variance HMC {hv:.2e} vs VI {vv:.2e}; median conditioned PSNR HMC {hp:.2} dB, VI {vp:.2} dB"),
    )
}

// ---------------------------------------------------------------- criterion 8

fn latent_only() -> Outcome {
    let model = train_two_limb(4);
    let mut full = Vec::new();
    let mut latent = Vec::new();
    for i in 0..5u64 {
        let seed = 500 + i;
        let (cond, _) = reference(seed, 0.5, "conditioned");
        let obs = crop_view(&cond.image, &cond.camera, &Region::Full).unwrap();
        let psnr = |target: PosteriorTarget| {
            let run = run_annealed_chains(&target, &annealed(), &chain_config(i), &ChainInit::Prior).unwrap();
            let states: Vec<Vec<f64>> = run.samples.iter().flatten().map(|x| target.full_state(x)).collect();
            evaluate_states(&model, "", &states, std::slice::from_ref(&cond), &[])
                .unwrap()
                .conditioned[0]
                .mean_psnr
                .db()
        };
        let f = psnr(PosteriorTarget::full(&model, &obs).unwrap());
        let l = psnr(PosteriorTarget::latent_only(&model, &obs).unwrap());
        println!("    object {seed}: full {f:.2} dB, latent-only {l:.2} dB");
        full.push(f);
        latent.push(l);
    }
    let (f, l) = (median(&full), median(&latent));
    outcome(f >= l, format!("median conditioned PSNR: full {f:.2} dB, latent-only {l:.2} dB"))
}

// ---------------------------------------------------------------- criterion 9

fn self_consistency(model: &Model) -> Outcome {
    let (_, w) = model.sample_prior(900).unwrap();
    let camera = rig().at_azimuth(0.7).unwrap();
    let image = render_image(&w, &camera, &model.config.scene, Renderer::Foam).unwrap();
    let obs = crop_view(&image, &camera, &Region::Full).unwrap();
    let target = PosteriorTarget::full(model, &obs).unwrap();
    let mut cfg = chain_config(9);
    cfg.keep_last = 1;
    let run = run_annealed_chains(&target, &annealed(), &cfg, &ChainInit::Prior).unwrap();
    let best = run
        .final_positions
        .iter()
        .map(|x| observation_mse(model, x, &obs).unwrap())
        .fold(f64::INFINITY, f64::min);
    outcome(best < 0.01, format!("best chain per-channel MSE {best:.2e} (bound 1e-2)"))
}

// ---------------------------------------------------------------- criterion 10

fn shift_concat() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = rng.random_range(1..6);
        let n_layers = rng.random_range(1..4);
        let mut dims = vec![rng.random_range(1..6)];
        for _ in 0..n_layers {
            dims.push(rng.random_range(1..7));
        }
        let mut m = |r: usize, c: usize| Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect());
        let layers: Vec<_> = dims
            .windows(2)
            .map(|d| (m(d[0], d[1]), m(1, d[1]).into_vec()))
            .collect();
        let shifts: Vec<_> = dims.windows(2).map(|d| m(k, d[1])).collect();
        let z = m(1, k).into_vec();
        let x = m(3, dims[0]);
        let shift = ShiftModulatedMlp { layers, shifts };
        let a = shift.forward(&z, &x).unwrap();
        let b: ConcatMlp = shift.to_concat().unwrap();
        worst = worst.max(a.max_abs_diff(&b.forward(&z, &x).unwrap()));
    }
    outcome(worst < 1e-12, format!("max deviation over 100 instances {worst:.1e}"))
}

// ---------------------------------------------------------------- criterion 11

fn schedule_exactness() -> Outcome {
    let s = AnnealingSchedule::full_scale(1.0);
    let ends = s.noise(0).unwrap() == 5.0 && s.noise(100).unwrap() == 0.1;
    let mut loglin = 0.0f64;
    for t in 0..=100 {
        let expect = (5.0f64.ln() * (100 - t) as f64 / 100.0 + 0.1f64.ln() * t as f64 / 100.0).exp();
        loglin = loglin.max((s.noise(t).unwrap() - expect).abs());
    }
    let target = StandardNormalTarget { dim: 3 };
    let cfg = ChainConfig::full_scale(11);
    let run = run_annealed_chains(&target, &AnnealingSchedule::full_scale(0.5), &cfg, &ChainInit::Prior).unwrap();
    let counts_ok = run.n_samples() == 128 && run.grad_evals.iter().all(|&g| g == 10_000);
    outcome(
        ends && loglin < 1e-12 && counts_ok,
        format!(
            "s_0 = {}, s_T = {}, log-linearity {loglin:.1e}, {} samples, gradient evaluations per chain {:?}",
            s.noise(0).unwrap(),
            s.noise(100).unwrap(),
            run.n_samples(),
            run.grad_evals
        ),
    )
}

// ---------------------------------------------------------------- driver

fn main() -> ExitCode {
    // `cargo test -- --list` and similar harness probes pass flags; only
    // run the suite on a plain invocation or an explicit filter match.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let filter: Option<usize> = args.iter().find_map(|a| a.parse().ok());

    let mut results: Vec<(usize, &str, Outcome, Duration, Duration)> = Vec::new();
    let mut run = |n: usize, name: &'static str, budget_s: u64, f: &mut dyn FnMut() -> Outcome| {
        if filter.is_some_and(|k| k != n) {
            return;
        }
        println!("criterion {n}: {name} ...");
        let t = Instant::now();
        let mut o = f();
        let took = t.elapsed();
        let budget = Duration::from_secs(budget_s);
        if took > budget {
            o.pass = false;
            o.detail.push_str(&format!(" [over the {budget_s}s budget]"));
        }
        println!(
            "{} criterion {n:2} {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64()
        );
        results.push((n, name, o, took, budget));
    };

    run(1, "architecture fidelity", 1, &mut architecture);
    run(2, "renderer exactness", 10, &mut renderer_exactness);
    run(3, "differentiability", 60, &mut differentiability);
    run(4, "sampler correctness", 60, &mut sampler);
    run(10, "shift/concat equivalence", 1, &mut shift_concat);
    run(11, "schedule exactness", 1, &mut schedule_exactness);

    let needs_model = filter.is_none_or(|k| [5, 6, 7, 9].contains(&k));
    let mut model: Option<Model> = None;
    if filter.is_none_or(|k| k == 7) {
        // Training time counts toward this criterion.
        run(7, "diversity ordering", 30 * 60, &mut || {
            let m = train_two_limb(64);
            let o = diversity(&m);
            model = Some(m);
            o
        });
    } else if needs_model {
        model = Some(train_two_limb(64));
    }
    if let Some(m) = &model {
        run(5, "renderer ablation", 15 * 60, &mut || renderer_ablation(m));
        run(6, "annealing ablation", 20 * 60, &mut || annealing_ablation(m));
        run(9, "posterior self-consistency", 5 * 60, &mut || self_consistency(m));
    }
    run(8, "latent-only ablation", 20 * 60, &mut latent_only);

    println!("\nacceptance summary");
    let mut failed = 0;
    results.sort_by_key(|r| r.0);
    for (n, name, o, took, budget) in &results {
        println!(
            "  {} {n:2} {name} ({:.0}s of {}s)",
            if o.pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs()
        );
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
