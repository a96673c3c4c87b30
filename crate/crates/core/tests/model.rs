use nerfhmc::data::{build_dataset, CameraMode, CameraRig, DatasetSpec, Family};
use nerfhmc::field::FieldConfig;
use nerfhmc::model::flow::random_permutations;
use nerfhmc::model::{perturb_weights, Flow, FlowLayout, LatentState, Model, ModelConfig};
use nerfhmc::render::FoamScene;
use nerfhmc::vae::elbo::{elbo_estimate, ElboOptions, ObjectBatch};
use nerfhmc::vae::{pool_potentials, EncoderConfig, GaussianPotential};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_flow(dim: usize, seed: u64) -> Flow {
    let layout = FlowLayout::new(dim, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = (0..layout.param_count()).map(|_| rng.random_range(-0.5..0.5)).collect();
    Flow::new(layout, params, random_permutations(dim, seed)).unwrap()
}

fn log_abs_det(mut m: Vec<Vec<f64>>) -> f64 {
    let n = m.len();
    let mut acc = 0.0;
    for c in 0..n {
        let piv = (c..n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        m.swap(piv, c);
        acc += m[c][c].abs().ln();
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    acc
}

#[test]
fn flow_log_det_matches_numerical_jacobian() {
    for seed in 0..5 {
        let dim = 5;
        let flow = random_flow(dim, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        let (_, logdet) = flow.forward(&x).unwrap();
        let h = 1e-6;
        let mut jac = vec![vec![0.0; dim]; dim];
        for j in 0..dim {
            let mut up = x.clone();
            let mut down = x.clone();
            up[j] += h;
            down[j] -= h;
            let (a, _) = flow.forward(&up).unwrap();
            let (b, _) = flow.forward(&down).unwrap();
            for i in 0..dim {
                jac[i][j] = (a[i] - b[i]) / (2.0 * h);
            }
        }
        let numeric = log_abs_det(jac);
        assert!((numeric - logdet).abs() < 1e-6, "seed {seed}: {numeric} vs {logdet}");
    }
}

proptest! {
    #[test]
    fn flow_inverse_undoes_forward(seed in 0u64..200, dim in 2usize..7) {
        let flow = random_flow(dim, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (z, ld) = flow.forward(&x).unwrap();
        let (back, ld_inv) = flow.inverse(&z).unwrap();
        for (a, b) in back.iter().zip(&x) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        prop_assert!((ld + ld_inv).abs() < 1e-10);
    }

    #[test]
    fn pooling_ignores_view_order(seed in any::<u64>(), n_views in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pot = || GaussianPotential {
            mu: (0..3).map(|_| rng.random_range(-2.0..2.0)).collect(),
            tau: (0..3).map(|_| rng.random_range(0.1..4.0)).collect(),
        };
        let prior = pot();
        let views: Vec<_> = (0..n_views).map(|_| pot()).collect();
        let fwd = pool_potentials(&prior, &views);
        let rev: Vec<_> = views.iter().rev().cloned().collect();
        let bwd = pool_potentials(&prior, &rev);
        for i in 0..3 {
            prop_assert!((fwd.mu[i] - bwd.mu[i]).abs() < 1e-12);
            prop_assert!((fwd.tau[i] - bwd.tau[i]).abs() < 1e-12);
        }
        if n_views == 0 {
            for i in 0..3 {
                prop_assert!((fwd.mu[i] - prior.mu[i]).abs() < 1e-12);
                prop_assert_eq!(fwd.tau[i], prior.tau[i]);
            }
        }
    }
}

fn small_config() -> ModelConfig {
    let field = FieldConfig {
        encoding_order: 1,
        hidden_width: 4,
        hidden_layers: 2,
        grid_size: 8,
    };
    ModelConfig {
        field,
        latent_dim: 3,
        flow_hidden: 4,
        hypernet_hidden: 6,
        hypernet_layers: 2,
        encoder: EncoderConfig::new(6, 6),
        alpha_w: 0.01,
        scene: FoamScene::new(8),
        perm_seed: 3,
    }
}

#[test]
fn weights_are_decoded_field_plus_scaled_perturbation() {
    let model = Model::init(small_config(), 4).unwrap();
    let (state, w) = model.sample_prior(7).unwrap();
    let base = model.field_weights(&LatentState {
        z_tilde: state.z_tilde.clone(),
        delta: vec![0.0; state.delta.len()],
    })
    .unwrap();
    let expect = perturb_weights(&base, &state.delta, 0.01).unwrap();
    for (a, b) in w.as_slice().iter().zip(expect.as_slice()) {
        assert!((a - b).abs() < 1e-14);
    }
    for ((a, b), d) in w.as_slice().iter().zip(base.as_slice()).zip(&state.delta) {
        assert!((a - b - 0.1 * d).abs() < 1e-12);
    }
}

#[test]
fn ray_subsampled_elbo_is_unbiased() {
    // With the latent noise fixed, averaging the one-ray estimate over every
    // ray reproduces the all-ray ELBO exactly.
    let cfg = small_config();
    let model = Model::init(cfg.clone(), 6).unwrap();
    let spec = DatasetSpec {
        n_objects: 1,
        views_per_object: 2,
        rig: CameraRig::new(6, 6),
        grid_size: 8,
        families: vec![Family::BoxStack],
        camera_mode: CameraMode::EquallySpaced,
        seed: 2,
    };
    let ds = build_dataset(&spec).unwrap();
    let views: Vec<_> = ds.entries[0].views.iter().collect();
    let opts = ElboOptions::new(0.2);
    let full = ObjectBatch::new(&cfg, &views, None).unwrap();
    let exact = elbo_estimate(&model, &[full], opts, 11).unwrap().total;
    let n = 2 * 36;
    let mut mean = 0.0;
    for r in 0..n {
        let one = ObjectBatch::new(&cfg, &views, Some(&[(r / 36, r % 36)])).unwrap();
        mean += elbo_estimate(&model, &[one], opts, 11).unwrap().total / n as f64;
    }
    assert!((mean - exact).abs() < 1e-9 * exact.abs().max(1.0), "{mean} vs {exact}");
}
