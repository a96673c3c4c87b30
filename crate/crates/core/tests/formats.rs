use nerfhmc::data::{build_dataset, CameraMode, CameraRig, Dataset, DatasetSpec, Family};
use nerfhmc::field::FieldConfig;
use nerfhmc::image::Image;
use nerfhmc::inference::hmc::StandardNormalTarget;
use nerfhmc::inference::{run_annealed_chains, AnnealingSchedule, ChainConfig, ChainInit, SampleArchive};
use nerfhmc::model::{Model, ModelConfig};
use nerfhmc::render::FoamScene;
use nerfhmc::vae::EncoderConfig;
use nerfhmc::Error;
use proptest::prelude::*;

fn small_model() -> Model {
    let field = FieldConfig {
        encoding_order: 1,
        hidden_width: 4,
        hidden_layers: 2,
        grid_size: 8,
    };
    let cfg = ModelConfig {
        field,
        latent_dim: 3,
        flow_hidden: 4,
        hypernet_hidden: 4,
        hypernet_layers: 2,
        encoder: EncoderConfig::new(8, 8),
        alpha_w: 1e-3,
        scene: FoamScene::new(8),
        perm_seed: 2,
    };
    Model::init(cfg, 5).unwrap()
}

#[test]
fn checkpoint_round_trips_to_f32_precision() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let model = small_model();
    model.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], b"NHMCKPT\0");
    let back = Model::load(&path).unwrap();
    assert_eq!(back.config, model.config);
    assert_eq!(back, model.quantized());
    // A second round trip is lossless.
    back.save(&path).unwrap();
    assert_eq!(Model::load(&path).unwrap(), back);
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let bytes = small_model().to_checkpoint_bytes().unwrap();
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(matches!(Model::from_checkpoint_bytes(&bad_magic), Err(Error::Format { .. })));
    let truncated = &bytes[..bytes.len() - 4];
    assert!(Model::from_checkpoint_bytes(truncated).is_err());
    assert!(Model::from_checkpoint_bytes(&bytes[..10]).is_err());
}

#[test]
fn chain_archive_round_trips() {
    let target = StandardNormalTarget { dim: 5 };
    let sched = AnnealingSchedule::annealed(6, 0.5);
    let cfg = ChainConfig {
        n_chains: 3,
        n_leapfrog: 4,
        keep_last: 2,
        seed: 1,
    };
    let run = run_annealed_chains(&target, &sched, &cfg, &ChainInit::Prior).unwrap();
    // Pretend K = 2, D = 3.
    let archive = SampleArchive::from_chains("hmc", &run, &cfg, &sched, 2, 3);
    assert_eq!(archive.len(), 6);
    assert_eq!(archive.header.provenance, vec![(0, 5), (0, 6), (1, 5), (1, 6), (2, 5), (2, 6)]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("samples.bin");
    archive.save(&path).unwrap();
    assert_eq!(&std::fs::read(&path).unwrap()[..8], b"NHMCSAMP");
    let back = SampleArchive::load(&path).unwrap();
    assert_eq!(back.header, archive.header);
    for (a, b) in back.states.iter().zip(&archive.states) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-6 * y.abs().max(1.0));
        }
    }
}

#[test]
fn latent_only_archives_pad_delta_with_zeros() {
    let archive = SampleArchive::from_draws("latent-only", vec![vec![1.0, 2.0]], 0, 2, 3);
    assert_eq!(archive.full_states(), vec![vec![1.0, 2.0, 0.0, 0.0, 0.0]]);
    let back = SampleArchive::from_bytes(&archive.to_bytes().unwrap()).unwrap();
    assert_eq!(back, archive);
}

#[test]
fn archive_with_inconsistent_lengths_is_rejected() {
    let mut archive = SampleArchive::from_draws("vi", vec![vec![0.5; 5]; 2], 0, 2, 3);
    archive.header.state_dim = 4;
    archive.states = vec![vec![0.5; 4]; 2];
    assert!(SampleArchive::from_bytes(&archive.to_bytes().unwrap()).is_err());
}

#[test]
fn dataset_saves_loads_and_regenerates() {
    let spec = DatasetSpec {
        n_objects: 3,
        views_per_object: 2,
        rig: CameraRig::new(8, 8),
        grid_size: 8,
        families: vec![Family::BoxStack, Family::TwoLimb, Family::RandomBlobs],
        camera_mode: CameraMode::UniformRandom,
        seed: 21,
    };
    let ds = build_dataset(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    ds.save(dir.path()).unwrap();
    let loaded = Dataset::load(dir.path()).unwrap();
    assert_eq!(loaded.spec, spec);
    let again = loaded.regenerate().unwrap();
    for ((a, b), c) in ds.entries.iter().zip(&loaded.entries).zip(&again.entries) {
        assert_eq!((a.id, a.seed, a.family), (b.id, b.seed, b.family));
        for ((va, vb), vc) in a.views.iter().zip(&b.views).zip(&c.views) {
            assert_eq!(va.camera, vb.camera);
            assert_eq!(va.image, vb.image);
            assert_eq!(va.image, vc.image);
        }
    }
}

#[test]
fn missing_dataset_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(Dataset::load(&dir.path().join("nope")).is_err());
}

proptest! {
    #[test]
    fn ppm_round_trips_byte_exact(w in 1usize..9, h in 1usize..9, seed in any::<u64>()) {
        let mut state = seed;
        let pixels: Vec<[f64; 3]> = (0..w * h)
            .map(|_| std::array::from_fn(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 56) as u8) as f64 / 255.0
            }))
            .collect();
        let img = Image::from_pixels(w, h, &pixels).unwrap();
        let back = Image::decode_ppm(&img.encode_ppm()).unwrap();
        prop_assert_eq!(back.to_bytes(), img.to_bytes());
        prop_assert_eq!(back, img);
    }
}

#[test]
fn malformed_ppm_is_rejected() {
    assert!(Image::decode_ppm(b"P3\n1 1\n255\n0 0 0\n").is_err());
    assert!(Image::decode_ppm(b"P6\n2 2\n255\n\x00\x00\x00").is_err());
}
