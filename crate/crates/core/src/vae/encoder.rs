//! Per-view convolutional encoder producing a diagonal Gaussian potential
//! over the latent code.
//!
//! Five 3x3 stride-2 convolutions with ReLU, global average pooling, a
//! two-layer MLP on the flattened camera-to-world matrix, and a linear map
//! from the concatenated features to `(mu, log_scale)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::pool::GaussianPotential;
use crate::autodiff::{ConvGeom, Tape, Var};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::MlpLayout;
use crate::render::Camera;
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub image_width: usize,
    pub image_height: usize,
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub camera_hidden: usize,
}

impl EncoderConfig {
    pub fn new(image_width: usize, image_height: usize) -> Self {
        Self {
            image_width,
            image_height,
            channels: vec![16, 32, 64, 64, 64],
            kernel: 3,
            camera_hidden: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLayout {
    pub config: EncoderConfig,
    pub latent_dim: usize,
    convs: Vec<(ConvGeom, usize, usize)>,
    camera: MlpLayout,
    head: MlpLayout,
    camera_offset: usize,
    head_offset: usize,
    total: usize,
}

impl EncoderLayout {
    pub fn new(config: EncoderConfig, latent_dim: usize) -> Result<Self> {
        if config.channels.is_empty() || config.image_width == 0 || config.image_height == 0 {
            return Err(Error::InvalidArgument("encoder needs conv layers and a nonempty image".into()));
        }
        let (mut h, mut w, mut c) = (config.image_height, config.image_width, 3);
        let mut convs = Vec::new();
        let mut off = 0;
        for &out in &config.channels {
            let geom = ConvGeom {
                height: h,
                width: w,
                channels: c,
                kernel: config.kernel,
                stride: 2,
                pad: config.kernel / 2,
            };
            convs.push((geom, out, off));
            off += geom.patch_len() * out + out;
            h = geom.out_height();
            w = geom.out_width();
            c = out;
        }
        let camera = MlpLayout::new(vec![16, config.camera_hidden, config.camera_hidden]);
        let camera_offset = off;
        off += camera.param_count();
        let head = MlpLayout::new(vec![c + config.camera_hidden, 2 * latent_dim]);
        let head_offset = off;
        off += head.param_count();
        Ok(Self {
            config,
            latent_dim,
            convs,
            camera,
            head,
            camera_offset,
            head_offset,
            total: off,
        })
    }

    pub fn param_count(&self) -> usize {
        self.total
    }

    /// Glorot weights, zero biases; the head is scaled down so initial
    /// potentials are close to `N(0, I)` factors.
    pub fn init(&self, rng: &mut impl Rng, out: &mut [f64]) {
        assert_eq!(out.len(), self.total);
        for &(geom, c_out, off) in &self.convs {
            let conv = MlpLayout::new(vec![geom.patch_len(), c_out]);
            conv.init(rng, &mut out[off..off + conv.param_count()]);
        }
        let cam = &mut out[self.camera_offset..self.camera_offset + self.camera.param_count()];
        self.camera.init(rng, cam);
        let head = &mut out[self.head_offset..self.total];
        self.head.init(rng, head);
        for v in head.iter_mut() {
            *v *= 0.1;
        }
    }

    /// Image as a `(H * W) x 3` matrix.
    pub fn image_matrix(&self, image: &Image) -> Result<Matrix> {
        if image.width != self.config.image_width || image.height != self.config.image_height {
            return Err(Error::Shape(format!(
                "encoder expects {}x{} images, got {}x{}",
                self.config.image_width, self.config.image_height, image.width, image.height
            )));
        }
        Ok(Matrix::from_vec(image.n_pixels(), 3, image.data.clone()))
    }

    /// Records one view; returns `(mu, log_scale)` as `1 x K` nodes.
    pub fn forward(&self, tape: &mut Tape, params: Var, offset: usize, image: Var, camera: Var) -> (Var, Var) {
        let mut h = image;
        for &(geom, c_out, off) in &self.convs {
            let cols = tape.im2col(h, geom);
            let w = tape.view(params, offset + off, geom.patch_len(), c_out);
            let b = tape.view(params, offset + off + geom.patch_len() * c_out, 1, c_out);
            let a = tape.affine(cols, w, b);
            h = tape.relu(a);
        }
        let n = tape.shape(h).0 as f64;
        let s = tape.col_sums(h);
        let pooled = tape.scale(s, 1.0 / n);
        let c = self.camera.forward(tape, params, offset + self.camera_offset, camera);
        let c = tape.relu(c);
        let feat = tape.concat_cols(&[pooled, c]);
        let out = self.head.forward(tape, params, offset + self.head_offset, feat);
        let k = self.latent_dim;
        let mu = tape.slice_cols(out, 0, k);
        let log_scale = tape.slice_cols(out, k, 2 * k);
        (mu, log_scale)
    }

    pub fn camera_matrix(camera: &Camera) -> Matrix {
        Matrix::row(camera.flat_matrix().to_vec())
    }

    /// Potential of one view under fixed parameters.
    pub fn encode_view(&self, params: &[f64], image: &Image, camera: &Camera) -> Result<GaussianPotential> {
        if params.len() != self.total {
            return Err(Error::Shape("encoder parameter length".into()));
        }
        let mut tape = Tape::new();
        let p = tape.constant(Matrix::row(params.to_vec()));
        let img = tape.constant(self.image_matrix(image)?);
        let cam = tape.constant(Self::camera_matrix(camera));
        let (mu, ls) = self.forward(&mut tape, p, 0, img, cam);
        tape.check_finite()?;
        Ok(GaussianPotential::from_log_scale(
            tape.value(mu).as_slice().to_vec(),
            tape.value(ls).as_slice(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn camera() -> Camera {
        Camera::look_at([0.0, 0.0, 3.0], [0.0; 3], [0.0, 1.0, 0.0], 1.0, 16, 16).unwrap()
    }

    #[test]
    fn zero_parameters_give_unit_precision_at_zero() {
        let layout = EncoderLayout::new(EncoderConfig::new(16, 16), 8).unwrap();
        let img = Image::filled(16, 16, [0.3, 0.6, 0.9]);
        let p = layout.encode_view(&vec![0.0; layout.param_count()], &img, &camera()).unwrap();
        assert_eq!(p.mu, vec![0.0; 8]);
        assert_eq!(p.tau, vec![1.0; 8]);
    }

    #[test]
    fn encoding_is_deterministic() {
        let layout = EncoderLayout::new(EncoderConfig::new(16, 16), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = vec![0.0; layout.param_count()];
        layout.init(&mut rng, &mut params);
        let mut img = Image::new(16, 16);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i as f64 * 0.1).sin().abs();
        }
        let a = layout.encode_view(&params, &img, &camera()).unwrap();
        let b = layout.encode_view(&params, &img, &camera()).unwrap();
        assert_eq!(a, b);
        assert!(a.tau.iter().all(|&t| t > 0.0));
    }

    #[test]
    fn wrong_image_size_is_rejected() {
        let layout = EncoderLayout::new(EncoderConfig::new(16, 16), 4).unwrap();
        let img = Image::new(8, 8);
        assert!(matches!(
            layout.encode_view(&vec![0.0; layout.param_count()], &img, &camera()),
            Err(Error::Shape(_))
        ));
    }
}
