//! The per-object radiance field: sinusoidal encoding, a density MLP and a
//! color MLP whose weights live in one flat vector.
//!
//! The density network sees `encode(x)`. The color network sees
//! `[encode(x), encode(v), sigma]`. Density is made nonnegative with a
//! softplus and colors land in `[0, 1]` through a sigmoid.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::MlpLayout;
use crate::tensor::{matmul, Matrix};
use crate::vec3::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub encoding_order: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub grid_size: usize,
}

impl FieldConfig {
    /// Order 10 encoding, two hidden layers of 64 per MLP, 128^3 lattice.
    pub const FULL_SCALE: FieldConfig = FieldConfig {
        encoding_order: 10,
        hidden_width: 64,
        hidden_layers: 2,
        grid_size: 128,
    };

    pub fn validate(&self) -> Result<()> {
        if self.encoding_order == 0 || self.hidden_width == 0 || self.grid_size == 0 {
            return Err(Error::InvalidArgument(format!(
                "field config needs positive order, width and grid size: {self:?}"
            )));
        }
        Ok(())
    }

    /// Features per encoded scalar: the raw value plus `2 * order` sines.
    pub fn features_per_scalar(&self) -> usize {
        2 * self.encoding_order + 1
    }

    /// Length of `encode(x)` for a 3-vector.
    pub fn encoded_dim(&self) -> usize {
        3 * self.features_per_scalar()
    }

    pub fn density_layout(&self) -> MlpLayout {
        let mut dims = vec![self.encoded_dim()];
        dims.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        dims.push(1);
        MlpLayout::new(dims)
    }

    pub fn color_layout(&self) -> MlpLayout {
        let mut dims = vec![2 * self.encoded_dim() + 1];
        dims.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        dims.push(3);
        MlpLayout::new(dims)
    }

    /// Closed-form parameter count.
    pub fn weight_count(&self) -> usize {
        let f = self.encoded_dim();
        let h = self.hidden_width;
        let hidden = self.hidden_layers.saturating_sub(1) * (h * h + h);
        let density = if self.hidden_layers == 0 {
            f + 1
        } else {
            (f * h + h) + hidden + (h + 1)
        };
        let color = if self.hidden_layers == 0 {
            (2 * f + 1) * 3 + 3
        } else {
            ((2 * f + 1) * h + h) + hidden + (3 * h + 3)
        };
        density + color
    }

    fn color_offset(&self) -> usize {
        self.density_layout().param_count()
    }
}

/// Sinusoidal features per scalar: `[x, sin(2^0 pi x), sin(2^0 pi x + 0.5),
/// ..., sin(2^(L-1) pi x), sin(2^(L-1) pi x + 0.5)]`, concatenated over the
/// components of `x`.
pub fn positional_encode(x: &[f64], order: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() * (2 * order + 1));
    encode_into(x, order, &mut out);
    out
}

fn encode_into(x: &[f64], order: usize, out: &mut Vec<f64>) {
    for &xi in x {
        out.push(xi);
        let mut freq = PI;
        for _ in 0..order {
            let a = freq * xi;
            out.push(a.sin());
            out.push((a + 0.5).sin());
            freq *= 2.0;
        }
    }
}

/// Opacity of a foam face: `1 - exp(-sigma / G)`.
pub fn squash_density(sigma: f64, grid_size: usize) -> f64 {
    -(-sigma / grid_size as f64).exp_m1()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldOutput {
    pub sigma: f64,
    pub color: [f64; 3],
}

/// Layer matrices of both networks.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldLayers {
    pub density: Vec<(Matrix, Vec<f64>)>,
    pub color: Vec<(Matrix, Vec<f64>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldWeights {
    flat: Vec<f64>,
    config: FieldConfig,
}

impl FieldWeights {
    pub fn new(config: FieldConfig, flat: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if flat.len() != config.weight_count() {
            return Err(Error::Shape(format!(
                "field weights have length {}, config needs {}",
                flat.len(),
                config.weight_count()
            )));
        }
        Ok(Self { flat, config })
    }

    pub fn zeros(config: FieldConfig) -> Self {
        Self {
            flat: vec![0.0; config.weight_count()],
            config,
        }
    }

    /// Glorot-uniform layers with the density output bias pulled negative so
    /// a fresh field starts mostly transparent.
    pub fn random(config: FieldConfig, rng: &mut impl Rng) -> Self {
        let mut flat = vec![0.0; config.weight_count()];
        let d = config.density_layout();
        let c = config.color_layout();
        let split = d.param_count();
        d.init(rng, &mut flat[..split]);
        c.init(rng, &mut flat[split..]);
        let (_, b_off, _, _) = *d.layer_offsets().last().unwrap();
        flat[b_off] = INITIAL_DENSITY_BIAS;
        Self { flat, config }
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.flat
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.flat
    }

    pub fn unflatten(&self) -> FieldLayers {
        let d = self.config.density_layout();
        let c = self.config.color_layout();
        let split = d.param_count();
        FieldLayers {
            density: (0..d.n_layers()).map(|l| d.layer(&self.flat[..split], l)).collect(),
            color: (0..c.n_layers()).map(|l| c.layer(&self.flat[split..], l)).collect(),
        }
    }

    pub fn flatten(config: FieldConfig, layers: &FieldLayers) -> Result<Self> {
        let d = config.density_layout();
        let c = config.color_layout();
        let check = |layout: &MlpLayout, ls: &[(Matrix, Vec<f64>)]| -> Result<()> {
            if ls.len() != layout.n_layers() {
                return Err(Error::Shape("layer count differs from config".into()));
            }
            for (l, (w, b)) in ls.iter().enumerate() {
                let (i, o) = (layout.dims[l], layout.dims[l + 1]);
                if w.shape() != (i, o) || b.len() != o {
                    return Err(Error::Shape(format!(
                        "layer {l} is {:?}+{}, expected {i}x{o}+{o}",
                        w.shape(),
                        b.len()
                    )));
                }
            }
            Ok(())
        };
        check(&d, &layers.density)?;
        check(&c, &layers.color)?;
        let mut flat = Vec::with_capacity(config.weight_count());
        for (w, b) in layers.density.iter().chain(&layers.color) {
            flat.extend_from_slice(w.as_slice());
            flat.extend_from_slice(b);
        }
        Self::new(config, flat)
    }

    /// Field at a batch of points seen along `dirs`.
    pub fn eval_batch(&self, points: &[Vec3], dirs: &[Vec3]) -> Result<Vec<FieldOutput>> {
        let inputs = encode_samples(&self.config, points, dirs);
        let mut tape = Tape::new();
        let w = tape.constant(Matrix::row(self.flat.clone()));
        let x = tape.constant(inputs);
        let (sigma, color) = field_forward(&mut tape, &self.config, w, x);
        tape.check_finite()?;
        let s = tape.value(sigma);
        let c = tape.value(color);
        Ok((0..points.len())
            .map(|i| FieldOutput {
                sigma: s.get(i, 0),
                color: [c.get(i, 0), c.get(i, 1), c.get(i, 2)],
            })
            .collect())
    }
}

pub const INITIAL_DENSITY_BIAS: f64 = -2.0;

/// `f_w(x, v)` at one point.
pub fn eval_field(w: &FieldWeights, x: Vec3, v: Vec3) -> Result<FieldOutput> {
    Ok(w.eval_batch(&[x], &[v])?[0])
}

/// Encodes sample positions and directions into the `P x 2F` matrix
/// `[encode(x), encode(v)]` consumed by [`field_forward`].
pub fn encode_samples(config: &FieldConfig, points: &[Vec3], dirs: &[Vec3]) -> Matrix {
    assert_eq!(points.len(), dirs.len());
    let f = config.encoded_dim();
    let mut data = Vec::with_capacity(points.len() * 2 * f);
    for (p, d) in points.iter().zip(dirs) {
        encode_into(p, config.encoding_order, &mut data);
        encode_into(d, config.encoding_order, &mut data);
    }
    Matrix::from_vec(points.len(), 2 * f, data)
}

/// Records the field on the tape. `weights` is a `1 x D` node and `inputs`
/// the encoded samples from [`encode_samples`]. Returns `(sigma, color)` as
/// `P x 1` and `P x 3` nodes.
pub fn field_forward(tape: &mut Tape, config: &FieldConfig, weights: Var, inputs: Var) -> (Var, Var) {
    let f = config.encoded_dim();
    let pos = tape.slice_cols(inputs, 0, f);
    let density = config.density_layout();
    let raw = density.forward(tape, weights, 0, pos);
    let sigma = tape.softplus(raw);

    // First color layer split into the encoded-input rows and the sigma row,
    // so no adjoint is formed for the constant encodings.
    let color = config.color_layout();
    let base = config.color_offset();
    let layers = color.layer_offsets();
    let (w_off, b_off, _, o) = layers[0];
    let w_in = tape.view(weights, base + w_off, 2 * f, o);
    let w_sigma = tape.view(weights, base + w_off + 2 * f * o, 1, o);
    let b = tape.view(weights, base + b_off, 1, o);
    let a = tape.matmul(inputs, w_in);
    let s = tape.matmul(sigma, w_sigma);
    let a = tape.add(a, s);
    let mut h = tape.add_bias(a, b);
    for &(w_off, b_off, i, o) in &layers[1..] {
        h = tape.relu(h);
        let w = tape.view(weights, base + w_off, i, o);
        let b = tape.view(weights, base + b_off, 1, o);
        h = tape.affine(h, w, b);
    }
    let rgb = tape.sigmoid(h);
    (sigma, rgb)
}

/// An MLP whose pre-activations are shifted by a linear function of a
/// latent code: `a_i = h_(i-1) W_i + b_i + z V_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftModulatedMlp {
    pub layers: Vec<(Matrix, Vec<f64>)>,
    /// One `K x out_i` shift matrix per layer.
    pub shifts: Vec<Matrix>,
}

/// The same network written as latent concatenation:
/// `a_i = [h_(i-1), z] W'_i + b_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcatMlp {
    pub layers: Vec<(Matrix, Vec<f64>)>,
}

fn relu_rows(m: &mut Matrix) {
    for v in m.as_mut_slice() {
        *v = v.max(0.0);
    }
}

fn add_row(m: &mut Matrix, b: &[f64]) {
    let cols = m.cols();
    for row in m.as_mut_slice().chunks_exact_mut(cols) {
        for (o, v) in row.iter_mut().zip(b) {
            *o += v;
        }
    }
}

impl ShiftModulatedMlp {
    fn check(&self, z: &[f64]) -> Result<()> {
        if self.shifts.len() != self.layers.len() {
            return Err(Error::Shape("one shift matrix per layer required".into()));
        }
        for ((w, b), v) in self.layers.iter().zip(&self.shifts) {
            if v.shape() != (z.len(), w.cols()) || b.len() != w.cols() {
                return Err(Error::Shape(format!(
                    "shift {:?} does not fit layer {:?} with latent {}",
                    v.shape(),
                    w.shape(),
                    z.len()
                )));
            }
        }
        Ok(())
    }

    /// Rows of `x` are inputs.
    pub fn forward(&self, z: &[f64], x: &Matrix) -> Result<Matrix> {
        self.check(z)?;
        let zrow = Matrix::row(z.to_vec());
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (l, ((w, b), v)) in self.layers.iter().zip(&self.shifts).enumerate() {
            if h.cols() != w.rows() {
                return Err(Error::Shape("activation width differs from layer input".into()));
            }
            let mut a = matmul(&h, w);
            add_row(&mut a, b);
            let s = matmul(&zrow, v);
            add_row(&mut a, s.as_slice());
            if l != last {
                relu_rows(&mut a);
            }
            h = a;
        }
        Ok(h)
    }

    /// Stacks `[W_i; V_i]` so that concatenating `z` reproduces the shifts.
    pub fn to_concat(&self) -> Result<ConcatMlp> {
        let k = self.shifts.first().map_or(0, |v| v.rows());
        self.check(&vec![0.0; k])?;
        let layers = self
            .layers
            .iter()
            .zip(&self.shifts)
            .map(|((w, b), v)| {
                let mut data = w.as_slice().to_vec();
                data.extend_from_slice(v.as_slice());
                (Matrix::from_vec(w.rows() + v.rows(), w.cols(), data), b.clone())
            })
            .collect();
        Ok(ConcatMlp { layers })
    }
}

impl ConcatMlp {
    pub fn forward(&self, z: &[f64], x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (l, (w, b)) in self.layers.iter().enumerate() {
            if h.cols() + z.len() != w.rows() {
                return Err(Error::Shape(format!(
                    "layer {l} expects {} inputs, got {} activations + {} latents",
                    w.rows(),
                    h.cols(),
                    z.len()
                )));
            }
            let mut cat = Vec::with_capacity(h.rows() * w.rows());
            for r in 0..h.rows() {
                cat.extend_from_slice(h.row_slice(r));
                cat.extend_from_slice(z);
            }
            let cat = Matrix::from_vec(h.rows(), w.rows(), cat);
            let mut a = matmul(&cat, w);
            add_row(&mut a, b);
            if l != last {
                relu_rows(&mut a);
            }
            h = a;
        }
        Ok(h)
    }
}
