//! Flat-vector multilayer perceptrons.
//!
//! An [`MlpLayout`] describes a stack of affine layers packed into one flat
//! parameter vector: for each layer the `in x out` weight matrix (row-major)
//! followed by its `out` biases.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpLayout {
    /// Layer widths including input and output, e.g. `[63, 64, 64, 1]`.
    pub dims: Vec<usize>,
}

impl MlpLayout {
    pub fn new(dims: Vec<usize>) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        Self { dims }
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// `(weight offset, bias offset, in, out)` for each layer, relative to
    /// the start of this MLP's block.
    pub fn layer_offsets(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut off = 0;
        self.dims
            .windows(2)
            .map(|w| {
                let (i, o) = (w[0], w[1]);
                let entry = (off, off + i * o, i, o);
                off += i * o + o;
                entry
            })
            .collect()
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(&self, rng: &mut impl Rng, out: &mut [f64]) {
        assert_eq!(out.len(), self.param_count());
        for (w_off, b_off, i, o) in self.layer_offsets() {
            let limit = (6.0 / (i + o) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).unwrap();
            for v in &mut out[w_off..b_off] {
                *v = dist.sample(rng);
            }
            out[b_off..b_off + o].fill(0.0);
        }
    }

    /// Records the forward pass. Hidden layers use ReLU; the output layer is
    /// left linear.
    pub fn forward(&self, tape: &mut Tape, params: Var, offset: usize, input: Var) -> Var {
        let layers = self.layer_offsets();
        let last = layers.len() - 1;
        let mut h = input;
        for (l, (w_off, b_off, i, o)) in layers.into_iter().enumerate() {
            let w = tape.view(params, offset + w_off, i, o);
            let b = tape.view(params, offset + b_off, 1, o);
            h = tape.affine(h, w, b);
            if l != last {
                h = tape.relu(h);
            }
        }
        h
    }

    /// Unpacks one layer as `(W, b)`.
    pub fn layer(&self, params: &[f64], index: usize) -> (Matrix, Vec<f64>) {
        let (w_off, b_off, i, o) = self.layer_offsets()[index];
        (
            Matrix::from_vec(i, o, params[w_off..b_off].to_vec()),
            params[b_off..b_off + o].to_vec(),
        )
    }
}
