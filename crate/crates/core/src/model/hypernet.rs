//! Hypernetwork mapping latent codes to radiance-field weights.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::field::{FieldConfig, FieldWeights};
use crate::nn::MlpLayout;
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypernetLayout {
    pub latent_dim: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub output_dim: usize,
}

/// Scale applied to the Glorot init of the output layer, so initial codes
/// only nudge the base field.
const OUTPUT_INIT_SCALE: f64 = 0.1;

impl HypernetLayout {
    pub fn mlp(&self) -> MlpLayout {
        let mut dims = vec![self.latent_dim];
        dims.extend(std::iter::repeat_n(self.hidden, self.hidden_layers));
        dims.push(self.output_dim);
        MlpLayout::new(dims)
    }

    pub fn param_count(&self) -> usize {
        self.mlp().param_count()
    }

    /// Glorot layers, a damped output layer, and an output bias equal to a
    /// freshly initialized field so that every code starts as a valid field.
    pub fn init(&self, field: FieldConfig, rng: &mut impl Rng, out: &mut [f64]) {
        let mlp = self.mlp();
        mlp.init(rng, out);
        let (w_off, b_off, _, _) = *mlp.layer_offsets().last().unwrap();
        for v in &mut out[w_off..b_off] {
            *v *= OUTPUT_INIT_SCALE;
        }
        let base = FieldWeights::random(field, rng);
        out[b_off..].copy_from_slice(base.as_slice());
    }

    /// Rows of `z` (`N x K`) to rows of field weights (`N x D`).
    pub fn forward(&self, tape: &mut Tape, params: Var, offset: usize, z: Var) -> Var {
        self.mlp().forward(tape, params, offset, z)
    }

    /// `w = h(z; theta)` for one code.
    pub fn weights(&self, field: FieldConfig, params: &[f64], z: &[f64]) -> Result<FieldWeights> {
        if z.len() != self.latent_dim {
            return Err(Error::Shape(format!(
                "latent code has length {}, hypernetwork expects {}",
                z.len(),
                self.latent_dim
            )));
        }
        if params.len() != self.param_count() {
            return Err(Error::Shape("hypernetwork parameter length".into()));
        }
        let mut tape = Tape::new();
        let p = tape.constant(Matrix::row(params.to_vec()));
        let zv = tape.constant(Matrix::row(z.to_vec()));
        let w = self.forward(&mut tape, p, 0, zv);
        tape.check_finite()?;
        FieldWeights::new(field, tape.value(w).as_slice().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameters_give_zero_weights() {
        let field = FieldConfig::FULL_SCALE;
        let h = HypernetLayout {
            latent_dim: 128,
            hidden: 8,
            hidden_layers: 2,
            output_dim: field.weight_count(),
        };
        let w = h.weights(field, &vec![0.0; h.param_count()], &[0.3; 128]).unwrap();
        assert_eq!(w.as_slice().len(), 20_868);
        assert!(w.as_slice().iter().all(|&v| v == 0.0));
    }
}
