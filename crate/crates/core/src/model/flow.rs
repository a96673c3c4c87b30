//! Affine-coupling normalizing flow over the latent code.
//!
//! Two pairs of coupling layers. Within a pair the first layer rescales and
//! shifts the second half of the coordinates conditioned on the first half,
//! and the second layer does the reverse. The coordinates are permuted after
//! each pair. Each coupling network has one ReLU hidden layer and emits a
//! shift and a raw log-scale, squashed to `3 tanh(raw)`.

use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::MlpLayout;
use crate::tensor::Matrix;

/// Bound on the magnitude of a coupling log-scale.
pub const LOG_SCALE_BOUND: f64 = 3.0;
pub const N_PAIRS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowLayout {
    pub dim: usize,
    pub hidden: usize,
}

struct Coupling {
    mlp: MlpLayout,
    offset: usize,
    /// Columns the network reads.
    cond: (usize, usize),
    /// Columns it transforms.
    update: (usize, usize),
}

impl FlowLayout {
    pub fn new(dim: usize, hidden: usize) -> Result<Self> {
        if dim < 2 || hidden == 0 {
            return Err(Error::InvalidArgument(format!(
                "flow needs dim >= 2 and a hidden layer, got dim {dim}, hidden {hidden}"
            )));
        }
        Ok(Self { dim, hidden })
    }

    fn couplings(&self) -> Vec<Coupling> {
        let ka = self.dim / 2;
        let first = (0, ka);
        let second = (ka, self.dim);
        let mut offset = 0;
        let mut out = Vec::with_capacity(2 * N_PAIRS);
        for _ in 0..N_PAIRS {
            for (cond, update) in [(first, second), (second, first)] {
                let mlp = MlpLayout::new(vec![cond.1 - cond.0, self.hidden, 2 * (update.1 - update.0)]);
                let n = mlp.param_count();
                out.push(Coupling {
                    mlp,
                    offset,
                    cond,
                    update,
                });
                offset += n;
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.couplings().iter().map(|c| c.mlp.param_count()).sum()
    }

    /// Glorot hidden layers and zero output layers, so a fresh flow is the
    /// identity up to its permutations.
    pub fn init(&self, rng: &mut impl Rng, out: &mut [f64]) {
        assert_eq!(out.len(), self.param_count());
        for c in self.couplings() {
            let block = &mut out[c.offset..c.offset + c.mlp.param_count()];
            c.mlp.init(rng, block);
            let (w_off, _, _, _) = c.mlp.layer_offsets()[1];
            block[w_off..].fill(0.0);
        }
    }

    fn coupling_terms(&self, tape: &mut Tape, params: Var, offset: usize, c: &Coupling, x: Var) -> (Var, Var) {
        let a = tape.slice_cols(x, c.cond.0, c.cond.1);
        let h = c.mlp.forward(tape, params, offset + c.offset, a);
        let n = c.update.1 - c.update.0;
        let shift = tape.slice_cols(h, 0, n);
        let raw = tape.slice_cols(h, n, 2 * n);
        let t = tape.tanh(raw);
        let log_scale = tape.scale(t, LOG_SCALE_BOUND);
        (shift, log_scale)
    }

    fn reassemble(tape: &mut Tape, x: Var, c: &Coupling, updated: Var) -> Var {
        let kept = tape.slice_cols(x, c.cond.0, c.cond.1);
        if c.update.0 == 0 {
            tape.concat_cols(&[updated, kept])
        } else {
            tape.concat_cols(&[kept, updated])
        }
    }

    /// `z = m(x)` for each row of `x` (`N x K`); returns `z` and the `N x 1`
    /// log-determinant of the Jacobian.
    pub fn forward(&self, tape: &mut Tape, params: Var, offset: usize, perms: &[Rc<[usize]>], x: Var) -> (Var, Var) {
        let rows = tape.shape(x).0;
        let mut logdet = tape.constant(Matrix::zeros(rows, 1));
        let mut h = x;
        for (i, c) in self.couplings().iter().enumerate() {
            let (shift, log_scale) = self.coupling_terms(tape, params, offset, c, h);
            let b = tape.slice_cols(h, c.update.0, c.update.1);
            let s = tape.exp(log_scale);
            let bs = tape.mul(b, s);
            let updated = tape.add(bs, shift);
            h = Self::reassemble(tape, h, c, updated);
            let ld = tape.row_sums(log_scale);
            logdet = tape.add(logdet, ld);
            if i % 2 == 1 {
                h = tape.permute_cols(h, perms[i / 2].clone());
            }
        }
        (h, logdet)
    }

    /// `x = m^{-1}(z)` and the `N x 1` log-determinant of the inverse.
    pub fn inverse(&self, tape: &mut Tape, params: Var, offset: usize, perms: &[Rc<[usize]>], z: Var) -> (Var, Var) {
        let rows = tape.shape(z).0;
        let mut logdet = tape.constant(Matrix::zeros(rows, 1));
        let mut h = z;
        let couplings = self.couplings();
        for (i, c) in couplings.iter().enumerate().rev() {
            if i % 2 == 1 {
                h = tape.permute_cols(h, inverse_permutation(&perms[i / 2]).into());
            }
            let (shift, log_scale) = self.coupling_terms(tape, params, offset, c, h);
            let b = tape.slice_cols(h, c.update.0, c.update.1);
            let centered = tape.sub(b, shift);
            let neg = tape.scale(log_scale, -1.0);
            let s = tape.exp(neg);
            let updated = tape.mul(centered, s);
            h = Self::reassemble(tape, h, c, updated);
            let ld = tape.row_sums(neg);
            logdet = tape.add(logdet, ld);
        }
        (h, logdet)
    }
}

pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// One random permutation per coupling pair, drawn from `seed`.
pub fn random_permutations(dim: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..N_PAIRS)
        .map(|_| {
            let mut p: Vec<usize> = (0..dim).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect()
}

pub fn validate_permutations(perms: &[Vec<usize>], dim: usize) -> Result<()> {
    if perms.len() != N_PAIRS {
        return Err(Error::Shape(format!("expected {N_PAIRS} permutations, got {}", perms.len())));
    }
    for p in perms {
        let mut seen = vec![false; dim];
        if p.len() != dim || p.iter().any(|&i| i >= dim || std::mem::replace(&mut seen[i], true)) {
            return Err(Error::InvalidArgument("flow permutation is not a bijection".into()));
        }
    }
    Ok(())
}

/// A flow with fixed parameters, for value-level use.
#[derive(Clone, Debug, PartialEq)]
pub struct Flow {
    pub layout: FlowLayout,
    pub params: Vec<f64>,
    pub perms: Vec<Vec<usize>>,
}

impl Flow {
    pub fn new(layout: FlowLayout, params: Vec<f64>, perms: Vec<Vec<usize>>) -> Result<Self> {
        if params.len() != layout.param_count() {
            return Err(Error::Shape(format!(
                "flow has {} parameters, layout needs {}",
                params.len(),
                layout.param_count()
            )));
        }
        validate_permutations(&perms, layout.dim)?;
        Ok(Self { layout, params, perms })
    }

    pub fn rc_perms(&self) -> Vec<Rc<[usize]>> {
        self.perms.iter().map(|p| Rc::from(p.as_slice())).collect()
    }

    fn run(&self, x: &[f64], inverse: bool) -> Result<(Vec<f64>, f64)> {
        if x.len() != self.layout.dim {
            return Err(Error::Shape(format!(
                "flow input has length {}, expected {}",
                x.len(),
                self.layout.dim
            )));
        }
        let mut tape = Tape::new();
        let p = tape.constant(Matrix::row(self.params.clone()));
        let xv = tape.constant(Matrix::row(x.to_vec()));
        let perms = self.rc_perms();
        let (y, ld) = if inverse {
            self.layout.inverse(&mut tape, p, 0, &perms, xv)
        } else {
            self.layout.forward(&mut tape, p, 0, &perms, xv)
        };
        tape.check_finite()?;
        Ok((tape.value(y).as_slice().to_vec(), tape.value(ld).item()))
    }

    /// `(z, log|det dz/dx|)`.
    pub fn forward(&self, z_tilde: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.run(z_tilde, false)
    }

    /// `(z_tilde, log|det dz_tilde/dz|)`.
    pub fn inverse(&self, z: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.run(z, true)
    }
}
