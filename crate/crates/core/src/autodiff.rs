//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every node on the [`Tape`] holds a whole matrix, so a multilayer
//! perceptron applied to thousands of sample points is a handful of nodes
//! rather than millions of scalar records. Values are computed eagerly when
//! an operation is recorded; [`Tape::backward`] then walks the nodes in
//! reverse order once and accumulates adjoints into every node that depends
//! on an [`input`](Tape::input).
//!
//! Parameters are passed around as flat vectors. A layer matrix is a
//! [`view`](Tape::view) of a contiguous range of such a vector, which is
//! how the hypernetwork output becomes the weights of a radiance field
//! without any copying on the differentiable path.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::render::composite;
use crate::tensor::{gemm, Matrix, Trans};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Elementwise primitives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Sin,
    Exp,
    Log,
    Sigmoid,
    Softplus,
    Relu,
    Tanh,
    Square,
    /// `1 - exp(-x)`, the opacity of a slab with optical depth `x`.
    Opacity,
}

impl Unary {
    fn name(self) -> &'static str {
        match self {
            Unary::Sin => "sin",
            Unary::Exp => "exp",
            Unary::Log => "log",
            Unary::Sigmoid => "sigmoid",
            Unary::Softplus => "softplus",
            Unary::Relu => "relu",
            Unary::Tanh => "tanh",
            Unary::Square => "square",
            Unary::Opacity => "opacity",
        }
    }

    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Sin => x.sin(),
            Unary::Exp => x.exp(),
            Unary::Log => x.ln(),
            Unary::Sigmoid => sigmoid(x),
            Unary::Softplus => softplus(x),
            Unary::Relu => x.max(0.0),
            Unary::Tanh => x.tanh(),
            Unary::Square => x * x,
            Unary::Opacity => -(-x).exp_m1(),
        }
    }

    /// Derivative given the input `x` and the recorded output `y`.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Sin => x.cos(),
            Unary::Exp => y,
            Unary::Log => 1.0 / x,
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Softplus => sigmoid(x),
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Tanh => 1.0 - y * y,
            Unary::Square => 2.0 * x,
            Unary::Opacity => (-x).exp(),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Geometry of a 2D convolution lowered to a matrix product.
///
/// Images are stored as `(height * width) x channels` matrices with pixels
/// in row-major order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.channels
    }

    /// For every output row and patch column, the flattened source index or
    /// `None` for zero padding.
    fn source_index(&self, out_row: usize, patch_col: usize) -> Option<usize> {
        let ow = self.out_width();
        let (oy, ox) = (out_row / ow, out_row % ow);
        let c = patch_col % self.channels;
        let kk = patch_col / self.channels;
        let (ky, kx) = (kk / self.kernel, kk % self.kernel);
        let y = (oy * self.stride + ky) as isize - self.pad as isize;
        let x = (ox * self.stride + kx) as isize - self.pad as isize;
        if y < 0 || x < 0 || y >= self.height as isize || x >= self.width as isize {
            None
        } else {
            Some((y as usize * self.width + x as usize) * self.channels + c)
        }
    }
}

/// Ray segments for front-to-back compositing: sample rows
/// `ranges[r].0 .. ranges[r].1` belong to ray `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct Segments {
    pub ranges: Vec<(usize, usize)>,
    pub background: [f64; 3],
}

enum Op {
    Leaf,
    View { src: Var, offset: usize },
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    Unary(Var, Unary),
    Sum(Var),
    ColSums(Var),
    RowSums(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { src: Var, start: usize },
    PermuteCols(Var, Rc<[usize]>),
    Im2Col(Var, ConvGeom),
    Composite {
        alpha: Var,
        color: Var,
        segments: Rc<Segments>,
    },
}

impl Op {
    fn for_each_input(&self, mut f: impl FnMut(Var)) {
        match self {
            Op::Leaf => {}
            Op::View { src, .. } | Op::SliceCols { src, .. } => f(*src),
            Op::MatMul(a, b)
            | Op::AddBias(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b) => {
                f(*a);
                f(*b);
            }
            Op::Scale(a, _)
            | Op::Shift(a)
            | Op::Unary(a, _)
            | Op::Sum(a)
            | Op::ColSums(a)
            | Op::RowSums(a)
            | Op::PermuteCols(a, _)
            | Op::Im2Col(a, _) => f(*a),
            Op::ConcatCols(vs) | Op::ConcatRows(vs) => vs.iter().copied().for_each(f),
            Op::Composite { alpha, color, .. } => {
                f(*alpha);
                f(*color);
            }
        }
    }
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Records matrix operations for a single reverse pass.
///
/// A tape is single-writer; build one per evaluation. Forward values do not
/// depend on whether [`backward`](Tape::backward) is ever called.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    non_finite: Option<&'static str>,
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Adjoint of `v`; zero when the output does not depend on it.
    pub fn wrt(&self, v: Var) -> Matrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    #[inline]
    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// First primitive that produced a non-finite value, as an error.
    pub fn check_finite(&self) -> Result<()> {
        match self.non_finite {
            Some(primitive) => Err(Error::NonFinite { primitive }),
            None => Ok(()),
        }
    }

    fn push(&mut self, value: Matrix, op: Op, name: &'static str) -> Var {
        if self.non_finite.is_none() && !value.is_finite() {
            self.non_finite = Some(name);
        }
        let mut needs_grad = false;
        op.for_each_input(|v| needs_grad |= self.nodes[v.0].needs_grad);
        // Nothing upstream is differentiable: keep the value, drop the history.
        let op = if needs_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable leaf.
    pub fn input(&mut self, value: Matrix) -> Var {
        if self.non_finite.is_none() && !value.is_finite() {
            self.non_finite = Some("input");
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives no adjoint.
    pub fn constant(&mut self, value: Matrix) -> Var {
        if self.non_finite.is_none() && !value.is_finite() {
            self.non_finite = Some("constant");
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Matrix::scalar(value))
    }

    /// Reinterprets `rows * cols` contiguous entries of `src` starting at
    /// `offset` as a row-major matrix.
    pub fn view(&mut self, src: Var, offset: usize, rows: usize, cols: usize) -> Var {
        let s = self.value(src).as_slice();
        assert!(
            offset + rows * cols <= s.len(),
            "view [{offset}, {}) out of bounds for length {}",
            offset + rows * cols,
            s.len()
        );
        let value = Matrix::from_vec(rows, cols, s[offset..offset + rows * cols].to_vec());
        self.push(value, Op::View { src, offset }, "view")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, _) = self.shape(a);
        let (_, n) = self.shape(b);
        let mut c = Matrix::zeros(m, n);
        gemm(self.value(a), Trans::No, self.value(b), Trans::No, 0.0, &mut c);
        self.push(c, Op::MatMul(a, b), "matmul")
    }

    /// `a + bias` with a `1 x cols` bias broadcast over rows.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (_, cols) = self.shape(a);
        assert_eq!(self.shape(bias), (1, cols), "bias must be a row vector");
        let mut out = self.value(a).clone();
        let b = self.value(bias).as_slice().to_vec();
        for row in out.as_mut_slice().chunks_exact_mut(cols) {
            for (o, bv) in row.iter_mut().zip(&b) {
                *o += bv;
            }
        }
        self.push(out, Op::AddBias(a, bias), "add_bias")
    }

    /// `x W + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul(x, w);
        self.add_bias(xw, b)
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, name: &'static str, f: fn(f64, f64) -> f64) -> Var {
        assert_eq!(
            self.shape(a),
            self.shape(b),
            "elementwise `{name}` needs equal shapes"
        );
        let (r, c) = self.shape(a);
        let data = self
            .value(a)
            .as_slice()
            .iter()
            .zip(self.value(b).as_slice())
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(Matrix::from_vec(r, c, data), op, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, Op::Div(a, b), "div", |x, y| x / y)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let v = self.value(a).map(|x| x * factor);
        self.push(v, Op::Scale(a, factor), "scale")
    }

    /// `a + c` for a constant `c`.
    pub fn shift(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::Shift(a), "shift")
    }

    pub fn unary(&mut self, a: Var, f: Unary) -> Var {
        let v = self.value(a).map(|x| f.apply(x));
        self.push(v, Op::Unary(a, f), f.name())
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Sin)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Log)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Sigmoid)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Softplus)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Relu)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Tanh)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Square)
    }

    pub fn opacity(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Opacity)
    }

    /// Sum of all entries, as a `1 x 1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).as_slice().iter().sum();
        self.push(Matrix::scalar(s), Op::Sum(a), "sum")
    }

    /// `n x m -> 1 x m`.
    pub fn col_sums(&mut self, a: Var) -> Var {
        let (_, cols) = self.shape(a);
        let mut out = vec![0.0; cols];
        for row in self.value(a).as_slice().chunks_exact(cols.max(1)) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        self.push(Matrix::row(out), Op::ColSums(a), "col_sums")
    }

    /// `n x m -> n x 1`.
    pub fn row_sums(&mut self, a: Var) -> Var {
        let (rows, cols) = self.shape(a);
        let out: Vec<f64> = (0..rows)
            .map(|r| self.value(a).row_slice(r).iter().sum())
            .collect();
        let _ = cols;
        self.push(Matrix::column(out), Op::RowSums(a), "row_sums")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.shape(parts[0]).0;
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut c0 = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.rows(), rows, "concat_cols needs equal row counts");
            for r in 0..rows {
                out.row_slice_mut(r)[c0..c0 + v.cols()].copy_from_slice(v.row_slice(r));
            }
            c0 += v.cols();
        }
        self.push(out, Op::ConcatCols(parts.to_vec()), "concat_cols")
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let cols = self.shape(parts[0]).1;
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols(), cols, "concat_rows needs equal column counts");
            data.extend_from_slice(v.as_slice());
        }
        let rows = data.len() / cols.max(1);
        self.push(
            Matrix::from_vec(rows, cols, data),
            Op::ConcatRows(parts.to_vec()),
            "concat_rows",
        )
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let (rows, cols) = self.shape(a);
        assert!(start <= end && end <= cols, "column slice out of range");
        let mut out = Matrix::zeros(rows, end - start);
        for r in 0..rows {
            out.row_slice_mut(r)
                .copy_from_slice(&self.value(a).row_slice(r)[start..end]);
        }
        self.push(out, Op::SliceCols { src: a, start }, "slice_cols")
    }

    /// `out[:, i] = a[:, perm[i]]`.
    pub fn permute_cols(&mut self, a: Var, perm: Rc<[usize]>) -> Var {
        let (rows, cols) = self.shape(a);
        assert_eq!(perm.len(), cols, "permutation length must equal column count");
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let src = self.value(a).row_slice(r);
            for (o, &p) in out.row_slice_mut(r).iter_mut().zip(perm.iter()) {
                *o = src[p];
            }
        }
        self.push(out, Op::PermuteCols(a, perm), "permute_cols")
    }

    /// Lowers a convolution input to its patch matrix.
    pub fn im2col(&mut self, image: Var, geom: ConvGeom) -> Var {
        assert_eq!(
            self.shape(image),
            (geom.height * geom.width, geom.channels),
            "image shape does not match convolution geometry"
        );
        let rows = geom.out_height() * geom.out_width();
        let cols = geom.patch_len();
        let src = self.value(image).as_slice();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let row = out.row_slice_mut(r);
            for (c, o) in row.iter_mut().enumerate() {
                if let Some(i) = geom.source_index(r, c) {
                    *o = src[i];
                }
            }
        }
        self.push(out, Op::Im2Col(image, geom), "im2col")
    }

    /// Front-to-back alpha compositing of per-sample opacities (`P x 1`) and
    /// colors (`P x 3`) into per-ray colors (`R x 3`).
    pub fn composite(&mut self, alpha: Var, color: Var, segments: Rc<Segments>) -> Var {
        let (p, one) = self.shape(alpha);
        assert_eq!(one, 1, "alpha must be a column");
        assert_eq!(self.shape(color), (p, 3), "color must be P x 3");
        let a = self.value(alpha).as_slice();
        let c = self.value(color).as_slice();
        let mut out = Matrix::zeros(segments.ranges.len(), 3);
        for (r, &(s, e)) in segments.ranges.iter().enumerate() {
            let (rgb, _) = composite::forward(&a[s..e], &c[3 * s..3 * e], segments.background);
            out.row_slice_mut(r).copy_from_slice(&rgb);
        }
        self.push(
            out,
            Op::Composite {
                alpha,
                color,
                segments,
            },
            "composite",
        )
    }

    /// Reverse pass from a `1 x 1` output.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(
            self.shape(output),
            (1, 1),
            "backward needs a scalar output"
        );
        let n = output.0 + 1;
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Matrix::scalar(1.0));

        for i in (0..n).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
        }

        Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::View { src, offset } => {
                if self.wants(*src) {
                    let (r, c) = self.shape(*src);
                    let acc = grads[src.0].get_or_insert_with(|| Matrix::zeros(r, c));
                    let dst = &mut acc.as_mut_slice()[*offset..*offset + g.len()];
                    for (d, v) in dst.iter_mut().zip(g.as_slice()) {
                        *d += v;
                    }
                }
            }
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    let (r, c) = self.shape(*a);
                    let acc = grads[a.0].get_or_insert_with(|| Matrix::zeros(r, c));
                    gemm(g, Trans::No, self.value(*b), Trans::Yes, 1.0, acc);
                }
                if self.wants(*b) {
                    let (r, c) = self.shape(*b);
                    let acc = grads[b.0].get_or_insert_with(|| Matrix::zeros(r, c));
                    gemm(self.value(*a), Trans::Yes, g, Trans::No, 1.0, acc);
                }
            }
            Op::AddBias(a, bias) => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.wants(*bias) {
                    accumulate(grads, *bias, col_sums(g));
                }
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.wants(*b) {
                    accumulate(grads, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.wants(*b) {
                    accumulate(grads, *b, g.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    accumulate(grads, *a, hadamard(g, self.value(*b)));
                }
                if self.wants(*b) {
                    accumulate(grads, *b, hadamard(g, self.value(*a)));
                }
            }
            Op::Div(a, b) => {
                let bv = self.value(*b);
                if self.wants(*a) {
                    let d = zip(g, bv, |gv, y| gv / y);
                    accumulate(grads, *a, d);
                }
                if self.wants(*b) {
                    // d(a/b)/db = -(a/b)/b
                    let q = &node.value;
                    let d = Matrix::from_vec(
                        g.rows(),
                        g.cols(),
                        g.as_slice()
                            .iter()
                            .zip(q.as_slice())
                            .zip(bv.as_slice())
                            .map(|((gv, qv), y)| -gv * qv / y)
                            .collect(),
                    );
                    accumulate(grads, *b, d);
                }
            }
            Op::Scale(a, f) => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.map(|v| v * f));
                }
            }
            Op::Shift(a) => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
            }
            Op::Unary(a, f) => {
                if self.wants(*a) {
                    let x = self.value(*a).as_slice();
                    let y = node.value.as_slice();
                    let data = g
                        .as_slice()
                        .iter()
                        .zip(x)
                        .zip(y)
                        .map(|((gv, &xv), &yv)| gv * f.derivative(xv, yv))
                        .collect();
                    accumulate(grads, *a, Matrix::from_vec(g.rows(), g.cols(), data));
                }
            }
            Op::Sum(a) => {
                if self.wants(*a) {
                    let (r, c) = self.shape(*a);
                    accumulate(grads, *a, Matrix::filled(r, c, g.item()));
                }
            }
            Op::ColSums(a) => {
                if self.wants(*a) {
                    let (r, c) = self.shape(*a);
                    let mut d = Matrix::zeros(r, c);
                    for row in d.as_mut_slice().chunks_exact_mut(c.max(1)) {
                        row.copy_from_slice(g.as_slice());
                    }
                    accumulate(grads, *a, d);
                }
            }
            Op::RowSums(a) => {
                if self.wants(*a) {
                    let (r, c) = self.shape(*a);
                    let mut d = Matrix::zeros(r, c);
                    for (row, gv) in d.as_mut_slice().chunks_exact_mut(c.max(1)).zip(g.as_slice())
                    {
                        row.fill(*gv);
                    }
                    accumulate(grads, *a, d);
                }
            }
            Op::ConcatCols(parts) => {
                let mut c0 = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    if self.wants(p) {
                        let mut d = Matrix::zeros(r, c);
                        for row in 0..r {
                            d.row_slice_mut(row)
                                .copy_from_slice(&g.row_slice(row)[c0..c0 + c]);
                        }
                        accumulate(grads, p, d);
                    }
                    c0 += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    if self.wants(p) {
                        let d = Matrix::from_vec(r, c, g.as_slice()[off..off + r * c].to_vec());
                        accumulate(grads, p, d);
                    }
                    off += r * c;
                }
            }
            Op::SliceCols { src, start } => {
                if self.wants(*src) {
                    let (r, c) = self.shape(*src);
                    let acc = grads[src.0].get_or_insert_with(|| Matrix::zeros(r, c));
                    for row in 0..r {
                        let dst = &mut acc.row_slice_mut(row)[*start..*start + g.cols()];
                        for (d, v) in dst.iter_mut().zip(g.row_slice(row)) {
                            *d += v;
                        }
                    }
                }
            }
            Op::PermuteCols(a, perm) => {
                if self.wants(*a) {
                    let (r, c) = self.shape(*a);
                    let mut d = Matrix::zeros(r, c);
                    for row in 0..r {
                        let gr = g.row_slice(row);
                        let dr = d.row_slice_mut(row);
                        for (i, &p) in perm.iter().enumerate() {
                            dr[p] += gr[i];
                        }
                    }
                    accumulate(grads, *a, d);
                }
            }
            Op::Im2Col(a, geom) => {
                if self.wants(*a) {
                    let (r, c) = self.shape(*a);
                    let mut d = Matrix::zeros(r, c);
                    let ds = d.as_mut_slice();
                    for row in 0..g.rows() {
                        for (col, gv) in g.row_slice(row).iter().enumerate() {
                            if let Some(i) = geom.source_index(row, col) {
                                ds[i] += gv;
                            }
                        }
                    }
                    accumulate(grads, *a, d);
                }
            }
            Op::Composite {
                alpha,
                color,
                segments,
            } => {
                let a = self.value(*alpha).as_slice();
                let c = self.value(*color).as_slice();
                let p = a.len();
                let mut da = vec![0.0; p];
                let mut dc = vec![0.0; 3 * p];
                for (r, &(s, e)) in segments.ranges.iter().enumerate() {
                    let gr = g.row_slice(r);
                    composite::backward(
                        &a[s..e],
                        &c[3 * s..3 * e],
                        segments.background,
                        [gr[0], gr[1], gr[2]],
                        &mut da[s..e],
                        &mut dc[3 * s..3 * e],
                    );
                }
                if self.wants(*alpha) {
                    accumulate(grads, *alpha, Matrix::column(da));
                }
                if self.wants(*color) {
                    accumulate(grads, *color, Matrix::from_vec(p, 3, dc));
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, d: Matrix) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&d),
        slot @ None => *slot = Some(d),
    }
}

fn hadamard(a: &Matrix, b: &Matrix) -> Matrix {
    zip(a, b, |x, y| x * y)
}

fn zip(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    Matrix::from_vec(
        a.rows(),
        a.cols(),
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(&x, &y)| f(x, y))
            .collect(),
    )
}

fn col_sums(g: &Matrix) -> Matrix {
    let mut out = vec![0.0; g.cols()];
    for row in g.as_slice().chunks_exact(g.cols().max(1)) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    Matrix::row(out)
}

/// Result of comparing reverse-mode gradients against central differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub argmax: usize,
    pub fd_step: f64,
}

/// Floor on the denominator of the relative error.
pub const GRAD_CHECK_FLOOR: f64 = 1e-8;

/// `fn(params)` for a function recorded on a fresh tape. The closure receives
/// the parameters as a `1 x n` input node and returns a `1 x 1` node.
pub fn evaluate<F>(f: F, params: &[f64]) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Var,
{
    let mut tape = Tape::new();
    let x = tape.input(Matrix::row(params.to_vec()));
    let y = f(&mut tape, x);
    tape.check_finite()?;
    Ok(tape.value(y).item())
}

pub fn value_and_gradient<F>(f: F, params: &[f64]) -> Result<(f64, Vec<f64>)>
where
    F: Fn(&mut Tape, Var) -> Var,
{
    let mut tape = Tape::new();
    let x = tape.input(Matrix::row(params.to_vec()));
    let y = f(&mut tape, x);
    tape.check_finite()?;
    let grads = tape.backward(y);
    Ok((tape.value(y).item(), grads.wrt(x).into_vec()))
}

pub fn gradient<F>(f: F, params: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&mut Tape, Var) -> Var,
{
    value_and_gradient(f, params).map(|(_, g)| g)
}

/// Compares [`gradient`] with central differences at step `fd_step`,
/// coordinate by coordinate.
pub fn check_gradient<F>(f: F, params: &[f64], fd_step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Var,
{
    if !(fd_step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {fd_step}"
        )));
    }
    let analytic = gradient(&f, params)?;
    let mut x = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        argmax: 0,
        fd_step,
    };
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + fd_step;
        let up = evaluate(&f, &x)?;
        x[i] = orig - fd_step;
        let down = evaluate(&f, &x)?;
        x[i] = orig;
        let fd = (up - down) / (2.0 * fd_step);
        let err = relative_error(analytic[i], fd);
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.argmax = i;
        }
    }
    Ok(report)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_CHECK_FLOOR)
}
