//! Reverse-mode differentiation over a linear record of matrix operations.
//!
//! Every operation appends a node holding its output value; a [`Var`] is a
//! handle to a node. Nodes are appended after their inputs, so walking the
//! record backwards is a valid reverse topological order. The tape is rebuilt
//! for every forward pass.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use super::kernels::{self, Mode};
use super::tensor::{matmul_nt_into, matmul_tn_into, Tensor2D};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

const LAYER_NORM_EPS: f64 = 1e-5;
const NORMALIZE_EPS: f64 = 1e-12;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// n×c plus a broadcast 1×c row.
    AddRow(usize, usize),
    Scale(usize, f64),
    /// Multiply by a 1×1 node.
    ScaleBy(usize, usize),
    AddConst(usize),
    Exp(usize),
    Abs(usize),
    Transpose(usize),
    SoftmaxRows(usize),
    LogSoftmaxRows(usize),
    Gelu(usize),
    Mask(usize, Vec<f64>),
    /// n×c → n×1
    SumRows(usize),
    /// n×c → 1×c
    MeanRows(usize),
    SumAll(usize),
    MeanAll(usize),
    /// n×n → 1×1 mean of the diagonal.
    MeanDiag(usize),
    /// Stores each row's (clamped) norm.
    NormalizeRows(usize, Vec<f64>),
    /// Stores each row's inverse standard deviation.
    LayerNormRows(usize, Vec<f64>),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols(usize, usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor2D,
    op: Op,
    needs_grad: bool,
}

/// Operation record for one forward pass.
///
/// A tape and the values on it belong to one worker; replicas training in
/// parallel each own their tape.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    /// Drops every node. Vars issued before the reset become invalid.
    pub fn reset(&mut self) {
        self.id = NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed);
        self.nodes.clear();
        self.grads.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a differentiable input (a parameter).
    pub fn param(&mut self, value: &Tensor2D) -> Var {
        self.push(value.detached(), Op::Leaf, true)
    }

    /// Records an input whose gradient is never needed.
    pub fn constant(&mut self, value: Tensor2D) -> Var {
        self.push(value.detached(), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor2D {
        &self.nodes[self.index(v).expect("var from another tape")].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    /// Gradient of the last [`backward`](Self::backward) loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<Tensor2D> {
        let i = self.index(v).ok()?;
        let g = self.grads.get(i)?.as_ref()?;
        let (r, c) = self.nodes[i].value.shape();
        Some(Tensor2D::from_vec(r, c, g.clone()).expect("grad shape"))
    }

    fn index(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::usage("variable does not belong to this tape"));
        }
        Ok(v.index)
    }

    fn push(&mut self, value: Tensor2D, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn unary(&mut self, x: Var, value: Tensor2D, op: impl FnOnce(usize) -> Op) -> Result<Var> {
        let i = self.index(x)?;
        let needs = self.nodes[i].needs_grad;
        Ok(self.push(value, op(i), needs))
    }

    fn same_shape(&self, a: usize, b: usize, what: &str) -> Result<()> {
        let (sa, sb) = (self.nodes[a].value.shape(), self.nodes[b].value.shape());
        if sa != sb {
            return Err(Error::config(format!("{what}: shape {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.index(a)?, self.index(b)?);
        let value = self.nodes[ia].value.matmul(&self.nodes[ib].value)?;
        let needs = self.nodes[ia].needs_grad || self.nodes[ib].needs_grad;
        Ok(self.push(value, Op::MatMul(ia, ib), needs))
    }

    fn elementwise(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64, op: fn(usize, usize) -> Op) -> Result<Var> {
        let (ia, ib) = (self.index(a)?, self.index(b)?);
        self.same_shape(ia, ib, what)?;
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor2D::from_vec(va.rows(), va.cols(), data)?;
        let needs = self.nodes[ia].needs_grad || self.nodes[ib].needs_grad;
        Ok(self.push(value, op(ia, ib), needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, "sub", |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, "mul", |x, y| x * y, Op::Mul)
    }

    /// `x + 1ᵀ·row`: adds the 1×c `row` to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (ix, ib) = (self.index(x)?, self.index(row)?);
        let (vx, vb) = (&self.nodes[ix].value, &self.nodes[ib].value);
        if vb.rows() != 1 || vb.cols() != vx.cols() {
            return Err(Error::config(format!(
                "add_row: {:?} plus {:?}",
                vx.shape(),
                vb.shape()
            )));
        }
        let mut value = vx.detached();
        for r in 0..value.rows() {
            value.row_mut(r).iter_mut().zip(vb.data()).for_each(|(v, b)| *v += b);
        }
        let needs = self.nodes[ix].needs_grad || self.nodes[ib].needs_grad;
        Ok(self.push(value, Op::AddRow(ix, ib), needs))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let value = self.value_checked(x)?.map(|v| v * factor);
        self.unary(x, value, |i| Op::Scale(i, factor))
    }

    /// Multiplies every entry of `x` by the 1×1 value `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        let (ix, is) = (self.index(x)?, self.index(s)?);
        if self.nodes[is].value.shape() != (1, 1) {
            return Err(Error::config("scale_by expects a 1x1 factor"));
        }
        let factor = self.nodes[is].value.item();
        let value = self.nodes[ix].value.map(|v| v * factor);
        let needs = self.nodes[ix].needs_grad || self.nodes[is].needs_grad;
        Ok(self.push(value, Op::ScaleBy(ix, is), needs))
    }

    pub fn add_const(&mut self, x: Var, c: f64) -> Result<Var> {
        let value = self.value_checked(x)?.map(|v| v + c);
        self.unary(x, value, Op::AddConst)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let value = self.value_checked(x)?.map(f64::exp);
        self.unary(x, value, Op::Exp)
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        let value = self.value_checked(x)?.map(f64::abs);
        self.unary(x, value, Op::Abs)
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let value = self.value_checked(x)?.transpose();
        self.unary(x, value, Op::Transpose)
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let value = kernels::softmax_rows(self.value_checked(x)?);
        self.unary(x, value, Op::SoftmaxRows)
    }

    pub fn log_softmax_rows(&mut self, x: Var) -> Result<Var> {
        let value = kernels::log_softmax_rows(self.value_checked(x)?);
        self.unary(x, value, Op::LogSoftmaxRows)
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let value = kernels::gelu(self.value_checked(x)?);
        self.unary(x, value, Op::Gelu)
    }

    /// Inverted dropout; returns `x` itself when inactive.
    pub fn dropout<R: Rng>(&mut self, x: Var, rate: f64, mode: Mode, rng: &mut R) -> Result<Var> {
        kernels::check_dropout_rate(rate)?;
        let vx = self.value_checked(x)?;
        if mode == Mode::Infer || rate == 0.0 {
            return Ok(x);
        }
        let mask = kernels::dropout_mask(vx.len(), rate, rng);
        let mut value = vx.detached();
        value.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
        self.unary(x, value, |i| Op::Mask(i, mask))
    }

    pub fn sum_rows(&mut self, x: Var) -> Result<Var> {
        let vx = self.value_checked(x)?;
        let data = (0..vx.rows()).map(|r| vx.row(r).iter().sum()).collect();
        let value = Tensor2D::from_vec(vx.rows(), 1, data)?;
        self.unary(x, value, Op::SumRows)
    }

    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let vx = self.value_checked(x)?;
        if vx.rows() == 0 {
            return Err(Error::usage("mean over zero rows"));
        }
        let mut data = vec![0.0; vx.cols()];
        for r in 0..vx.rows() {
            data.iter_mut().zip(vx.row(r)).for_each(|(d, v)| *d += v);
        }
        let n = vx.rows() as f64;
        data.iter_mut().for_each(|d| *d /= n);
        let value = Tensor2D::row_vector(&data);
        self.unary(x, value, Op::MeanRows)
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let value = Tensor2D::scalar(self.value_checked(x)?.data().iter().sum());
        self.unary(x, value, Op::SumAll)
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let vx = self.value_checked(x)?;
        if vx.is_empty() {
            return Err(Error::usage("mean over an empty tensor"));
        }
        let value = Tensor2D::scalar(vx.data().iter().sum::<f64>() / vx.len() as f64);
        self.unary(x, value, Op::MeanAll)
    }

    pub fn mean_diag(&mut self, x: Var) -> Result<Var> {
        let vx = self.value_checked(x)?;
        if vx.rows() != vx.cols() || vx.rows() == 0 {
            return Err(Error::config("mean_diag expects a nonempty square matrix"));
        }
        let n = vx.rows();
        let value = Tensor2D::scalar((0..n).map(|i| vx.get(i, i)).sum::<f64>() / n as f64);
        self.unary(x, value, Op::MeanDiag)
    }

    /// Scales each row to unit L2 norm.
    pub fn normalize_rows(&mut self, x: Var) -> Result<Var> {
        let vx = self.value_checked(x)?;
        let norms: Vec<f64> = vx.row_norms().into_iter().map(|n| n.max(NORMALIZE_EPS)).collect();
        let mut value = vx.detached();
        for (r, n) in norms.iter().enumerate() {
            value.row_mut(r).iter_mut().for_each(|v| *v /= n);
        }
        self.unary(x, value, |i| Op::NormalizeRows(i, norms))
    }

    /// Per-row standardization without affine parameters.
    pub fn layer_norm_rows(&mut self, x: Var) -> Result<Var> {
        let vx = self.value_checked(x)?;
        let c = vx.cols() as f64;
        let mut value = vx.detached();
        let mut inv_std = Vec::with_capacity(vx.rows());
        for r in 0..vx.rows() {
            let row = value.row_mut(r);
            let mean = row.iter().sum::<f64>() / c;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
            inv_std.push(inv);
        }
        self.unary(x, value, |i| Op::LayerNormRows(i, inv_std))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let idx = parts.iter().map(|&p| self.index(p)).collect::<Result<Vec<_>>>()?;
        let rows = idx.first().map(|&i| self.nodes[i].value.rows()).ok_or_else(|| Error::usage("concat of nothing"))?;
        if idx.iter().any(|&i| self.nodes[i].value.rows() != rows) {
            return Err(Error::config("concat_cols: row counts differ"));
        }
        let cols: usize = idx.iter().map(|&i| self.nodes[i].value.cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &i in &idx {
                data.extend_from_slice(self.nodes[i].value.row(r));
            }
        }
        let value = Tensor2D::from_vec(rows, cols, data)?;
        let needs = idx.iter().any(|&i| self.nodes[i].needs_grad);
        Ok(self.push(value, Op::ConcatCols(idx), needs))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let idx = parts.iter().map(|&p| self.index(p)).collect::<Result<Vec<_>>>()?;
        let cols = idx.first().map(|&i| self.nodes[i].value.cols()).ok_or_else(|| Error::usage("concat of nothing"))?;
        if idx.iter().any(|&i| self.nodes[i].value.cols() != cols) {
            return Err(Error::config("concat_rows: column counts differ"));
        }
        let mut data = Vec::new();
        for &i in &idx {
            data.extend_from_slice(self.nodes[i].value.data());
        }
        let rows = data.len() / cols.max(1);
        let value = Tensor2D::from_vec(rows, cols, data)?;
        let needs = idx.iter().any(|&i| self.nodes[i].needs_grad);
        Ok(self.push(value, Op::ConcatRows(idx), needs))
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let vx = self.value_checked(x)?;
        if start + len > vx.cols() {
            return Err(Error::config("slice_cols out of range"));
        }
        let mut data = Vec::with_capacity(vx.rows() * len);
        for r in 0..vx.rows() {
            data.extend_from_slice(&vx.row(r)[start..start + len]);
        }
        let value = Tensor2D::from_vec(vx.rows(), len, data)?;
        self.unary(x, value, |i| Op::SliceCols(i, start))
    }

    fn value_checked(&self, x: Var) -> Result<&Tensor2D> {
        Ok(&self.nodes[self.index(x)?].value)
    }

    /// Propagates `∂loss/∂node` to every node the 1×1 `loss` depends on.
    ///
    /// Gradients are stored on the tape; read them with [`grad`](Self::grad)
    /// or copy them into parameter tensors with [`write_grad`](Self::write_grad).
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let li = self.index(loss)?;
        if self.nodes[li].value.shape() != (1, 1) {
            return Err(Error::usage("backward expects a 1x1 loss"));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[li] = Some(vec![1.0]);
        for i in (0..=li).rev() {
            let Some(g) = grads[i].take() else { continue };
            if self.nodes[i].needs_grad {
                self.propagate(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    /// Copies the gradient of `v` into `target.grad` (zeros when `v` received none).
    pub fn write_grad(&self, v: Var, target: &mut Tensor2D) {
        let g = self.grad(v).map(Tensor2D::into_data).unwrap_or_else(|| vec![0.0; target.len()]);
        target.grad = Some(g);
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        let (rows, cols) = y.shape();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let k = va.cols();
                if self.nodes[*a].needs_grad {
                    let da = acc(grads, *a, va.len());
                    matmul_nt_into(g, vb.data(), da, rows, cols, k);
                }
                if self.nodes[*b].needs_grad {
                    let db = acc(grads, *b, vb.len());
                    matmul_tn_into(va.data(), g, db, rows, k, cols);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |d| add_into(d, g));
                self.accumulate(grads, *b, |d| add_into(d, g));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |d| add_into(d, g));
                self.accumulate(grads, *b, |d| d.iter_mut().zip(g).for_each(|(d, g)| *d -= g));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.nodes[*a].value.data(), self.nodes[*b].value.data());
                self.accumulate(grads, *a, |d| {
                    d.iter_mut().zip(g).zip(vb).for_each(|((d, g), y)| *d += g * y)
                });
                self.accumulate(grads, *b, |d| {
                    d.iter_mut().zip(g).zip(va).for_each(|((d, g), x)| *d += g * x)
                });
            }
            Op::AddRow(x, b) => {
                self.accumulate(grads, *x, |d| add_into(d, g));
                self.accumulate(grads, *b, |d| {
                    for r in 0..rows {
                        add_into(d, &g[r * cols..(r + 1) * cols]);
                    }
                });
            }
            Op::Scale(x, f) => self.accumulate(grads, *x, |d| {
                d.iter_mut().zip(g).for_each(|(d, g)| *d += g * f)
            }),
            Op::ScaleBy(x, s) => {
                let factor = self.nodes[*s].value.item();
                let vx = self.nodes[*x].value.data();
                self.accumulate(grads, *x, |d| {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d += g * factor)
                });
                self.accumulate(grads, *s, |d| {
                    d[0] += g.iter().zip(vx).map(|(g, x)| g * x).sum::<f64>()
                });
            }
            Op::AddConst(x) => self.accumulate(grads, *x, |d| add_into(d, g)),
            Op::Exp(x) => self.accumulate(grads, *x, |d| {
                d.iter_mut().zip(g).zip(y.data()).for_each(|((d, g), y)| *d += g * y)
            }),
            Op::Abs(x) => {
                let vx = self.nodes[*x].value.data();
                self.accumulate(grads, *x, |d| {
                    d.iter_mut().zip(g).zip(vx).for_each(|((d, g), x)| {
                        if *x > 0.0 {
                            *d += g
                        } else if *x < 0.0 {
                            *d -= g
                        }
                    })
                });
            }
            Op::Transpose(x) => self.accumulate(grads, *x, |d| {
                // y is rows×cols, x is cols×rows
                for r in 0..rows {
                    for c in 0..cols {
                        d[c * rows + r] += g[r * cols + c];
                    }
                }
            }),
            Op::SoftmaxRows(x) => self.accumulate(grads, *x, |d| {
                for r in 0..rows {
                    let (yr, gr) = (y.row(r), &g[r * cols..(r + 1) * cols]);
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for c in 0..cols {
                        d[r * cols + c] += yr[c] * (gr[c] - dot);
                    }
                }
            }),
            Op::LogSoftmaxRows(x) => self.accumulate(grads, *x, |d| {
                for r in 0..rows {
                    let gr = &g[r * cols..(r + 1) * cols];
                    let total: f64 = gr.iter().sum();
                    for c in 0..cols {
                        d[r * cols + c] += gr[c] - y.get(r, c).exp() * total;
                    }
                }
            }),
            Op::Gelu(x) => {
                let vx = self.nodes[*x].value.data();
                self.accumulate(grads, *x, |d| {
                    d.iter_mut()
                        .zip(g)
                        .zip(vx)
                        .for_each(|((d, g), x)| *d += g * kernels::gelu_derivative(*x))
                });
            }
            Op::Mask(x, mask) => self.accumulate(grads, *x, |d| {
                d.iter_mut().zip(g).zip(mask).for_each(|((d, g), m)| *d += g * m)
            }),
            Op::SumRows(x) => {
                let xc = self.nodes[*x].value.cols();
                self.accumulate(grads, *x, |d| {
                    for r in 0..rows {
                        d[r * xc..(r + 1) * xc].iter_mut().for_each(|d| *d += g[r]);
                    }
                });
            }
            Op::MeanRows(x) => {
                let xr = self.nodes[*x].value.rows();
                let inv = 1.0 / xr as f64;
                self.accumulate(grads, *x, |d| {
                    for r in 0..xr {
                        d[r * cols..(r + 1) * cols]
                            .iter_mut()
                            .zip(g)
                            .for_each(|(d, g)| *d += g * inv);
                    }
                });
            }
            Op::SumAll(x) => self.accumulate(grads, *x, |d| d.iter_mut().for_each(|d| *d += g[0])),
            Op::MeanAll(x) => {
                let share = g[0] / self.nodes[*x].value.len() as f64;
                self.accumulate(grads, *x, |d| d.iter_mut().for_each(|d| *d += share));
            }
            Op::MeanDiag(x) => {
                let n = self.nodes[*x].value.rows();
                let share = g[0] / n as f64;
                self.accumulate(grads, *x, |d| (0..n).for_each(|i| d[i * n + i] += share));
            }
            Op::NormalizeRows(x, norms) => self.accumulate(grads, *x, |d| {
                for (r, n) in norms.iter().enumerate() {
                    let (yr, gr) = (y.row(r), &g[r * cols..(r + 1) * cols]);
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for c in 0..cols {
                        d[r * cols + c] += (gr[c] - yr[c] * dot) / n;
                    }
                }
            }),
            Op::LayerNormRows(x, inv_std) => self.accumulate(grads, *x, |d| {
                let n = cols as f64;
                for (r, inv) in inv_std.iter().enumerate() {
                    let (yr, gr) = (y.row(r), &g[r * cols..(r + 1) * cols]);
                    let mean_g = gr.iter().sum::<f64>() / n;
                    let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n;
                    for c in 0..cols {
                        d[r * cols + c] += inv * (gr[c] - mean_g - yr[c] * mean_gy);
                    }
                }
            }),
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let pc = self.nodes[p].value.cols();
                    self.accumulate(grads, p, |d| {
                        for r in 0..rows {
                            add_into(&mut d[r * pc..(r + 1) * pc], &g[r * cols + offset..r * cols + offset + pc]);
                        }
                    });
                    offset += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.nodes[p].value.len();
                    self.accumulate(grads, p, |d| add_into(d, &g[offset..offset + n]));
                    offset += n;
                }
            }
            Op::SliceCols(x, start) => {
                let xc = self.nodes[*x].value.cols();
                self.accumulate(grads, *x, |d| {
                    for r in 0..rows {
                        add_into(&mut d[r * xc + start..r * xc + start + cols], &g[r * cols..(r + 1) * cols]);
                    }
                });
            }
        }
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], target: usize, f: impl FnOnce(&mut [f64])) {
        if self.nodes[target].needs_grad {
            f(acc(grads, target, self.nodes[target].value.len()));
        }
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], target: usize, len: usize) -> &mut [f64] {
    grads[target].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(d: &mut [f64], g: &[f64]) {
    d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
}
