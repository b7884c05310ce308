//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records one forward computation as a flat list of nodes;
//! [`Tape::backward`] walks it once in reverse, accumulating
//! vector-Jacobian products. Tapes are cheap, short-lived values: training
//! loops build a fresh tape per step, so there is no graph mutation, no
//! retained state and no aliasing to reason about.
//!
//! Gradients only flow where they are wanted. A leaf created with
//! `requires_grad = false` blocks propagation into its subgraph, which is
//! how evaluation passes stay cheap and how an actor update can push
//! gradients *through* a frozen critic into the action without touching
//! the critic's weights.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    index: usize,
}

enum Op {
    Leaf,
    Matmul(Var, Var),
    BatchedMatmul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Sin(Var),
    Cos(Var),
    Square(Var),
    Recip(Var),
    ScaleConst(Var, f64),
    Reshape(Var),
    Concat(Var, Var, usize),
    SliceCols(Var, usize),
    Mean(Var),
    Sum(Var),
    LayerNorm(Var, f64),
    LogSoftmax(Var),
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Recorded forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`, if one was computed.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.index).and_then(|g| g.as_ref())
    }

    /// Moves the gradient for `v` out of the map.
    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.index).and_then(|g| g.take())
    }
}

/// Sums a matrix over its rows, yielding a rank-1 tensor of column sums.
fn column_sums(t: &Tensor) -> Result<Tensor> {
    let (r, c) = t.dims2("column_sums")?;
    let mut out = vec![0.0; c];
    for i in 0..r {
        for (o, &v) in out.iter_mut().zip(t.row(i)) {
            *o += v;
        }
    }
    Tensor::new(vec![c], out)
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Value of a recorded node.
    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.index].value
    }

    /// Whether gradients flow into/through `v`.
    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.index].requires_grad
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var {
            index: self.nodes.len() - 1,
        }
    }

    fn binary_grad(&self, a: Var, b: Var) -> bool {
        self.nodes[a.index].requires_grad || self.nodes[b.index].requires_grad
    }

    /// Records an input node. `requires_grad` marks it as a differentiation
    /// target.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// Records a non-differentiated input (data, targets, constants).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, self.binary_grad(a, b), Op::Matmul(a, b)))
    }

    /// Per-sample matrix product; see [`Tensor::batched_matmul`].
    pub fn batched_matmul(&mut self, x: Var, w: Var) -> Result<Var> {
        let value = self.value(x).batched_matmul(self.value(w))?;
        Ok(self.push(value, self.binary_grad(x, w), Op::BatchedMatmul(x, w)))
    }

    /// Elementwise sum. `b` may be rank-1 and is then broadcast over rows
    /// (bias add); its gradient is reduced by column sums accordingly.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, self.binary_grad(a, b), Op::Add(a, b)))
    }

    /// Elementwise difference; `b` may be rank-1 (row-broadcast).
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(value, self.binary_grad(a, b), Op::Sub(a, b)))
    }

    /// Elementwise product; `b` may be rank-1 (row-broadcast, e.g. a
    /// layer-norm gain).
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).mul(self.value(b))?;
        Ok(self.push(value, self.binary_grad(a, b), Op::Mul(a, b)))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).tanh()?;
        Ok(self.push(value, self.requires_grad(x), Op::Tanh(x)))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).sigmoid()?;
        Ok(self.push(value, self.requires_grad(x), Op::Sigmoid(x)))
    }

    pub fn sin(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).sin()?;
        Ok(self.push(value, self.requires_grad(x), Op::Sin(x)))
    }

    pub fn cos(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).cos()?;
        Ok(self.push(value, self.requires_grad(x), Op::Cos(x)))
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).square()?;
        Ok(self.push(value, self.requires_grad(x), Op::Square(x)))
    }

    /// Elementwise reciprocal (used for `1 / T` in bioclock phases).
    pub fn recip(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).recip()?;
        Ok(self.push(value, self.requires_grad(x), Op::Recip(x)))
    }

    /// Multiplication by a compile-time constant.
    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let value = self.value(x).scale(c)?;
        Ok(self.push(value, self.requires_grad(x), Op::ScaleConst(x, c)))
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        self.scale(x, -1.0)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        Ok(self.push(value, self.requires_grad(x), Op::Reshape(x)))
    }

    /// Concatenates two matrices along `axis` (0 rows, 1 columns).
    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Result<Var> {
        let value = self.value(a).concat(self.value(b), axis)?;
        Ok(self.push(value, self.binary_grad(a, b), Op::Concat(a, b, axis)))
    }

    /// Keeps the first `cols` columns of a matrix.
    pub fn slice_cols(&mut self, x: Var, cols: usize) -> Result<Var> {
        let (_, c) = self.value(x).dims2("slice_cols")?;
        if cols == 0 || cols > c {
            return Err(Error::InvalidConfig {
                detail: format!("slice_cols keeping {cols} of {c} columns"),
            });
        }
        let value = if cols == c {
            self.value(x).clone()
        } else {
            self.value(x).split_cols(cols)?.0
        };
        Ok(self.push(value, self.requires_grad(x), Op::SliceCols(x, cols)))
    }

    /// Mean over all elements, yielding a shape-`[1]` scalar.
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(x).mean())?;
        Ok(self.push(value, self.requires_grad(x), Op::Mean(x)))
    }

    /// Sum over all elements, yielding a shape-`[1]` scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(x).sum())?;
        Ok(self.push(value, self.requires_grad(x), Op::Sum(x)))
    }

    /// Row-wise layer normalisation without affine parameters:
    /// `(x - mean) / sqrt(var + eps)` per row, variance with `1/h`.
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Result<Var> {
        let value = layer_norm_forward(self.value(x), eps)?;
        Ok(self.push(value, self.requires_grad(x), Op::LayerNorm(x, eps)))
    }

    /// Row-wise log-softmax (numerically stabilised by the row max).
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let value = log_softmax_forward(self.value(x))?;
        Ok(self.push(value, self.requires_grad(x), Op::LogSoftmax(x)))
    }

    /// Reverse pass from a scalar loss. Returns gradients for every
    /// participating node; leaves that require gradients but do not
    /// influence the loss get exact zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_value = self.value(loss);
        if !loss_value.is_scalar() {
            return Err(Error::NonScalarLoss {
                shape: loss_value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.index] = Some(Tensor::scalar(1.0)?);

        for i in (0..=loss.index).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].clone() else { continue };
            self.propagate(i, &g, &mut grads)?;
        }

        // Non-participating gradient targets get exact zeros.
        for (node, slot) in self.nodes.iter().zip(grads.iter_mut()) {
            if node.requires_grad && matches!(node.op, Op::Leaf) && slot.is_none() {
                *slot = Some(Tensor::zeros(node.value.shape())?);
            }
        }

        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, delta: Tensor) -> Result<()> {
        if !self.nodes[v.index].requires_grad {
            return Ok(());
        }
        grads[v.index] = Some(match grads[v.index].take() {
            Some(existing) => existing.add(&delta)?,
            None => delta,
        });
        Ok(())
    }

    fn propagate(&self, index: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let out = &self.nodes[index].value;
        match self.nodes[index].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                if self.requires_grad(a) {
                    self.accumulate(grads, a, g.matmul_tb(bv)?)?;
                }
                if self.requires_grad(b) {
                    self.accumulate(grads, b, av.matmul_ta(g)?)?;
                }
            }
            Op::BatchedMatmul(x, w) => {
                let (xv, wv) = (self.value(x), self.value(w));
                let (n, q) = xv.dims2("batched_matmul_grad")?;
                let r = wv.shape()[2];
                if self.requires_grad(x) {
                    // dx[i,k] = Σ_j g[i,j] · w[i,k,j]
                    let mut dx = vec![0.0; n * q];
                    for i in 0..n {
                        let g_row = g.row(i);
                        let w_mat = &wv.data()[i * q * r..(i + 1) * q * r];
                        for k in 0..q {
                            let w_row = &w_mat[k * r..(k + 1) * r];
                            dx[i * q + k] =
                                g_row.iter().zip(w_row).map(|(a, b)| a * b).sum();
                        }
                    }
                    self.accumulate(grads, x, Tensor::new(vec![n, q], dx)?)?;
                }
                if self.requires_grad(w) {
                    // dw[i,k,j] = x[i,k] · g[i,j] (per-sample outer product)
                    let mut dw = vec![0.0; n * q * r];
                    for i in 0..n {
                        let x_row = xv.row(i);
                        let g_row = g.row(i);
                        let w_mat = &mut dw[i * q * r..(i + 1) * q * r];
                        for (k, &x_ik) in x_row.iter().enumerate() {
                            if x_ik == 0.0 {
                                continue;
                            }
                            let w_row = &mut w_mat[k * r..(k + 1) * r];
                            for (o, &g_ij) in w_row.iter_mut().zip(g_row) {
                                *o = x_ik * g_ij;
                            }
                        }
                    }
                    self.accumulate(grads, w, Tensor::new(vec![n, q, r], dw)?)?;
                }
            }
            Op::Add(a, b) => {
                if self.requires_grad(a) {
                    self.accumulate(grads, a, g.clone())?;
                }
                if self.requires_grad(b) {
                    let db = self.reduce_to_shape(g.clone(), b)?;
                    self.accumulate(grads, b, db)?;
                }
            }
            Op::Sub(a, b) => {
                if self.requires_grad(a) {
                    self.accumulate(grads, a, g.clone())?;
                }
                if self.requires_grad(b) {
                    let db = self.reduce_to_shape(g.neg(), b)?;
                    self.accumulate(grads, b, db)?;
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                if self.requires_grad(a) {
                    // bv broadcasts over rows when rank-1, matching forward.
                    self.accumulate(grads, a, g.mul(bv)?)?;
                }
                if self.requires_grad(b) {
                    let db = self.reduce_to_shape(g.mul(av)?, b)?;
                    self.accumulate(grads, b, db)?;
                }
            }
            Op::Tanh(x) => {
                let d = out.map("tanh_grad", |y| 1.0 - y * y)?;
                self.accumulate(grads, x, g.mul(&d)?)?;
            }
            Op::Sigmoid(x) => {
                let d = out.map("sigmoid_grad", |y| y * (1.0 - y))?;
                self.accumulate(grads, x, g.mul(&d)?)?;
            }
            Op::Sin(x) => {
                let d = self.value(x).cos()?;
                self.accumulate(grads, x, g.mul(&d)?)?;
            }
            Op::Cos(x) => {
                let d = self.value(x).sin()?.neg();
                self.accumulate(grads, x, g.mul(&d)?)?;
            }
            Op::Square(x) => {
                let d = self.value(x).scale(2.0)?;
                self.accumulate(grads, x, g.mul(&d)?)?;
            }
            Op::Recip(x) => {
                // d(1/x)/dx = -1/x² = -y².
                let d = out.map("recip_grad", |y| -y * y)?;
                self.accumulate(grads, x, g.mul(&d)?)?;
            }
            Op::ScaleConst(x, c) => {
                self.accumulate(grads, x, g.scale(c)?)?;
            }
            Op::Reshape(x) => {
                let dx = g.reshape(self.value(x).shape())?;
                self.accumulate(grads, x, dx)?;
            }
            Op::Concat(a, b, axis) => {
                let (da, db) = match axis {
                    0 => g.split_rows(self.value(a).shape()[0])?,
                    _ => g.split_cols(self.value(a).shape()[1])?,
                };
                if self.requires_grad(a) {
                    self.accumulate(grads, a, da)?;
                }
                if self.requires_grad(b) {
                    self.accumulate(grads, b, db)?;
                }
            }
            Op::SliceCols(x, cols) => {
                // Zero-pad the gradient back to the input width.
                let xv = self.value(x);
                let (r, c) = xv.dims2("slice_cols_grad")?;
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    dx[i * c..i * c + cols].copy_from_slice(g.row(i));
                }
                self.accumulate(grads, x, Tensor::new(vec![r, c], dx)?)?;
            }
            Op::Mean(x) => {
                let xv = self.value(x);
                let fill = g.data()[0] / xv.len() as f64;
                self.accumulate(grads, x, Tensor::full(xv.shape(), fill)?)?;
            }
            Op::Sum(x) => {
                let xv = self.value(x);
                self.accumulate(grads, x, Tensor::full(xv.shape(), g.data()[0])?)?;
            }
            Op::LayerNorm(x, eps) => {
                let dx = layer_norm_backward(self.value(x), out, g, eps)?;
                self.accumulate(grads, x, dx)?;
            }
            Op::LogSoftmax(x) => {
                // dx = g - softmax(x) · rowsum(g); softmax = exp(out).
                let (r, c) = out.dims2("log_softmax_grad")?;
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    let g_row = g.row(i);
                    let y_row = out.row(i);
                    let gsum: f64 = g_row.iter().sum();
                    for j in 0..c {
                        dx[i * c + j] = g_row[j] - y_row[j].exp() * gsum;
                    }
                }
                self.accumulate(grads, x, Tensor::new(vec![r, c], dx)?)?;
            }
        }
        Ok(())
    }

    /// Reduces a full-shape gradient to a broadcast operand's shape
    /// (column sums when the operand was rank-1).
    fn reduce_to_shape(&self, g: Tensor, target: Var) -> Result<Tensor> {
        let tv = self.value(target);
        if g.shape() == tv.shape() {
            Ok(g)
        } else {
            column_sums(&g)
        }
    }
}

fn layer_norm_forward(x: &Tensor, eps: f64) -> Result<Tensor> {
    let (r, c) = x.dims2("layer_norm")?;
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let row = x.row(i);
        let mu = row.iter().sum::<f64>() / c as f64;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / c as f64;
        let s = (var + eps).sqrt();
        for (o, &v) in out[i * c..(i + 1) * c].iter_mut().zip(row) {
            *o = (v - mu) / s;
        }
    }
    let t = Tensor::new(vec![r, c], out)?;
    Ok(t)
}

fn layer_norm_backward(x: &Tensor, y: &Tensor, g: &Tensor, eps: f64) -> Result<Tensor> {
    // With y_i = (x_i - μ)/s and s = sqrt(var + eps):
    // dx = (g - mean(g) - y · mean(g ∘ y)) / s, all row-wise.
    let (r, c) = x.dims2("layer_norm_grad")?;
    let mut dx = vec![0.0; r * c];
    for i in 0..r {
        let x_row = x.row(i);
        let y_row = y.row(i);
        let g_row = g.row(i);
        let mu = x_row.iter().sum::<f64>() / c as f64;
        let var = x_row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / c as f64;
        let s = (var + eps).sqrt();
        let g_mean = g_row.iter().sum::<f64>() / c as f64;
        let gy_mean = g_row.iter().zip(y_row).map(|(a, b)| a * b).sum::<f64>() / c as f64;
        for j in 0..c {
            dx[i * c + j] = (g_row[j] - g_mean - y_row[j] * gy_mean) / s;
        }
    }
    Tensor::new(vec![r, c], dx)
}

fn log_softmax_forward(x: &Tensor) -> Result<Tensor> {
    let (r, c) = x.dims2("log_softmax")?;
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let row = x.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for (o, &v) in out[i * c..(i + 1) * c].iter_mut().zip(row) {
            *o = v - lse;
        }
    }
    Tensor::new(vec![r, c], out)
}

/// One element found above the gradient-check threshold.
#[derive(Debug, Clone)]
pub struct GradCheckFailure {
    pub param: usize,
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Result of [`grad_check`].
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Number of scalar parameters compared.
    pub checked: usize,
    /// Largest relative error observed.
    pub max_rel_err: f64,
    /// Elements whose relative error exceeded the threshold.
    pub failures: Vec<GradCheckFailure>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Relative error between analytic and numeric derivatives:
/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn grad_rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares analytic gradients against central finite differences.
///
/// `f` must build a scalar loss on the given tape from leaves matching
/// `params` (created by `grad_check` itself). Every element of every
/// parameter is perturbed by `±eps`; elements with relative error above
/// `threshold` are reported as failures.
pub fn grad_check<F>(
    f: F,
    params: &[Tensor],
    eps: f64,
    threshold: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    // Analytic pass.
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone(), true)).collect();
    let loss = f(&mut tape, &vars)?;
    let mut grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|&v| grads.take(v).expect("leaf gradients are always present"))
        .collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed
            .iter()
            .map(|p| tape.leaf(p.clone(), false))
            .collect();
        let loss = f(&mut tape, &vars)?;
        Ok(tape.value(loss).data()[0])
    };

    let mut report = GradCheckReport {
        checked: 0,
        max_rel_err: 0.0,
        failures: Vec::new(),
    };
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, param) in params.iter().enumerate() {
        for ei in 0..param.len() {
            let original = param.data()[ei];
            work[pi].data_mut()[ei] = original + eps;
            let plus = eval(&work)?;
            work[pi].data_mut()[ei] = original - eps;
            let minus = eval(&work)?;
            work[pi].data_mut()[ei] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[pi].data()[ei];
            let rel = grad_rel_err(a, numeric);
            report.checked += 1;
            report.max_rel_err = report.max_rel_err.max(rel);
            if rel > threshold {
                report.failures.push(GradCheckFailure {
                    param: pi,
                    element: ei,
                    analytic: a,
                    numeric,
                    rel_err: rel,
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    const EPS: f64 = 1e-6;
    const THRESHOLD: f64 = 1e-5;

    fn rand(shape: &[usize], seed: u64) -> Tensor {
        let mut s = RngStream::new(seed);
        Tensor::rand_normal(shape, &mut s).unwrap()
    }

    #[test]
    fn matmul_gradients_match_hand_derivation() {
        // loss = sum(A·B)  =>  dA = 1·Bᵀ, dB = Aᵀ·1.
        let a = rand(&[3, 4], 1);
        let b = rand(&[4, 2], 2);
        let mut tape = Tape::new();
        let va = tape.leaf(a.clone(), true);
        let vb = tape.leaf(b.clone(), true);
        let prod = tape.matmul(va, vb).unwrap();
        let loss = tape.sum(prod).unwrap();
        let grads = tape.backward(loss).unwrap();

        let ones = Tensor::ones(&[3, 2]).unwrap();
        let da = ones.matmul_tb(&b).unwrap();
        let db = a.matmul_ta(&ones).unwrap();
        assert!(grads.get(va).unwrap().max_abs_diff(&da).unwrap() < 1e-12);
        assert!(grads.get(vb).unwrap().max_abs_diff(&db).unwrap() < 1e-12);
    }

    #[test]
    fn grad_check_covers_every_op() {
        // One composite expression exercising each differentiable op; the
        // finite-difference check runs over every input element.
        let x = rand(&[3, 4], 10);
        let w = rand(&[4, 6], 11);
        let bias = rand(&[6], 12);
        let bw = rand(&[3, 4, 2], 13).scale(0.3).unwrap();

        let report = grad_check(
            |tape, vars| {
                let (x, w, bias, bw) = (vars[0], vars[1], vars[2], vars[3]);
                let h = tape.matmul(x, w)?;
                let h = tape.add(h, bias)?;
                let t = tape.tanh(h)?;
                let s = tape.sigmoid(h)?;
                let mixed = tape.mul(t, s)?;
                let sn = tape.sin(mixed)?;
                let cs = tape.cos(mixed)?;
                let trig = tape.sub(sn, cs)?;
                let ln = tape.layer_norm(trig, 1e-5)?;
                let lsm = tape.log_softmax(ln)?;
                let sq = tape.square(lsm)?;
                // Feed a positive-valued branch through recip.
                let pos = tape.sigmoid(sq)?;
                let rc = tape.recip(pos)?;
                let flat = tape.reshape(rc, &[3, 6])?;
                let joined = tape.concat(flat, flat, 1)?;
                let sliced = tape.slice_cols(joined, 5)?;
                let bm = tape.batched_matmul(x, bw)?;
                let bsum = tape.sum(bm)?;
                let msum = tape.mean(sliced)?;
                let scaled = tape.scale(bsum, 0.25)?;
                let total = tape.add(msum, scaled)?;
                tape.sum(total)
            },
            &[x, w, bias, bw],
            EPS,
            THRESHOLD,
        )
        .unwrap();

        assert!(report.checked >= 60, "checked {}", report.checked);
        assert!(
            report.passed(),
            "max rel err {:e}, first failure {:?}",
            report.max_rel_err,
            report.failures.first()
        );
    }

    #[test]
    fn broadcast_bias_gradient_is_column_sum() {
        let x = rand(&[5, 3], 20);
        let x_for_closure = x.clone();
        let report = grad_check(
            |tape, vars| {
                let b = vars[0];
                let vx = tape.constant(x_for_closure.clone());
                let y = tape.add(vx, b)?;
                let sq = tape.square(y)?;
                tape.mean(sq)
            },
            &[rand(&[3], 21)],
            EPS,
            THRESHOLD,
        )
        .unwrap();
        assert!(report.passed(), "max rel err {:e}", report.max_rel_err);

        // And the exact hand value: d/db mean((x+b)²) = 2·colmean(x+b).
        let b = rand(&[3], 21);
        let mut tape = Tape::new();
        let vx = tape.constant(x.clone());
        let vb = tape.leaf(b.clone(), true);
        let y = tape.add(vx, vb).unwrap();
        let sq = tape.square(y).unwrap();
        let loss = tape.mean(sq).unwrap();
        let grads = tape.backward(loss).unwrap();
        let db = grads.get(vb).unwrap();
        for j in 0..3 {
            let expect: f64 =
                (0..5).map(|i| 2.0 * (x.at2(i, j) + b.data()[j])).sum::<f64>() / 15.0;
            assert!((db.data()[j] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn non_participating_leaf_gets_zero_gradient() {
        let mut tape = Tape::new();
        let used = tape.leaf(rand(&[2, 2], 30), true);
        let unused = tape.leaf(rand(&[4], 31), true);
        let sq = tape.square(used).unwrap();
        let loss = tape.sum(sq).unwrap();
        let grads = tape.backward(loss).unwrap();
        let zero = grads.get(unused).unwrap();
        assert_eq!(zero.shape(), &[4]);
        assert!(zero.data().iter().all(|&v| v == 0.0));
        assert!(grads.get(used).is_some());
    }

    #[test]
    fn no_grad_leaves_are_skipped_but_pass_through() {
        // The actor/critic freeze pattern: gradients flow through a frozen
        // weight matrix into the differentiated input.
        let w = rand(&[3, 2], 40);
        let x = rand(&[4, 3], 41);
        let mut tape = Tape::new();
        let vw = tape.leaf(w.clone(), false);
        let vx = tape.leaf(x.clone(), true);
        let y = tape.matmul(vx, vw).unwrap();
        let loss = tape.sum(y).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(vw).is_none(), "frozen leaf must get no gradient");
        let dx = grads.get(vx).unwrap();
        let expect = Tensor::ones(&[4, 2]).unwrap().matmul_tb(&w).unwrap();
        assert!(dx.max_abs_diff(&expect).unwrap() < 1e-12);
    }

    #[test]
    fn reused_node_accumulates_gradient() {
        // loss = sum(x∘x + x) via two uses of x: dx = 2x + 1.
        let x = rand(&[2, 3], 50);
        let mut tape = Tape::new();
        let vx = tape.leaf(x.clone(), true);
        let prod = tape.mul(vx, vx).unwrap();
        let s = tape.add(prod, vx).unwrap();
        let loss = tape.sum(s).unwrap();
        let grads = tape.backward(loss).unwrap();
        let expect = x.scale(2.0).unwrap().map("x", |v| v + 1.0).unwrap();
        assert!(grads.get(vx).unwrap().max_abs_diff(&expect).unwrap() < 1e-12);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let v = tape.leaf(rand(&[2, 2], 60), true);
        let y = tape.square(v).unwrap();
        assert!(matches!(
            tape.backward(y),
            Err(Error::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn mean_and_sum_seed_constant_gradients() {
        let x = rand(&[4, 5], 70);
        let mut tape = Tape::new();
        let vx = tape.leaf(x, true);
        let m = tape.mean(vx).unwrap();
        let grads = tape.backward(m).unwrap();
        let g = grads.get(vx).unwrap();
        assert!(g.data().iter().all(|&v| (v - 0.05).abs() < 1e-15));
    }

    #[test]
    fn concat_axis0_splits_gradient() {
        let a = rand(&[2, 3], 80);
        let b = rand(&[3, 3], 81);
        let report = grad_check(
            |tape, vars| {
                let joined = tape.concat(vars[0], vars[1], 0)?;
                let sq = tape.square(joined)?;
                tape.mean(sq)
            },
            &[a, b],
            EPS,
            THRESHOLD,
        )
        .unwrap();
        assert!(report.passed(), "max rel err {:e}", report.max_rel_err);
    }
}
