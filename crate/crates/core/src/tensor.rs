//! Dense row-major `f64` tensors.
//!
//! [`Tensor`] is deliberately simple: a shape vector plus a flat data
//! buffer. Ops cover exactly what the engine needs — matrix products
//! (including the batched per-sample product used by bundle layers),
//! elementwise arithmetic with row-broadcast for biases, a handful of
//! pointwise functions, reductions, concatenation and row gathering.
//!
//! Two invariants hold everywhere: tensors are never empty, and all stored
//! values are finite. Constructors and ops validate both and report the
//! offending op on failure, so NaNs surface where they are produced rather
//! than thousands of iterations later.

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Dense row-major tensor of `f64` values.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.iter().any(|&d| d == 0) {
        return Err(Error::InvalidConfig {
            detail: format!("tensor shapes must be non-empty with positive dims, got {shape:?}"),
        });
    }
    Ok(shape.iter().product())
}

fn check_finite(op: &str, data: &[f64]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op: op.to_string() })
    }
}

impl Tensor {
    /// Builds a tensor, validating shape/data agreement and finiteness.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected = check_shape(&shape)?;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: data.len(),
                shape,
            });
        }
        check_finite("tensor::new", &data)?;
        Ok(Tensor { shape, data })
    }

    /// Internal constructor for results whose validity is guaranteed by the
    /// caller (shape already checked, data produced from finite inputs by
    /// operations that cannot overflow silently past the finite check).
    fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    /// All-zeros tensor.
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Tensor::from_parts(shape.to_vec(), vec![0.0; n]))
    }

    /// All-ones tensor.
    pub fn ones(shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Tensor::from_parts(shape.to_vec(), vec![1.0; n]))
    }

    /// Constant-filled tensor.
    pub fn full(shape: &[usize], value: f64) -> Result<Self> {
        let n = check_shape(shape)?;
        check_finite("tensor::full", &[value])?;
        Ok(Tensor::from_parts(shape.to_vec(), vec![value; n]))
    }

    /// Rank-1 scalar wrapper (shape `[1]`).
    pub fn scalar(value: f64) -> Result<Self> {
        Tensor::new(vec![1], vec![value])
    }

    /// Identity matrix.
    pub fn eye(n: usize) -> Result<Self> {
        let mut t = Tensor::zeros(&[n, n])?;
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        Ok(t)
    }

    /// Uniform random tensor over `[lo, hi)`.
    pub fn rand_uniform(shape: &[usize], lo: f64, hi: f64, stream: &mut RngStream) -> Result<Self> {
        let n = check_shape(shape)?;
        let mut data = vec![0.0; n];
        stream.fill_uniform(&mut data, lo, hi)?;
        Ok(Tensor::from_parts(shape.to_vec(), data))
    }

    /// Standard-normal random tensor.
    pub fn rand_normal(shape: &[usize], stream: &mut RngStream) -> Result<Self> {
        let n = check_shape(shape)?;
        let mut data = vec![0.0; n];
        stream.fill_normal(&mut data);
        Ok(Tensor::from_parts(shape.to_vec(), data))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Total number of elements.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the empty tensor is unrepresentable by construction
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// True for shape `[1]` (the scalar convention used by reductions).
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Matrix dims `(rows, cols)`, or a rank error naming `op`.
    pub fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        if self.shape.len() == 2 {
            Ok((self.shape[0], self.shape[1]))
        } else {
            Err(Error::RankMismatch {
                op,
                expected: 2,
                actual: self.shape.len(),
            })
        }
    }

    /// Element accessor for rank-2 tensors (test convenience).
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        let cols = self.shape[1];
        self.data[i * cols + j]
    }

    /// Same data, new shape (element counts must match).
    pub fn reshape(&self, new_shape: &[usize]) -> Result<Tensor> {
        let n = check_shape(new_shape)?;
        if n != self.data.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: self.shape.clone(),
                right: new_shape.to_vec(),
            });
        }
        Ok(Tensor::from_parts(new_shape.to_vec(), self.data.clone()))
    }

    /// Matrix transpose.
    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.dims2("transpose")?;
        let mut out = vec![0.0; self.data.len()];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Tensor::from_parts(vec![c, r], out))
    }

    /// Matrix product `self · b`.
    pub fn matmul(&self, b: &Tensor) -> Result<Tensor> {
        let (p, q) = self.dims2("matmul")?;
        let (qb, r) = b.dims2("matmul")?;
        if q != qb {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.shape.clone(),
                right: b.shape.clone(),
            });
        }
        let mut out = vec![0.0; p * r];
        // i-k-j loop order: the inner loop streams over contiguous rows of
        // `b` and `out`, which is what makes large products tolerable on a
        // single core.
        for i in 0..p {
            let a_row = &self.data[i * q..(i + 1) * q];
            let out_row = &mut out[i * r..(i + 1) * r];
            for (k, &a_ik) in a_row.iter().enumerate() {
                if a_ik == 0.0 {
                    continue;
                }
                let b_row = &b.data[k * r..(k + 1) * r];
                for (o, &b_kj) in out_row.iter_mut().zip(b_row) {
                    *o += a_ik * b_kj;
                }
            }
        }
        check_finite("matmul", &out)?;
        Ok(Tensor::from_parts(vec![p, r], out))
    }

    /// Matrix product `self · bᵀ` without materialising the transpose.
    pub fn matmul_tb(&self, b: &Tensor) -> Result<Tensor> {
        let (p, q) = self.dims2("matmul_tb")?;
        let (r, qb) = b.dims2("matmul_tb")?;
        if q != qb {
            return Err(Error::ShapeMismatch {
                op: "matmul_tb",
                left: self.shape.clone(),
                right: b.shape.clone(),
            });
        }
        let mut out = vec![0.0; p * r];
        for i in 0..p {
            let a_row = &self.data[i * q..(i + 1) * q];
            for j in 0..r {
                let b_row = &b.data[j * q..(j + 1) * q];
                out[i * r + j] = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
            }
        }
        check_finite("matmul_tb", &out)?;
        Ok(Tensor::from_parts(vec![p, r], out))
    }

    /// Matrix product `selfᵀ · b` without materialising the transpose.
    pub fn matmul_ta(&self, b: &Tensor) -> Result<Tensor> {
        let (p, q) = self.dims2("matmul_ta")?;
        let (pb, r) = b.dims2("matmul_ta")?;
        if p != pb {
            return Err(Error::ShapeMismatch {
                op: "matmul_ta",
                left: self.shape.clone(),
                right: b.shape.clone(),
            });
        }
        let mut out = vec![0.0; q * r];
        for i in 0..p {
            let a_row = &self.data[i * q..(i + 1) * q];
            let b_row = &b.data[i * r..(i + 1) * r];
            for (k, &a_ik) in a_row.iter().enumerate() {
                if a_ik == 0.0 {
                    continue;
                }
                let out_row = &mut out[k * r..(k + 1) * r];
                for (o, &b_ij) in out_row.iter_mut().zip(b_row) {
                    *o += a_ik * b_ij;
                }
            }
        }
        check_finite("matmul_ta", &out)?;
        Ok(Tensor::from_parts(vec![q, r], out))
    }

    /// Per-sample matrix product: for each row `i`, multiplies the `1 × q`
    /// row `x[i, :]` by the `q × r` matrix `w[i]`, giving row `i` of an
    /// `n × r` output. `w` has shape `[n, q, r]`.
    pub fn batched_matmul(&self, w: &Tensor) -> Result<Tensor> {
        let (n, q) = self.dims2("batched_matmul")?;
        if w.rank() != 3 || w.shape[0] != n || w.shape[1] != q {
            return Err(Error::ShapeMismatch {
                op: "batched_matmul",
                left: self.shape.clone(),
                right: w.shape.clone(),
            });
        }
        let r = w.shape[2];
        let mut out = vec![0.0; n * r];
        for i in 0..n {
            let x_row = &self.data[i * q..(i + 1) * q];
            let w_mat = &w.data[i * q * r..(i + 1) * q * r];
            let out_row = &mut out[i * r..(i + 1) * r];
            for (k, &x_ik) in x_row.iter().enumerate() {
                if x_ik == 0.0 {
                    continue;
                }
                let w_row = &w_mat[k * r..(k + 1) * r];
                for (o, &w_kj) in out_row.iter_mut().zip(w_row) {
                    *o += x_ik * w_kj;
                }
            }
        }
        check_finite("batched_matmul", &out)?;
        Ok(Tensor::from_parts(vec![n, r], out))
    }

    fn zip_broadcast(
        &self,
        b: &Tensor,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let mut out;
        if self.shape == b.shape {
            out = self.data.clone();
            for (o, &x) in out.iter_mut().zip(&b.data) {
                *o = f(*o, x);
            }
        } else if self.rank() == 2 && b.rank() == 1 && self.shape[1] == b.shape[0] {
            // Row-broadcast: apply the rank-1 operand to every row.
            let c = self.shape[1];
            out = self.data.clone();
            for row in out.chunks_mut(c) {
                for (o, &x) in row.iter_mut().zip(&b.data) {
                    *o = f(*o, x);
                }
            }
        } else {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: b.shape.clone(),
            });
        }
        check_finite(op, &out)?;
        Ok(Tensor::from_parts(self.shape.clone(), out))
    }

    /// Elementwise sum; `b` may be rank-1 and is then broadcast over rows.
    pub fn add(&self, b: &Tensor) -> Result<Tensor> {
        self.zip_broadcast(b, "add", |x, y| x + y)
    }

    /// Elementwise difference; `b` may be rank-1 (row-broadcast).
    pub fn sub(&self, b: &Tensor) -> Result<Tensor> {
        self.zip_broadcast(b, "sub", |x, y| x - y)
    }

    /// Elementwise (Hadamard) product; `b` may be rank-1 (row-broadcast).
    pub fn mul(&self, b: &Tensor) -> Result<Tensor> {
        self.zip_broadcast(b, "mul", |x, y| x * y)
    }

    /// Applies `f` elementwise, validating the result is finite.
    pub fn map(&self, op: &'static str, f: impl Fn(f64) -> f64) -> Result<Tensor> {
        let out: Vec<f64> = self.data.iter().map(|&x| f(x)).collect();
        check_finite(op, &out)?;
        Ok(Tensor::from_parts(self.shape.clone(), out))
    }

    pub fn tanh(&self) -> Result<Tensor> {
        self.map("tanh", f64::tanh)
    }

    /// Numerically stable logistic sigmoid.
    pub fn sigmoid(&self) -> Result<Tensor> {
        self.map("sigmoid", stable_sigmoid)
    }

    pub fn sin(&self) -> Result<Tensor> {
        self.map("sin", f64::sin)
    }

    pub fn cos(&self) -> Result<Tensor> {
        self.map("cos", f64::cos)
    }

    pub fn square(&self) -> Result<Tensor> {
        self.map("square", |x| x * x)
    }

    /// Elementwise reciprocal; zero inputs surface as `NonFinite`.
    pub fn recip(&self) -> Result<Tensor> {
        self.map("recip", |x| 1.0 / x)
    }

    /// Multiplies every element by `c`.
    pub fn scale(&self, c: f64) -> Result<Tensor> {
        self.map("scale", |x| c * x)
    }

    pub fn neg(&self) -> Tensor {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|x| -x).collect())
    }

    /// Sum of all elements.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Mean of all elements.
    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    /// Per-row maximum of a matrix.
    pub fn max_rows(&self) -> Result<Vec<f64>> {
        let (r, c) = self.dims2("max_rows")?;
        let mut out = Vec::with_capacity(r);
        for i in 0..r {
            let row = &self.data[i * c..(i + 1) * c];
            out.push(row.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        }
        Ok(out)
    }

    /// Per-row argmax of a matrix; ties resolve to the lowest index.
    pub fn argmax_rows(&self) -> Result<Vec<usize>> {
        let (r, c) = self.dims2("argmax_rows")?;
        let mut out = Vec::with_capacity(r);
        for i in 0..r {
            let row = &self.data[i * c..(i + 1) * c];
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            out.push(best);
        }
        Ok(out)
    }

    /// Concatenates two matrices along `axis` (0 = stack rows, 1 = widen).
    pub fn concat(&self, b: &Tensor, axis: usize) -> Result<Tensor> {
        let (ra, ca) = self.dims2("concat")?;
        let (rb, cb) = b.dims2("concat")?;
        match axis {
            0 => {
                if ca != cb {
                    return Err(Error::ShapeMismatch {
                        op: "concat",
                        left: self.shape.clone(),
                        right: b.shape.clone(),
                    });
                }
                let mut data = self.data.clone();
                data.extend_from_slice(&b.data);
                Ok(Tensor::from_parts(vec![ra + rb, ca], data))
            }
            1 => {
                if ra != rb {
                    return Err(Error::ShapeMismatch {
                        op: "concat",
                        left: self.shape.clone(),
                        right: b.shape.clone(),
                    });
                }
                let mut data = Vec::with_capacity(self.data.len() + b.data.len());
                for i in 0..ra {
                    data.extend_from_slice(&self.data[i * ca..(i + 1) * ca]);
                    data.extend_from_slice(&b.data[i * cb..(i + 1) * cb]);
                }
                Ok(Tensor::from_parts(vec![ra, ca + cb], data))
            }
            _ => Err(Error::InvalidConfig {
                detail: format!("concat axis must be 0 or 1, got {axis}"),
            }),
        }
    }

    /// Splits a matrix's columns at `at`, returning `(left, right)`.
    pub fn split_cols(&self, at: usize) -> Result<(Tensor, Tensor)> {
        let (r, c) = self.dims2("split_cols")?;
        if at == 0 || at >= c {
            return Err(Error::InvalidConfig {
                detail: format!("split_cols at {at} is outside (0, {c})"),
            });
        }
        let mut left = Vec::with_capacity(r * at);
        let mut right = Vec::with_capacity(r * (c - at));
        for i in 0..r {
            let row = &self.data[i * c..(i + 1) * c];
            left.extend_from_slice(&row[..at]);
            right.extend_from_slice(&row[at..]);
        }
        Ok((
            Tensor::from_parts(vec![r, at], left),
            Tensor::from_parts(vec![r, c - at], right),
        ))
    }

    /// Splits a matrix's rows at `at`, returning `(top, bottom)`.
    pub fn split_rows(&self, at: usize) -> Result<(Tensor, Tensor)> {
        let (r, c) = self.dims2("split_rows")?;
        if at == 0 || at >= r {
            return Err(Error::InvalidConfig {
                detail: format!("split_rows at {at} is outside (0, {r})"),
            });
        }
        let top = self.data[..at * c].to_vec();
        let bottom = self.data[at * c..].to_vec();
        Ok((
            Tensor::from_parts(vec![at, c], top),
            Tensor::from_parts(vec![r - at, c], bottom),
        ))
    }

    /// Gathers the given rows of a matrix into a new matrix (minibatching).
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor> {
        let (r, c) = self.dims2("gather_rows")?;
        if indices.is_empty() {
            return Err(Error::InvalidConfig {
                detail: "gather_rows needs at least one index".to_string(),
            });
        }
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= r {
                return Err(Error::InvalidConfig {
                    detail: format!("row index {i} out of range for {r} rows"),
                });
            }
            data.extend_from_slice(&self.data[i * c..(i + 1) * c]);
        }
        Ok(Tensor::from_parts(vec![indices.len(), c], data))
    }

    /// Borrow of one matrix row.
    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.shape[self.shape.len() - 1];
        &self.data[i * c..(i + 1) * c]
    }

    /// Largest absolute elementwise difference (test helper).
    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op: "max_abs_diff",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// Logistic sigmoid computed without overflow for large `|x|`.
pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
