//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] is built fresh for every forward pass. Operations append nodes in
//! execution order, so the node list is already topologically sorted and
//! [`Tape::backward`] is a single reverse sweep.
//!
//! Leaf gradients persist across `backward` calls and accumulate until
//! [`Tape::zero_grad`]; gradients of intermediate nodes are scratch space
//! local to each sweep.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Transpose(Var),
    HCat(Var, Var),
    VCat(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Columns(Var, usize),
    LeakyRelu(Var, T),
    Sigmoid(Var),
    Log(Var),
    Exp(Var),
    ClampMin(Var, T),
    Dropout(Var, Matrix<T>),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Reverse(Var),
}

/// A recorded value together with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Tensor<T> {
    value: Matrix<T>,
    requires_grad: bool,
    grad: Option<Matrix<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn value(&self) -> &Matrix<T> {
        &self.value
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    /// Accumulated gradient; `None` until a backward pass reaches this tensor.
    pub fn grad(&self) -> Option<&Matrix<T>> {
        self.grad.as_ref()
    }
}

#[derive(Debug, Clone)]
struct Node<T> {
    tensor: Tensor<T>,
    op: Op<T>,
}

/// Ordered record of operations. See the module docs for the accumulation rules.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    check_finite: bool,
    fault: Option<String>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    /// New tape; non-finite checking follows `debug_assertions`.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            check_finite: cfg!(debug_assertions),
            fault: None,
        }
    }

    /// Enables or disables the post-op finiteness check.
    pub fn with_finite_check(mut self, on: bool) -> Self {
        self.check_finite = on;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// First operation that produced a non-finite value, when checking is on.
    pub fn fault(&self) -> Option<&str> {
        self.fault.as_deref()
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>, requires_grad: bool) -> Var {
        if self.check_finite && self.fault.is_none() && !value.all_finite() {
            self.fault = Some(format!(
                "node {} ({}) produced a non-finite value",
                self.nodes.len(),
                op_name(&op)
            ));
        }
        self.nodes.push(Node {
            tensor: Tensor {
                value,
                requires_grad,
                grad: None,
            },
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].tensor.requires_grad
    }

    /// Constant input; gradients are not tracked.
    pub fn constant(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable input; its gradient is accumulated by `backward`.
    pub fn param(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn tensor(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].tensor
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].tensor.value
    }

    pub fn grad(&self, v: Var) -> Option<&Matrix<T>> {
        self.nodes[v.0].tensor.grad.as_ref()
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> T {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m.data()[0]
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.tensor.grad = None;
        }
    }

    fn dim_err(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::Dimension {
            op,
            left: self.value(a).shape(),
            right: self.value(b).shape(),
        }
    }

    // ---- binary ops --------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b)).map_err(|_| self.dim_err("add", a, b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b)).map_err(|_| self.dim_err("sub", a, b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self
            .value(a)
            .hadamard(self.value(b))
            .map_err(|_| self.dim_err("mul", a, b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn hcat(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).hcat(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::HCat(a, b), rg))
    }

    pub fn vcat(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).vcat(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::VCat(a, b), rg))
    }

    /// Adds a `1×c` row to every row of an `n×c` matrix.
    pub fn add_row(&mut self, m: Var, row: Var) -> Result<Var> {
        let (mv, rv) = (self.value(m), self.value(row));
        if rv.rows() != 1 || rv.cols() != mv.cols() {
            return Err(self.dim_err("add_row", m, row));
        }
        let r = rv.row(0);
        let out = Matrix::from_fn(mv.rows(), mv.cols(), |i, j| mv.get(i, j) + r[j]);
        let rg = self.rg(m) || self.rg(row);
        Ok(self.push(out, Op::AddRow(m, row), rg))
    }

    /// Scales row `i` of an `n×c` matrix by entry `i` of an `n×1` column.
    pub fn mul_col(&mut self, m: Var, col: Var) -> Result<Var> {
        let (mv, cv) = (self.value(m), self.value(col));
        if cv.cols() != 1 || cv.rows() != mv.rows() {
            return Err(self.dim_err("mul_col", m, col));
        }
        let out = mv.scale_rows(cv.data());
        let rg = self.rg(m) || self.rg(col);
        Ok(self.push(out, Op::MulCol(m, col), rg))
    }

    // ---- unary ops ---------------------------------------------------------

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).scale(s);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, s), rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -T::one())
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        let out = self.value(a).map(|v| v + c);
        let rg = self.rg(a);
        self.push(out, Op::AddScalar(a), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(out, Op::Transpose(a), rg)
    }

    /// Columns `start..start + len`.
    pub fn columns(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        if start + len > av.cols() {
            return Err(Error::contract(format!(
                "columns {start}..{} out of range for {:?}",
                start + len,
                av.shape()
            )));
        }
        let out = Matrix::from_fn(av.rows(), len, |i, j| av.get(i, start + j));
        let rg = self.rg(a);
        Ok(self.push(out, Op::Columns(a, start), rg))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let out = self.value(a).map(|v| if v > T::zero() { v } else { v * slope });
        let rg = self.rg(a);
        self.push(out, Op::LeakyRelu(a, slope), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.ln());
        let rg = self.rg(a);
        self.push(out, Op::Log(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.exp());
        let rg = self.rg(a);
        self.push(out, Op::Exp(a), rg)
    }

    /// `max(a, floor)`; the gradient is zero wherever the floor is active.
    pub fn clamp_min(&mut self, a: Var, floor: T) -> Var {
        let out = self.value(a).map(|v| v.max(floor));
        let rg = self.rg(a);
        self.push(out, Op::ClampMin(a, floor), rg)
    }

    /// Inverted dropout: each entry is zeroed with probability `rate`, survivors
    /// are scaled by `1 / (1 - rate)`. The mask is drawn from `seed` alone.
    pub fn dropout(&mut self, a: Var, rate: f64, seed: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::contract(format!("dropout rate {rate} outside [0, 1)")));
        }
        if rate == 0.0 {
            return Ok(a);
        }
        let (r, c) = self.value(a).shape();
        let keep = T::lit(1.0 / (1.0 - rate));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask = Matrix::from_fn(r, c, |_, _| {
            if rng.random::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        });
        let out = self.value(a).hadamard(&mask)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Dropout(a, mask), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Matrix::filled(1, 1, self.value(a).sum());
        let rg = self.rg(a);
        self.push(out, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let n = T::from_usize(v.len().max(1)).unwrap();
        let out = Matrix::filled(1, 1, v.sum() / n);
        let rg = self.rg(a);
        self.push(out, Op::Mean(a), rg)
    }

    /// `n×c -> n×1` row sums.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let out = Matrix::column(&self.value(a).row_sums());
        let rg = self.rg(a);
        self.push(out, Op::RowSum(a), rg)
    }

    /// Softmax along each row, computed with the row maximum subtracted.
    pub fn softmax(&mut self, a: Var) -> Var {
        let out = softmax_rows(self.value(a));
        let rg = self.rg(a);
        self.push(out, Op::Softmax(a), rg)
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let out = log_softmax_rows(self.value(a));
        let rg = self.rg(a);
        self.push(out, Op::LogSoftmax(a), rg)
    }

    /// Gradient reversal: identity forward, negated gradient backward.
    pub fn reverse_grad(&mut self, a: Var) -> Var {
        let out = self.value(a).clone();
        let rg = self.rg(a);
        self.push(out, Op::Reverse(a), rg)
    }

    // ---- backward ----------------------------------------------------------

    /// Propagates `d loss / d node` to every trainable leaf reachable from `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::contract(format!(
                "backward needs a 1x1 loss, got {}x{}",
                shape.0, shape.1
            )));
        }
        if let Some(fault) = &self.fault {
            return Err(Error::numeric(fault.clone()));
        }

        let mut grads: Vec<Option<Matrix<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::filled(1, 1, T::one()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].tensor.requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[idx].op {
                let slot = &mut self.nodes[idx].tensor.grad;
                match slot {
                    Some(acc) => acc.add_assign(&g)?,
                    None => *slot = Some(g),
                }
                continue;
            }
            for (input, contrib) in self.input_grads(idx, &g) {
                if !self.rg(input) {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&contrib)?,
                    slot @ None => *slot = Some(contrib),
                }
            }
        }
        Ok(())
    }

    fn input_grads(&self, idx: usize, g: &Matrix<T>) -> Vec<(Var, Matrix<T>)> {
        let node = &self.nodes[idx];
        let out = &node.tensor.value;
        let val = |v: Var| &self.nodes[v.0].tensor.value;
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => {
                let mut v = Vec::with_capacity(2);
                if self.rg(*a) {
                    v.push((*a, g.matmul_t_unchecked(val(*b))));
                }
                if self.rg(*b) {
                    v.push((*b, val(*a).t_matmul_unchecked(g)));
                }
                v
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.scale(-T::one()))],
            Op::Mul(a, b) => vec![
                (*a, g.hadamard(val(*b)).expect("shape recorded")),
                (*b, g.hadamard(val(*a)).expect("shape recorded")),
            ],
            Op::Scale(a, s) => vec![(*a, g.scale(*s))],
            Op::AddScalar(a) => vec![(*a, g.clone())],
            Op::Transpose(a) => vec![(*a, g.transpose())],
            Op::HCat(a, b) => {
                let ca = val(*a).cols();
                let cb = val(*b).cols();
                let ga = Matrix::from_fn(g.rows(), ca, |i, j| g.get(i, j));
                let gb = Matrix::from_fn(g.rows(), cb, |i, j| g.get(i, ca + j));
                vec![(*a, ga), (*b, gb)]
            }
            Op::VCat(a, b) => {
                let ra = val(*a).rows();
                let rb = val(*b).rows();
                let ga = Matrix::from_fn(ra, g.cols(), |i, j| g.get(i, j));
                let gb = Matrix::from_fn(rb, g.cols(), |i, j| g.get(ra + i, j));
                vec![(*a, ga), (*b, gb)]
            }
            Op::AddRow(m, row) => {
                let sums = g.col_sums();
                vec![(*m, g.clone()), (*row, Matrix::from_raw(1, sums.len(), sums))]
            }
            Op::MulCol(m, col) => {
                let mv = val(*m);
                let cv = val(*col);
                let gm = g.scale_rows(cv.data());
                let gc: Vec<T> = (0..mv.rows())
                    .map(|i| g.row(i).iter().zip(mv.row(i)).map(|(&a, &b)| a * b).sum())
                    .collect();
                vec![(*m, gm), (*col, Matrix::column(&gc))]
            }
            Op::Columns(a, start) => {
                let av = val(*a);
                let (s, len) = (*start, g.cols());
                let ga = Matrix::from_fn(av.rows(), av.cols(), |i, j| {
                    if j >= s && j < s + len {
                        g.get(i, j - s)
                    } else {
                        T::zero()
                    }
                });
                vec![(*a, ga)]
            }
            Op::LeakyRelu(a, slope) => {
                let x = val(*a);
                let ga = g
                    .zip_map(x, |gv, xv| if xv > T::zero() { gv } else { gv * *slope })
                    .expect("shape recorded");
                vec![(*a, ga)]
            }
            Op::Sigmoid(a) => {
                let ga = g
                    .zip_map(out, |gv, y| gv * y * (T::one() - y))
                    .expect("shape recorded");
                vec![(*a, ga)]
            }
            Op::Log(a) => vec![(*a, g.zip_map(val(*a), |gv, x| gv / x).expect("shape recorded"))],
            Op::Exp(a) => vec![(*a, g.hadamard(out).expect("shape recorded"))],
            Op::ClampMin(a, floor) => {
                let ga = g
                    .zip_map(val(*a), |gv, x| if x >= *floor { gv } else { T::zero() })
                    .expect("shape recorded");
                vec![(*a, ga)]
            }
            Op::Dropout(a, mask) => vec![(*a, g.hadamard(mask).expect("shape recorded"))],
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                vec![(*a, Matrix::filled(r, c, g.data()[0]))]
            }
            Op::Mean(a) => {
                let (r, c) = val(*a).shape();
                let n = T::from_usize((r * c).max(1)).unwrap();
                vec![(*a, Matrix::filled(r, c, g.data()[0] / n))]
            }
            Op::RowSum(a) => {
                let (r, c) = val(*a).shape();
                vec![(*a, Matrix::from_fn(r, c, |i, _| g.get(i, 0)))]
            }
            Op::Softmax(a) => {
                let (r, c) = out.shape();
                let mut ga = Matrix::zeros(r, c);
                for i in 0..r {
                    let y = out.row(i);
                    let gi = g.row(i);
                    let dot: T = y.iter().zip(gi).map(|(&p, &q)| p * q).sum();
                    for (o, (&p, &q)) in ga.row_mut(i).iter_mut().zip(y.iter().zip(gi)) {
                        *o = p * (q - dot);
                    }
                }
                vec![(*a, ga)]
            }
            Op::LogSoftmax(a) => {
                let (r, c) = out.shape();
                let mut ga = Matrix::zeros(r, c);
                for i in 0..r {
                    let y = out.row(i);
                    let gi = g.row(i);
                    let total: T = gi.iter().copied().sum();
                    for (o, (&ly, &q)) in ga.row_mut(i).iter_mut().zip(y.iter().zip(gi)) {
                        *o = q - ly.exp() * total;
                    }
                }
                vec![(*a, ga)]
            }
            Op::Reverse(a) => vec![(*a, g.scale(-T::one()))],
        }
    }
}

fn op_name<T>(op: &Op<T>) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::AddScalar(..) => "add_scalar",
        Op::Transpose(..) => "transpose",
        Op::HCat(..) => "hcat",
        Op::VCat(..) => "vcat",
        Op::AddRow(..) => "add_row",
        Op::MulCol(..) => "mul_col",
        Op::Columns(..) => "columns",
        Op::LeakyRelu(..) => "leaky_relu",
        Op::Sigmoid(..) => "sigmoid",
        Op::Log(..) => "log",
        Op::Exp(..) => "exp",
        Op::ClampMin(..) => "clamp_min",
        Op::Dropout(..) => "dropout",
        Op::Sum(..) => "sum",
        Op::Mean(..) => "mean",
        Op::RowSum(..) => "row_sum",
        Op::Softmax(..) => "softmax",
        Op::LogSoftmax(..) => "log_softmax",
        Op::Reverse(..) => "reverse_grad",
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Row-wise softmax of a plain matrix.
pub fn softmax_rows<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

pub fn log_softmax_rows<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    type M = Matrix<f64>;

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let w = tape.param(M::from_rows(&[[1.0, -2.0], [0.5, 3.0]]).unwrap());
        let loss = tape.sum(w);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn half_square_gradient_is_identity_map() {
        let mut tape = Tape::new();
        let wm = M::from_rows(&[[1.0, -2.0], [0.5, 3.0]]).unwrap();
        let w = tape.param(wm.clone());
        let sq = tape.mul(w, w).unwrap();
        let s = tape.sum(sq);
        let loss = tape.scale(s, 0.5);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &wm);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::<f64>::new();
        let w = tape.param(M::zeros(2, 2));
        assert!(matches!(tape.backward(w), Err(Error::Contract(_))));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut tape = Tape::new();
        let w = tape.param(M::from_rows(&[[1.0, 2.0]]).unwrap());
        let sq = tape.mul(w, w).unwrap();
        let loss = tape.sum(sq);
        tape.backward(loss).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap().data(), &[4.0, 8.0]);
        tape.zero_grad();
        assert!(tape.grad(w).is_none());
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let c = tape.constant(M::from_rows(&[[1.0, 2.0]]).unwrap());
        let w = tape.param(M::from_rows(&[[3.0], [4.0]]).unwrap());
        let y = tape.matmul(c, w).unwrap();
        tape.backward(y).unwrap();
        assert!(tape.grad(c).is_none());
        assert_eq!(tape.grad(w).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn softmax_uniform_and_saturated_rows() {
        let m = M::from_rows(&[[0.0, 0.0, 0.0]]).unwrap();
        let s = softmax_rows(&m);
        for &v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let big = softmax_rows(&M::from_rows(&[[1000.0, 0.0]]).unwrap());
        assert_eq!(big.data(), &[1.0, 0.0]);
    }

    #[test]
    fn reverse_grad_negates() {
        let mut tape = Tape::new();
        let x = tape.param(M::from_rows(&[[0.3, -0.7]]).unwrap());
        let r = tape.reverse_grad(x);
        assert_eq!(tape.value(r), tape.value(x));
        let loss = tape.sum(r);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[-1.0, -1.0]);
    }

    #[test]
    fn dropout_zero_rate_is_identity() {
        let mut tape = Tape::new();
        let x = tape.param(M::filled(3, 3, 2.0));
        let y = tape.dropout(x, 0.0, 11).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
        assert!(tape.dropout(x, 1.0, 11).is_err());
    }

    #[test]
    fn non_finite_values_are_flagged() {
        let mut tape = Tape::new().with_finite_check(true);
        let x = tape.param(M::from_rows(&[[0.0]]).unwrap());
        let l = tape.log(x);
        assert!(tape.fault().is_some());
        assert!(matches!(tape.backward(l), Err(Error::Numeric(_))));
    }
}
