//! Reverse-mode automatic differentiation over a flat operation tape.
//!
//! Values are computed eagerly as nodes are appended; `backward` walks the
//! tape once in reverse. Node evaluation order is the append order, so runs
//! are bitwise reproducible.

use super::tensor::Tensor;

pub type Var = usize;

#[derive(Debug, Clone)]
#[allow(dead_code)] // scalar operands are kept for tape debugging
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `[m×n] + [1×n]`, bias broadcast over rows.
    AddRow(Var, Var),
    /// `A·B` — [m×k]·[k×n].
    MatMul(Var, Var),
    /// `A·Bᵀ` — [m×k]·[n×k]ᵀ.
    MatMulTB(Var, Var),
    ScalarMul(Var, f64),
    ScalarAdd(Var, f64),
    Relu(Var),
    Tanh(Var),
    /// Clamp into `(-1+eps, 1-eps)`; pass-through gradient inside, zero at
    /// the rails (where the upstream tanh gradient has already vanished).
    ClampUnit(Var, f64),
    Sigmoid(Var),
    Exp(Var),
    Ln(Var),
    Gelu(Var),
    GatherRows(Var, Vec<usize>),
    SliceCols(Var, usize, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    /// Row-wise softmax over the lower-triangular prefix `j <= i`; entries
    /// above the diagonal are never read or written.
    CausalSoftmax(Var),
    /// `(input, gain [1×n], bias [1×n])`.
    LayerNorm(Var, Var, Var),
    SumAll(Var),
    MeanAll(Var),
    /// Row-wise sum → [m×1].
    SumCols(Var),
    /// Elementwise minimum; gradient follows the winning side (ties → left).
    MinPair(Var, Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.7978845608028654; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = match &op {
            Op::Leaf => false,
            _ => self.op_parents(&op).iter().any(|&p| self.nodes[p].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.nodes.len() - 1
    }

    fn op_parents(&self, op: &Op) -> Vec<Var> {
        match op {
            Op::Leaf => vec![],
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::MatMul(a, b)
            | Op::MatMulTB(a, b)
            | Op::MinPair(a, b) => vec![*a, *b],
            Op::ScalarMul(a, _)
            | Op::ScalarAdd(a, _)
            | Op::ClampUnit(a, _)
            | Op::Relu(a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Exp(a)
            | Op::Ln(a)
            | Op::Gelu(a)
            | Op::GatherRows(a, _)
            | Op::SliceCols(a, _, _)
            | Op::CausalSoftmax(a)
            | Op::SumAll(a)
            | Op::MeanAll(a)
            | Op::SumCols(a) => vec![*a],
            Op::ConcatCols(vs) | Op::ConcatRows(vs) => vs.clone(),
            Op::LayerNorm(a, g, b) => vec![*a, *g, *b],
        }
    }

    /// A differentiable input (parameters) when `trainable`, otherwise data.
    pub fn leaf(&mut self, value: Tensor, trainable: bool) -> Var {
        let v = self.push(value, Op::Leaf);
        self.nodes[v].requires_grad = trainable;
        v
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a].value.zip(&self.nodes[b].value, |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a].value.zip(&self.nodes[b].value, |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a].value.zip(&self.nodes[b].value, |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let (x, b) = (&self.nodes[a].value, &self.nodes[bias].value);
        assert_eq!(b.rows, 1, "bias must be a row vector");
        assert_eq!(x.cols, b.cols, "bias width mismatch");
        let mut out = x.clone();
        for r in 0..out.rows {
            for c in 0..out.cols {
                *out.at_mut(r, c) += b.at(0, c);
            }
        }
        self.push(out, Op::AddRow(a, bias))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a].value.matmul(&self.nodes[b].value);
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ` — the natural form for `x·Wᵀ` with weights stored [out×in].
    pub fn matmul_tb(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a].value.matmul_tb(&self.nodes[b].value);
        self.push(v, Op::MatMulTB(a, b))
    }

    /// `x·Wᵀ + b` with `w` [out×in] and `b` [1×out].
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul_tb(x, w);
        self.add_row(xw, b)
    }

    pub fn scalar_mul(&mut self, a: Var, s: f64) -> Var {
        let v = self.nodes[a].value.map(|x| x * s);
        self.push(v, Op::ScalarMul(a, s))
    }

    pub fn scalar_add(&mut self, a: Var, s: f64) -> Var {
        let v = self.nodes[a].value.map(|x| x + s);
        self.push(v, Op::ScalarAdd(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.nodes[a].value.map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.nodes[a].value.map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn clamp_unit(&mut self, a: Var, eps: f64) -> Var {
        let v = self.nodes[a].value.map(|x| x.clamp(-1.0 + eps, 1.0 - eps));
        self.push(v, Op::ClampUnit(a, eps))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.nodes[a].value.map(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(v, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.nodes[a].value.map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.nodes[a].value.map(f64::ln);
        self.push(v, Op::Ln(a))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.nodes[a].value.map(gelu);
        self.push(v, Op::Gelu(a))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let x = &self.nodes[a].value;
        let mut out = Tensor::zeros(idx.len(), x.cols);
        for (r, &i) in idx.iter().enumerate() {
            out.data[r * x.cols..(r + 1) * x.cols].copy_from_slice(x.row_slice(i));
        }
        self.push(out, Op::GatherRows(a, idx.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let x = &self.nodes[a].value;
        assert!(start < end && end <= x.cols, "bad column slice");
        let mut out = Tensor::zeros(x.rows, end - start);
        for r in 0..x.rows {
            out.data[r * (end - start)..(r + 1) * (end - start)]
                .copy_from_slice(&x.row_slice(r)[start..end]);
        }
        self.push(out, Op::SliceCols(a, start, end))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.nodes[parts[0]].value.rows;
        let cols: usize = parts.iter().map(|&p| self.nodes[p].value.cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            for &p in parts {
                let x = &self.nodes[p].value;
                assert_eq!(x.rows, rows, "concat_cols row mismatch");
                out.data[r * cols + c0..r * cols + c0 + x.cols].copy_from_slice(x.row_slice(r));
                c0 += x.cols;
            }
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.nodes[parts[0]].value.cols;
        let rows: usize = parts.iter().map(|&p| self.nodes[p].value.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            let x = &self.nodes[p].value;
            assert_eq!(x.cols, cols, "concat_rows col mismatch");
            data.extend_from_slice(&x.data);
        }
        self.push(Tensor::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn causal_softmax(&mut self, a: Var) -> Var {
        let x = &self.nodes[a].value;
        assert_eq!(x.rows, x.cols, "causal softmax needs a square score matrix");
        let n = x.rows;
        let mut out = Tensor::zeros(n, n);
        for i in 0..n {
            let row = x.row_slice(i);
            let m = row[..=i].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..=i {
                let e = (row[j] - m).exp();
                *out.at_mut(i, j) = e;
                z += e;
            }
            for j in 0..=i {
                *out.at_mut(i, j) /= z;
            }
        }
        self.push(out, Op::CausalSoftmax(a))
    }

    pub fn layer_norm(&mut self, a: Var, gain: Var, bias: Var) -> Var {
        let x = &self.nodes[a].value;
        let g = &self.nodes[gain].value;
        let b = &self.nodes[bias].value;
        assert_eq!(g.shape(), (1, x.cols), "layer norm gain shape");
        assert_eq!(b.shape(), (1, x.cols), "layer norm bias shape");
        let mut out = Tensor::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            let row = x.row_slice(r);
            let mean = row.iter().sum::<f64>() / x.cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / x.cols as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for c in 0..x.cols {
                *out.at_mut(r, c) = (row[c] - mean) * inv * g.at(0, c) + b.at(0, c);
            }
        }
        self.push(out, Op::LayerNorm(a, gain, bias))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.nodes[a].value.data.iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let x = &self.nodes[a].value;
        let s = x.data.iter().sum::<f64>() / x.data.len() as f64;
        self.push(Tensor::scalar(s), Op::MeanAll(a))
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let x = &self.nodes[a].value;
        let mut out = Tensor::zeros(x.rows, 1);
        for r in 0..x.rows {
            out.data[r] = x.row_slice(r).iter().sum();
        }
        self.push(out, Op::SumCols(a))
    }

    pub fn min_pair(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a].value.zip(&self.nodes[b].value, f64::min);
        self.push(v, Op::MinPair(a, b))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    /// Gradients of `loss` (a scalar node) with respect to every node.
    ///
    /// Returns one gradient tensor per node; nodes not influencing the loss
    /// (or not requiring grad) get `None`.
    pub fn backward(&self, loss: Var) -> Vec<Option<Tensor>> {
        assert!(
            self.nodes[loss].value.is_scalar(),
            "backward requires a scalar loss"
        );
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss] = Some(Tensor::scalar(1.0));
        for id in (0..=loss).rev() {
            let Some(g_out) = grads[id].take() else {
                continue;
            };
            // Keep the node's own grad available to callers.
            grads[id] = Some(g_out.clone());
            if !self.nodes[id].requires_grad && !matches!(self.nodes[id].op, Op::Leaf) {
                continue;
            }
            self.propagate(id, &g_out, &mut grads);
        }
        grads
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], target: Var, delta: Tensor) {
        if !self.nodes[target].requires_grad {
            // Still accumulate for leaves so grad-check of data inputs works?
            // No: skip non-grad nodes entirely to keep the tape walk cheap.
            return;
        }
        match &mut grads[target] {
            Some(g) => g.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&self, id: Var, g_out: &Tensor, grads: &mut [Option<Tensor>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g_out.clone());
                self.accumulate(grads, *b, g_out.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g_out.clone());
                self.accumulate(grads, *b, g_out.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let ga = g_out.zip(&self.nodes[*b].value, |g, y| g * y);
                let gb = g_out.zip(&self.nodes[*a].value, |g, x| g * x);
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::AddRow(a, bias) => {
                self.accumulate(grads, *a, g_out.clone());
                let mut gb = Tensor::zeros(1, g_out.cols);
                for r in 0..g_out.rows {
                    for c in 0..g_out.cols {
                        gb.data[c] += g_out.at(r, c);
                    }
                }
                self.accumulate(grads, *bias, gb);
            }
            Op::MatMul(a, b) => {
                let ga = g_out.matmul_tb(&self.nodes[*b].value);
                let gb = self.nodes[*a].value.matmul_ta(g_out);
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::MatMulTB(a, b) => {
                // C = A·Bᵀ: dA = dC·B, dB = dCᵀ·A.
                let ga = g_out.matmul(&self.nodes[*b].value);
                let gb = g_out.matmul_ta(&self.nodes[*a].value);
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::ScalarMul(a, s) => {
                self.accumulate(grads, *a, g_out.map(|g| g * s));
            }
            Op::ScalarAdd(a, _) => {
                self.accumulate(grads, *a, g_out.clone());
            }
            Op::Relu(a) => {
                let ga = g_out.zip(&self.nodes[*a].value, |g, x| if x > 0.0 { g } else { 0.0 });
                self.accumulate(grads, *a, ga);
            }
            Op::ClampUnit(a, eps) => {
                let lim = 1.0 - eps;
                let ga = g_out.zip(&self.nodes[*a].value, |g, x| {
                    if x.abs() < lim {
                        g
                    } else {
                        0.0
                    }
                });
                self.accumulate(grads, *a, ga);
            }
            Op::Tanh(a) => {
                let ga = g_out.zip(&self.nodes[id].value, |g, y| g * (1.0 - y * y));
                self.accumulate(grads, *a, ga);
            }
            Op::Sigmoid(a) => {
                let ga = g_out.zip(&self.nodes[id].value, |g, y| g * y * (1.0 - y));
                self.accumulate(grads, *a, ga);
            }
            Op::Exp(a) => {
                let ga = g_out.zip(&self.nodes[id].value, |g, y| g * y);
                self.accumulate(grads, *a, ga);
            }
            Op::Ln(a) => {
                let ga = g_out.zip(&self.nodes[*a].value, |g, x| g / x);
                self.accumulate(grads, *a, ga);
            }
            Op::Gelu(a) => {
                let ga = g_out.zip(&self.nodes[*a].value, |g, x| g * gelu_grad(x));
                self.accumulate(grads, *a, ga);
            }
            Op::GatherRows(a, idx) => {
                let x = &self.nodes[*a].value;
                let mut ga = Tensor::zeros(x.rows, x.cols);
                for (r, &i) in idx.iter().enumerate() {
                    for c in 0..x.cols {
                        *ga.at_mut(i, c) += g_out.at(r, c);
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::SliceCols(a, start, _end) => {
                let x = &self.nodes[*a].value;
                let mut ga = Tensor::zeros(x.rows, x.cols);
                for r in 0..g_out.rows {
                    for c in 0..g_out.cols {
                        *ga.at_mut(r, start + c) = g_out.at(r, c);
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::ConcatCols(parts) => {
                let mut c0 = 0;
                for &p in parts {
                    let w = self.nodes[p].value.cols;
                    let mut gp = Tensor::zeros(g_out.rows, w);
                    for r in 0..g_out.rows {
                        for c in 0..w {
                            *gp.at_mut(r, c) = g_out.at(r, c0 + c);
                        }
                    }
                    self.accumulate(grads, p, gp);
                    c0 += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut r0 = 0;
                for &p in parts {
                    let h = self.nodes[p].value.rows;
                    let mut gp = Tensor::zeros(h, g_out.cols);
                    gp.data
                        .copy_from_slice(&g_out.data[r0 * g_out.cols..(r0 + h) * g_out.cols]);
                    self.accumulate(grads, p, gp);
                    r0 += h;
                }
            }
            Op::CausalSoftmax(a) => {
                let y = &self.nodes[id].value;
                let n = y.rows;
                let mut ga = Tensor::zeros(n, n);
                for i in 0..n {
                    let mut dot = 0.0;
                    for j in 0..=i {
                        dot += g_out.at(i, j) * y.at(i, j);
                    }
                    for j in 0..=i {
                        *ga.at_mut(i, j) = y.at(i, j) * (g_out.at(i, j) - dot);
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::LayerNorm(a, gain, bias) => {
                let x = &self.nodes[*a].value;
                let g = &self.nodes[*gain].value;
                let n = x.cols as f64;
                let mut gx = Tensor::zeros(x.rows, x.cols);
                let mut gg = Tensor::zeros(1, x.cols);
                let mut gb = Tensor::zeros(1, x.cols);
                for r in 0..x.rows {
                    let row = x.row_slice(r);
                    let mean = row.iter().sum::<f64>() / n;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                    let inv = 1.0 / (var + LN_EPS).sqrt();
                    // dy/dxhat path.
                    let mut sum_dg = 0.0;
                    let mut sum_dg_xhat = 0.0;
                    for c in 0..x.cols {
                        let xhat = (row[c] - mean) * inv;
                        let dy = g_out.at(r, c);
                        gg.data[c] += dy * xhat;
                        gb.data[c] += dy;
                        let dxhat = dy * g.at(0, c);
                        sum_dg += dxhat;
                        sum_dg_xhat += dxhat * xhat;
                    }
                    for c in 0..x.cols {
                        let xhat = (row[c] - mean) * inv;
                        let dxhat = g_out.at(r, c) * g.at(0, c);
                        *gx.at_mut(r, c) =
                            inv * (dxhat - sum_dg / n - xhat * sum_dg_xhat / n);
                    }
                }
                self.accumulate(grads, *a, gx);
                self.accumulate(grads, *gain, gg);
                self.accumulate(grads, *bias, gb);
            }
            Op::SumAll(a) => {
                let x = &self.nodes[*a].value;
                let d = g_out.scalar_value();
                self.accumulate(grads, *a, Tensor::from_vec(x.rows, x.cols, vec![d; x.data.len()]));
            }
            Op::MeanAll(a) => {
                let x = &self.nodes[*a].value;
                let d = g_out.scalar_value() / x.data.len() as f64;
                self.accumulate(grads, *a, Tensor::from_vec(x.rows, x.cols, vec![d; x.data.len()]));
            }
            Op::SumCols(a) => {
                let x = &self.nodes[*a].value;
                let mut ga = Tensor::zeros(x.rows, x.cols);
                for r in 0..x.rows {
                    for c in 0..x.cols {
                        *ga.at_mut(r, c) = g_out.at(r, 0);
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::MinPair(a, b) => {
                let xa = &self.nodes[*a].value;
                let xb = &self.nodes[*b].value;
                let mut da = Tensor::zeros(xa.rows, xa.cols);
                let mut db = Tensor::zeros(xb.rows, xb.cols);
                for i in 0..xa.data.len() {
                    if xa.data[i] <= xb.data[i] {
                        da.data[i] = g_out.data[i];
                    } else {
                        db.data[i] = g_out.data[i];
                    }
                }
                self.accumulate(grads, *a, da);
                self.accumulate(grads, *b, db);
            }
        }
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let s = GELU_C * (x + GELU_A * x * x * x);
    let t = s.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central-difference check of a scalar graph built by `build` at `x0`.
    fn check_input_grad(build: impl Fn(&mut Graph, Var) -> Var, x0: Tensor) {
        let mut g = Graph::new();
        let x = g.leaf(x0.clone(), true);
        let loss = build(&mut g, x);
        let grads = g.backward(loss);
        let analytic = grads[x].clone().expect("input grad");
        let eps = 1e-6;
        for i in 0..x0.data.len() {
            let mut xp = x0.clone();
            xp.data[i] += eps;
            let mut gp = Graph::new();
            let vp = gp.leaf(xp, true);
            let lp = build(&mut gp, vp);
            let fp = gp.value(lp).scalar_value();

            let mut xm = x0.clone();
            xm.data[i] -= eps;
            let mut gm = Graph::new();
            let vm = gm.leaf(xm, true);
            let lm = build(&mut gm, vm);
            let fm = gm.value(lm).scalar_value();

            let numeric = (fp - fm) / (2.0 * eps);
            let a = analytic.data[i];
            let denom = (a.abs() + numeric.abs()).max(1e-6);
            assert!(
                ((a - numeric) / denom).abs() < 1e-6,
                "coord {i}: analytic {a} vs numeric {numeric}"
            );
        }
    }

    #[test]
    fn elementwise_chain_grads() {
        let x0 = Tensor::from_vec(2, 3, vec![0.3, -0.7, 1.2, 0.05, -1.4, 0.9]);
        check_input_grad(
            |g, x| {
                let t = g.tanh(x);
                let s = g.sigmoid(t);
                let e = g.exp(s);
                let q = g.square(e);
                g.mean_all(q)
            },
            x0,
        );
    }

    #[test]
    fn matmul_linear_grads() {
        let x0 = Tensor::from_vec(2, 3, vec![0.3, -0.7, 1.2, 0.05, -1.4, 0.9]);
        check_input_grad(
            |g, x| {
                let w = g.leaf(
                    Tensor::from_vec(4, 3, (0..12).map(|i| (0.37 * i as f64 + 0.21).sin() * 0.5).collect()),
                    true,
                );
                let b = g.leaf(Tensor::from_vec(1, 4, vec![0.11, -0.23, 0.31, 0.07]), true);
                let y = g.linear(x, w, b);
                let r = g.relu(y);
                g.sum_all(r)
            },
            x0,
        );
    }

    #[test]
    fn softmax_layernorm_gather_grads() {
        let x0 = Tensor::from_vec(3, 3, vec![0.3, -0.7, 1.2, 0.05, -1.4, 0.9, 0.6, 0.2, -0.3]);
        check_input_grad(
            |g, x| {
                let sm = g.causal_softmax(x);
                let gain = g.leaf(Tensor::from_vec(1, 3, vec![1.1, 0.9, 1.0]), true);
                let bias = g.leaf(Tensor::from_vec(1, 3, vec![0.0, 0.1, -0.1]), true);
                let ln = g.layer_norm(sm, gain, bias);
                let gathered = g.gather_rows(ln, &[2, 0, 1, 2]);
                let gl = g.gelu(gathered);
                g.mean_all(gl)
            },
            x0,
        );
    }

    #[test]
    fn slice_concat_min_grads() {
        let x0 = Tensor::from_vec(2, 4, vec![0.3, -0.7, 1.2, 0.05, -1.4, 0.9, 0.6, 0.2]);
        check_input_grad(
            |g, x| {
                let a = g.slice_cols(x, 0, 2);
                let b = g.slice_cols(x, 2, 4);
                let m = g.min_pair(a, b);
                let cat = g.concat_cols(&[m, a]);
                // x² + 2: strictly positive so ln is well defined.
                let sq = g.square(cat);
                let shifted = g.scalar_add(sq, 2.0);
                let l = g.ln(shifted);
                let sc = g.sum_cols(l);
                g.sum_all(sc)
            },
            x0,
        );
    }

    #[test]
    fn causal_softmax_rows_sum_to_one_over_prefix() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(3, 3, vec![1., 9., 9., 2., 1., 9., 0., 1., 2.]));
        let y = g.causal_softmax(x);
        let v = g.value(y);
        assert_eq!(v.at(0, 0), 1.0);
        assert_eq!(v.at(0, 1), 0.0);
        for i in 0..3 {
            let s: f64 = (0..=i).map(|j| v.at(i, j)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_requires_scalar() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(2, 2), true);
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| g.backward(x)));
        assert!(result.is_err());
    }
}
