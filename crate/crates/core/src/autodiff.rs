//! Tape-based reverse-mode differentiation over dense `f64` vectors and
//! matrices.
//!
//! A [`Tape`] is built fresh for every forward pass. Each operation appends a
//! node holding its output value and the handles of its inputs, so the node
//! list is always in topological order and [`Tape::backward`] is a single
//! reverse sweep.

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },
    #[error("class index {index} out of range for {classes} classes")]
    Index { index: usize, classes: usize },
    #[error("graph error: {0}")]
    Graph(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Dense row-major tensor of rank 0, 1 or 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    pub requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(AutodiffError::Dimension {
                op: "tensor",
                detail: format!("shape {shape:?} needs {expected} values, got {}", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(AutodiffError::NonFinite("tensor construction".into()));
        }
        Ok(Self { shape, data, requires_grad: false })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n], requires_grad: false }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![], data: vec![value], requires_grad: false }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self { shape: vec![data.len()], data, requires_grad: false }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Handle to a node on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// y = W x + b with W of shape rows × cols.
    Affine { x: usize, w: usize, b: usize, rows: usize, cols: usize },
    Add(usize, usize),
    Mul(usize, usize),
    /// Element-wise product with a constant (dropout masks, scaling vectors).
    MulConst(usize, Vec<f64>),
    Scale(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    Concat(Vec<usize>),
    Slice { src: usize, start: usize },
    /// Scalar sum of all elements of every input.
    Sum(Vec<usize>),
    SoftmaxCrossEntropy { logits: usize, target: usize, probs: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the root with respect to `var`. Nodes that do not require
    /// gradients, or that the root does not depend on, yield `None`.
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        if var.tape != self.tape {
            return None;
        }
        self.grads.get(var.index).and_then(|g| g.as_deref())
    }

    /// Gradient for `var`, or zeros of the right length when the root does not
    /// depend on it.
    pub fn get_or_zeros(&self, var: Var, len: usize) -> Vec<f64> {
        self.get(var).map_or_else(|| vec![0.0; len], <[f64]>::to_vec)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self { id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { shape, value, op, requires_grad });
        Var { tape: self.id, index: self.nodes.len() - 1 }
    }

    fn idx(&self, var: Var) -> Result<usize> {
        if var.tape != self.id || var.index >= self.nodes.len() {
            return Err(AutodiffError::Graph("variable does not belong to this tape".into()));
        }
        Ok(var.index)
    }

    /// Records a tensor as a leaf, copying its values.
    pub fn leaf(&mut self, tensor: &Tensor) -> Var {
        self.push(tensor.shape.clone(), tensor.data.clone(), Op::Leaf, tensor.requires_grad)
    }

    /// Records a constant vector (never differentiated).
    pub fn constant(&mut self, values: Vec<f64>) -> Var {
        self.push(vec![values.len()], values, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> &[f64] {
        &self.nodes[var.index].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        &self.nodes[var.index].shape
    }

    pub fn scalar_value(&self, var: Var) -> f64 {
        self.nodes[var.index].value[0]
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xi, wi, bi) = (self.idx(x)?, self.idx(w)?, self.idx(b)?);
        let (xn, wn, bn) = (&self.nodes[xi], &self.nodes[wi], &self.nodes[bi]);
        if wn.shape.len() != 2 {
            return Err(AutodiffError::Dimension {
                op: "affine",
                detail: format!("weight must be a matrix, got shape {:?}", wn.shape),
            });
        }
        let (rows, cols) = (wn.shape[0], wn.shape[1]);
        if xn.value.len() != cols || bn.value.len() != rows {
            return Err(AutodiffError::Dimension {
                op: "affine",
                detail: format!(
                    "W is {rows}x{cols}, x has {} values, b has {}",
                    xn.value.len(),
                    bn.value.len()
                ),
            });
        }
        let mut out = bn.value.clone();
        let xv = &xn.value;
        for (r, o) in out.iter_mut().enumerate() {
            let row = &wn.value[r * cols..(r + 1) * cols];
            *o += dot(row, xv);
        }
        let rg = xn.requires_grad || wn.requires_grad || bn.requires_grad;
        Ok(self.push(vec![rows], out, Op::Affine { x: xi, w: wi, b: bi, rows, cols }, rg))
    }

    fn same_len(&self, op: &'static str, a: usize, b: usize) -> Result<()> {
        let (la, lb) = (self.nodes[a].value.len(), self.nodes[b].value.len());
        if la != lb {
            return Err(AutodiffError::Dimension { op, detail: format!("{la} vs {lb} elements") });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        self.same_len("add", ai, bi)?;
        let value = zip_map(&self.nodes[ai].value, &self.nodes[bi].value, |x, y| x + y);
        let rg = self.nodes[ai].requires_grad || self.nodes[bi].requires_grad;
        Ok(self.push(self.nodes[ai].shape.clone(), value, Op::Add(ai, bi), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        self.same_len("mul", ai, bi)?;
        let value = zip_map(&self.nodes[ai].value, &self.nodes[bi].value, |x, y| x * y);
        let rg = self.nodes[ai].requires_grad || self.nodes[bi].requires_grad;
        Ok(self.push(self.nodes[ai].shape.clone(), value, Op::Mul(ai, bi), rg))
    }

    pub fn mul_const(&mut self, a: Var, factors: Vec<f64>) -> Result<Var> {
        let ai = self.idx(a)?;
        if factors.len() != self.nodes[ai].value.len() {
            return Err(AutodiffError::Dimension {
                op: "mul_const",
                detail: format!("{} factors for {} values", factors.len(), self.nodes[ai].value.len()),
            });
        }
        let value = zip_map(&self.nodes[ai].value, &factors, |x, y| x * y);
        let rg = self.nodes[ai].requires_grad;
        Ok(self.push(self.nodes[ai].shape.clone(), value, Op::MulConst(ai, factors), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let ai = self.idx(a)?;
        let value = self.nodes[ai].value.iter().map(|v| v * factor).collect();
        let rg = self.nodes[ai].requires_grad;
        Ok(self.push(self.nodes[ai].shape.clone(), value, Op::Scale(ai, factor), rg))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let ai = self.idx(a)?;
        let value = self.nodes[ai].value.iter().map(|&v| sigmoid(v)).collect();
        let rg = self.nodes[ai].requires_grad;
        Ok(self.push(self.nodes[ai].shape.clone(), value, Op::Sigmoid(ai), rg))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let ai = self.idx(a)?;
        let value = self.nodes[ai].value.iter().map(|v| v.tanh()).collect();
        let rg = self.nodes[ai].requires_grad;
        Ok(self.push(self.nodes[ai].shape.clone(), value, Op::Tanh(ai), rg))
    }

    /// Concatenates vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let idxs = parts.iter().map(|&p| self.idx(p)).collect::<Result<Vec<_>>>()?;
        let mut value = Vec::new();
        let mut rg = false;
        for &i in &idxs {
            value.extend_from_slice(&self.nodes[i].value);
            rg |= self.nodes[i].requires_grad;
        }
        Ok(self.push(vec![value.len()], value, Op::Concat(idxs), rg))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ai = self.idx(a)?;
        let n = self.nodes[ai].value.len();
        if start + len > n {
            return Err(AutodiffError::Dimension {
                op: "slice",
                detail: format!("range {start}..{} of {n} values", start + len),
            });
        }
        let value = self.nodes[ai].value[start..start + len].to_vec();
        let rg = self.nodes[ai].requires_grad;
        Ok(self.push(vec![len], value, Op::Slice { src: ai, start }, rg))
    }

    /// Scalar sum over all elements of all inputs.
    pub fn sum(&mut self, parts: &[Var]) -> Result<Var> {
        let idxs = parts.iter().map(|&p| self.idx(p)).collect::<Result<Vec<_>>>()?;
        let mut total = 0.0;
        let mut rg = false;
        for &i in &idxs {
            total += self.nodes[i].value.iter().sum::<f64>();
            rg |= self.nodes[i].requires_grad;
        }
        Ok(self.push(vec![], vec![total], Op::Sum(idxs), rg))
    }

    /// Cross-entropy of `softmax(logits)` against a class index. Returns the
    /// scalar loss node; the probabilities are available via [`Tape::probs`].
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let li = self.idx(logits)?;
        let values = &self.nodes[li].value;
        if target >= values.len() {
            return Err(AutodiffError::Index { index: target, classes: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AutodiffError::NonFinite("logits".into()));
        }
        let probs = softmax(values);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_norm = max + values.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
        let loss = log_norm - values[target];
        let rg = self.nodes[li].requires_grad;
        Ok(self.push(vec![], vec![loss], Op::SoftmaxCrossEntropy { logits: li, target, probs }, rg))
    }

    /// Softmax probabilities recorded by a cross-entropy node.
    pub fn probs(&self, loss: Var) -> Option<&[f64]> {
        match &self.nodes.get(loss.index)?.op {
            Op::SoftmaxCrossEntropy { probs, .. } if loss.tape == self.id => Some(probs),
            _ => None,
        }
    }

    /// Reverse sweep from a scalar root. Visits every node once, in reverse
    /// recording order.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let ri = self.idx(root)?;
        if self.nodes[ri].value.len() != 1 {
            return Err(AutodiffError::Graph(format!(
                "backward root must be scalar, got shape {:?}",
                self.nodes[ri].shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; ri + 1];
        grads[ri] = Some(vec![1.0]);
        for i in (0..=ri).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (i, g) in grads.iter_mut().enumerate() {
            if !self.nodes[i].requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { tape: self.id, grads })
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Affine { x, w, b, rows, cols } => {
                let (x, w, b, rows, cols) = (*x, *w, *b, *rows, *cols);
                if self.nodes[b].requires_grad {
                    accumulate(grads, b, rows, |acc| add_into(acc, g));
                }
                if self.nodes[w].requires_grad {
                    let xv = &self.nodes[x].value;
                    accumulate(grads, w, rows * cols, |acc| {
                        for (r, &gr) in g.iter().enumerate() {
                            if gr != 0.0 {
                                axpy(&mut acc[r * cols..(r + 1) * cols], gr, xv);
                            }
                        }
                    });
                }
                if self.nodes[x].requires_grad {
                    let wv = &self.nodes[w].value;
                    accumulate(grads, x, cols, |acc| {
                        for (r, &gr) in g.iter().enumerate() {
                            if gr != 0.0 {
                                axpy(acc, gr, &wv[r * cols..(r + 1) * cols]);
                            }
                        }
                    });
                }
            }
            Op::Add(a, b) => {
                for &src in [a, b] {
                    if self.nodes[src].requires_grad {
                        accumulate(grads, src, g.len(), |acc| add_into(acc, g));
                    }
                }
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                if self.nodes[a].requires_grad {
                    let other = &self.nodes[b].value;
                    accumulate(grads, a, g.len(), |acc| {
                        for ((d, &gi), &o) in acc.iter_mut().zip(g).zip(other) {
                            *d += gi * o;
                        }
                    });
                }
                if self.nodes[b].requires_grad {
                    let other = &self.nodes[a].value;
                    accumulate(grads, b, g.len(), |acc| {
                        for ((d, &gi), &o) in acc.iter_mut().zip(g).zip(other) {
                            *d += gi * o;
                        }
                    });
                }
            }
            Op::MulConst(a, factors) => {
                accumulate(grads, *a, g.len(), |acc| {
                    for ((d, &gi), &f) in acc.iter_mut().zip(g).zip(factors) {
                        *d += gi * f;
                    }
                });
            }
            Op::Scale(a, factor) => {
                accumulate(grads, *a, g.len(), |acc| axpy(acc, *factor, g));
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                accumulate(grads, *a, g.len(), |acc| {
                    for ((d, &gi), &yi) in acc.iter_mut().zip(g).zip(y) {
                        *d += gi * yi * (1.0 - yi);
                    }
                });
            }
            Op::Tanh(a) => {
                let y = &node.value;
                accumulate(grads, *a, g.len(), |acc| {
                    for ((d, &gi), &yi) in acc.iter_mut().zip(g).zip(y) {
                        *d += gi * (1.0 - yi * yi);
                    }
                });
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.nodes[p].value.len();
                    if self.nodes[p].requires_grad {
                        accumulate(grads, p, n, |acc| add_into(acc, &g[offset..offset + n]));
                    }
                    offset += n;
                }
            }
            Op::Slice { src, start } => {
                let n = self.nodes[*src].value.len();
                let start = *start;
                accumulate(grads, *src, n, |acc| add_into(&mut acc[start..start + g.len()], g));
            }
            Op::Sum(parts) => {
                for &p in parts {
                    if self.nodes[p].requires_grad {
                        let n = self.nodes[p].value.len();
                        accumulate(grads, p, n, |acc| acc.iter_mut().for_each(|d| *d += g[0]));
                    }
                }
            }
            Op::SoftmaxCrossEntropy { logits, target, probs } => {
                accumulate(grads, *logits, probs.len(), |acc| {
                    for (k, (d, &p)) in acc.iter_mut().zip(probs).enumerate() {
                        let onehot = if k == *target { 1.0 } else { 0.0 };
                        *d += g[0] * (p - onehot);
                    }
                });
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], idx: usize, len: usize, f: impl FnOnce(&mut [f64])) {
    let slot = grads[idx].get_or_insert_with(|| vec![0.0; len]);
    f(slot);
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four independent accumulators let the compiler vectorize the loop.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = c * 4;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut total = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in chunks * 4..a.len() {
        total += a[k] * b[k];
    }
    total
}

#[inline]
fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    for (a, &b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}
