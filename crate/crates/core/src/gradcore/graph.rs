use super::tensor::{matmul_raw, transpose_raw};
use super::{GradError, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Tanh(Var),
    Relu(Var),
    Step(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Recip(Var),
    Sum(Var),
    Mean(Var),
    Expand(Var),
    Slice { input: Var, start: usize },
    PadRows { input: Var, start: usize },
    Reshape(Var),
    Concat(Vec<Var>),
    Softmax(Var),
    SoftmaxCrossEntropy { logits: Var, targets: Var },
    SigmoidCrossEntropy { logits: Var, targets: Var },
    SquaredError(Var, Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Tanh(..) => "tanh",
            Op::Relu(..) => "relu",
            Op::Step(..) => "step",
            Op::Sigmoid(..) => "sigmoid",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Recip(..) => "recip",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::Expand(..) => "expand",
            Op::Slice { .. } => "slice",
            Op::PadRows { .. } => "pad_rows",
            Op::Reshape(..) => "reshape",
            Op::Concat(..) => "concat",
            Op::Softmax(..) => "softmax",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
            Op::SigmoidCrossEntropy { .. } => "sigmoid_cross_entropy",
            Op::SquaredError(..) => "squared_error",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) | Op::SquaredError(a, b) => {
                vec![*a, *b]
            }
            Op::SoftmaxCrossEntropy { logits, targets } | Op::SigmoidCrossEntropy { logits, targets } => {
                vec![*logits, *targets]
            }
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Transpose(a)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Step(a)
            | Op::Sigmoid(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Recip(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Expand(a)
            | Op::Reshape(a)
            | Op::Softmax(a) => vec![*a],
            Op::Slice { input, .. } | Op::PadRows { input, .. } => vec![*input],
            Op::Concat(parts) => parts.clone(),
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Eagerly evaluated expression tape.
///
/// Nodes are appended in evaluation order, so node indices are a valid
/// topological order. Backward rules are emitted as ordinary graph ops,
/// which makes the gradients produced by [`Graph::grad_graph`] differentiable
/// a second time.
pub struct Graph {
    nodes: Vec<Node>,
    recording: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            recording: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Differentiable input.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: Op, value: Tensor) -> Result<Var, GradError> {
        if !value.is_finite() {
            return Err(GradError::NonFinite { op: op.name() });
        }
        let requires_grad = self.recording && op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), GradError> {
        if self.shape(a) != self.shape(b) {
            return Err(GradError::ShapeMismatch {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(x.shape().to_vec(), data).expect("shapes checked")
    }

    fn matrix_dims(&self, op: &'static str, v: Var) -> Result<(usize, usize), GradError> {
        match self.shape(v) {
            [m, n] => Ok((*m, *n)),
            other => Err(GradError::InvalidShape {
                op,
                shape: other.to_vec(),
                reason: "expected a 2-D tensor",
            }),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        self.same_shape("add", a, b)?;
        let v = self.zip_with(a, b, |p, q| p + q);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        self.same_shape("sub", a, b)?;
        let v = self.zip_with(a, b, |p, q| p - q);
        self.push(Op::Sub(a, b), v)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        self.same_shape("mul", a, b)?;
        let v = self.zip_with(a, b, |p, q| p * q);
        self.push(Op::Mul(a, b), v)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, GradError> {
        let v = self.value(a).map(|x| x * c);
        self.push(Op::Scale(a, c), v)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var, GradError> {
        let v = self.value(a).map(|x| x + c);
        self.push(Op::AddScalar(a), v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        let (m, k) = self.matrix_dims("matmul", a)?;
        let (k2, n) = self.matrix_dims("matmul", b)?;
        if k != k2 {
            return Err(GradError::ShapeMismatch {
                op: "matmul",
                lhs: vec![m, k],
                rhs: vec![k2, n],
            });
        }
        let data = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let v = Tensor::new(vec![m, n], data)?;
        self.push(Op::MatMul(a, b), v)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, GradError> {
        let (m, n) = self.matrix_dims("transpose", a)?;
        let v = Tensor::new(vec![n, m], transpose_raw(self.value(a).data(), m, n))?;
        self.push(Op::Transpose(a), v)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, GradError> {
        let v = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, GradError> {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    /// Heaviside step `x > 0`; has zero derivative everywhere it is defined.
    pub fn step(&mut self, a: Var) -> Result<Var, GradError> {
        let v = self.value(a).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
        self.push(Op::Step(a), v)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, GradError> {
        let v = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, GradError> {
        let v = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn log(&mut self, a: Var) -> Result<Var, GradError> {
        let v = self.value(a).map(f64::ln);
        self.push(Op::Log(a), v)
    }

    pub fn recip(&mut self, a: Var) -> Result<Var, GradError> {
        let v = self.value(a).map(|x| 1.0 / x);
        self.push(Op::Recip(a), v)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, GradError> {
        let v = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(Op::Sum(a), v)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, GradError> {
        let t = self.value(a);
        let v = Tensor::scalar(t.data().iter().sum::<f64>() / t.len() as f64);
        self.push(Op::Mean(a), v)
    }

    /// Broadcast a one-element tensor to `shape`.
    pub fn expand(&mut self, a: Var, shape: &[usize]) -> Result<Var, GradError> {
        let t = self.value(a);
        if !t.is_scalar() {
            return Err(GradError::InvalidShape {
                op: "expand",
                shape: t.shape().to_vec(),
                reason: "only one-element tensors can be expanded",
            });
        }
        let v = Tensor::filled(shape, t.item());
        if v.is_empty() {
            return Err(GradError::InvalidShape {
                op: "expand",
                shape: shape.to_vec(),
                reason: "dimensions must be positive",
            });
        }
        self.push(Op::Expand(a), v)
    }

    /// Rows `start..end` along the leading axis.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var, GradError> {
        let t = self.value(a);
        let rows = t.rows();
        if start >= end || end > rows || t.shape().len() < 2 {
            return Err(GradError::InvalidShape {
                op: "slice",
                shape: t.shape().to_vec(),
                reason: "slice range must be non-empty and within the leading axis",
            });
        }
        let width = t.row_len();
        let mut shape = t.shape().to_vec();
        shape[0] = end - start;
        let v = Tensor::new(shape, t.data()[start * width..end * width].to_vec())?;
        self.push(Op::Slice { input: a, start }, v)
    }

    /// Embed `a` at row offset `start` in a zero tensor with `total` rows.
    pub fn pad_rows(&mut self, a: Var, start: usize, total: usize) -> Result<Var, GradError> {
        let t = self.value(a);
        if t.shape().len() < 2 || start + t.rows() > total {
            return Err(GradError::InvalidShape {
                op: "pad_rows",
                shape: t.shape().to_vec(),
                reason: "padded rows exceed the target size",
            });
        }
        let width = t.row_len();
        let mut shape = t.shape().to_vec();
        shape[0] = total;
        let mut data = vec![0.0; total * width];
        data[start * width..start * width + t.len()].copy_from_slice(t.data());
        let v = Tensor::new(shape, data)?;
        self.push(Op::PadRows { input: a, start }, v)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, GradError> {
        let t = self.value(a);
        let v = t.reshaped(shape).map_err(|_| GradError::ShapeMismatch {
            op: "reshape",
            lhs: t.shape().to_vec(),
            rhs: shape.to_vec(),
        })?;
        self.push(Op::Reshape(a), v)
    }

    /// Concatenate along the leading axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, GradError> {
        let first = parts.first().ok_or(GradError::InvalidShape {
            op: "concat",
            shape: Vec::new(),
            reason: "at least one input required",
        })?;
        let tail = self.shape(*first)[1..].to_vec();
        if self.shape(*first).len() < 2 {
            return Err(GradError::InvalidShape {
                op: "concat",
                shape: self.shape(*first).to_vec(),
                reason: "inputs must be at least 2-D",
            });
        }
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            let t = self.value(*p);
            if t.shape().len() < 2 || t.shape()[1..] != tail[..] {
                return Err(GradError::ShapeMismatch {
                    op: "concat",
                    lhs: self.shape(*first).to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let mut shape = vec![rows];
        shape.extend(tail);
        let v = Tensor::new(shape, data)?;
        self.push(Op::Concat(parts.to_vec()), v)
    }

    /// Row-wise softmax of a 2-D tensor.
    pub fn softmax(&mut self, a: Var) -> Result<Var, GradError> {
        let (m, c) = self.matrix_dims("softmax", a)?;
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_mut(c) {
            softmax_in_place(row);
        }
        let v = Tensor::new(vec![m, c], data)?;
        self.push(Op::Softmax(a), v)
    }

    /// Mean over rows of `-Σ_c t·log softmax(z)`. Targets are treated as
    /// constants and must hold one probability row per logit row.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: Var) -> Result<Var, GradError> {
        let (m, c) = self.matrix_dims("softmax_cross_entropy", logits)?;
        self.same_shape("softmax_cross_entropy", logits, targets)?;
        let z = self.value(logits).data();
        let t = self.value(targets).data();
        let mut total = 0.0;
        for i in 0..m {
            let row = &z[i * c..(i + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for j in 0..c {
                total -= t[i * c + j] * (row[j] - lse);
            }
        }
        let v = Tensor::scalar(total / m as f64);
        self.push(Op::SoftmaxCrossEntropy { logits, targets }, v)
    }

    /// Mean of the elementwise binary cross-entropy between logits and
    /// targets, in the overflow-free form `max(z,0) - z·t + ln(1+e^{-|z|})`.
    /// Targets are treated as constants.
    pub fn sigmoid_cross_entropy(&mut self, logits: Var, targets: Var) -> Result<Var, GradError> {
        self.same_shape("sigmoid_cross_entropy", logits, targets)?;
        let z = self.value(logits).data();
        let t = self.value(targets).data();
        let total: f64 = z
            .iter()
            .zip(t)
            .map(|(&z, &t)| z.max(0.0) - z * t + (-z.abs()).exp().ln_1p())
            .sum();
        let v = Tensor::scalar(total / z.len() as f64);
        self.push(Op::SigmoidCrossEntropy { logits, targets }, v)
    }

    /// Mean of `(a - b)²` over all elements.
    pub fn squared_error(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        self.same_shape("squared_error", a, b)?;
        let x = self.value(a).data();
        let y = self.value(b).data();
        let total: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
        let v = Tensor::scalar(total / x.len() as f64);
        self.push(Op::SquaredError(a, b), v)
    }

    /// Gradients of scalar `root` with respect to `wrt`, as plain tensors.
    ///
    /// Nodes created while running the backward pass are discarded, so
    /// repeated calls leave the graph unchanged.
    pub fn grad(&mut self, root: Var, wrt: &[Var]) -> Result<Vec<Tensor>, GradError> {
        let mark = self.nodes.len();
        let result = self.backward(root, wrt, false).map(|adj| {
            adj.iter()
                .zip(wrt)
                .map(|(g, w)| match g {
                    Some(g) => self.value(*g).clone(),
                    None => Tensor::zeros(self.shape(*w)),
                })
                .collect()
        });
        self.nodes.truncate(mark);
        result
    }

    /// Gradients of scalar `root` as graph nodes that can themselves be
    /// differentiated. Unreached inputs get a constant zero node.
    pub fn grad_graph(&mut self, root: Var, wrt: &[Var]) -> Result<Vec<Var>, GradError> {
        let adj = self.backward(root, wrt, true)?;
        Ok(adj
            .into_iter()
            .zip(wrt)
            .map(|(g, w)| match g {
                Some(g) => g,
                None => {
                    let z = Tensor::zeros(self.shape(*w));
                    self.constant(z)
                }
            })
            .collect())
    }

    fn backward(&mut self, root: Var, wrt: &[Var], create: bool) -> Result<Vec<Option<Var>>, GradError> {
        if !self.value(root).is_scalar() {
            return Err(GradError::NonScalarRoot {
                shape: self.shape(root).to_vec(),
            });
        }
        for w in wrt {
            if !self.nodes[w.0].requires_grad {
                return Err(GradError::NotDifferentiable { node: w.0 });
            }
        }
        // Only nodes that depend on some `wrt` node need an adjoint.
        let n = root.0 + 1;
        let mut needed = vec![false; n];
        for w in wrt {
            if w.0 < n {
                needed[w.0] = true;
            }
        }
        for i in 0..n {
            if !needed[i] && self.nodes[i].requires_grad {
                needed[i] = self.nodes[i].op.inputs().iter().any(|v| needed[v.0]);
            }
        }

        let mut adj: Vec<Option<Var>> = vec![None; n];
        let prev = self.recording;
        self.recording = create;
        let result = (|| {
            if needed[root.0] {
                let seed = Tensor::ones(self.shape(root));
                adj[root.0] = Some(self.constant(seed));
            }
            for i in (0..n).rev() {
                let Some(g) = adj[i] else { continue };
                if !needed[i] || matches!(self.nodes[i].op, Op::Leaf) {
                    continue;
                }
                for (input, contrib) in self.adjoint(Var(i), g, &needed)? {
                    adj[input.0] = Some(match adj[input.0] {
                        None => contrib,
                        Some(prev) => self.add(prev, contrib)?,
                    });
                }
            }
            Ok(())
        })();
        self.recording = prev;
        result?;
        Ok(wrt.iter().map(|w| adj.get(w.0).copied().flatten()).collect())
    }

    /// Vector-Jacobian contributions of node `out` given its adjoint `g`.
    fn adjoint(&mut self, out: Var, g: Var, needed: &[bool]) -> Result<Vec<(Var, Var)>, GradError> {
        let want = |v: &Var| needed[v.0];
        let op = self.nodes[out.0].op.clone();
        let mut res = Vec::with_capacity(2);
        match op {
            Op::Leaf | Op::Step(_) => {}
            Op::Add(a, b) => {
                if want(&a) {
                    res.push((a, g));
                }
                if want(&b) {
                    res.push((b, g));
                }
            }
            Op::Sub(a, b) => {
                if want(&a) {
                    res.push((a, g));
                }
                if want(&b) {
                    res.push((b, self.scale(g, -1.0)?));
                }
            }
            Op::Mul(a, b) => {
                if want(&a) {
                    res.push((a, self.mul(g, b)?));
                }
                if want(&b) {
                    res.push((b, self.mul(g, a)?));
                }
            }
            Op::Scale(a, c) => res.push((a, self.scale(g, c)?)),
            Op::AddScalar(a) => res.push((a, g)),
            Op::MatMul(a, b) => {
                if want(&a) {
                    let bt = self.transpose(b)?;
                    res.push((a, self.matmul(g, bt)?));
                }
                if want(&b) {
                    let at = self.transpose(a)?;
                    res.push((b, self.matmul(at, g)?));
                }
            }
            Op::Transpose(a) => res.push((a, self.transpose(g)?)),
            Op::Tanh(a) => {
                let y2 = self.mul(out, out)?;
                let neg = self.scale(y2, -1.0)?;
                let d = self.add_scalar(neg, 1.0)?;
                res.push((a, self.mul(g, d)?));
            }
            Op::Relu(a) => {
                let mask = self.step(a)?;
                res.push((a, self.mul(g, mask)?));
            }
            Op::Sigmoid(a) => {
                let neg = self.scale(out, -1.0)?;
                let one_minus = self.add_scalar(neg, 1.0)?;
                let d = self.mul(out, one_minus)?;
                res.push((a, self.mul(g, d)?));
            }
            Op::Exp(a) => res.push((a, self.mul(g, out)?)),
            Op::Log(a) => {
                let r = self.recip(a)?;
                res.push((a, self.mul(g, r)?));
            }
            Op::Recip(a) => {
                let y2 = self.mul(out, out)?;
                let gy = self.mul(g, y2)?;
                res.push((a, self.scale(gy, -1.0)?));
            }
            Op::Sum(a) => {
                let shape = self.shape(a).to_vec();
                res.push((a, self.expand(g, &shape)?));
            }
            Op::Mean(a) => {
                let shape = self.shape(a).to_vec();
                let n = self.value(a).len() as f64;
                let e = self.expand(g, &shape)?;
                res.push((a, self.scale(e, 1.0 / n)?));
            }
            Op::Expand(a) => {
                let shape = self.shape(a).to_vec();
                let s = self.sum(g)?;
                res.push((a, self.reshape(s, &shape)?));
            }
            Op::Slice { input, start } => {
                let total = self.value(input).rows();
                res.push((input, self.pad_rows(g, start, total)?));
            }
            Op::PadRows { input, start } => {
                let end = start + self.value(input).rows();
                res.push((input, self.slice(g, start, end)?));
            }
            Op::Reshape(a) => {
                let shape = self.shape(a).to_vec();
                res.push((a, self.reshape(g, &shape)?));
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let rows = self.value(p).rows();
                    if want(&p) {
                        res.push((p, self.slice(g, offset, offset + rows)?));
                    }
                    offset += rows;
                }
            }
            Op::Softmax(a) => {
                // J^T g = y ⊙ g − y ⊙ (rowsum(y ⊙ g) broadcast), with the
                // row reductions written as products with constant ones.
                let (m, c) = self.matrix_dims("softmax", a)?;
                let gy = self.mul(g, out)?;
                let ones_col = self.constant(Tensor::ones(&[c, 1]));
                let ones_row = self.constant(Tensor::ones(&[1, c]));
                let s = self.matmul(gy, ones_col)?;
                let sb = self.matmul(s, ones_row)?;
                debug_assert_eq!(self.shape(sb), &[m, c]);
                let ysb = self.mul(out, sb)?;
                res.push((a, self.sub(gy, ysb)?));
            }
            Op::SoftmaxCrossEntropy { logits, targets } => {
                if want(&logits) {
                    let shape = self.shape(logits).to_vec();
                    let m = shape[0] as f64;
                    let p = self.softmax(logits)?;
                    let d = self.sub(p, targets)?;
                    let e = self.expand(g, &shape)?;
                    let gd = self.mul(e, d)?;
                    res.push((logits, self.scale(gd, 1.0 / m)?));
                }
            }
            Op::SigmoidCrossEntropy { logits, targets } => {
                if want(&logits) {
                    let shape = self.shape(logits).to_vec();
                    let n = self.value(logits).len() as f64;
                    let p = self.sigmoid(logits)?;
                    let d = self.sub(p, targets)?;
                    let e = self.expand(g, &shape)?;
                    let gd = self.mul(e, d)?;
                    res.push((logits, self.scale(gd, 1.0 / n)?));
                }
            }
            Op::SquaredError(a, b) => {
                let shape = self.shape(a).to_vec();
                let n = self.value(a).len() as f64;
                let d = self.sub(a, b)?;
                let e = self.expand(g, &shape)?;
                let gd = self.mul(e, d)?;
                let ga = self.scale(gd, 2.0 / n)?;
                if want(&b) {
                    res.push((b, self.scale(ga, -1.0)?));
                }
                if want(&a) {
                    res.push((a, ga));
                }
            }
        }
        Ok(res)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Tensor {
        Tensor::scalar(v)
    }

    #[test]
    fn square_value_and_gradient() {
        let mut g = Graph::new();
        let x = g.input(s(3.0));
        let y = g.mul(x, x).unwrap();
        assert_eq!(g.value(y).item(), 9.0);
        assert_eq!(g.grad(y, &[x]).unwrap()[0].item(), 6.0);
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut g = Graph::new();
        let x = g.input(s(0.0));
        let y = g.sigmoid(x).unwrap();
        assert_eq!(g.value(y).item(), 0.5);
        assert_eq!(g.grad(y, &[x]).unwrap()[0].item(), 0.25);
    }

    #[test]
    fn fused_sigmoid_cross_entropy() {
        let mut g = Graph::new();
        let z = g.input(s(0.0));
        let t = g.constant(s(1.0));
        let l = g.sigmoid_cross_entropy(z, t).unwrap();
        assert!((g.value(l).item() - std::f64::consts::LN_2).abs() < 1e-15);

        let mut g = Graph::new();
        let z = g.input(s(1000.0));
        let t = g.constant(s(0.0));
        let l = g.sigmoid_cross_entropy(z, t).unwrap();
        assert!((g.value(l).item() - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn mixed_partial_through_gradient_graph() {
        // f = w·x², ∂f/∂w = x², ∇_x(∂f/∂w) = 2x.
        let mut g = Graph::new();
        let x = g.input(s(3.0));
        let w = g.input(s(1.7));
        let x2 = g.mul(x, x).unwrap();
        let f = g.mul(w, x2).unwrap();
        let dw = g.grad_graph(f, &[w]).unwrap()[0];
        assert_eq!(g.value(dw).item(), 9.0);
        assert_eq!(g.grad(dw, &[x]).unwrap()[0].item(), 6.0);
    }

    #[test]
    fn unreached_input_gets_zero_gradient() {
        let mut g = Graph::new();
        let x = g.input(Tensor::row(vec![1.0, 2.0]));
        let y = g.input(Tensor::row(vec![5.0, 6.0, 7.0]));
        let l = g.sum(x).unwrap();
        let grads = g.grad(l, &[x, y]).unwrap();
        assert_eq!(grads[1], Tensor::zeros(&[1, 3]));
    }

    #[test]
    fn errors() {
        let mut g = Graph::new();
        let a = g.input(Tensor::row(vec![1.0, 2.0]));
        let b = g.input(Tensor::row(vec![1.0, 2.0, 3.0]));
        match g.add(a, b) {
            Err(GradError::ShapeMismatch { op, lhs, rhs }) => {
                assert_eq!(op, "add");
                assert_eq!(lhs, vec![1, 2]);
                assert_eq!(rhs, vec![1, 3]);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(g.grad(a, &[a]), Err(GradError::NonScalarRoot { .. })));
        let big = g.input(s(1000.0));
        assert!(matches!(g.exp(big), Err(GradError::NonFinite { op: "exp" })));
        let zero = g.input(s(0.0));
        assert!(matches!(g.log(zero), Err(GradError::NonFinite { op: "log" })));
        let c = g.constant(s(1.0));
        let l = g.mul(c, c).unwrap();
        assert!(matches!(g.grad(l, &[c]), Err(GradError::NotDifferentiable { .. })));
    }

    #[test]
    fn grad_is_idempotent_and_leaves_tape_unchanged() {
        let mut g = Graph::new();
        let x = g.input(Tensor::row(vec![0.3, -1.2, 2.0]));
        let t = g.tanh(x).unwrap();
        let e = g.exp(t).unwrap();
        let l = g.sum(e).unwrap();
        let before = g.len();
        let first = g.grad(l, &[x]).unwrap();
        let second = g.grad(l, &[x]).unwrap();
        assert_eq!(first, second);
        assert_eq!(g.len(), before);
    }

    #[test]
    fn softmax_cross_entropy_gradient_is_p_minus_t() {
        let mut g = Graph::new();
        let z = g.input(Tensor::matrix(1, 3, vec![1.0, 2.0, 0.5]).unwrap());
        let t = g.constant(Tensor::matrix(1, 3, vec![0.0, 1.0, 0.0]).unwrap());
        let l = g.softmax_cross_entropy(z, t).unwrap();
        let grad = g.grad(l, &[z]).unwrap().remove(0);
        let mut p = vec![1.0, 2.0, 0.5];
        softmax_in_place(&mut p);
        assert!((g.value(l).item() + p[1].ln()).abs() < 1e-12);
        let expected = [p[0], p[1] - 1.0, p[2]];
        for (a, b) in grad.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn slice_concat_reshape_roundtrip_gradient() {
        let mut g = Graph::new();
        let x = g.input(Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let top = g.slice(x, 0, 1).unwrap();
        let rest = g.slice(x, 1, 3).unwrap();
        let back = g.concat(&[rest, top]).unwrap();
        let flat = g.reshape(back, &[1, 6]).unwrap();
        assert_eq!(g.value(flat).data(), &[3.0, 4.0, 5.0, 6.0, 1.0, 2.0]);
        let sq = g.mul(flat, flat).unwrap();
        let l = g.sum(sq).unwrap();
        let grad = g.grad(l, &[x]).unwrap().remove(0);
        assert_eq!(grad.data(), &[2.0, 4.0, 6.0, 8.0, 10.0, 12.0]);
    }
}
