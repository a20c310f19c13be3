use super::tensor::{numel, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NormAxis {
    /// Normalize each vector along the last axis.
    Last,
    /// Normalize each feature (last-axis slot) over all leading positions.
    Feature,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Expand(Var),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Concat(Vec<Var>, usize),
    Slice(Var, usize, usize),
    Gather(Var, Vec<usize>, usize),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Gelu(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Softmax(Var, usize),
    LogSoftmax(Var, usize),
    SumAll(Var),
    SumAxis(Var, usize),
    Dropout(Var, Vec<f64>),
    Norm(Var, NormAxis, Vec<f64>),
    MinMax(Var, Vec<(usize, usize, f64)>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Reverse-mode autodiff tape. Nodes are appended in evaluation order, so
/// the node order is a topological order of the computation.
#[derive(Debug, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    train: bool,
    seed: u64,
    step: u64,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (numel(&shape[..axis]), shape[axis], numel(&shape[axis + 1..]))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based uniform draw in [0, 1) keyed by (seed, node, step, element).
pub(crate) fn counter_uniform(seed: u64, node: u64, step: u64, i: u64) -> f64 {
    let k = splitmix64(seed ^ splitmix64(node.wrapping_mul(0xD6E8_FEB8_6659_FD93) ^ splitmix64(step ^ (i << 1))));
    (k >> 11) as f64 / (1u64 << 53) as f64
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Batched matrix product on raw buffers: a [batch, m, k] x b [batch|1, k, n].
fn matmul_raw(a: &[f64], b: &[f64], batch: usize, m: usize, k: usize, n: usize, b_shared: bool) -> Vec<f64> {
    let mut out = vec![0.0; batch * m * n];
    for bi in 0..batch {
        let a0 = bi * m * k;
        let b0 = if b_shared { 0 } else { bi * k * n };
        let o0 = bi * m * n;
        for i in 0..m {
            let orow = &mut out[o0 + i * n..o0 + (i + 1) * n];
            for p in 0..k {
                let av = a[a0 + i * k + p];
                if av == 0.0 {
                    continue;
                }
                let brow = &b[b0 + p * n..b0 + (p + 1) * n];
                orow.iter_mut().zip(brow).for_each(|(o, bv)| *o += av * bv);
            }
        }
    }
    out
}

fn transpose_last2(x: &[f64], batch: usize, r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for b in 0..batch {
        let o = b * r * c;
        for i in 0..r {
            for j in 0..c {
                out[o + j * r + i] = x[o + i * c + j];
            }
        }
    }
    out
}

fn permute_raw(x: &[f64], shape: &[usize], perm: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let nd = shape.len();
    let mut strides = vec![1usize; nd];
    for d in (0..nd.saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * shape[d + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| strides[p]).collect();
    let mut out = Vec::with_capacity(x.len());
    let mut idx = vec![0usize; nd];
    let mut src = 0usize;
    for _ in 0..x.len() {
        out.push(x[src]);
        for d in (0..nd).rev() {
            idx[d] += 1;
            src += src_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            src -= src_strides[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    (out_shape, out)
}

impl Graph {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), train: false, seed: 0, step: 0 }
    }

    /// Graph in training mode; dropout masks derive from `(seed, node, step)`.
    pub fn training(seed: u64, step: u64) -> Self {
        Self { nodes: Vec::new(), train: true, seed, step }
    }

    pub fn is_training(&self) -> bool {
        self.train
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad, grad: None });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf without gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.nodes.iter_mut().for_each(|n| n.grad = None);
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let v = self.value(x);
        let t = Tensor::from_parts(v.shape().to_vec(), v.data().iter().map(|&a| f(a)).collect());
        let rg = self.rg(x);
        self.push(t, op, rg)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!("{what}: {:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op, what: &str) -> Result<Var> {
        self.same_shape(a, b, what)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::from_parts(va.shape().to_vec(), data);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b), "add")
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b), "sub")
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b), "mul")
    }
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x / y, Op::Div(a, b), "div")
    }
    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |a| a * c, Op::Scale(x, c))
    }
    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |a| a + c, Op::AddScalar(x))
    }
    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, |a| 1.0 / (1.0 + (-a).exp()), Op::Sigmoid(x))
    }
    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }
    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |a| a.max(0.0), Op::Relu(x))
    }
    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(x, gelu, Op::Gelu(x))
    }
    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }
    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, f64::ln, Op::Log(x))
    }
    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, f64::sqrt, Op::Sqrt(x))
    }

    /// Matrix product over the last two axes. `b` is either 2-D (shared by
    /// every leading index of `a`) or has the same leading axes as `a`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() < 2 || sb.len() < 2 {
            return Err(Error::Shape(format!("matmul needs matrices, got {sa:?} x {sb:?}")));
        }
        let k = sa[sa.len() - 1];
        let (kb, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != kb {
            return Err(Error::Shape(format!("matmul inner dims {sa:?} x {sb:?}")));
        }
        let shared = sb.len() == 2;
        let (batch, m) = if shared {
            (1, numel(&sa[..sa.len() - 1]))
        } else {
            if sa[..sa.len() - 2] != sb[..sb.len() - 2] {
                return Err(Error::Shape(format!("matmul batch dims {sa:?} x {sb:?}")));
            }
            (numel(&sa[..sa.len() - 2]), sa[sa.len() - 2])
        };
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), batch, m, k, n, shared);
        let mut shape = sa[..sa.len() - 1].to_vec();
        shape.push(n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::from_parts(shape, out), Op::MatMul(a, b), rg))
    }

    /// Broadcast by repeating `x` over new leading axes; `x`'s shape must be a
    /// suffix of `shape`.
    pub fn expand(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() > shape.len() || shape[shape.len() - sx.len()..] != sx[..] {
            return Err(Error::Shape(format!("cannot expand {sx:?} to {shape:?}")));
        }
        let reps = numel(&shape[..shape.len() - sx.len()]);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(src.len() * reps);
        for _ in 0..reps {
            data.extend_from_slice(src);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::from_parts(shape.to_vec(), data), Op::Expand(x), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).reshaped(shape)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let mut seen = vec![false; s.len()];
        if perm.len() != s.len() || perm.iter().any(|&p| p >= s.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Shape(format!("invalid permutation {perm:?} for {s:?}")));
        }
        let (shape, data) = permute_raw(self.value(x).data(), &s, perm);
        let rg = self.rg(x);
        Ok(self.push(Tensor::from_parts(shape, data), Op::Permute(x, perm.to_vec()), rg))
    }

    /// Swap the last two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let nd = self.shape(x).len();
        if nd < 2 {
            return Err(Error::Shape("transpose needs two axes".into()));
        }
        let mut perm: Vec<usize> = (0..nd).collect();
        perm.swap(nd - 2, nd - 1);
        self.permute(x, &perm)
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = self.shape(*xs.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?).to_vec();
        if axis >= first.len() {
            return Err(Error::Shape(format!("concat axis {axis} for {first:?}")));
        }
        let mut total = 0;
        for &x in xs {
            let s = self.shape(x);
            if s.len() != first.len() || s.iter().enumerate().any(|(d, &n)| d != axis && n != first[d]) {
                return Err(Error::Shape(format!("concat {first:?} with {s:?}")));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_at_axis(&first, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &x in xs {
                let len = self.shape(x)[axis] * inner;
                data.extend_from_slice(&self.value(x).data()[o * len..(o + 1) * len]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let rg = xs.iter().any(|&x| self.rg(x));
        Ok(self.push(Tensor::from_parts(shape, data), Op::Concat(xs.to_vec(), axis), rg))
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || start >= end || end > s[axis] {
            return Err(Error::Shape(format!("slice {start}..{end} on axis {axis} of {s:?}")));
        }
        let (outer, n, inner) = split_at_axis(&s, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            data.extend_from_slice(&src[(o * n + start) * inner..(o * n + end) * inner]);
        }
        let mut shape = s;
        shape[axis] = end - start;
        let rg = self.rg(x);
        Ok(self.push(Tensor::from_parts(shape, data), Op::Slice(x, axis, start), rg))
    }

    /// Select rows along axis 1 of a `[batch, n, d]` tensor; `idx[b]` lists
    /// the rows taken for batch element `b` (all of equal length).
    pub fn gather(&mut self, x: Var, idx: &[Vec<usize>]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || idx.len() != s[0] {
            return Err(Error::Shape(format!("gather expects [batch, n, d] with {} index rows, got {s:?}", idx.len())));
        }
        let m = idx.first().map_or(0, Vec::len);
        if m == 0 || idx.iter().any(|r| r.len() != m || r.iter().any(|&i| i >= s[1])) {
            return Err(Error::Shape("gather indices ragged or out of range".into()));
        }
        let (n, d) = (s[1], s[2]);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(s[0] * m * d);
        for (b, row) in idx.iter().enumerate() {
            for &i in row {
                data.extend_from_slice(&src[(b * n + i) * d..(b * n + i + 1) * d]);
            }
        }
        let rg = self.rg(x);
        let flat = idx.concat();
        Ok(self.push(Tensor::from_parts(vec![s[0], m, d], data), Op::Gather(x, flat, m), rg))
    }

    fn softmax_raw(x: &[f64], shape: &[usize], axis: usize, log: bool) -> Vec<f64> {
        let (outer, n, inner) = split_at_axis(shape, axis);
        let mut out = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * n + j) * inner + i;
                let mx = (0..n).map(|j| x[at(j)]).fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = (0..n).map(|j| (x[at(j)] - mx).exp()).sum();
                for j in 0..n {
                    out[at(j)] = if log { x[at(j)] - mx - z.ln() } else { (x[at(j)] - mx).exp() / z };
                }
            }
        }
        out
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() {
            return Err(Error::Shape(format!("softmax axis {axis} for {s:?}")));
        }
        let data = Self::softmax_raw(self.value(x).data(), &s, axis, false);
        let rg = self.rg(x);
        Ok(self.push(Tensor::from_parts(s, data), Op::Softmax(x, axis), rg))
    }

    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() {
            return Err(Error::Shape(format!("log_softmax axis {axis} for {s:?}")));
        }
        let data = Self::softmax_raw(self.value(x).data(), &s, axis, true);
        let rg = self.rg(x);
        Ok(self.push(Tensor::from_parts(s, data), Op::LogSoftmax(x, axis), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::SumAll(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Sum over one axis, removing it.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() {
            return Err(Error::Shape(format!("sum axis {axis} for {s:?}")));
        }
        let (outer, n, inner) = split_at_axis(&s, axis);
        let src = self.value(x).data();
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..n {
                let row = &src[(o * n + j) * inner..(o * n + j + 1) * inner];
                data[o * inner..(o + 1) * inner].iter_mut().zip(row).for_each(|(a, b)| *a += b);
            }
        }
        let mut shape = s;
        shape.remove(axis);
        let rg = self.rg(x);
        Ok(self.push(Tensor::from_parts(shape, data), Op::SumAxis(x, axis), rg))
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let n = *self.shape(x).get(axis).ok_or_else(|| Error::Shape("mean axis out of range".into()))?;
        let s = self.sum_axis(x, axis)?;
        Ok(self.scale(s, 1.0 / n as f64))
    }

    /// Inverted dropout. Identity outside training mode or when `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Argument(format!("dropout probability {p} outside [0, 1)")));
        }
        if !self.train || p == 0.0 {
            return Ok(x);
        }
        let node = self.nodes.len() as u64;
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|i| if counter_uniform(self.seed, node, self.step, i as u64) >= p { keep } else { 0.0 })
            .collect();
        let v = self.value(x);
        let data = v.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let t = Tensor::from_parts(v.shape().to_vec(), data);
        let rg = self.rg(x);
        Ok(self.push(t, Op::Dropout(x, mask), rg))
    }

    fn normalize(&mut self, x: Var, axis: NormAxis, eps: f64) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        let s = self.shape(x).to_vec();
        let d = *s.last().ok_or_else(|| Error::Shape("normalization of a scalar".into()))?;
        let rows = numel(&s) / d.max(1);
        let src = self.value(x).data();
        let (groups, glen) = match axis {
            NormAxis::Last => (rows, d),
            NormAxis::Feature => (d, rows),
        };
        if glen < 2 && axis == NormAxis::Feature {
            return Err(Error::Shape("batch normalization needs at least two rows".into()));
        }
        let at = |g: usize, j: usize| match axis {
            NormAxis::Last => g * d + j,
            NormAxis::Feature => j * d + g,
        };
        let mut out = vec![0.0; src.len()];
        let mut means = Vec::with_capacity(groups);
        let mut vars = Vec::with_capacity(groups);
        let mut inv = Vec::with_capacity(groups);
        for g in 0..groups {
            let m = (0..glen).map(|j| src[at(g, j)]).sum::<f64>() / glen as f64;
            let v = (0..glen).map(|j| (src[at(g, j)] - m).powi(2)).sum::<f64>() / glen as f64;
            let is = 1.0 / (v + eps).sqrt();
            for j in 0..glen {
                out[at(g, j)] = (src[at(g, j)] - m) * is;
            }
            means.push(m);
            vars.push(v);
            inv.push(is);
        }
        let rg = self.rg(x);
        let y = self.push(Tensor::from_parts(s, out), Op::Norm(x, axis, inv), rg);
        Ok((y, means, vars))
    }

    /// Normalize each last-axis vector to zero mean and unit variance (no affine).
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Result<Var> {
        Ok(self.normalize(x, NormAxis::Last, eps)?.0)
    }

    /// Normalize each feature over the batch; returns the output together with
    /// the batch means and (biased) variances.
    pub fn batch_norm(&mut self, x: Var, eps: f64) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        self.normalize(x, NormAxis::Feature, eps)
    }

    /// Min-max scale each last-axis vector: (x - min) / (max - min + eps).
    pub fn min_max(&mut self, x: Var, eps: f64) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let d = *s.last().ok_or_else(|| Error::Shape("min-max of a scalar".into()))?;
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        let mut aux = Vec::with_capacity(src.len() / d.max(1));
        for (r, row) in src.chunks(d).enumerate() {
            let mut lo = 0;
            let mut hi = 0;
            for (j, &v) in row.iter().enumerate() {
                if v < row[lo] {
                    lo = j;
                }
                if v > row[hi] {
                    hi = j;
                }
            }
            let range = row[hi] - row[lo] + eps;
            for (j, &v) in row.iter().enumerate() {
                out[r * d + j] = (v - row[lo]) / range;
            }
            aux.push((lo, hi, range));
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::from_parts(s, out), Op::MinMax(x, aux), rg))
    }

    /// Reverse pass from a scalar. Leaf gradients accumulate across calls.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape(format!("backward from non-scalar {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(g) => g.iter_mut().zip(&gy).for_each(|(a, b)| *a += b),
                    None => node.grad = Some(gy),
                }
                continue;
            }
            self.backprop_node(i, &gy, &mut grads);
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let y = node.value.data();
        let nodes = &self.nodes;
        let mut acc = |v: Var, contrib: Vec<f64>| {
            if !nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(g) => g.iter_mut().zip(&contrib).for_each(|(a, b)| *a += b),
                slot => *slot = Some(contrib),
            }
        };
        let val = |v: Var| nodes[v.0].value.data();
        let map1 = |x: Var, f: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..val(x).len()).map(f).collect() };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, gy.to_vec());
                acc(*b, gy.to_vec());
            }
            Op::Sub(a, b) => {
                acc(*a, gy.to_vec());
                acc(*b, gy.iter().map(|g| -g).collect());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                acc(*a, gy.iter().zip(vb).map(|(g, y)| g * y).collect());
                acc(*b, gy.iter().zip(va).map(|(g, x)| g * x).collect());
            }
            Op::Div(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                acc(*a, gy.iter().zip(vb).map(|(g, d)| g / d).collect());
                acc(*b, (0..gy.len()).map(|k| -gy[k] * va[k] / (vb[k] * vb[k])).collect());
            }
            Op::Scale(x, c) => acc(*x, gy.iter().map(|g| g * c).collect()),
            Op::AddScalar(x) => acc(*x, gy.to_vec()),
            Op::Sigmoid(x) => acc(*x, map1(*x, &|k| gy[k] * y[k] * (1.0 - y[k]))),
            Op::Tanh(x) => acc(*x, map1(*x, &|k| gy[k] * (1.0 - y[k] * y[k]))),
            Op::Relu(x) => {
                let vx = val(*x);
                acc(*x, map1(*x, &|k| if vx[k] > 0.0 { gy[k] } else { 0.0 }))
            }
            Op::Gelu(x) => {
                let vx = val(*x);
                acc(*x, map1(*x, &|k| gy[k] * gelu_grad(vx[k])))
            }
            Op::Exp(x) => acc(*x, map1(*x, &|k| gy[k] * y[k])),
            Op::Log(x) => {
                let vx = val(*x);
                acc(*x, map1(*x, &|k| gy[k] / vx[k]))
            }
            Op::Sqrt(x) => acc(*x, map1(*x, &|k| gy[k] * 0.5 / y[k])),
            Op::MatMul(a, b) => {
                let sa = nodes[a.0].value.shape();
                let sb = nodes[b.0].value.shape();
                let k = sa[sa.len() - 1];
                let n = sb[sb.len() - 1];
                let shared = sb.len() == 2;
                let (batch, m) = if shared {
                    (1, numel(&sa[..sa.len() - 1]))
                } else {
                    (numel(&sa[..sa.len() - 2]), sa[sa.len() - 2])
                };
                if nodes[a.0].requires_grad {
                    let bt = transpose_last2(val(*b), if shared { 1 } else { batch }, k, n);
                    acc(*a, matmul_raw(gy, &bt, batch, m, n, k, shared));
                }
                if nodes[b.0].requires_grad {
                    let at = transpose_last2(val(*a), batch, m, k);
                    if shared {
                        acc(*b, matmul_raw(&at, gy, 1, k, m, n, false));
                    } else {
                        acc(*b, matmul_raw(&at, gy, batch, k, m, n, false));
                    }
                }
            }
            Op::Expand(x) => {
                let n = val(*x).len();
                let mut g = vec![0.0; n];
                for chunk in gy.chunks(n) {
                    g.iter_mut().zip(chunk).for_each(|(a, b)| *a += b);
                }
                acc(*x, g);
            }
            Op::Reshape(x) => acc(*x, gy.to_vec()),
            Op::Permute(x, perm) => {
                let mut inv = vec![0; perm.len()];
                perm.iter().enumerate().for_each(|(i, &p)| inv[p] = i);
                let (_, g) = permute_raw(gy, node.value.shape(), &inv);
                acc(*x, g);
            }
            Op::Concat(xs, axis) => {
                let (outer, total, inner) = split_at_axis(node.value.shape(), *axis);
                let mut offset = 0;
                for &x in xs {
                    let nx = nodes[x.0].value.shape()[*axis];
                    let mut g = Vec::with_capacity(outer * nx * inner);
                    for o in 0..outer {
                        let base = (o * total + offset) * inner;
                        g.extend_from_slice(&gy[base..base + nx * inner]);
                    }
                    acc(x, g);
                    offset += nx;
                }
            }
            Op::Slice(x, axis, start) => {
                let sx = nodes[x.0].value.shape();
                let (outer, n, inner) = split_at_axis(sx, *axis);
                let len = node.value.shape()[*axis];
                let mut g = vec![0.0; val(*x).len()];
                for o in 0..outer {
                    let dst = (o * n + start) * inner;
                    g[dst..dst + len * inner].copy_from_slice(&gy[o * len * inner..(o + 1) * len * inner]);
                }
                acc(*x, g);
            }
            Op::Gather(x, flat, m) => {
                let sx = nodes[x.0].value.shape();
                let (n, d) = (sx[1], sx[2]);
                let mut g = vec![0.0; val(*x).len()];
                for (r, &src) in flat.iter().enumerate() {
                    let b = r / m;
                    let dst = (b * n + src) * d;
                    g[dst..dst + d].iter_mut().zip(&gy[r * d..(r + 1) * d]).for_each(|(a, v)| *a += v);
                }
                acc(*x, g);
            }
            Op::Softmax(x, axis) | Op::LogSoftmax(x, axis) => {
                let log = matches!(node.op, Op::LogSoftmax(..));
                let (outer, n, inner) = split_at_axis(node.value.shape(), *axis);
                let mut g = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| (o * n + j) * inner + i;
                        if log {
                            let s: f64 = (0..n).map(|j| gy[at(j)]).sum();
                            for j in 0..n {
                                g[at(j)] = gy[at(j)] - y[at(j)].exp() * s;
                            }
                        } else {
                            let s: f64 = (0..n).map(|j| gy[at(j)] * y[at(j)]).sum();
                            for j in 0..n {
                                g[at(j)] = y[at(j)] * (gy[at(j)] - s);
                            }
                        }
                    }
                }
                acc(*x, g);
            }
            Op::SumAll(x) => acc(*x, vec![gy[0]; val(*x).len()]),
            Op::SumAxis(x, axis) => {
                let sx = nodes[x.0].value.shape();
                let (outer, n, inner) = split_at_axis(sx, *axis);
                let mut g = Vec::with_capacity(outer * n * inner);
                for o in 0..outer {
                    for _ in 0..n {
                        g.extend_from_slice(&gy[o * inner..(o + 1) * inner]);
                    }
                }
                acc(*x, g);
            }
            Op::Dropout(x, mask) => acc(*x, gy.iter().zip(mask).map(|(g, m)| g * m).collect()),
            Op::Norm(x, axis, inv) => {
                let s = node.value.shape();
                let d = *s.last().unwrap();
                let rows = y.len() / d;
                let (groups, glen) = match axis {
                    NormAxis::Last => (rows, d),
                    NormAxis::Feature => (d, rows),
                };
                let at = |g: usize, j: usize| match axis {
                    NormAxis::Last => g * d + j,
                    NormAxis::Feature => j * d + g,
                };
                let mut out = vec![0.0; y.len()];
                for (gi, &is) in inv.iter().enumerate().take(groups) {
                    let mut sg = 0.0;
                    let mut sgy = 0.0;
                    for j in 0..glen {
                        sg += gy[at(gi, j)];
                        sgy += gy[at(gi, j)] * y[at(gi, j)];
                    }
                    let nf = glen as f64;
                    for j in 0..glen {
                        let k = at(gi, j);
                        out[k] = is / nf * (nf * gy[k] - sg - y[k] * sgy);
                    }
                }
                acc(*x, out);
            }
            Op::MinMax(x, aux) => {
                let d = *node.value.shape().last().unwrap();
                let xv = val(*x);
                let mut g = vec![0.0; y.len()];
                for (r, &(lo, hi, range)) in aux.iter().enumerate() {
                    let base = r * d;
                    let xlo = xv[base + lo];
                    let mut to_lo = 0.0;
                    let mut to_hi = 0.0;
                    for j in 0..d {
                        let gj = gy[base + j];
                        g[base + j] += gj / range;
                        let q = (xv[base + j] - xlo) / (range * range);
                        to_lo += gj * (-1.0 / range + q);
                        to_hi -= gj * q;
                    }
                    g[base + lo] += to_lo;
                    g[base + hi] += to_hi;
                }
                acc(*x, g);
            }
        }
    }
}
