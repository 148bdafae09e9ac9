//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value and enough saved
//! state to compute its vector-Jacobian product. Nodes only reference earlier
//! nodes, so the tape is already in topological order and `backward` walks
//! it in exact reverse.
//!
//! Shape rules are strict: elementwise binaries need identical shapes. The
//! only broadcasts are tensor-with-scalar (`add_scalar`, `mul_scalar`) and the
//! row-bias add used by affine layers (`add_row_bias`).

use std::sync::Arc;

use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::value::{gemm, stable_sigmoid, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddScalar(Var),
    MulScalar(Var, f64),
    AddRowBias(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Softmax { x: Var, axis: usize },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Dropout { x: Var, mask: Vec<f64> },
    Concat { parts: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Reshape(Var),
    MeanAxis { x: Var, axis: usize },
    Sum(Var),
    Mean(Var),
    Embedding { table: Var, ids: Vec<usize> },
    Bce { logits: Var, targets: Vec<f64>, weights: Option<Vec<f64>> },
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], keyed by parameter and by
/// gradient-requiring leaf.
#[derive(Debug, Default)]
pub struct Gradients {
    params: Vec<(ParamId, Tensor)>,
    leaves: Vec<(Var, Tensor)>,
}

impl Gradients {
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.iter().find(|(p, _)| *p == id).map(|(_, g)| g)
    }

    pub fn leaf(&self, var: Var) -> Option<&Tensor> {
        self.leaves.iter().find(|(v, _)| *v == var).map(|(_, g)| g)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params.iter().map(|(p, g)| (*p, g))
    }

    pub fn into_params(self) -> Vec<(ParamId, Tensor)> {
        self.params
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Splits `shape` around `axis` into (outer, len, inner) extents.
fn axis_extents(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
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

    /// Drops every node so the tape can record a fresh computation.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.consumed = false;
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.push_shared(Arc::new(value), op, requires_grad)
    }

    fn push_shared(&mut self, value: Arc<Tensor>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn check_live(&self) -> Result<()> {
        if self.consumed {
            return Err(Error::State("tape already consumed by backward; call reset".into()));
        }
        Ok(())
    }

    /// Constant input; never receives a gradient.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf that may receive a gradient (used by gradient checks).
    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.push(t, Op::Leaf, requires_grad)
    }

    /// Records a parameter. Frozen parameters enter as constants.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let rg = store.is_trainable(id);
        self.push_shared(store.shared(id), Op::Param(id), rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_live()?;
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = av.dims2("matmul")?;
        let (k2, n) = bv.dims2("matmul")?;
        if k != k2 {
            return Err(Error::dim("matmul", av.shape(), bv.shape()));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), false, &mut out, 0.0);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.check_live()?;
        let av = self.value(a);
        let (m, n) = av.dims2("transpose")?;
        let d = av.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = d[i * n + j];
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::new(vec![n, m], out)?, Op::Transpose(a), rg))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.check_live()?;
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::dim(name, av.shape(), bv.shape()));
        }
        let out = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(av.shape().to_vec(), out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let av = self.value(a);
        let out: Vec<f64> = av.data().iter().map(|x| f(*x)).collect();
        Tensor::new(av.shape().to_vec(), out).expect("same shape")
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.check_live()?;
        let t = self.unary(a, |x| x + c);
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::AddScalar(a), rg))
    }

    pub fn mul_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.check_live()?;
        let t = self.unary(a, |x| x * c);
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::MulScalar(a, c), rg))
    }

    /// `x[m×n] + bias[n]`, adding the bias to every row. A rank-1 `x` of
    /// width `n` is treated as a single row.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        self.check_live()?;
        let (xv, bv) = (self.value(x), self.value(bias));
        let n = *xv.shape().last().unwrap_or(&0);
        if bv.rank() != 1 || bv.numel() != n || xv.rank() == 0 || xv.rank() > 2 {
            return Err(Error::dim("add_row_bias", xv.shape(), bv.shape()));
        }
        let b = bv.data();
        let mut out = xv.data().to_vec();
        for row in out.chunks_mut(n.max(1)) {
            for (o, bb) in row.iter_mut().zip(b) {
                *o += bb;
            }
        }
        let shape = xv.shape().to_vec();
        let rg = self.rg(&[x, bias]);
        Ok(self.push(Tensor::new(shape, out)?, Op::AddRowBias(x, bias), rg))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.check_live()?;
        let t = self.unary(a, |x| x.max(0.0));
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::Relu(a), rg))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.check_live()?;
        let t = self.unary(a, stable_sigmoid);
        let rg = self.rg(&[a]);
        Ok(self.push(t, Op::Sigmoid(a), rg))
    }

    /// Softmax along `axis`, computed with max-subtraction.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.check_live()?;
        let av = self.value(a);
        if axis >= av.rank() {
            return Err(Error::Validation(format!(
                "softmax: axis {axis} out of range for shape {:?}",
                av.shape()
            )));
        }
        let out = softmax_along(av.data(), av.shape(), axis);
        let shape = av.shape().to_vec();
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::new(shape, out)?, Op::Softmax { x: a, axis }, rg))
    }

    /// Normalizes each slice along the last axis, then applies `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        self.check_live()?;
        let xv = self.value(x);
        let n = *xv.shape().last().unwrap_or(&0);
        let (gv, bv) = (self.value(gamma), self.value(beta));
        if n == 0 || gv.shape() != [n] || bv.shape() != [n] {
            return Err(Error::dim("layer_norm", xv.shape(), gv.shape()));
        }
        let rows = xv.numel() / n;
        let mut xhat = vec![0.0; xv.numel()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; xv.numel()];
        for r in 0..rows {
            let row = &xv.data()[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for c in 0..n {
                let h = (row[c] - mean) * is;
                xhat[r * n + c] = h;
                out[r * n + c] = h * gv.data()[c] + bv.data()[c];
            }
        }
        let shape = xv.shape().to_vec();
        let rg = self.rg(&[x, gamma, beta]);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::LayerNorm { x, gamma, beta, xhat, inv_std },
            rg,
        ))
    }

    /// Inverted dropout with a Bernoulli keep-mask drawn from `rng`. Returns
    /// `x` unchanged when not training or when `rate == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, train: bool, rng: &mut R) -> Result<Var> {
        self.check_live()?;
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Validation(format!("dropout rate {rate} not in [0, 1)")));
        }
        if !train || rate == 0.0 {
            return Ok(x);
        }
        let scale = 1.0 / (1.0 - rate);
        let xv = self.value(x);
        let mask: Vec<f64> = (0..xv.numel())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { scale })
            .collect();
        let out = xv.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let shape = xv.shape().to_vec();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new(shape, out)?, Op::Dropout { x, mask }, rg))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        self.check_live()?;
        let first = parts
            .first()
            .ok_or_else(|| Error::Validation("concat of zero tensors".into()))?;
        let base = self.value(*first).shape().to_vec();
        if axis >= base.len() {
            return Err(Error::Validation(format!("concat: axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for p in parts {
            let s = self.value(*p).shape();
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(Error::dim("concat", &base, s));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = axis_extents(&shape, axis);
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for p in parts {
                let v = self.value(*p);
                let chunk = v.shape()[axis] * inner;
                out.extend_from_slice(&v.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(Tensor::new(shape, out)?, Op::Concat { parts: parts.to_vec(), axis }, rg))
    }

    /// `x[.., start..end, ..]` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        self.check_live()?;
        let xv = self.value(x);
        if axis >= xv.rank() || start >= end || end > xv.shape()[axis] {
            return Err(Error::Validation(format!(
                "slice {start}..{end} on axis {axis} of shape {:?}",
                xv.shape()
            )));
        }
        let (outer, len, inner) = axis_extents(xv.shape(), axis);
        let width = end - start;
        let mut out = Vec::with_capacity(outer * width * inner);
        for o in 0..outer {
            let base = o * len * inner;
            out.extend_from_slice(&xv.data()[base + start * inner..base + end * inner]);
        }
        let mut shape = xv.shape().to_vec();
        shape[axis] = width;
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new(shape, out)?, Op::Slice { x, axis, start }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.check_live()?;
        let t = (*self.nodes[x.0].value).clone().reshaped(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    /// Row `i` of a matrix as a rank-1 tensor.
    pub fn row(&mut self, x: Var, i: usize) -> Result<Var> {
        let (_, n) = self.value(x).dims2("row")?;
        let s = self.slice(x, 0, i, i + 1)?;
        self.reshape(s, &[n])
    }

    /// Mean over `axis`, removing it from the shape.
    pub fn mean_pool(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check_live()?;
        let xv = self.value(x);
        if axis >= xv.rank() || xv.shape()[axis] == 0 {
            return Err(Error::Validation(format!("mean_pool: bad axis {axis} for {:?}", xv.shape())));
        }
        let (outer, len, inner) = axis_extents(xv.shape(), axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                for i in 0..inner {
                    out[o * inner + i] += xv.data()[(o * len + l) * inner + i];
                }
            }
        }
        for v in &mut out {
            *v /= len as f64;
        }
        let mut shape = xv.shape().to_vec();
        shape.remove(axis);
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new(shape, out)?, Op::MeanAxis { x, axis }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check_live()?;
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::scalar(s), Op::Sum(x), rg))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.check_live()?;
        let v = self.value(x);
        let s = v.data().iter().sum::<f64>() / v.numel().max(1) as f64;
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::scalar(s), Op::Mean(x), rg))
    }

    /// Gathers rows of `table[V×d]` into an `[ids.len() × d]` matrix.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        self.check_live()?;
        let tv = self.value(table);
        let (vocab, d) = tv.dims2("embedding")?;
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= vocab {
                return Err(Error::Validation(format!("token id {id} >= vocabulary size {vocab}")));
            }
            out.extend_from_slice(tv.row(id));
        }
        let rg = self.rg(&[table]);
        Ok(self.push(
            Tensor::new(vec![ids.len(), d], out)?,
            Op::Embedding { table, ids: ids.to_vec() },
            rg,
        ))
    }

    /// Mean of `w · (max(x,0) − x·t + ln(1 + e^{−|x|}))`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &Tensor, weights: Option<&Tensor>) -> Result<Var> {
        self.check_live()?;
        let lv = self.value(logits);
        if lv.shape() != targets.shape() {
            return Err(Error::dim("bce_with_logits", lv.shape(), targets.shape()));
        }
        if let Some(w) = weights {
            if w.shape() != targets.shape() {
                return Err(Error::dim("bce_with_logits", targets.shape(), w.shape()));
            }
        }
        if let Some(t) = targets.data().iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::Validation(format!("bce target {t} outside [0, 1]")));
        }
        let n = lv.numel().max(1) as f64;
        let mut total = 0.0;
        for (i, (&x, &t)) in lv.data().iter().zip(targets.data()).enumerate() {
            let w = weights.map_or(1.0, |w| w.data()[i]);
            total += w * (x.max(0.0) - x * t + (-x.abs()).exp().ln_1p());
        }
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Tensor::scalar(total / n),
            Op::Bce {
                logits,
                targets: targets.data().to_vec(),
                weights: weights.map(|w| w.data().to_vec()),
            },
            rg,
        ))
    }

    /// Mean negative log-likelihood of `labels` under row-wise softmax.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        self.check_live()?;
        let lv = self.value(logits);
        let (b, c) = lv.dims2("cross_entropy")?;
        if labels.len() != b {
            return Err(Error::dim("cross_entropy", lv.shape(), &[labels.len()]));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Validation(format!("label {l} out of range for {c} classes")));
        }
        let probs = softmax_along(lv.data(), lv.shape(), 1);
        let mut total = 0.0;
        for (r, &l) in labels.iter().enumerate() {
            let row = lv.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[l];
        }
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Tensor::scalar(total / b.max(1) as f64),
            Op::CrossEntropy { logits, labels: labels.to_vec(), probs },
            rg,
        ))
    }

    /// Propagates d(loss)/d(node) back through the tape. The tape is consumed;
    /// a second call without [`Tape::reset`] is an error.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        self.check_live()?;
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::Validation(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.backprop_node(idx, &g, &mut grads);
            // Leaves keep their gradient for collection below.
            if matches!(node.op, Op::Leaf | Op::Param(_)) {
                grads[idx] = Some(g);
            }
        }

        let mut out = Gradients::default();
        for (idx, g) in grads.into_iter().enumerate() {
            let Some(g) = g else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let t = Tensor::new(node.value.shape().to_vec(), g)?;
            match node.op {
                Op::Param(id) => {
                    // The same parameter may be recorded more than once.
                    if let Some((_, acc)) = out.params.iter_mut().find(|(p, _)| *p == id) {
                        for (a, b) in acc.data_mut().iter_mut().zip(t.data()) {
                            *a += b;
                        }
                    } else {
                        out.params.push((id, t));
                    }
                }
                Op::Leaf => out.leaves.push((Var(idx), t)),
                _ => {}
            }
        }
        out.params.sort_by_key(|(p, _)| *p);
        Ok(out)
    }

    fn backprop_node(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        let nodes = &self.nodes;
        let wants = |v: Var| nodes[v.0].requires_grad;
        macro_rules! acc {
            ($grads:expr, $v:expr) => {{
                let v: Var = $v;
                slot($grads, v, nodes[v.0].value.numel())
            }};
        }

        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                if wants(*a) {
                    // dA = dC · Bᵀ
                    gemm(m, n, k, g, false, bv.data(), true, acc!(grads, *a), 1.0);
                }
                if wants(*b) {
                    // dB = Aᵀ · dC
                    gemm(k, m, n, av.data(), true, g, false, acc!(grads, *b), 1.0);
                }
            }
            Op::Transpose(a) => {
                let (m, n) = (out.shape()[0], out.shape()[1]);
                let ga = acc!(grads, *a);
                for i in 0..m {
                    for j in 0..n {
                        ga[j * m + i] += g[i * n + j];
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if wants(*a) {
                    axpy(acc!(grads, *a), g, 1.0);
                }
                if wants(*b) {
                    axpy(acc!(grads, *b), g, sign);
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    let bv = nodes[b.0].value.data();
                    for ((o, gi), bi) in acc!(grads, *a).iter_mut().zip(g).zip(bv) {
                        *o += gi * bi;
                    }
                }
                if wants(*b) {
                    let av = nodes[a.0].value.data();
                    for ((o, gi), ai) in acc!(grads, *b).iter_mut().zip(g).zip(av) {
                        *o += gi * ai;
                    }
                }
            }
            Op::AddScalar(a) | Op::Reshape(a) => axpy(acc!(grads, *a), g, 1.0),
            Op::MulScalar(a, c) => axpy(acc!(grads, *a), g, *c),
            Op::AddRowBias(x, b) => {
                if wants(*x) {
                    axpy(acc!(grads, *x), g, 1.0);
                }
                if wants(*b) {
                    let gb = acc!(grads, *b);
                    let n = gb.len();
                    for row in g.chunks(n.max(1)) {
                        axpy(gb, row, 1.0);
                    }
                }
            }
            Op::Relu(a) => {
                let av = nodes[a.0].value.data();
                for ((o, gi), xi) in acc!(grads, *a).iter_mut().zip(g).zip(av) {
                    if *xi > 0.0 {
                        *o += gi;
                    }
                }
            }
            Op::Sigmoid(a) => {
                for ((o, gi), yi) in acc!(grads, *a).iter_mut().zip(g).zip(out.data()) {
                    *o += gi * yi * (1.0 - yi);
                }
            }
            Op::Softmax { x, axis } => {
                let (outer, len, inner) = axis_extents(out.shape(), *axis);
                let y = out.data();
                let gx = acc!(grads, *x);
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |l: usize| (o * len + l) * inner + i;
                        let dot: f64 = (0..len).map(|l| g[at(l)] * y[at(l)]).sum();
                        for l in 0..len {
                            gx[at(l)] += y[at(l)] * (g[at(l)] - dot);
                        }
                    }
                }
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let n = nodes[gamma.0].value.numel();
                let gam = nodes[gamma.0].value.data();
                let rows = xhat.len() / n;
                if wants(*gamma) {
                    let gg = acc!(grads, *gamma);
                    for r in 0..rows {
                        for c in 0..n {
                            gg[c] += g[r * n + c] * xhat[r * n + c];
                        }
                    }
                }
                if wants(*beta) {
                    let gb = acc!(grads, *beta);
                    for row in g.chunks(n) {
                        axpy(gb, row, 1.0);
                    }
                }
                if wants(*x) {
                    let gx = acc!(grads, *x);
                    let nf = n as f64;
                    for r in 0..rows {
                        let base = r * n;
                        let mut sum_d = 0.0;
                        let mut sum_dx = 0.0;
                        for c in 0..n {
                            let d = g[base + c] * gam[c];
                            sum_d += d;
                            sum_dx += d * xhat[base + c];
                        }
                        for c in 0..n {
                            let d = g[base + c] * gam[c];
                            gx[base + c] += inv_std[r] / nf * (nf * d - sum_d - xhat[base + c] * sum_dx);
                        }
                    }
                }
            }
            Op::Dropout { x, mask } => {
                for ((o, gi), m) in acc!(grads, *x).iter_mut().zip(g).zip(mask) {
                    *o += gi * m;
                }
            }
            Op::Concat { parts, axis } => {
                let (outer, _, inner) = axis_extents(out.shape(), *axis);
                let mut offset = 0;
                for o in 0..outer {
                    for p in parts {
                        let chunk = nodes[p.0].value.shape()[*axis] * inner;
                        if wants(*p) {
                            let gp = acc!(grads, *p);
                            axpy(&mut gp[o * chunk..(o + 1) * chunk], &g[offset..offset + chunk], 1.0);
                        }
                        offset += chunk;
                    }
                }
            }
            Op::Slice { x, axis, start } => {
                let xs = nodes[x.0].value.shape();
                let (outer, len, inner) = axis_extents(xs, *axis);
                let width = out.shape()[*axis];
                let gx = acc!(grads, *x);
                for o in 0..outer {
                    let dst = o * len * inner + start * inner;
                    let src = o * width * inner;
                    axpy(&mut gx[dst..dst + width * inner], &g[src..src + width * inner], 1.0);
                }
            }
            Op::MeanAxis { x, axis } => {
                let xs = nodes[x.0].value.shape();
                let (outer, len, inner) = axis_extents(xs, *axis);
                let gx = acc!(grads, *x);
                let scale = 1.0 / len as f64;
                for o in 0..outer {
                    for l in 0..len {
                        for i in 0..inner {
                            gx[(o * len + l) * inner + i] += g[o * inner + i] * scale;
                        }
                    }
                }
            }
            Op::Sum(a) => {
                for o in acc!(grads, *a).iter_mut() {
                    *o += g[0];
                }
            }
            Op::Mean(a) => {
                let ga = acc!(grads, *a);
                let scale = g[0] / ga.len().max(1) as f64;
                for o in ga.iter_mut() {
                    *o += scale;
                }
            }
            Op::Embedding { table, ids } => {
                let d = nodes[table.0].value.shape()[1];
                let gt = acc!(grads, *table);
                for (r, &id) in ids.iter().enumerate() {
                    axpy(&mut gt[id * d..(id + 1) * d], &g[r * d..(r + 1) * d], 1.0);
                }
            }
            Op::Bce { logits, targets, weights } => {
                let xv = nodes[logits.0].value.data();
                let n = xv.len().max(1) as f64;
                let gl = acc!(grads, *logits);
                for i in 0..xv.len() {
                    let w = weights.as_ref().map_or(1.0, |w| w[i]);
                    gl[i] += g[0] * w * (stable_sigmoid(xv[i]) - targets[i]) / n;
                }
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let c = nodes[logits.0].value.shape()[1];
                let b = labels.len().max(1) as f64;
                let gl = acc!(grads, *logits);
                for (r, &l) in labels.iter().enumerate() {
                    for j in 0..c {
                        let onehot = if j == l { 1.0 } else { 0.0 };
                        gl[r * c + j] += g[0] * (probs[r * c + j] - onehot) / b;
                    }
                }
            }
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, n: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; n])
}

fn axpy(dst: &mut [f64], src: &[f64], alpha: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += alpha * s;
    }
}

pub(crate) fn softmax_along(data: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let (outer, len, inner) = axis_extents(shape, axis);
    let mut out = vec![0.0; data.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |l: usize| (o * len + l) * inner + i;
            let max = (0..len).map(|l| data[at(l)]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for l in 0..len {
                let e = (data[at(l)] - max).exp();
                out[at(l)] = e;
                z += e;
            }
            for l in 0..len {
                out[at(l)] /= z;
            }
        }
    }
    out
}
