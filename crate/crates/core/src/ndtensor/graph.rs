use rand::Rng;

use super::kernels::{matmul_at_into, matmul_bt_into, matmul_into};
use super::{Gradients, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Handle to a node recorded in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Value {
    Owned(Vec<f64>),
    Param(ParamId),
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    Silu(Var),
    Sigmoid(Var),
    Softmax(Var),
    Dropout(Var, Vec<f64>),
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Vec<f64>,
        count: usize,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    Embedding(Var, Vec<usize>),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Mean(Var),
    MeanRows(Var),
    Select(Var, usize),
}

struct Node {
    shape: Vec<usize>,
    value: Value,
    op: Op,
}

const LN_EPS: f64 = 1e-5;

/// A single forward computation recorded for reverse-mode differentiation.
///
/// Parameters are borrowed from a [`ParamStore`] rather than copied; their
/// gradients come back from [`Graph::backward`] as [`Gradients`].
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    backward_done: bool,
    visit_log: Vec<usize>,
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        0 => (1, 1),
        1 => (1, shape[0]),
        _ => (shape[..shape.len() - 1].iter().product(), shape[shape.len() - 1]),
    }
}

#[inline]
pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
            backward_done: false,
            visit_log: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value: Value::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        match &self.nodes[v.0].value {
            Value::Owned(x) => x,
            Value::Param(id) => self.params.get(*id).values(),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    fn rc(&self, v: Var) -> (usize, usize) {
        rows_cols(&self.nodes[v.0].shape)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    /// Constant input (no gradient is reported for it).
    pub fn constant(&mut self, shape: &[usize], values: Vec<f64>) -> Result<Var> {
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::dim("constant", shape, &[values.len()]));
        }
        Ok(self.push(shape.to_vec(), values, Op::Leaf))
    }

    /// Leaf bound to a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let shape = self.params.get(id).shape().to_vec();
        self.nodes.push(Node {
            shape,
            value: Value::Param(id),
            op: Op::Leaf,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        matmul_into(self.value(a), self.value(b), &mut out, m, k, n);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ` for `a [m,k]`, `b [n,k]`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(Error::dim("matmul_t", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[0]);
        let mut out = vec![0.0; m * n];
        matmul_bt_into(self.value(a), self.value(b), &mut out, m, k, n);
        Ok(self.push(vec![m, n], out, Op::MatMulT(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim("add", self.shape(a), self.shape(b)));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::Add(a, b)))
    }

    /// Adds a bias row `b [n]` to every row of `a [.., n]`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (_, n) = self.rc(a);
        if self.value(b).len() != n {
            return Err(Error::dim("add_row", self.shape(a), self.shape(b)));
        }
        let bv = self.value(b);
        let out = self
            .value(a)
            .iter()
            .enumerate()
            .map(|(i, x)| x + bv[i % n])
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::AddRow(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim("mul", self.shape(a), self.shape(b)));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * c).collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, out, Op::Scale(a, c))
    }

    /// Multiplies every element of `a` by the single value held in `s`.
    pub fn scale_by(&mut self, s: Var, a: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(Error::dim("scale_by", self.shape(s), &[1]));
        }
        let c = self.value(s)[0];
        let out = self.value(a).iter().map(|x| x * c).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::ScaleBy(s, a)))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| x * sigmoid_scalar(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, out, Op::Silu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| sigmoid_scalar(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, out, Op::Sigmoid(a))
    }

    /// Softmax along the last axis. With `causal`, entry `(i, j)` of each
    /// square block is masked out whenever `j > i`.
    pub fn softmax(&mut self, a: Var, causal: bool) -> Var {
        let (r, n) = self.rc(a);
        let x = self.value(a);
        let mut out = vec![0.0; r * n];
        for i in 0..r {
            let limit = if causal { (i % n.max(1)) + 1 } else { n };
            let limit = limit.min(n);
            let row = &x[i * n..i * n + limit];
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let o = &mut out[i * n..i * n + limit];
            let mut s = 0.0;
            for (oj, &xj) in o.iter_mut().zip(row) {
                *oj = (xj - m).exp();
                s += *oj;
            }
            o.iter_mut().for_each(|v| *v /= s);
        }
        let shape = self.shape(a).to_vec();
        self.push(shape, out, Op::Softmax(a))
    }

    /// Inverted dropout: survivors are scaled by `1/(1-rate)`; identity when not training.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0,1)")));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(a).len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let out = self.value(a).iter().zip(&mask).map(|(x, m)| x * m).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::Dropout(a, mask)))
    }

    /// Mean token-level negative log-likelihood over the positions whose target
    /// is not `ignore_index`. Zero (with zero gradient) when every position is ignored.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], ignore_index: usize) -> Result<Var> {
        let (t, v) = self.rc(logits);
        if targets.len() != t {
            return Err(Error::dim("cross_entropy", self.shape(logits), &[targets.len()]));
        }
        let mut tg = Vec::with_capacity(t);
        for (pos, &y) in targets.iter().enumerate() {
            if y == ignore_index {
                tg.push(None);
            } else if y >= v {
                return Err(Error::Data(format!(
                    "target id {y} out of range [0,{v}) at position {pos}"
                )));
            } else {
                tg.push(Some(y));
            }
        }
        let x = self.value(logits);
        let mut probs = vec![0.0; t * v];
        let mut total = 0.0;
        let mut count = 0usize;
        for (i, y) in tg.iter().enumerate() {
            let Some(y) = *y else { continue };
            let row = &x[i * v..(i + 1) * v];
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for (p, &xj) in probs[i * v..(i + 1) * v].iter_mut().zip(row) {
                *p = (xj - m).exp();
                s += *p;
            }
            probs[i * v..(i + 1) * v].iter_mut().for_each(|p| *p /= s);
            total += -(row[y] - m - s.ln());
            count += 1;
        }
        let loss = if count == 0 { 0.0 } else { total / count as f64 };
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::CrossEntropy {
                logits,
                targets: tg,
                probs,
                count,
            },
        ))
    }

    /// Concatenates along the sequence (first) axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::Graph("concat of nothing".into()))?;
        let (_, n) = self.rc(first);
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.rc(p);
            if c != n {
                return Err(Error::dim("concat_rows", self.shape(first), self.shape(p)));
            }
            out.extend_from_slice(self.value(p));
            rows += r;
        }
        Ok(self.push(vec![rows, n], out, Op::ConcatRows(parts.to_vec())))
    }

    /// Concatenates along the feature (last) axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::Graph("concat of nothing".into()))?;
        let (r, _) = self.rc(first);
        let mut total = 0;
        for &p in parts {
            let (pr, pc) = self.rc(p);
            if pr != r {
                return Err(Error::dim("concat_cols", self.shape(first), self.shape(p)));
            }
            total += pc;
        }
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                let (_, pc) = self.rc(p);
                out.extend_from_slice(&self.value(p)[i * pc..(i + 1) * pc]);
            }
        }
        Ok(self.push(vec![r, total], out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, n) = self.rc(a);
        if start + len > n {
            return Err(Error::dim("slice_cols", self.shape(a), &[start, len]));
        }
        let x = self.value(a);
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&x[i * n + start..i * n + start + len]);
        }
        Ok(self.push(vec![r, len], out, Op::SliceCols(a, start)))
    }

    /// Row gather from `table [V,H]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, h) = self.rc(table);
        let x = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * h);
        for (pos, &id) in ids.iter().enumerate() {
            if id >= v {
                return Err(Error::Data(format!("token id {id} >= vocab {v} at position {pos}")));
            }
            out.extend_from_slice(&x[id * h..(id + 1) * h]);
        }
        Ok(self.push(vec![ids.len(), h], out, Op::Embedding(table, ids.to_vec())))
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (r, n) = self.rc(x);
        if self.value(gain).len() != n || self.value(bias).len() != n {
            return Err(Error::dim("layer_norm", self.shape(x), self.shape(gain)));
        }
        let xv = self.value(x);
        let (g, b) = (self.value(gain), self.value(bias));
        let mut xhat = vec![0.0; r * n];
        let mut rstd = vec![0.0; r];
        let mut out = vec![0.0; r * n];
        for i in 0..r {
            let row = &xv[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            rstd[i] = rs;
            for j in 0..n {
                let h = (row[j] - mean) * rs;
                xhat[i * n + j] = h;
                out[i * n + j] = h * g[j] + b[j];
            }
        }
        let shape = self.shape(x).to_vec();
        Ok(self.push(shape, out, Op::LayerNorm { x, gain, bias, xhat, rstd }))
    }

    /// Mean of all elements, as a one-element tensor.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.is_empty() {
            return Err(Error::Data("mean of empty tensor".into()));
        }
        let m = x.iter().sum::<f64>() / x.len() as f64;
        Ok(self.push(vec![1], vec![m], Op::Mean(a)))
    }

    /// Mean over rows: `[N,H] -> [1,H]`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (r, n) = self.rc(a);
        if r == 0 {
            return Err(Error::Data("mean over an empty sequence".into()));
        }
        let x = self.value(a);
        let mut out = vec![0.0; n];
        for i in 0..r {
            for j in 0..n {
                out[j] += x[i * n + j];
            }
        }
        out.iter_mut().for_each(|v| *v /= r as f64);
        Ok(self.push(vec![1, n], out, Op::MeanRows(a)))
    }

    /// Picks one element (flat index) as a one-element tensor.
    pub fn select(&mut self, a: Var, index: usize) -> Result<Var> {
        let x = self.value(a);
        if index >= x.len() {
            return Err(Error::dim("select", self.shape(a), &[index]));
        }
        let v = x[index];
        Ok(self.push(vec![1], vec![v], Op::Select(a, index)))
    }

    /// Node indices in the order the last backward pass visited them.
    pub fn backward_order(&self) -> &[usize] {
        &self.visit_log
    }

    /// Reverse pass from a one-element `loss`. Each recorded op is visited at
    /// most once, in reverse execution order; may only run once per graph.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.backward_done {
            return Err(Error::Graph("backward called twice on the same graph".into()));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::dim("backward", self.shape(loss), &[1]));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::new(self.params.len());
        self.visit_log.clear();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.visit_log.push(idx);
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            let node = &self.nodes[idx];
            if let (Op::Leaf, Value::Param(id)) = (&node.op, &node.value) {
                out.add_slot(*id, &g);
                continue;
            }
            self.propagate(idx, &g, &mut grads);
        }
        Ok(out)
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out_val = match &node.value {
            Value::Owned(v) => v.as_slice(),
            Value::Param(_) => unreachable!(),
        };
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let n = self.value(v).len();
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let (av, bv) = (self.value(*a), self.value(*b));
                // dA = dC · Bᵀ
                acc(*a, &mut |s| matmul_bt_into(g, bv, s, m, n, k));
                // dB = Aᵀ · dC
                acc(*b, &mut |s| matmul_at_into(av, g, s, m, k, n));
            }
            Op::MatMulT(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[0]);
                let (av, bv) = (self.value(*a), self.value(*b));
                // C = A·Bᵀ: dA = dC·B, dB = dCᵀ·A
                acc(*a, &mut |s| matmul_into(g, bv, s, m, n, k));
                acc(*b, &mut |s| matmul_at_into(g, av, s, m, n, k));
            }
            Op::Add(a, b) => {
                acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            Op::AddRow(a, b) => {
                acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                let n = self.value(*b).len();
                acc(*b, &mut |s| {
                    for (i, gv) in g.iter().enumerate() {
                        s[i % n] += gv;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * bv[i];
                    }
                });
                acc(*b, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * av[i];
                    }
                });
            }
            Op::Scale(a, c) => {
                acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += c * y));
            }
            Op::ScaleBy(sv, a) => {
                let c = self.value(*sv)[0];
                let av = self.value(*a);
                let ds: f64 = g.iter().zip(av).map(|(x, y)| x * y).sum();
                acc(*sv, &mut |s| s[0] += ds);
                acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += c * y));
            }
            Op::Silu(a) => {
                let av = self.value(*a);
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        let sg = sigmoid_scalar(av[i]);
                        s[i] += g[i] * sg * (1.0 + av[i] * (1.0 - sg));
                    }
                });
            }
            Op::Sigmoid(a) => {
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * out_val[i] * (1.0 - out_val[i]);
                    }
                });
            }
            Op::Softmax(a) => {
                let (r, n) = rows_cols(&node.shape);
                acc(*a, &mut |s| {
                    for i in 0..r {
                        let y = &out_val[i * n..(i + 1) * n];
                        let gr = &g[i * n..(i + 1) * n];
                        let d: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            s[i * n + j] += y[j] * (gr[j] - d);
                        }
                    }
                });
            }
            Op::Dropout(a, mask) => {
                acc(*a, &mut |s| {
                    for i in 0..s.len() {
                        s[i] += g[i] * mask[i];
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
                count,
            } => {
                if *count == 0 {
                    return;
                }
                let v = rows_cols(self.shape(*logits)).1;
                let scale = g[0] / *count as f64;
                acc(*logits, &mut |s| {
                    for (i, y) in targets.iter().enumerate() {
                        let Some(y) = *y else { continue };
                        for j in 0..v {
                            s[i * v + j] += scale * probs[i * v + j];
                        }
                        s[i * v + y] -= scale;
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    let seg = &g[off..off + len];
                    acc(*p, &mut |s| s.iter_mut().zip(seg).for_each(|(x, y)| *x += y));
                    off += len;
                }
            }
            Op::ConcatCols(parts) => {
                let (r, total) = rows_cols(&node.shape);
                let mut col = 0;
                for p in parts {
                    let pc = rows_cols(self.shape(*p)).1;
                    acc(*p, &mut |s| {
                        for i in 0..r {
                            for j in 0..pc {
                                s[i * pc + j] += g[i * total + col + j];
                            }
                        }
                    });
                    col += pc;
                }
            }
            Op::SliceCols(a, start) => {
                let (r, len) = rows_cols(&node.shape);
                let n = rows_cols(self.shape(*a)).1;
                acc(*a, &mut |s| {
                    for i in 0..r {
                        for j in 0..len {
                            s[i * n + start + j] += g[i * len + j];
                        }
                    }
                });
            }
            Op::Embedding(table, ids) => {
                let h = rows_cols(self.shape(*table)).1;
                acc(*table, &mut |s| {
                    for (pos, &id) in ids.iter().enumerate() {
                        for j in 0..h {
                            s[id * h + j] += g[pos * h + j];
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let (r, n) = rows_cols(&node.shape);
                let gv = self.value(*gain);
                acc(*gain, &mut |s| {
                    for i in 0..r {
                        for j in 0..n {
                            s[j] += g[i * n + j] * xhat[i * n + j];
                        }
                    }
                });
                acc(*bias, &mut |s| {
                    for i in 0..r {
                        for j in 0..n {
                            s[j] += g[i * n + j];
                        }
                    }
                });
                acc(*x, &mut |s| {
                    let nf = n as f64;
                    for i in 0..r {
                        let mut sum_dh = 0.0;
                        let mut sum_dh_h = 0.0;
                        for j in 0..n {
                            let dh = g[i * n + j] * gv[j];
                            sum_dh += dh;
                            sum_dh_h += dh * xhat[i * n + j];
                        }
                        for j in 0..n {
                            let dh = g[i * n + j] * gv[j];
                            s[i * n + j] +=
                                rstd[i] * (dh - sum_dh / nf - xhat[i * n + j] * sum_dh_h / nf);
                        }
                    }
                });
            }
            Op::Mean(a) => {
                let n = self.value(*a).len() as f64;
                acc(*a, &mut |s| s.iter_mut().for_each(|x| *x += g[0] / n));
            }
            Op::MeanRows(a) => {
                let (r, n) = self.rc(*a);
                acc(*a, &mut |s| {
                    for i in 0..r {
                        for j in 0..n {
                            s[i * n + j] += g[j] / r as f64;
                        }
                    }
                });
            }
            Op::Select(a, index) => {
                acc(*a, &mut |s| s[*index] += g[0]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndtensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store_with(values: &[(&str, &[usize], Vec<f64>)]) -> ParamStore {
        let mut s = ParamStore::new();
        for (name, shape, v) in values {
            s.add(*name, Tensor::new(shape, v.clone()).unwrap()).unwrap();
        }
        s
    }

    #[test]
    fn identity_matmul() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let i2 = g.constant(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let m = g.constant(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let c = g.matmul(i2, m).unwrap();
        assert_eq!(g.value(c), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let a = g.constant(&[2, 3], vec![0.0; 6]).unwrap();
        let b = g.constant(&[2, 3], vec![0.0; 6]).unwrap();
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3] vs [2, 3]"), "{msg}");
    }

    #[test]
    fn silu_and_sigmoid_saturate() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let x = g.constant(&[3], vec![0.0, -50.0, -700.0]).unwrap();
        let y = g.silu(x);
        let z = g.sigmoid(x);
        assert_eq!(g.value(y)[0], 0.0);
        assert!(g.value(y)[1].abs() < 1e-18);
        assert!(g.value(z)[0] == 0.5);
        assert!(g.value(z)[1] < 1e-20 && g.value(z)[2].is_finite());
        assert!(g.value(y).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn sigmoid_grad_at_zero() {
        let s = store_with(&[("x", &[1], vec![0.0])]);
        let mut g = Graph::new(&s);
        let x = g.param(ParamId(0));
        let y = g.sigmoid(x);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(ParamId(0)).unwrap()[0], 0.25);
    }

    #[test]
    fn softmax_values() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let x = g.constant(&[2, 3], vec![0.0, 0.0, 0.0, 1.0, 2.0, 3.0]).unwrap();
        let y = g.softmax(x, false);
        let v = g.value(y);
        for j in 0..3 {
            assert!((v[j] - 1.0 / 3.0).abs() < 1e-15);
        }
        let want = [0.09003057317038046, 0.24472847105479764, 0.6652409557748219];
        for j in 0..3 {
            assert!((v[3 + j] - want[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn causal_softmax_masks_future() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let x = g.constant(&[3, 3], vec![1.0; 9]).unwrap();
        let y = g.softmax(x, true);
        let v = g.value(y);
        assert_eq!(&v[0..3], &[1.0, 0.0, 0.0]);
        assert_eq!(&v[3..6], &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn dropout_contract() {
        let s = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = Graph::new(&s);
        let x = g.constant(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(g.dropout(x, 0.0, true, &mut rng).unwrap(), x);
        assert_eq!(g.dropout(x, 0.9, false, &mut rng).unwrap(), x);
        assert!(g.dropout(x, 1.0, true, &mut rng).is_err());
        assert!(g.dropout(x, -0.1, true, &mut rng).is_err());
    }

    #[test]
    fn cross_entropy_cases() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let confident = g.constant(&[1, 3], vec![100.0, 0.0, 0.0]).unwrap();
        let l = g.cross_entropy(confident, &[0], 99).unwrap();
        assert!(g.scalar(l) < 1e-40);
        let uniform = g.constant(&[2, 4], vec![0.0; 8]).unwrap();
        let l = g.cross_entropy(uniform, &[1, 3], 99).unwrap();
        assert!((g.scalar(l) - 4f64.ln()).abs() < 1e-12);
        let l = g.cross_entropy(uniform, &[99, 99], 99).unwrap();
        assert_eq!(g.scalar(l), 0.0);
        let err = g.cross_entropy(uniform, &[1, 7], 99).unwrap_err();
        assert!(err.to_string().contains("position 1"));
    }

    #[test]
    fn all_ignored_cross_entropy_has_zero_grad() {
        let s = store_with(&[("w", &[2, 3], vec![0.5; 6])]);
        let mut g = Graph::new(&s);
        let w = g.param(ParamId(0));
        let l = g.cross_entropy(w, &[7, 7], 7).unwrap();
        let grads = g.backward(l).unwrap();
        assert!(!grads.touched(ParamId(0)));
    }

    #[test]
    fn backward_twice_is_an_error() {
        let s = store_with(&[("w", &[1], vec![2.0])]);
        let mut g = Graph::new(&s);
        let w = g.param(ParamId(0));
        let y = g.mul(w, w).unwrap();
        assert_eq!(g.backward(y).unwrap().get(ParamId(0)).unwrap(), &[4.0]);
        assert!(g.backward(y).is_err());
    }

    #[test]
    fn backward_visits_in_reverse_order_once() {
        let s = store_with(&[("w", &[2], vec![1.0, -1.0])]);
        let mut g = Graph::new(&s);
        let w = g.param(ParamId(0));
        let a = g.silu(w);
        let b = g.sigmoid(w);
        let c = g.add(a, b).unwrap();
        let l = g.mean(c).unwrap();
        g.backward(l).unwrap();
        let order = g.backward_order().to_vec();
        let mut sorted = order.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        sorted.dedup();
        assert_eq!(order, sorted);
        assert_eq!(order.len(), g.len());
    }

    #[test]
    fn embedding_rejects_out_of_vocab_and_allows_empty() {
        let s = store_with(&[("e", &[3, 2], vec![0.0; 6])]);
        let mut g = Graph::new(&s);
        let e = g.param(ParamId(0));
        assert!(g.embedding(e, &[3]).is_err());
        let empty = g.embedding(e, &[]).unwrap();
        assert_eq!(g.shape(empty), &[0, 2]);
    }
}
