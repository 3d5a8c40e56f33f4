//! Define-by-run reverse-mode tape.
//!
//! Every forward primitive appends one node holding its value, the handles of
//! its parents and whatever it cached for the backward pass. Node ids grow
//! monotonically, so parents always precede children and a reverse sweep over
//! the node list is a valid topological order.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Lower/upper margin used by [`Tape::arccos_safe`].
pub const ARCCOS_EPS: f64 = 1e-7;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    ScalarMul(Var, f64),
    MatMul(Var, Var),
    Sum { x: Var },
    Mean(Var),
    Sin(Var),
    Cos(Var),
    Exp(Var),
    Sqrt(Var),
    Relu(Var),
    Clamp { x: Var, lo: f64, hi: f64 },
    ArccosSafe(Var),
    FrobNorm { x: Var },
    FrobInner { a: Var, b: Var },
    Reshape(Var),
    Slice { x: Var, axis: usize, start: usize },
    Concat { xs: Vec<Var>, axis: usize },
    Conv1d { x: Var, w: Var, b: Var },
    MaxPool1d { x: Var, argmax: Vec<usize> },
    Linear { x: Var, w: Var, b: Var },
    LstmStep { x: Var, state: Var, w_ih: Var, w_hh: Var, b: Var, gates: Vec<f64> },
    SoftmaxCe { logits: Var, label: usize, probs: Vec<f64> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::ScalarMul(..) => "scalar_mul",
            Op::MatMul(..) => "matmul",
            Op::Sum { .. } => "sum",
            Op::Mean(..) => "mean",
            Op::Sin(..) => "sin",
            Op::Cos(..) => "cos",
            Op::Exp(..) => "exp",
            Op::Sqrt(..) => "sqrt",
            Op::Relu(..) => "relu",
            Op::Clamp { .. } => "clamp",
            Op::ArccosSafe(..) => "arccos_safe",
            Op::FrobNorm { .. } => "frobenius_norm",
            Op::FrobInner { .. } => "frobenius_inner",
            Op::Reshape(..) => "reshape",
            Op::Slice { .. } => "slice",
            Op::Concat { .. } => "concat",
            Op::Conv1d { .. } => "conv1d",
            Op::MaxPool1d { .. } => "maxpool1d",
            Op::Linear { .. } => "linear",
            Op::LstmStep { .. } => "lstm_step",
            Op::SoftmaxCe { .. } => "softmax_cross_entropy",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recording of one forward pass.
///
/// A tape is single-threaded; run independent forward passes on independent
/// tapes.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Flat index maps for numpy-style broadcasting of `a` against `b`.
fn broadcast(op: &'static str, a: &[usize], b: &[usize]) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let nd = a.len().max(b.len());
    let pad = |s: &[usize]| {
        let mut v = vec![1; nd - s.len()];
        v.extend_from_slice(s);
        v
    };
    let (pa, pb) = (pad(a), pad(b));
    let mut out = Vec::with_capacity(nd);
    for (&x, &y) in pa.iter().zip(&pb) {
        if x == y || y == 1 {
            out.push(x);
        } else if x == 1 {
            out.push(y);
        } else {
            return Err(Error::shape(op, format!("cannot broadcast {a:?} with {b:?}")));
        }
    }
    let strides = |s: &[usize]| {
        let mut st = vec![0; nd];
        let mut acc = 1;
        for d in (0..nd).rev() {
            st[d] = if s[d] == 1 { 0 } else { acc };
            acc *= s[d];
        }
        st
    };
    let (sa, sb) = (strides(&pa), strides(&pb));
    let numel: usize = out.iter().product();
    let mut ia = Vec::with_capacity(numel);
    let mut ib = Vec::with_capacity(numel);
    let mut idx = vec![0usize; nd];
    let (mut oa, mut ob) = (0usize, 0usize);
    for _ in 0..numel {
        ia.push(oa);
        ib.push(ob);
        for d in (0..nd).rev() {
            idx[d] += 1;
            oa += sa[d];
            ob += sb[d];
            if idx[d] < out[d] {
                break;
            }
            oa -= sa[d] * out[d];
            ob -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
    Ok((out, ia, ib))
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable input; receives a gradient in [`Tape::backward`].
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
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

    /// Name of the primitive that produced `v`.
    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    /// Accumulated gradient of the last [`Tape::backward`] call; zeros for
    /// nodes the loss does not depend on.
    pub fn grad(&self, v: Var) -> Tensor {
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.nodes[v.0].value.shape()),
        }
    }

    // ---- elementwise binary -------------------------------------------------

    fn binary(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() == vb.shape() {
            let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
            return Tensor::new(va.shape(), data);
        }
        let (shape, ia, ib) = broadcast(op, va.shape(), vb.shape())?;
        let data = ia
            .iter()
            .zip(&ib)
            .map(|(&i, &j)| f(va.data()[i], vb.data()[j]))
            .collect();
        Tensor::new(&shape, data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product with numpy broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary("div", a, b, |x, y| x / y)?;
        Ok(self.push(t, Op::Div(a, b), &[a, b]))
    }

    pub fn scalar_mul(&mut self, x: Var, s: f64) -> Var {
        let t = self.nodes[x.0].value.map(|v| v * s);
        self.push(t, Op::ScalarMul(x, s), &[x])
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scalar_mul(x, -1.0)
    }

    // ---- linear algebra -----------------------------------------------------

    /// `[m,k]·[k,n]` or batched `[B,m,k]·[B,k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (batch, m, k, n) = match (va.shape(), vb.shape()) {
            (&[m, k], &[k2, n]) if k == k2 => (None, m, k, n),
            (&[b1, m, k], &[b2, k2, n]) if b1 == b2 && k == k2 => (Some(b1), m, k, n),
            (sa, sb) => return Err(Error::shape("matmul", format!("{sa:?} x {sb:?}"))),
        };
        let nb = batch.unwrap_or(1);
        let mut out = vec![0.0; nb * m * n];
        for bi in 0..nb {
            let ad = &va.data()[bi * m * k..(bi + 1) * m * k];
            let bd = &vb.data()[bi * k * n..(bi + 1) * k * n];
            let od = &mut out[bi * m * n..(bi + 1) * m * n];
            for i in 0..m {
                for p in 0..k {
                    let aip = ad[i * k + p];
                    for j in 0..n {
                        od[i * n + j] += aip * bd[p * n + j];
                    }
                }
            }
        }
        let shape = match batch {
            Some(b) => vec![b, m, n],
            None => vec![m, n],
        };
        let t = Tensor::new(&shape, out)?;
        Ok(self.push(t, Op::MatMul(a, b), &[a, b]))
    }

    // ---- reductions -----------------------------------------------------------

    /// Sum over every axis.
    pub fn sum(&mut self, x: Var) -> Var {
        self.sum_keep(x, 0).expect("keep = 0 is always valid")
    }

    /// Sum over all axes after the first `keep`; `keep = 0` yields a scalar.
    pub fn sum_keep(&mut self, x: Var, keep: usize) -> Result<Var> {
        let v = &self.nodes[x.0].value;
        if keep > v.ndim() {
            return Err(Error::shape("sum", format!("keep {keep} > ndim of {:?}", v.shape())));
        }
        let lead: usize = v.shape()[..keep].iter().product();
        let inner = v.numel() / lead;
        let data = v.data().chunks(inner).map(|c| c.iter().sum()).collect();
        let t = Tensor::new(&v.shape()[..keep], data)?;
        Ok(self.push(t, Op::Sum { x }, &[x]))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = &self.nodes[x.0].value;
        let t = Tensor::scalar(v.data().iter().sum::<f64>() / v.numel() as f64);
        self.push(t, Op::Mean(x), &[x])
    }

    /// Frobenius norm over all axes after the first `keep`.
    pub fn frobenius_norm(&mut self, x: Var, keep: usize) -> Result<Var> {
        let v = &self.nodes[x.0].value;
        if keep > v.ndim() {
            return Err(Error::shape(
                "frobenius_norm",
                format!("keep {keep} > ndim of {:?}", v.shape()),
            ));
        }
        let lead: usize = v.shape()[..keep].iter().product();
        let inner = v.numel() / lead;
        let data = v
            .data()
            .chunks(inner)
            .map(|c| c.iter().map(|a| a * a).sum::<f64>().sqrt())
            .collect();
        let t = Tensor::new(&v.shape()[..keep], data)?;
        Ok(self.push(t, Op::FrobNorm { x }, &[x]))
    }

    /// Frobenius inner product of equal-shape tensors over the axes after `keep`.
    pub fn frobenius_inner(&mut self, a: Var, b: Var, keep: usize) -> Result<Var> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.shape() != vb.shape() || keep > va.ndim() {
            return Err(Error::shape(
                "frobenius_inner",
                format!("{:?} . {:?} (keep {keep})", va.shape(), vb.shape()),
            ));
        }
        let lead: usize = va.shape()[..keep].iter().product();
        let inner = va.numel() / lead;
        let data = va
            .data()
            .chunks(inner)
            .zip(vb.data().chunks(inner))
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
            .collect();
        let t = Tensor::new(&va.shape()[..keep], data)?;
        Ok(self.push(t, Op::FrobInner { a, b }, &[a, b]))
    }

    // ---- elementwise unary ----------------------------------------------------

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.nodes[x.0].value.map(f);
        self.push(t, op, &[x])
    }

    pub fn sin(&mut self, x: Var) -> Var {
        self.unary(x, f64::sin, Op::Sin(x))
    }

    pub fn cos(&mut self, x: Var) -> Var {
        self.unary(x, f64::cos, Op::Cos(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, f64::sqrt, Op::Sqrt(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, |v| v.clamp(lo, hi), Op::Clamp { x, lo, hi })
    }

    /// `arccos` with its argument clamped to `[-1 + ARCCOS_EPS, 1 - ARCCOS_EPS]`
    /// so that both value and derivative stay finite.
    pub fn arccos_safe(&mut self, x: Var) -> Var {
        self.unary(
            x,
            |v| v.clamp(-1.0 + ARCCOS_EPS, 1.0 - ARCCOS_EPS).acos(),
            Op::ArccosSafe(x),
        )
    }

    // ---- structural -----------------------------------------------------------

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = &self.nodes[x.0].value;
        let t = v
            .reshape(shape)
            .map_err(|_| Error::shape("reshape", format!("{:?} -> {shape:?}", v.shape())))?;
        Ok(self.push(t, Op::Reshape(x), &[x]))
    }

    /// Entries `start..end` along `axis`; the axis is kept.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let v = &self.nodes[x.0].value;
        if axis >= v.ndim() || start >= end || end > v.shape()[axis] {
            return Err(Error::shape(
                "slice",
                format!("{start}..{end} on axis {axis} of {:?}", v.shape()),
            ));
        }
        let (outer, len, inner) = split_axis(v.shape(), axis);
        let mut data = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            let base = o * len * inner;
            data.extend_from_slice(&v.data()[base + start * inner..base + end * inner]);
        }
        let mut shape = v.shape().to_vec();
        shape[axis] = end - start;
        let t = Tensor::new(&shape, data)?;
        Ok(self.push(t, Op::Slice { x, axis, start }, &[x]))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = xs
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let s0 = self.nodes[first.0].value.shape().to_vec();
        if axis >= s0.len() {
            return Err(Error::shape("concat", format!("axis {axis} for {s0:?}")));
        }
        let mut total = 0;
        for v in xs {
            let s = self.nodes[v.0].value.shape();
            let compatible = s.len() == s0.len()
                && s.iter().zip(&s0).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(Error::shape("concat", format!("{s0:?} vs {s:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&s0, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in xs {
                let t = &self.nodes[v.0].value;
                let len = t.shape()[axis];
                data.extend_from_slice(&t.data()[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = s0;
        shape[axis] = total;
        let t = Tensor::new(&shape, data)?;
        Ok(self.push(t, Op::Concat { xs: xs.to_vec(), axis }, xs))
    }

    // ---- network layers -------------------------------------------------------

    /// Valid 1-D convolution over a time-major input.
    ///
    /// `x: [L, C_in]`, `w: [C_out, C_in, K]`, `b: [C_out]` gives `[L - K + 1, C_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (vx, vw, vb) = (&self.nodes[x.0].value, &self.nodes[w.0].value, &self.nodes[b.0].value);
        let (l, cin, cout, k) = match (vx.shape(), vw.shape(), vb.shape()) {
            (&[l, cin], &[cout, cin2, k], &[cout2]) if cin == cin2 && cout == cout2 && l >= k => {
                (l, cin, cout, k)
            }
            (sx, sw, sb) => {
                return Err(Error::shape("conv1d", format!("x {sx:?}, w {sw:?}, b {sb:?}")))
            }
        };
        let lo = l - k + 1;
        let (xd, wd, bd) = (vx.data(), vw.data(), vb.data());
        let mut out = vec![0.0; lo * cout];
        for t in 0..lo {
            let window = &xd[t * cin..(t + k) * cin];
            for o in 0..cout {
                let wo = &wd[o * cin * k..(o + 1) * cin * k];
                let mut acc = bd[o];
                for c in 0..cin {
                    for j in 0..k {
                        acc += wo[c * k + j] * window[j * cin + c];
                    }
                }
                out[t * cout + o] = acc;
            }
        }
        let t = Tensor::new(&[lo, cout], out)?;
        Ok(self.push(t, Op::Conv1d { x, w, b }, &[x, w, b]))
    }

    /// Max pooling over the time axis of `[L, C]` with kernel = stride = `k`.
    pub fn maxpool1d(&mut self, x: Var, k: usize) -> Result<Var> {
        let v = &self.nodes[x.0].value;
        let (l, c) = match v.shape() {
            &[l, c] if k >= 1 && l >= k => (l, c),
            s => return Err(Error::shape("maxpool1d", format!("{s:?} with kernel {k}"))),
        };
        let lo = l / k;
        let mut out = Vec::with_capacity(lo * c);
        let mut argmax = Vec::with_capacity(lo * c);
        for t in 0..lo {
            for ch in 0..c {
                let mut best = t * k * c + ch;
                for j in 1..k {
                    let idx = (t * k + j) * c + ch;
                    if v.data()[idx] > v.data()[best] {
                        best = idx;
                    }
                }
                out.push(v.data()[best]);
                argmax.push(best);
            }
        }
        let t = Tensor::new(&[lo, c], out)?;
        Ok(self.push(t, Op::MaxPool1d { x, argmax }, &[x]))
    }

    /// Affine map `w·x + b` applied to the last axis of `x`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (vx, vw, vb) = (&self.nodes[x.0].value, &self.nodes[w.0].value, &self.nodes[b.0].value);
        let (o, i) = match (vw.shape(), vb.shape()) {
            (&[o, i], &[o2]) if o == o2 && vx.shape().last() == Some(&i) => (o, i),
            (sw, sb) => {
                return Err(Error::shape(
                    "linear",
                    format!("x {:?}, w {sw:?}, b {sb:?}", vx.shape()),
                ))
            }
        };
        let rows = vx.numel() / i;
        let mut out = Vec::with_capacity(rows * o);
        for r in 0..rows {
            let xr = &vx.data()[r * i..(r + 1) * i];
            for oi in 0..o {
                let wr = &vw.data()[oi * i..(oi + 1) * i];
                out.push(vb.data()[oi] + wr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>());
            }
        }
        let mut shape = vx.shape().to_vec();
        *shape.last_mut().unwrap() = o;
        let t = Tensor::new(&shape, out)?;
        Ok(self.push(t, Op::Linear { x, w, b }, &[x, w, b]))
    }

    /// One LSTM cell update.
    ///
    /// `state` packs `[h; c]` (length `2H`); gates are laid out
    /// input/forget/cell/output in `w_ih: [4H, I]`, `w_hh: [4H, H]`, `b: [4H]`.
    /// Returns the packed next state `[h'; c']`.
    pub fn lstm_step(&mut self, x: Var, state: Var, w_ih: Var, w_hh: Var, b: Var) -> Result<Var> {
        let vx = &self.nodes[x.0].value;
        let vs = &self.nodes[state.0].value;
        let (vwi, vwh, vb) = (
            &self.nodes[w_ih.0].value,
            &self.nodes[w_hh.0].value,
            &self.nodes[b.0].value,
        );
        let (h4, i) = match vwi.shape() {
            &[h4, i] if h4 % 4 == 0 => (h4, i),
            s => return Err(Error::shape("lstm_step", format!("w_ih {s:?}"))),
        };
        let h = h4 / 4;
        if vx.numel() != i || vs.shape() != [2 * h] || vwh.shape() != [h4, h] || vb.shape() != [h4] {
            return Err(Error::shape(
                "lstm_step",
                format!(
                    "x {:?}, state {:?}, w_ih {:?}, w_hh {:?}, b {:?}",
                    vx.shape(),
                    vs.shape(),
                    vwi.shape(),
                    vwh.shape(),
                    vb.shape()
                ),
            ));
        }
        let (hp, cp) = vs.data().split_at(h);
        let mut gates = vec![0.0; h4];
        for (g, gate) in gates.iter_mut().enumerate() {
            let wi = &vwi.data()[g * i..(g + 1) * i];
            let wh = &vwh.data()[g * h..(g + 1) * h];
            *gate = vb.data()[g]
                + wi.iter().zip(vx.data()).map(|(a, b)| a * b).sum::<f64>()
                + wh.iter().zip(hp).map(|(a, b)| a * b).sum::<f64>();
        }
        for g in 0..h4 {
            gates[g] = if (2 * h..3 * h).contains(&g) {
                gates[g].tanh()
            } else {
                sigmoid(gates[g])
            };
        }
        let mut out = vec![0.0; 2 * h];
        for u in 0..h {
            let (ig, fg, cg, og) = (gates[u], gates[h + u], gates[2 * h + u], gates[3 * h + u]);
            let c = fg * cp[u] + ig * cg;
            out[h + u] = c;
            out[u] = og * c.tanh();
        }
        let t = Tensor::new(&[2 * h], out)?;
        Ok(self.push(
            t,
            Op::LstmStep {
                x,
                state,
                w_ih,
                w_hh,
                b,
                gates,
            },
            &[x, state, w_ih, w_hh, b],
        ))
    }

    /// Cross-entropy of `softmax(logits)` against `label`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let v = &self.nodes[logits.0].value;
        if v.ndim() != 1 || label >= v.numel() {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!("logits {:?} with label {label}", v.shape()),
            ));
        }
        let probs = softmax(v.data());
        let loss = -probs[label].max(f64::MIN_POSITIVE).ln();
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCe {
                logits,
                label,
                probs,
            },
            &[logits],
        ))
    }

    // ---- backward ---------------------------------------------------------------

    /// Accumulate `d loss / d value` into every node the loss depends on.
    ///
    /// Replaces the gradients of any previous call.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lv = &self.nodes[loss.0].value;
        if lv.numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", lv.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::ones(lv.shape()));
        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.backprop_node(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Reduce a broadcast gradient back onto an operand's shape.
    fn unbroadcast(&self, v: Var, out_shape: &[usize], g: &[f64], map: impl Fn(usize) -> usize) -> Tensor {
        let shape = self.nodes[v.0].value.shape();
        if shape == out_shape {
            return Tensor::new(shape, g.to_vec()).expect("same shape");
        }
        let mut acc = Tensor::zeros(shape);
        for (k, gv) in g.iter().enumerate() {
            acc.data_mut()[map(k)] += gv;
        }
        acc
    }

    fn backprop_node(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[id];
        let out = &node.value;
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let (ia, ib): (Vec<usize>, Vec<usize>) = if va.shape() == vb.shape() {
                    ((0..out.numel()).collect(), (0..out.numel()).collect())
                } else {
                    let (_, ia, ib) = broadcast("backward", va.shape(), vb.shape())?;
                    (ia, ib)
                };
                let n = out.numel();
                let (mut ga, mut gb) = (vec![0.0; n], vec![0.0; n]);
                for k in 0..n {
                    let (x, y, gk) = (va.data()[ia[k]], vb.data()[ib[k]], g.data()[k]);
                    let (da, db) = match &node.op {
                        Op::Add(..) => (gk, gk),
                        Op::Sub(..) => (gk, -gk),
                        Op::Mul(..) => (gk * y, gk * x),
                        _ => (gk / y, -gk * x / (y * y)),
                    };
                    ga[k] = da;
                    gb[k] = db;
                }
                let ta = self.unbroadcast(*a, out.shape(), &ga, |k| ia[k]);
                let tb = self.unbroadcast(*b, out.shape(), &gb, |k| ib[k]);
                self.accumulate(grads, *a, ta);
                self.accumulate(grads, *b, tb);
            }
            Op::ScalarMul(x, s) => self.accumulate(grads, *x, g.map(|v| v * s)),
            Op::MatMul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let (nb, m, k, n) = match (va.shape(), vb.shape()) {
                    (&[m, k], &[_, n]) => (1, m, k, n),
                    (&[bb, m, k], &[_, _, n]) => (bb, m, k, n),
                    _ => unreachable!("validated in forward"),
                };
                let mut ga = vec![0.0; va.numel()];
                let mut gb = vec![0.0; vb.numel()];
                for bi in 0..nb {
                    let ad = &va.data()[bi * m * k..(bi + 1) * m * k];
                    let bd = &vb.data()[bi * k * n..(bi + 1) * k * n];
                    let gd = &g.data()[bi * m * n..(bi + 1) * m * n];
                    let gad = &mut ga[bi * m * k..(bi + 1) * m * k];
                    let gbd = &mut gb[bi * k * n..(bi + 1) * k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += gd[i * n + j] * bd[p * n + j];
                                gbd[p * n + j] += ad[i * k + p] * gd[i * n + j];
                            }
                            gad[i * k + p] += acc;
                        }
                    }
                }
                self.accumulate(grads, *a, Tensor::new(va.shape(), ga)?);
                self.accumulate(grads, *b, Tensor::new(vb.shape(), gb)?);
            }
            Op::Sum { x, .. } => {
                let vx = val(*x);
                let inner = vx.numel() / g.numel();
                let data = (0..vx.numel()).map(|k| g.data()[k / inner]).collect();
                self.accumulate(grads, *x, Tensor::new(vx.shape(), data)?);
            }
            Op::Mean(x) => {
                let vx = val(*x);
                let s = g.item() / vx.numel() as f64;
                self.accumulate(grads, *x, Tensor::full(vx.shape(), s));
            }
            Op::Sin(x) => {
                let d = val(*x).data().iter().zip(g.data()).map(|(v, gk)| gk * v.cos()).collect();
                self.accumulate(grads, *x, Tensor::new(out.shape(), d)?);
            }
            Op::Cos(x) => {
                let d = val(*x).data().iter().zip(g.data()).map(|(v, gk)| -gk * v.sin()).collect();
                self.accumulate(grads, *x, Tensor::new(out.shape(), d)?);
            }
            Op::Exp(x) => {
                let d = out.data().iter().zip(g.data()).map(|(y, gk)| gk * y).collect();
                self.accumulate(grads, *x, Tensor::new(out.shape(), d)?);
            }
            Op::Sqrt(x) => {
                let d = out
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(y, gk)| if *y > 0.0 { gk * 0.5 / y } else { 0.0 })
                    .collect();
                self.accumulate(grads, *x, Tensor::new(out.shape(), d)?);
            }
            Op::Relu(x) => {
                let d = val(*x)
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(v, gk)| if *v > 0.0 { *gk } else { 0.0 })
                    .collect();
                self.accumulate(grads, *x, Tensor::new(out.shape(), d)?);
            }
            Op::Clamp { x, lo, hi } => {
                let d = val(*x)
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(v, gk)| if v > lo && v < hi { *gk } else { 0.0 })
                    .collect();
                self.accumulate(grads, *x, Tensor::new(out.shape(), d)?);
            }
            Op::ArccosSafe(x) => {
                let lim = 1.0 - ARCCOS_EPS;
                let d = val(*x)
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(v, gk)| {
                        if *v > -lim && *v < lim {
                            -gk / (1.0 - v * v).sqrt()
                        } else {
                            0.0
                        }
                    })
                    .collect();
                self.accumulate(grads, *x, Tensor::new(out.shape(), d)?);
            }
            Op::FrobNorm { x, .. } => {
                let vx = val(*x);
                let inner = vx.numel() / out.numel();
                let d = (0..vx.numel())
                    .map(|k| {
                        let nrm = out.data()[k / inner];
                        if nrm > 0.0 {
                            g.data()[k / inner] * vx.data()[k] / nrm
                        } else {
                            0.0
                        }
                    })
                    .collect();
                self.accumulate(grads, *x, Tensor::new(vx.shape(), d)?);
            }
            Op::FrobInner { a, b, .. } => {
                let (va, vb) = (val(*a), val(*b));
                let inner = va.numel() / out.numel();
                let ga = (0..va.numel()).map(|k| g.data()[k / inner] * vb.data()[k]).collect();
                let gb = (0..va.numel()).map(|k| g.data()[k / inner] * va.data()[k]).collect();
                self.accumulate(grads, *a, Tensor::new(va.shape(), ga)?);
                self.accumulate(grads, *b, Tensor::new(vb.shape(), gb)?);
            }
            Op::Reshape(x) => {
                let t = Tensor::new(val(*x).shape(), g.data().to_vec())?;
                self.accumulate(grads, *x, t);
            }
            Op::Slice { x, axis, start } => {
                let vx = val(*x);
                let (outer, len, inner) = split_axis(vx.shape(), *axis);
                let w = out.shape()[*axis];
                let mut d = Tensor::zeros(vx.shape());
                for o in 0..outer {
                    let dst = o * len * inner + start * inner;
                    d.data_mut()[dst..dst + w * inner]
                        .copy_from_slice(&g.data()[o * w * inner..(o + 1) * w * inner]);
                }
                self.accumulate(grads, *x, d);
            }
            Op::Concat { xs, axis } => {
                let (outer, total, inner) = split_axis(out.shape(), *axis);
                let mut offset = 0;
                for v in xs {
                    let vs = val(*v);
                    let len = vs.shape()[*axis];
                    let mut d = Vec::with_capacity(vs.numel());
                    for o in 0..outer {
                        let src = o * total * inner + offset * inner;
                        d.extend_from_slice(&g.data()[src..src + len * inner]);
                    }
                    offset += len;
                    self.accumulate(grads, *v, Tensor::new(vs.shape(), d)?);
                }
            }
            Op::Conv1d { x, w, b } => {
                let (vx, vw) = (val(*x), val(*w));
                let (cin, cout, k) = (vx.shape()[1], vw.shape()[0], vw.shape()[2]);
                let lo = out.shape()[0];
                let mut gx = vec![0.0; vx.numel()];
                let mut gw = vec![0.0; vw.numel()];
                let mut gb = vec![0.0; cout];
                for t in 0..lo {
                    for o in 0..cout {
                        let gy = g.data()[t * cout + o];
                        if gy == 0.0 {
                            continue;
                        }
                        gb[o] += gy;
                        let wo = &vw.data()[o * cin * k..(o + 1) * cin * k];
                        let gwo = &mut gw[o * cin * k..(o + 1) * cin * k];
                        for j in 0..k {
                            let row = (t + j) * cin;
                            for c in 0..cin {
                                gwo[c * k + j] += gy * vx.data()[row + c];
                                gx[row + c] += gy * wo[c * k + j];
                            }
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::new(vx.shape(), gx)?);
                self.accumulate(grads, *w, Tensor::new(vw.shape(), gw)?);
                self.accumulate(grads, *b, Tensor::new(&[cout], gb)?);
            }
            Op::MaxPool1d { x, argmax } => {
                let mut d = Tensor::zeros(val(*x).shape());
                for (k, &src) in argmax.iter().enumerate() {
                    d.data_mut()[src] += g.data()[k];
                }
                self.accumulate(grads, *x, d);
            }
            Op::Linear { x, w, b } => {
                let (vx, vw) = (val(*x), val(*w));
                let (o, i) = (vw.shape()[0], vw.shape()[1]);
                let rows = vx.numel() / i;
                let mut gx = vec![0.0; vx.numel()];
                let mut gw = vec![0.0; vw.numel()];
                let mut gb = vec![0.0; o];
                for r in 0..rows {
                    let xr = &vx.data()[r * i..(r + 1) * i];
                    for oi in 0..o {
                        let gy = g.data()[r * o + oi];
                        gb[oi] += gy;
                        for c in 0..i {
                            gw[oi * i + c] += gy * xr[c];
                            gx[r * i + c] += gy * vw.data()[oi * i + c];
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::new(vx.shape(), gx)?);
                self.accumulate(grads, *w, Tensor::new(vw.shape(), gw)?);
                self.accumulate(grads, *b, Tensor::new(&[o], gb)?);
            }
            Op::LstmStep {
                x,
                state,
                w_ih,
                w_hh,
                b,
                gates,
            } => {
                let (vx, vs, vwi, vwh) = (val(*x), val(*state), val(*w_ih), val(*w_hh));
                let i = vx.numel();
                let h = vs.numel() / 2;
                let (hp, cp) = vs.data().split_at(h);
                let (gh, gc_direct) = g.data().split_at(h);
                let c_new = &out.data()[h..];
                let mut da = vec![0.0; 4 * h];
                let mut gstate = vec![0.0; 2 * h];
                for u in 0..h {
                    let (ig, fg, cg, og) = (gates[u], gates[h + u], gates[2 * h + u], gates[3 * h + u]);
                    let tc = c_new[u].tanh();
                    let d_o = gh[u] * tc;
                    let dc = gc_direct[u] + gh[u] * og * (1.0 - tc * tc);
                    gstate[h + u] = dc * fg;
                    da[u] = dc * cg * ig * (1.0 - ig);
                    da[h + u] = dc * cp[u] * fg * (1.0 - fg);
                    da[2 * h + u] = dc * ig * (1.0 - cg * cg);
                    da[3 * h + u] = d_o * og * (1.0 - og);
                }
                let mut gx = vec![0.0; i];
                let mut gwi = vec![0.0; vwi.numel()];
                let mut gwh = vec![0.0; vwh.numel()];
                for (gi, &dg) in da.iter().enumerate() {
                    for c in 0..i {
                        gwi[gi * i + c] += dg * vx.data()[c];
                        gx[c] += dg * vwi.data()[gi * i + c];
                    }
                    for u in 0..h {
                        gwh[gi * h + u] += dg * hp[u];
                        gstate[u] += dg * vwh.data()[gi * h + u];
                    }
                }
                self.accumulate(grads, *x, Tensor::new(vx.shape(), gx)?);
                self.accumulate(grads, *state, Tensor::new(vs.shape(), gstate)?);
                self.accumulate(grads, *w_ih, Tensor::new(vwi.shape(), gwi)?);
                self.accumulate(grads, *w_hh, Tensor::new(vwh.shape(), gwh)?);
                self.accumulate(grads, *b, Tensor::new(&[4 * h], da)?);
            }
            Op::SoftmaxCe {
                logits,
                label,
                probs,
            } => {
                let gk = g.item();
                let d = probs
                    .iter()
                    .enumerate()
                    .map(|(k, p)| gk * (p - if k == *label { 1.0 } else { 0.0 }))
                    .collect();
                self.accumulate(grads, *logits, Tensor::new(&[probs.len()], d)?);
            }
        }
        Ok(())
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Logistic function, evaluated without overflow.
pub fn logistic(x: f64) -> f64 {
    sigmoid(x)
}
