//! Reverse-mode automatic differentiation on a Wengert tape.
//!
//! Each builder method validates shapes, evaluates the operation eagerly, and
//! records it. Node ids are indices into the tape, so inputs always precede
//! outputs and [`Tape::backward`] can walk the ops once in reverse creation
//! order. [`Tape::replay`] re-runs every recorded op through the same
//! evaluation code, which makes replay bit-exact by construction.

use std::collections::BTreeMap;

use super::array::RealArray;
use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `y = x W^T + b` for `x: [n]` or `[B, n]`, `w: [m, n]`, `b: [m]`.
    Dense {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    /// Valid cross-correlation, `img: [C, H, W]`, `kern: [O, C, kh, kw]`.
    Conv2d {
        img: NodeId,
        kern: NodeId,
        stride: usize,
    },
    LeakyRelu {
        x: NodeId,
        slope: f64,
    },
    Tanh {
        x: NodeId,
    },
    Exp {
        x: NodeId,
    },
    Neg {
        x: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Sub {
        a: NodeId,
        b: NodeId,
    },
    Mul {
        a: NodeId,
        b: NodeId,
    },
    Scale {
        x: NodeId,
        c: f64,
    },
    AddConst {
        x: NodeId,
        c: f64,
    },
    /// `y = x + coeff * s` with `s` a scalar node broadcast over `x`.
    AddScalarNode {
        x: NodeId,
        s: NodeId,
        coeff: f64,
    },
    /// Row-wise broadcast product, `x: [B, n]`, `v: [n]`.
    MulRow {
        x: NodeId,
        v: NodeId,
    },
    /// `[B, n] -> [B]`.
    RowSum {
        x: NodeId,
    },
    Sum {
        x: NodeId,
    },
    Mean {
        x: NodeId,
    },
    /// 1-D concatenation.
    Concat {
        parts: Vec<NodeId>,
    },
    /// Scalars stacked into a 1-D vector.
    Stack {
        parts: Vec<NodeId>,
    },
    /// 1-D contiguous slice.
    Slice {
        x: NodeId,
        start: usize,
        len: usize,
    },
    /// Numerically stable softmax over a 1-D vector.
    Softmax {
        x: NodeId,
    },
    /// Numerically stable log-softmax over each row of `[B, n]`.
    LogSoftmaxRows {
        x: NodeId,
    },
    /// `y[r] = x[r, idx[r]]`.
    GatherRows {
        x: NodeId,
        idx: Vec<usize>,
    },
    Clamp {
        x: NodeId,
        lo: f64,
        hi: f64,
    },
    /// Elementwise minimum; ties route the gradient to `a`.
    MinElem {
        a: NodeId,
        b: NodeId,
    },
    /// Inner product of two equal-length vectors.
    Dot {
        a: NodeId,
        b: NodeId,
    },
    /// `y = x * s` with `s` a scalar node.
    ScaleBy {
        x: NodeId,
        s: NodeId,
    },
    Reshape {
        x: NodeId,
        shape: Vec<usize>,
    },
}

pub struct Tape {
    ops: Vec<Op>,
    vals: Vec<RealArray>,
    names: Vec<Option<String>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            ops: Vec::new(),
            vals: Vec::new(),
            names: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &RealArray {
        &self.vals[id]
    }

    fn push(&mut self, op: Op, val: RealArray, name: Option<String>) -> NodeId {
        self.ops.push(op);
        self.vals.push(val);
        self.names.push(name);
        self.ops.len() - 1
    }

    /// Constant input; receives no gradient entry in the named map.
    pub fn leaf(&mut self, val: RealArray) -> NodeId {
        self.push(Op::Leaf, val, None)
    }

    /// Named parameter leaf; its gradient appears in the map returned by
    /// [`Tape::backward`].
    pub fn param(&mut self, name: &str, val: RealArray) -> NodeId {
        self.push(Op::Leaf, val, Some(name.to_string()))
    }

    // ── op builders ──────────────────────────────────────────────────

    pub fn dense(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let (xs, ws) = (self.vals[x].shape(), self.vals[w].shape());
        if ws.len() != 2 {
            return Err(Error::shape(format!("dense weight must be 2-D, got {ws:?}")));
        }
        let (m, n) = (ws[0], ws[1]);
        let ok = match xs.len() {
            1 => xs[0] == n,
            2 => xs[1] == n,
            _ => false,
        };
        if !ok {
            return Err(Error::shape(format!(
                "dense input {xs:?} incompatible with weight {ws:?}"
            )));
        }
        if let Some(b) = b {
            let bs = self.vals[b].shape();
            if bs != [m] {
                return Err(Error::shape(format!(
                    "dense bias {bs:?} incompatible with weight {ws:?}"
                )));
            }
        }
        let op = Op::Dense { x, w, b };
        let val = self.eval(&op);
        Ok(self.push(op, val, None))
    }

    pub fn conv2d(&mut self, img: NodeId, kern: NodeId, stride: usize) -> Result<NodeId> {
        let (is, ks) = (self.vals[img].shape(), self.vals[kern].shape());
        if is.len() != 3 || ks.len() != 4 {
            return Err(Error::shape(format!(
                "conv2d wants img [C,H,W] and kernels [O,C,kh,kw], got {is:?} and {ks:?}"
            )));
        }
        if stride == 0 {
            return Err(Error::contract("conv2d stride must be positive"));
        }
        let (c, h, w) = (is[0], is[1], is[2]);
        let (kc, kh, kw) = (ks[1], ks[2], ks[3]);
        if kc != c || kh > h || kw > w {
            return Err(Error::shape(format!(
                "conv2d kernels {ks:?} do not fit image {is:?}"
            )));
        }
        let op = Op::Conv2d { img, kern, stride };
        let val = self.eval(&op);
        Ok(self.push(op, val, None))
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        let op = Op::LeakyRelu { x, slope };
        let val = self.eval(&op);
        self.push(op, val, None)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let op = Op::Tanh { x };
        let val = self.eval(&op);
        self.push(op, val, None)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let op = Op::Exp { x };
        let val = self.eval(&op);
        self.push(op, val, None)
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        let op = Op::Neg { x };
        let val = self.eval(&op);
        self.push(op, val, None)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let op = Op::Add { a, b };
        let val = self.eval(&op);
        Ok(self.push(op, val, None))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let op = Op::Sub { a, b };
        let val = self.eval(&op);
        Ok(self.push(op, val, None))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let op = Op::Mul { a, b };
        let val = self.eval(&op);
        Ok(self.push(op, val, None))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let op = Op::Scale { x, c };
        let val = self.eval(&op);
        self.push(op, val, None)
    }

    pub fn add_const(&mut self, x: NodeId, c: f64) -> NodeId {
        let op = Op::AddConst { x, c };
        let val = self.eval(&op);
        self.push(op, val, None)
    }

    pub fn add_scalar_node(&mut self, x: NodeId, s: NodeId, coeff: f64) -> Result<NodeId> {
        if !self.vals[s].is_scalar() {
            return Err(Error::shape("add_scalar_node wants a scalar second input"));
        }
        let op = Op::AddScalarNode { x, s, coeff };
        let val = self.eval(&op);
        Ok(self.push(op, val, None))
    }

    pub fn mul_row(&mut self, x: NodeId, v: NodeId) -> Result<NodeId> {
        let (xs, vs) = (self.vals[x].shape(), self.vals[v].shape());
        if xs.len() != 2 || vs.len() != 1 || xs[1] != vs[0] {
            return Err(Error::shape(format!(
                "mul_row wants [B,n] and [n], got {xs:?} and {vs:?}"
            )));
        }
        let op = Op::MulRow { x, v };
        let val = self.eval(&op);
        Ok(self.push(op, val, None))
    }

    pub fn row_sum(&mut self, x: NodeId) -> Result<NodeId> {
        if self.vals[x].shape().len() != 2 {
            return Err(Error::shape("row_sum wants a 2-D input"));
        }
        let op = Op::RowSum { x };
        let val = self.eval(&op);
        Ok(self.push(op, val, None))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let op = Op::Sum { x };
        let val = self.eval(&op);
        self.push(op, val, None)
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let op = Op::Mean { x };
        let val = self.eval(&op);
        self.push(op, val, None)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::contract("concat of zero parts"));
        }
        for &p in parts {
            if self.vals[p].shape().len() != 1 {
                return Err(Error::shape("concat wants 1-D parts"));
            }
        }
        let op = Op::Concat { parts: parts.to_vec() };
        let val = self.eval(&op);
        Ok(self.push(op, val, None))
    }

    pub fn stack(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::contract("stack of zero parts"));
        }
        for &p in parts {
            if !self.vals[p].is_scalar() {
                return Err(Error::shape("stack wants scalar parts"));
            }
        }
        let op = Op::Stack { parts: parts.to_vec() };
        let val = self.eval(&op);
        Ok(self.push(op, val, None))
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let xs = self.vals[x].shape();
        if xs.len() != 1 || start + len > xs[0] || len == 0 {
            return Err(Error::shape(format!(
                "slice [{start}, {start}+{len}) out of bounds for {xs:?}"
            )));
        }
        let op = Op::Slice { x, start, len };
        let val = self.eval(&op);
        Ok(self.push(op, val, None))
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        if self.vals[x].shape().len() != 1 {
            return Err(Error::shape("softmax wants a 1-D input"));
        }
        let op = Op::Softmax { x };
        let val = self.eval(&op);
        Ok(self.push(op, val, None))
    }

    pub fn log_softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        if self.vals[x].shape().len() != 2 {
            return Err(Error::shape("log_softmax_rows wants a 2-D input"));
        }
        let op = Op::LogSoftmaxRows { x };
        let val = self.eval(&op);
        Ok(self.push(op, val, None))
    }

    pub fn gather_rows(&mut self, x: NodeId, idx: Vec<usize>) -> Result<NodeId> {
        let xs = self.vals[x].shape();
        if xs.len() != 2 || idx.len() != xs[0] {
            return Err(Error::shape(format!(
                "gather_rows wants [B,n] with B indices, got {xs:?} and {} indices",
                idx.len()
            )));
        }
        if idx.iter().any(|&i| i >= xs[1]) {
            return Err(Error::contract("gather_rows index out of range"));
        }
        let op = Op::GatherRows { x, idx };
        let val = self.eval(&op);
        Ok(self.push(op, val, None))
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let op = Op::Clamp { x, lo, hi };
        let val = self.eval(&op);
        self.push(op, val, None)
    }

    pub fn min_elem(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("min_elem", a, b)?;
        let op = Op::MinElem { a, b };
        let val = self.eval(&op);
        Ok(self.push(op, val, None))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.vals[a].shape(), self.vals[b].shape());
        if sa.len() != 1 || sa != sb {
            return Err(Error::shape(format!("dot wants equal 1-D shapes, got {sa:?} and {sb:?}")));
        }
        let op = Op::Dot { a, b };
        let val = self.eval(&op);
        Ok(self.push(op, val, None))
    }

    pub fn scale_by(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        if !self.vals[s].is_scalar() {
            return Err(Error::shape("scale_by wants a scalar second input"));
        }
        let op = Op::ScaleBy { x, s };
        let val = self.eval(&op);
        Ok(self.push(op, val, None))
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let n: usize = shape.iter().product();
        if shape.is_empty() || n != self.vals[x].len() {
            return Err(Error::shape(format!(
                "reshape to {shape:?} from {:?}",
                self.vals[x].shape()
            )));
        }
        let op = Op::Reshape { x, shape };
        let val = self.eval(&op);
        Ok(self.push(op, val, None))
    }

    fn same_shape(&self, what: &str, a: NodeId, b: NodeId) -> Result<()> {
        if self.vals[a].shape() != self.vals[b].shape() {
            return Err(Error::shape(format!(
                "{what} wants equal shapes, got {:?} and {:?}",
                self.vals[a].shape(),
                self.vals[b].shape()
            )));
        }
        Ok(())
    }

    // ── forward evaluation ───────────────────────────────────────────

    fn eval(&self, op: &Op) -> RealArray {
        match *op {
            Op::Leaf => unreachable!("leaves are stored, not evaluated"),
            Op::Dense { x, w, b } => {
                let xv = &self.vals[x];
                let wv = &self.vals[w];
                let (m, n) = (wv.shape()[0], wv.shape()[1]);
                let bias = b.map(|b| self.vals[b].data());
                if xv.shape().len() == 1 {
                    let mut out = vec![0.0; m];
                    for i in 0..m {
                        let row = &wv.data()[i * n..(i + 1) * n];
                        let mut acc = 0.0;
                        for k in 0..n {
                            acc += row[k] * xv.data()[k];
                        }
                        out[i] = acc + bias.map_or(0.0, |bv| bv[i]);
                    }
                    RealArray::new(vec![m], out).unwrap()
                } else {
                    let rows = xv.shape()[0];
                    let mut out = vec![0.0; rows * m];
                    for r in 0..rows {
                        let xr = &xv.data()[r * n..(r + 1) * n];
                        for i in 0..m {
                            let wr = &wv.data()[i * n..(i + 1) * n];
                            let mut acc = 0.0;
                            for k in 0..n {
                                acc += wr[k] * xr[k];
                            }
                            out[r * m + i] = acc + bias.map_or(0.0, |bv| bv[i]);
                        }
                    }
                    RealArray::new(vec![rows, m], out).unwrap()
                }
            }
            Op::Conv2d { img, kern, stride } => {
                let iv = &self.vals[img];
                let kv = &self.vals[kern];
                let (c, h, w) = (iv.shape()[0], iv.shape()[1], iv.shape()[2]);
                let (o, kh, kw) = (kv.shape()[0], kv.shape()[2], kv.shape()[3]);
                let oh = (h - kh) / stride + 1;
                let ow = (w - kw) / stride + 1;
                let mut out = vec![0.0; o * oh * ow];
                for oc in 0..o {
                    for i in 0..oh {
                        for j in 0..ow {
                            let mut acc = 0.0;
                            for ic in 0..c {
                                for p in 0..kh {
                                    for q in 0..kw {
                                        let iy = i * stride + p;
                                        let ix = j * stride + q;
                                        acc += iv.data()[(ic * h + iy) * w + ix]
                                            * kv.data()[((oc * c + ic) * kh + p) * kw + q];
                                    }
                                }
                            }
                            out[(oc * oh + i) * ow + j] = acc;
                        }
                    }
                }
                RealArray::new(vec![o, oh, ow], out).unwrap()
            }
            Op::LeakyRelu { x, slope } => self.map(x, |v| if v >= 0.0 { v } else { slope * v }),
            Op::Tanh { x } => self.map(x, f64::tanh),
            Op::Exp { x } => self.map(x, f64::exp),
            Op::Neg { x } => self.map(x, |v| -v),
            Op::Add { a, b } => self.zip(a, b, |x, y| x + y),
            Op::Sub { a, b } => self.zip(a, b, |x, y| x - y),
            Op::Mul { a, b } => self.zip(a, b, |x, y| x * y),
            Op::Scale { x, c } => self.map(x, |v| c * v),
            Op::AddConst { x, c } => self.map(x, |v| v + c),
            Op::AddScalarNode { x, s, coeff } => {
                let sv = self.vals[s].item();
                self.map(x, |v| v + coeff * sv)
            }
            Op::MulRow { x, v } => {
                let xv = &self.vals[x];
                let vv = self.vals[v].data();
                let (rows, n) = (xv.shape()[0], xv.shape()[1]);
                let mut out = xv.data().to_vec();
                for r in 0..rows {
                    for i in 0..n {
                        out[r * n + i] *= vv[i];
                    }
                }
                RealArray::new(vec![rows, n], out).unwrap()
            }
            Op::RowSum { x } => {
                let xv = &self.vals[x];
                let (rows, n) = (xv.shape()[0], xv.shape()[1]);
                let mut out = vec![0.0; rows];
                for r in 0..rows {
                    out[r] = xv.data()[r * n..(r + 1) * n].iter().sum();
                }
                RealArray::new(vec![rows], out).unwrap()
            }
            Op::Sum { x } => RealArray::scalar(self.vals[x].data().iter().sum()),
            Op::Mean { x } => {
                let v = &self.vals[x];
                RealArray::scalar(v.data().iter().sum::<f64>() / v.len() as f64)
            }
            Op::Concat { ref parts } => {
                let mut out = Vec::new();
                for &p in parts {
                    out.extend_from_slice(self.vals[p].data());
                }
                RealArray::vector(out)
            }
            Op::Stack { ref parts } => {
                RealArray::vector(parts.iter().map(|&p| self.vals[p].item()).collect())
            }
            Op::Slice { x, start, len } => {
                RealArray::vector(self.vals[x].data()[start..start + len].to_vec())
            }
            Op::Softmax { x } => {
                let v = self.vals[x].data();
                RealArray::vector(softmax_stable(v))
            }
            Op::LogSoftmaxRows { x } => {
                let xv = &self.vals[x];
                let (rows, n) = (xv.shape()[0], xv.shape()[1]);
                let mut out = vec![0.0; rows * n];
                for r in 0..rows {
                    let row = &xv.data()[r * n..(r + 1) * n];
                    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                    for i in 0..n {
                        out[r * n + i] = row[i] - lse;
                    }
                }
                RealArray::new(vec![rows, n], out).unwrap()
            }
            Op::GatherRows { x, ref idx } => {
                let xv = &self.vals[x];
                let n = xv.shape()[1];
                RealArray::vector(idx.iter().enumerate().map(|(r, &i)| xv.data()[r * n + i]).collect())
            }
            Op::Clamp { x, lo, hi } => self.map(x, |v| v.clamp(lo, hi)),
            Op::MinElem { a, b } => self.zip(a, b, |x, y| if x <= y { x } else { y }),
            Op::Dot { a, b } => {
                let (av, bv) = (self.vals[a].data(), self.vals[b].data());
                RealArray::scalar(av.iter().zip(bv).map(|(x, y)| x * y).sum())
            }
            Op::ScaleBy { x, s } => {
                let sv = self.vals[s].item();
                self.map(x, |v| v * sv)
            }
            Op::Reshape { x, ref shape } => {
                RealArray::new(shape.clone(), self.vals[x].data().to_vec()).unwrap()
            }
        }
    }

    fn map(&self, x: NodeId, f: impl Fn(f64) -> f64) -> RealArray {
        let v = &self.vals[x];
        RealArray::new(v.shape().to_vec(), v.data().iter().map(|&t| f(t)).collect()).unwrap()
    }

    fn zip(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> RealArray {
        let (av, bv) = (&self.vals[a], &self.vals[b]);
        RealArray::new(
            av.shape().to_vec(),
            av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect(),
        )
        .unwrap()
    }

    /// Re-executes every recorded op and returns the recomputed values.
    /// Leaves are copied as stored; everything else goes through the same
    /// evaluation code used at record time.
    pub fn replay(&self) -> Vec<RealArray> {
        let mut tape = Tape {
            ops: Vec::with_capacity(self.ops.len()),
            vals: Vec::with_capacity(self.ops.len()),
            names: Vec::new(),
        };
        for (id, op) in self.ops.iter().enumerate() {
            let val = match op {
                Op::Leaf => self.vals[id].clone(),
                _ => tape.eval(op),
            };
            tape.ops.push(op.clone());
            tape.vals.push(val);
        }
        tape.vals
    }

    // ── reverse pass ─────────────────────────────────────────────────

    /// Accumulates gradients of a scalar `loss` with respect to every named
    /// parameter on the tape. The map contains one entry per distinct
    /// parameter name; parameters the loss never touches get zero gradients.
    pub fn backward(&self, loss: NodeId) -> Result<BTreeMap<String, RealArray>> {
        if !self.vals[loss].is_scalar() {
            return Err(Error::contract(format!(
                "backward wants a scalar loss, got shape {:?}",
                self.vals[loss].shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.ops.len()];
        grads[loss] = Some(vec![1.0]);

        for id in (0..=loss).rev() {
            let dy = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate(id, &dy, &mut grads);
            if self.names[id].is_some() {
                grads[id] = Some(dy);
            }
        }

        let mut out = BTreeMap::new();
        for (id, name) in self.names.iter().enumerate() {
            if let Some(name) = name {
                let g = grads[id]
                    .take()
                    .unwrap_or_else(|| vec![0.0; self.vals[id].len()]);
                let arr = RealArray::new(self.vals[id].shape().to_vec(), g)?;
                match out.entry(name.clone()) {
                    std::collections::btree_map::Entry::Vacant(e) => {
                        e.insert(arr);
                    }
                    std::collections::btree_map::Entry::Occupied(mut e) => {
                        // The same parameter may be registered once and used
                        // from several subgraphs; later registrations under
                        // the same name fold into one gradient.
                        let acc = e.get_mut();
                        for (a, b) in acc.data_mut().iter_mut().zip(arr.data()) {
                            *a += b;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn accumulate(&self, id: NodeId, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut bump = |node: NodeId, f: &mut dyn FnMut(&mut [f64])| {
            let g = grads[node].get_or_insert_with(|| vec![0.0; self.vals[node].len()]);
            f(g);
        };
        match self.ops[id] {
            Op::Leaf => {}
            Op::Dense { x, w, b } => {
                let xv = &self.vals[x];
                let wv = &self.vals[w];
                let (m, n) = (wv.shape()[0], wv.shape()[1]);
                if xv.shape().len() == 1 {
                    bump(w, &mut |g| {
                        for i in 0..m {
                            for k in 0..n {
                                g[i * n + k] += dy[i] * xv.data()[k];
                            }
                        }
                    });
                    bump(x, &mut |g| {
                        for k in 0..n {
                            let mut acc = 0.0;
                            for i in 0..m {
                                acc += dy[i] * wv.data()[i * n + k];
                            }
                            g[k] += acc;
                        }
                    });
                    if let Some(b) = b {
                        bump(b, &mut |g| {
                            for i in 0..m {
                                g[i] += dy[i];
                            }
                        });
                    }
                } else {
                    let rows = xv.shape()[0];
                    bump(w, &mut |g| {
                        for r in 0..rows {
                            for i in 0..m {
                                let d = dy[r * m + i];
                                for k in 0..n {
                                    g[i * n + k] += d * xv.data()[r * n + k];
                                }
                            }
                        }
                    });
                    bump(x, &mut |g| {
                        for r in 0..rows {
                            for i in 0..m {
                                let d = dy[r * m + i];
                                for k in 0..n {
                                    g[r * n + k] += d * wv.data()[i * n + k];
                                }
                            }
                        }
                    });
                    if let Some(b) = b {
                        bump(b, &mut |g| {
                            for r in 0..rows {
                                for i in 0..m {
                                    g[i] += dy[r * m + i];
                                }
                            }
                        });
                    }
                }
            }
            Op::Conv2d { img, kern, stride } => {
                let iv = &self.vals[img];
                let kv = &self.vals[kern];
                let (c, h, w) = (iv.shape()[0], iv.shape()[1], iv.shape()[2]);
                let (o, kh, kw) = (kv.shape()[0], kv.shape()[2], kv.shape()[3]);
                let oh = (h - kh) / stride + 1;
                let ow = (w - kw) / stride + 1;
                bump(kern, &mut |g| {
                    for oc in 0..o {
                        for i in 0..oh {
                            for j in 0..ow {
                                let d = dy[(oc * oh + i) * ow + j];
                                for ic in 0..c {
                                    for p in 0..kh {
                                        for q in 0..kw {
                                            g[((oc * c + ic) * kh + p) * kw + q] +=
                                                d * iv.data()[(ic * h + i * stride + p) * w
                                                    + j * stride
                                                    + q];
                                        }
                                    }
                                }
                            }
                        }
                    }
                });
                bump(img, &mut |g| {
                    for oc in 0..o {
                        for i in 0..oh {
                            for j in 0..ow {
                                let d = dy[(oc * oh + i) * ow + j];
                                for ic in 0..c {
                                    for p in 0..kh {
                                        for q in 0..kw {
                                            g[(ic * h + i * stride + p) * w + j * stride + q] +=
                                                d * kv.data()[((oc * c + ic) * kh + p) * kw + q];
                                        }
                                    }
                                }
                            }
                        }
                    }
                });
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.vals[x].data();
                bump(x, &mut |g| {
                    for (i, gi) in g.iter_mut().enumerate() {
                        *gi += dy[i] * if xv[i] >= 0.0 { 1.0 } else { slope };
                    }
                });
            }
            Op::Tanh { x } => {
                let yv = self.vals[id].data();
                bump(x, &mut |g| {
                    for (i, gi) in g.iter_mut().enumerate() {
                        *gi += dy[i] * (1.0 - yv[i] * yv[i]);
                    }
                });
            }
            Op::Exp { x } => {
                let yv = self.vals[id].data();
                bump(x, &mut |g| {
                    for (i, gi) in g.iter_mut().enumerate() {
                        *gi += dy[i] * yv[i];
                    }
                });
            }
            Op::Neg { x } => bump(x, &mut |g| {
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi -= dy[i];
                }
            }),
            Op::Add { a, b } => {
                bump(a, &mut |g| {
                    for (i, gi) in g.iter_mut().enumerate() {
                        *gi += dy[i];
                    }
                });
                bump(b, &mut |g| {
                    for (i, gi) in g.iter_mut().enumerate() {
                        *gi += dy[i];
                    }
                });
            }
            Op::Sub { a, b } => {
                bump(a, &mut |g| {
                    for (i, gi) in g.iter_mut().enumerate() {
                        *gi += dy[i];
                    }
                });
                bump(b, &mut |g| {
                    for (i, gi) in g.iter_mut().enumerate() {
                        *gi -= dy[i];
                    }
                });
            }
            Op::Mul { a, b } => {
                let (av, bv) = (self.vals[a].data(), self.vals[b].data());
                bump(a, &mut |g| {
                    for (i, gi) in g.iter_mut().enumerate() {
                        *gi += dy[i] * bv[i];
                    }
                });
                bump(b, &mut |g| {
                    for (i, gi) in g.iter_mut().enumerate() {
                        *gi += dy[i] * av[i];
                    }
                });
            }
            Op::Scale { x, c } => bump(x, &mut |g| {
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi += dy[i] * c;
                }
            }),
            Op::AddConst { x, .. } => bump(x, &mut |g| {
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi += dy[i];
                }
            }),
            Op::AddScalarNode { x, s, coeff } => {
                bump(x, &mut |g| {
                    for (i, gi) in g.iter_mut().enumerate() {
                        *gi += dy[i];
                    }
                });
                let total: f64 = dy.iter().sum();
                bump(s, &mut |g| g[0] += coeff * total);
            }
            Op::MulRow { x, v } => {
                let xv = &self.vals[x];
                let vv = self.vals[v].data();
                let (rows, n) = (xv.shape()[0], xv.shape()[1]);
                bump(x, &mut |g| {
                    for r in 0..rows {
                        for i in 0..n {
                            g[r * n + i] += dy[r * n + i] * vv[i];
                        }
                    }
                });
                bump(v, &mut |g| {
                    for r in 0..rows {
                        for i in 0..n {
                            g[i] += dy[r * n + i] * xv.data()[r * n + i];
                        }
                    }
                });
            }
            Op::RowSum { x } => {
                let n = self.vals[x].shape()[1];
                bump(x, &mut |g| {
                    for (r, d) in dy.iter().enumerate() {
                        for i in 0..n {
                            g[r * n + i] += d;
                        }
                    }
                });
            }
            Op::Sum { x } => bump(x, &mut |g| {
                for gi in g.iter_mut() {
                    *gi += dy[0];
                }
            }),
            Op::Mean { x } => {
                let inv = 1.0 / self.vals[x].len() as f64;
                bump(x, &mut |g| {
                    for gi in g.iter_mut() {
                        *gi += dy[0] * inv;
                    }
                });
            }
            Op::Concat { ref parts } => {
                let mut off = 0;
                for &p in parts {
                    let len = self.vals[p].len();
                    bump(p, &mut |g| {
                        for i in 0..len {
                            g[i] += dy[off + i];
                        }
                    });
                    off += len;
                }
            }
            Op::Stack { ref parts } => {
                for (i, &p) in parts.iter().enumerate() {
                    bump(p, &mut |g| g[0] += dy[i]);
                }
            }
            Op::Slice { x, start, len } => bump(x, &mut |g| {
                for i in 0..len {
                    g[start + i] += dy[i];
                }
            }),
            Op::Softmax { x } => {
                let yv = self.vals[id].data();
                let inner: f64 = yv.iter().zip(dy).map(|(y, d)| y * d).sum();
                bump(x, &mut |g| {
                    for (i, gi) in g.iter_mut().enumerate() {
                        *gi += yv[i] * (dy[i] - inner);
                    }
                });
            }
            Op::LogSoftmaxRows { x } => {
                let yv = self.vals[id].data();
                let n = self.vals[x].shape()[1];
                let rows = self.vals[x].shape()[0];
                bump(x, &mut |g| {
                    for r in 0..rows {
                        let dsum: f64 = dy[r * n..(r + 1) * n].iter().sum();
                        for i in 0..n {
                            g[r * n + i] += dy[r * n + i] - yv[r * n + i].exp() * dsum;
                        }
                    }
                });
            }
            Op::GatherRows { x, ref idx } => {
                let n = self.vals[x].shape()[1];
                bump(x, &mut |g| {
                    for (r, &i) in idx.iter().enumerate() {
                        g[r * n + i] += dy[r];
                    }
                });
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.vals[x].data();
                bump(x, &mut |g| {
                    for (i, gi) in g.iter_mut().enumerate() {
                        if xv[i] >= lo && xv[i] <= hi {
                            *gi += dy[i];
                        }
                    }
                });
            }
            Op::MinElem { a, b } => {
                let (av, bv) = (self.vals[a].data(), self.vals[b].data());
                bump(a, &mut |g| {
                    for (i, gi) in g.iter_mut().enumerate() {
                        if av[i] <= bv[i] {
                            *gi += dy[i];
                        }
                    }
                });
                bump(b, &mut |g| {
                    for (i, gi) in g.iter_mut().enumerate() {
                        if av[i] > bv[i] {
                            *gi += dy[i];
                        }
                    }
                });
            }
            Op::Dot { a, b } => {
                let (av, bv) = (self.vals[a].data(), self.vals[b].data());
                bump(a, &mut |g| {
                    for (i, gi) in g.iter_mut().enumerate() {
                        *gi += dy[0] * bv[i];
                    }
                });
                bump(b, &mut |g| {
                    for (i, gi) in g.iter_mut().enumerate() {
                        *gi += dy[0] * av[i];
                    }
                });
            }
            Op::ScaleBy { x, s } => {
                let sv = self.vals[s].item();
                let xv = self.vals[x].data();
                bump(x, &mut |g| {
                    for (i, gi) in g.iter_mut().enumerate() {
                        *gi += dy[i] * sv;
                    }
                });
                let total: f64 = dy.iter().zip(xv).map(|(d, x)| d * x).sum();
                bump(s, &mut |g| g[0] += total);
            }
            Op::Reshape { x, .. } => bump(x, &mut |g| {
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi += dy[i];
                }
            }),
        }
    }
}

/// Max-subtracted softmax of a 1-D slice.
pub fn softmax_stable(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|&x| (x - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(actual: &[f64], expected: &[f64], tol: f64, what: &str) {
        assert_eq!(actual.len(), expected.len(), "{what}: length mismatch");
        for (i, (&a, &e)) in actual.iter().zip(expected).enumerate() {
            assert!(
                (a - e).abs() <= tol,
                "{what}[{i}]: {a} vs {e} (diff {})",
                (a - e).abs()
            );
        }
    }

    #[test]
    fn dense_identity_passes_input_through() {
        let mut t = Tape::new();
        let x = t.leaf(RealArray::vector(vec![1.5, -2.0, 0.25]));
        let w = t.leaf(RealArray::new(vec![3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap());
        let b = t.leaf(RealArray::vector(vec![0.0; 3]));
        let y = t.dense(x, w, Some(b)).unwrap();
        assert_close(t.value(y).data(), &[1.5, -2.0, 0.25], 0.0, "identity dense");
    }

    #[test]
    fn dense_matches_scalar_loop_oracle() {
        let w = RealArray::new(vec![4, 3], (0..12).map(|i| (i as f64) * 0.3 - 1.7).collect()).unwrap();
        let x = RealArray::vector(vec![0.4, -1.2, 2.5]);
        let b = RealArray::vector(vec![0.1, -0.2, 0.3, -0.4]);
        let mut expected = vec![0.0; 4];
        for i in 0..4 {
            let mut acc = b.data()[i];
            for k in 0..3 {
                acc += w.data()[i * 3 + k] * x.data()[k];
            }
            expected[i] = acc;
        }
        let mut t = Tape::new();
        let (xn, wn, bn) = (t.leaf(x), t.leaf(w), t.leaf(b));
        let y = t.dense(xn, wn, Some(bn)).unwrap();
        assert_close(t.value(y).data(), &expected, 1e-15, "dense vs loop");
    }

    #[test]
    fn dense_rejects_mismatched_shapes() {
        let mut t = Tape::new();
        let x = t.leaf(RealArray::vector(vec![1.0, 2.0]));
        let w = t.leaf(RealArray::new(vec![2, 3], vec![0.0; 6]).unwrap());
        assert!(t.dense(x, w, None).is_err());
    }

    #[test]
    fn conv_constant_field_sums_kernel() {
        // 4x4 image of ones, single 2x2 kernel of ones, stride 1: every
        // output cell equals the window size.
        let mut t = Tape::new();
        let img = t.leaf(RealArray::new(vec![1, 4, 4], vec![1.0; 16]).unwrap());
        let k = t.leaf(RealArray::new(vec![1, 1, 2, 2], vec![1.0; 4]).unwrap());
        let y = t.conv2d(img, k, 1).unwrap();
        assert_eq!(t.value(y).shape(), &[1, 3, 3]);
        assert_close(t.value(y).data(), &[4.0; 9], 0.0, "constant conv");
    }

    #[test]
    fn conv_impulse_reproduces_kernel() {
        let mut img = vec![0.0; 25];
        img[12] = 1.0; // center of a 5x5 image
        let kern = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        let mut t = Tape::new();
        let i = t.leaf(RealArray::new(vec![1, 5, 5], img).unwrap());
        let k = t.leaf(RealArray::new(vec![1, 1, 3, 3], kern.clone()).unwrap());
        let y = t.conv2d(i, k, 1).unwrap();
        // Output at (r, c) sees the impulse at kernel offset (2-r, 2-c):
        // the flipped kernel, which is what cross-correlating an impulse gives.
        let out = t.value(y).data();
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(out[r * 3 + c], kern[(2 - r) * 3 + (2 - c)]);
            }
        }
    }

    #[test]
    fn conv_matches_quadruple_loop_oracle() {
        let img: Vec<f64> = (0..36).map(|i| ((i * 7) % 11) as f64 * 0.25 - 1.0).collect();
        let kern: Vec<f64> = (0..18).map(|i| ((i * 5) % 7) as f64 * 0.5 - 1.5).collect();
        let (c, h, w, o, kh, kw, s) = (1usize, 6usize, 6usize, 2usize, 3usize, 3usize, 2usize);
        let (oh, ow) = ((h - kh) / s + 1, (w - kw) / s + 1);
        let mut expected = vec![0.0; o * oh * ow];
        for oc in 0..o {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0;
                    for ic in 0..c {
                        for p in 0..kh {
                            for q in 0..kw {
                                acc += img[(ic * h + i * s + p) * w + j * s + q]
                                    * kern[((oc * c + ic) * kh + p) * kw + q];
                            }
                        }
                    }
                    expected[(oc * oh + i) * ow + j] = acc;
                }
            }
        }
        let mut t = Tape::new();
        let i = t.leaf(RealArray::new(vec![1, 6, 6], img).unwrap());
        let k = t.leaf(RealArray::new(vec![2, 1, 3, 3], kern).unwrap());
        let y = t.conv2d(i, k, 2).unwrap();
        assert_close(t.value(y).data(), &expected, 1e-12, "conv vs loop");
    }

    #[test]
    fn leaky_relu_values_and_gradient() {
        let mut t = Tape::new();
        let x = t.param("x", RealArray::vector(vec![-3.0, 0.0, 2.0]));
        let y = t.leaky_relu(x, 0.01);
        assert_close(t.value(y).data(), &[-0.03, 0.0, 2.0], 1e-15, "lrelu");
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        assert_close(g["x"].data(), &[0.01, 1.0, 1.0], 0.0, "lrelu grad");
    }

    #[test]
    fn softmax_uniform_single_and_shifted() {
        let mut t = Tape::new();
        let x = t.leaf(RealArray::vector(vec![3.0, 3.0, 3.0]));
        let y = t.softmax(x).unwrap();
        assert_close(t.value(y).data(), &[1.0 / 3.0; 3], 1e-15, "uniform softmax");

        let x1 = t.leaf(RealArray::vector(vec![42.0]));
        let y1 = t.softmax(x1).unwrap();
        assert_eq!(t.value(y1).data(), &[1.0]);

        // Shift invariance at extreme magnitudes: stays finite and sums to 1.
        let x2 = t.leaf(RealArray::vector(vec![1000.0, 1000.0, 999.0]));
        let y2 = t.softmax(x2).unwrap();
        let s: f64 = t.value(y2).data().iter().sum();
        assert!(t.value(y2).all_finite());
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn backward_of_linear_loss_is_broadcast_input() {
        // loss = sum(W x) has dW[i][k] = x[k] for every row i.
        let mut t = Tape::new();
        let x = t.leaf(RealArray::vector(vec![2.0, -1.0, 0.5]));
        let w = t.param("w", RealArray::new(vec![2, 3], vec![0.3; 6]).unwrap());
        let y = t.dense(x, w, None).unwrap();
        let loss = t.sum(y);
        let g = t.backward(loss).unwrap();
        assert_close(g["w"].data(), &[2.0, -1.0, 0.5, 2.0, -1.0, 0.5], 0.0, "dW");
    }

    #[test]
    fn unused_parameters_get_zero_gradients() {
        let mut t = Tape::new();
        let a = t.param("used", RealArray::vector(vec![1.0, 2.0]));
        let _b = t.param("unused", RealArray::vector(vec![5.0]));
        let s = t.sum(a);
        let g = t.backward(s).unwrap();
        assert_close(g["used"].data(), &[1.0, 1.0], 0.0, "used grad");
        assert_close(g["unused"].data(), &[0.0], 0.0, "unused grad");
    }

    #[test]
    fn backward_rejects_vector_loss() {
        let mut t = Tape::new();
        let x = t.param("x", RealArray::vector(vec![1.0, 2.0]));
        assert!(t.backward(x).is_err());
    }

    #[test]
    fn replay_is_bit_exact() {
        let mut t = Tape::new();
        let x = t.param("x", RealArray::vector(vec![0.3, -1.7, 2.9]));
        let w = t.leaf(RealArray::new(vec![2, 3], vec![0.1, -0.4, 0.9, 1.3, 0.2, -0.8]).unwrap());
        let h = t.dense(x, w, None).unwrap();
        let a = t.tanh(h);
        let sm = t.softmax(a).unwrap();
        let loss = t.sum(sm);
        let replayed = t.replay();
        for id in 0..=loss {
            assert_eq!(
                t.value(id).data(),
                replayed[id].data(),
                "node {id} differs on replay"
            );
        }
    }

    #[test]
    fn log_softmax_rows_handles_masked_entries() {
        let mut t = Tape::new();
        let x = t.leaf(RealArray::new(vec![1, 3], vec![0.0, -1e30, 0.0]).unwrap());
        let y = t.log_softmax_rows(x).unwrap();
        let v = t.value(y).data();
        assert!((v[0] - (0.5f64).ln()).abs() < 1e-12);
        assert!(v[1] < -1e29);
        assert!(t.value(y).all_finite());
    }

    #[test]
    fn min_and_clamp_route_gradients_by_branch() {
        let mut t = Tape::new();
        let a = t.param("a", RealArray::vector(vec![1.0, 5.0]));
        let b = t.param("b", RealArray::vector(vec![2.0, 3.0]));
        let m = t.min_elem(a, b).unwrap();
        let s = t.sum(m);
        let g = t.backward(s).unwrap();
        assert_close(g["a"].data(), &[1.0, 0.0], 0.0, "min grad a");
        assert_close(g["b"].data(), &[0.0, 1.0], 0.0, "min grad b");

        let mut t = Tape::new();
        let x = t.param("x", RealArray::vector(vec![-2.0, 0.5, 9.0]));
        let c = t.clamp(x, 0.0, 1.0);
        let s = t.sum(c);
        let g = t.backward(s).unwrap();
        assert_close(g["x"].data(), &[0.0, 1.0, 0.0], 0.0, "clamp grad");
    }
}
