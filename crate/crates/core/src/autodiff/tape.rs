use std::fmt;

use crate::error::{MatError, Result};
use crate::rng::SplitRng;
use crate::tensor::{matmul_nt_raw, matmul_raw, matmul_tn_raw, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Whether stochastic layers are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A fused operation with a hand-written vector-Jacobian product.
pub trait CustomOp: Send {
    fn name(&self) -> &'static str;

    /// Gradients for each input given the upstream gradient of the output.
    /// `None` means the input receives no gradient from this op.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor)
        -> Result<Vec<Option<Tensor>>>;
}

enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Exp(Var),
    Expm1(Var),
    Softplus(Var),
    Silu(Var),
    Sigmoid(Var),
    Abs(Var),
    Softmax { x: Var, axis: usize },
    Transpose(Var),
    Reshape(Var),
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    ShiftRows { x: Var, by: usize },
    Sum(Var),
    Dropout { x: Var, mask: Vec<f64> },
    Custom { inputs: Vec<Var>, op: Box<dyn CustomOp> },
}

impl fmt::Debug for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Custom { op, inputs } => write!(f, "Custom({}, {inputs:?})", op.name()),
            Op::Leaf => write!(f, "Leaf"),
            Op::Constant => write!(f, "Constant"),
            _ => write!(f, "Op"),
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of a forward pass.
///
/// Nodes are appended in evaluation order, so node indices are already a
/// topological order and the backward pass walks them from last to first.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by one backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of `shape` when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

/// Index map for broadcasting `small` into `big` along trailing axes.
fn broadcast_index(big: &[usize], small: &[usize]) -> Option<Vec<usize>> {
    if small.len() > big.len() {
        return None;
    }
    let offset = big.len() - small.len();
    for (i, &s) in small.iter().enumerate() {
        if s != 1 && s != big[offset + i] {
            return None;
        }
    }
    let n: usize = big.iter().product();
    // strides of `small`, with zero stride on broadcast axes
    let mut strides = vec![0usize; big.len()];
    let mut acc = 1;
    for i in (0..small.len()).rev() {
        strides[offset + i] = if small[i] == 1 { 0 } else { acc };
        acc *= small[i];
    }
    let mut map = Vec::with_capacity(n);
    let mut idx = vec![0usize; big.len()];
    for _ in 0..n {
        map.push(idx.iter().zip(&strides).map(|(a, b)| a * b).sum());
        for ax in (0..big.len()).rev() {
            idx[ax] += 1;
            if idx[ax] < big[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    Some(map)
}

enum Bcast {
    Same,
    Scalar,
    Map(Vec<usize>),
}

impl Bcast {
    fn plan(op: &str, big: &Tensor, small: &Tensor) -> Result<Bcast> {
        if big.shape() == small.shape() {
            Ok(Bcast::Same)
        } else if small.len() == 1 {
            Ok(Bcast::Scalar)
        } else {
            broadcast_index(big.shape(), small.shape())
                .map(Bcast::Map)
                .ok_or_else(|| {
                    MatError::dim(
                        op,
                        format!("cannot broadcast {:?} into {:?}", small.shape(), big.shape()),
                    )
                })
        }
    }

    fn idx(&self, i: usize) -> usize {
        match self {
            Bcast::Same => i,
            Bcast::Scalar => 0,
            Bcast::Map(m) => m[i],
        }
    }

    /// Sum a gradient of the big shape down to the small shape.
    fn reduce(&self, g: &[f64], small_shape: &[usize]) -> Tensor {
        let n: usize = small_shape.iter().product();
        let mut out = vec![0.0; n];
        for (i, &v) in g.iter().enumerate() {
            out[self.idx(i)] += v;
        }
        Tensor::new(small_shape.to_vec(), out).expect("reduced shape")
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
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


fn softmax_dims(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A value that receives a gradient.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// A value that takes part in the computation but receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(MatError::dim(
                "matmul",
                format!("lhs {sa:?} and rhs {sb:?} are not conformable"),
            ));
        }
        let (r, k, c) = (sa[0], sa[1], sb[1]);
        let out = Tensor::new(vec![r, c], matmul_raw(ta.data(), tb.data(), r, k, c))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    fn binary(&mut self, name: &str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        let plan = Bcast::plan(name, ta, tb)?;
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, tb.data()[plan.idx(i)]))
            .collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    /// `a + b`, with `b` broadcast into the shape of `a` (scalar or trailing axes).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("add", a, b, |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("sub", a, b, |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("mul", a, b, |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("div", a, b, |x, y| x / y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Div(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| k * x);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, k), rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(out, op, rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn expm1(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp_m1, Op::Expm1(a))
    }

    /// `ln(1 + eˣ)`, evaluated without overflow for large `|x|`.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a))
    }

    /// `x · σ(x)`.
    pub fn silu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * sigmoid(x), Op::Silu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    /// Softmax along `axis`, computed with max subtraction.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        if axis >= t.rank() {
            return Err(MatError::dim(
                "softmax",
                format!("axis {axis} out of range for shape {:?}", t.shape()),
            ));
        }
        if !t.all_finite() {
            return Err(MatError::Numeric("softmax input is not finite".into()));
        }
        let (outer, n, inner) = softmax_dims(t.shape(), axis);
        let src = t.data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| o * n * inner + k * inner + i;
                let m = (0..n).map(|k| src[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for k in 0..n {
                    let e = (src[at(k)] - m).exp();
                    out[at(k)] = e;
                    s += e;
                }
                for k in 0..n {
                    out[at(k)] /= s;
                }
            }
        }
        let out = Tensor::new(t.shape().to_vec(), out)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Softmax { x, axis }, rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 {
            return Err(MatError::dim("transpose", format!("rank-2 input required, got {:?}", t.shape())));
        }
        let out = t.transpose()?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Transpose(a), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    /// Columns `start..start+len` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = match t.shape() {
            [r, c] => (*r, *c),
            s => return Err(MatError::dim("slice_cols", format!("rank-2 input required, got {s:?}"))),
        };
        if len == 0 || start + len > c {
            return Err(MatError::dim("slice_cols", format!("{start}..{} of {c} columns", start + len)));
        }
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&t.data()[i * c + start..i * c + start + len]);
        }
        let out = Tensor::new(vec![r, len], out)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::SliceCols { x, start }, rg))
    }

    /// Rows `start..start+len` of a matrix.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = match t.shape() {
            [r, c] => (*r, *c),
            s => return Err(MatError::dim("slice_rows", format!("rank-2 input required, got {s:?}"))),
        };
        if len == 0 || start + len > r {
            return Err(MatError::dim("slice_rows", format!("{start}..{} of {r} rows", start + len)));
        }
        let out = Tensor::new(vec![len, c], t.data()[start * c..(start + len) * c].to_vec())?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::SliceRows { x, start }, rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| MatError::dim("concat_cols", "no inputs"))?;
        let rows = self.shape(*first)[0];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            match self.shape(p) {
                [r, c] if *r == rows => widths.push(*c),
                s => return Err(MatError::dim("concat_cols", format!("part {s:?} does not have {rows} rows"))),
            }
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let out = Tensor::new(vec![rows, total], out)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| MatError::dim("concat_rows", "no inputs"))?;
        let cols = self.shape(*first)[1];
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            match self.shape(p) {
                [r, c] if *c == cols => rows += r,
                s => return Err(MatError::dim("concat_rows", format!("part {s:?} does not have {cols} columns"))),
            }
            out.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::new(vec![rows, cols], out)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Moves rows down by `by`, filling the top with zeros: `out[t] = x[t - by]`.
    pub fn shift_rows(&mut self, x: Var, by: usize) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = match t.shape() {
            [r, c] => (*r, *c),
            s => return Err(MatError::dim("shift_rows", format!("rank-2 input required, got {s:?}"))),
        };
        let mut out = vec![0.0; r * c];
        if by < r {
            out[by * c..].copy_from_slice(&t.data()[..(r - by) * c]);
        }
        let out = Tensor::new(vec![r, c], out)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::ShiftRows { x, by }, rg))
    }

    /// Sum of all entries, as a shape-`[1]` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Inverted dropout: in training mode each entry is zeroed with
    /// probability `p` and survivors are scaled by `1/(1-p)`.
    pub fn dropout(&mut self, x: Var, p: f64, mode: Mode, rng: &mut SplitRng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(MatError::Config(format!("dropout probability {p} outside [0, 1)")));
        }
        if mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let t = self.value(x);
        let mask: Vec<f64> = (0..t.len())
            .map(|_| if rng.uniform() < p { 0.0 } else { keep })
            .collect();
        let data = t.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::new(t.shape().to_vec(), data)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Dropout { x, mask }, rg))
    }

    /// Records a fused op whose forward value has already been computed.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor, op: Box<dyn CustomOp>) -> Var {
        let rg = inputs.iter().any(|&v| self.rg(v));
        self.push(
            output,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            rg,
        )
    }

    /// Replays the tape in reverse from a scalar `loss`.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(MatError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(self.shape(loss), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let contributions = self.node_backward(node, &g)?;
            for (v, dv) in contributions {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => {
                        for (a, d) in acc.data_mut().iter_mut().zip(dv.data()) {
                            *a += d;
                        }
                    }
                    slot @ None => *slot = Some(dv),
                }
            }
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }
        // only leaves keep gradients
        for (i, n) in self.nodes.iter().enumerate() {
            if !matches!(n.op, Op::Leaf) {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn node_backward(&self, node: &Node, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let val = |v: Var| &self.nodes[v.0].value;
        let out = &node.value;
        let elementwise = |v: Var, f: &dyn Fn(f64, f64, f64) -> f64| -> Tensor {
            // f(input, output, upstream)
            let x = val(v);
            let data = x
                .data()
                .iter()
                .zip(out.data())
                .zip(g.data())
                .map(|((&xi, &yi), &gi)| f(xi, yi, gi))
                .collect();
            Tensor::new(x.shape().to_vec(), data).expect("same shape")
        };
        let res = match &node.op {
            Op::Leaf | Op::Constant => vec![],
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (r, k) = (ta.shape()[0], ta.shape()[1]);
                let c = tb.shape()[1];
                let ga = Tensor::new(vec![r, k], matmul_nt_raw(g.data(), tb.data(), r, c, k))?;
                let gb = Tensor::new(vec![k, c], matmul_tn_raw(ta.data(), g.data(), r, k, c))?;
                vec![(*a, ga), (*b, gb)]
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                let plan = Bcast::plan("add", val(*a), val(*b))?;
                let gb = plan.reduce(g.data(), val(*b).shape());
                vec![(*a, g.clone()), (*b, gb.map(|v| sign * v))]
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let plan = Bcast::plan("mul", ta, tb)?;
                let ga: Vec<f64> = (0..ta.len()).map(|i| g.data()[i] * tb.data()[plan.idx(i)]).collect();
                let gbig: Vec<f64> = (0..ta.len()).map(|i| g.data()[i] * ta.data()[i]).collect();
                vec![
                    (*a, Tensor::new(ta.shape().to_vec(), ga)?),
                    (*b, plan.reduce(&gbig, tb.shape())),
                ]
            }
            Op::Div(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let plan = Bcast::plan("div", ta, tb)?;
                let ga: Vec<f64> = (0..ta.len()).map(|i| g.data()[i] / tb.data()[plan.idx(i)]).collect();
                let gbig: Vec<f64> = (0..ta.len())
                    .map(|i| {
                        let y = tb.data()[plan.idx(i)];
                        -g.data()[i] * ta.data()[i] / (y * y)
                    })
                    .collect();
                vec![
                    (*a, Tensor::new(ta.shape().to_vec(), ga)?),
                    (*b, plan.reduce(&gbig, tb.shape())),
                ]
            }
            Op::Scale(a, k) => vec![(*a, g.map(|v| k * v))],
            Op::Exp(a) => vec![(*a, elementwise(*a, &|_, y, gi| gi * y))],
            Op::Expm1(a) => vec![(*a, elementwise(*a, &|_, y, gi| gi * (y + 1.0)))],
            Op::Softplus(a) => vec![(*a, elementwise(*a, &|x, _, gi| gi * sigmoid(x)))],
            Op::Silu(a) => vec![(
                *a,
                elementwise(*a, &|x, _, gi| {
                    let s = sigmoid(x);
                    gi * (s + x * s * (1.0 - s))
                }),
            )],
            Op::Sigmoid(a) => vec![(*a, elementwise(*a, &|_, y, gi| gi * y * (1.0 - y)))],
            Op::Abs(a) => vec![(*a, elementwise(*a, &|x, _, gi| gi * x.signum() * f64::from(x != 0.0)))],
            Op::Softmax { x, axis } => {
                let (outer, n, inner) = softmax_dims(out.shape(), *axis);
                let (y, gd) = (out.data(), g.data());
                let mut gx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |k: usize| o * n * inner + k * inner + i;
                        let dot: f64 = (0..n).map(|k| y[at(k)] * gd[at(k)]).sum();
                        for k in 0..n {
                            gx[at(k)] = y[at(k)] * (gd[at(k)] - dot);
                        }
                    }
                }
                vec![(*x, Tensor::new(out.shape().to_vec(), gx)?)]
            }
            Op::Transpose(a) => vec![(*a, g.transpose()?)],
            Op::Reshape(a) => vec![(*a, g.clone().reshape(val(*a).shape())?)],
            Op::SliceCols { x, start } => {
                let src = val(*x);
                let (r, c) = (src.shape()[0], src.shape()[1]);
                let w = out.shape()[1];
                let mut gx = vec![0.0; r * c];
                for i in 0..r {
                    gx[i * c + start..i * c + start + w].copy_from_slice(&g.data()[i * w..(i + 1) * w]);
                }
                vec![(*x, Tensor::new(vec![r, c], gx)?)]
            }
            Op::SliceRows { x, start } => {
                let src = val(*x);
                let c = src.shape()[1];
                let mut gx = vec![0.0; src.len()];
                gx[start * c..start * c + g.len()].copy_from_slice(g.data());
                vec![(*x, Tensor::new(src.shape().to_vec(), gx)?)]
            }
            Op::ConcatCols(parts) => {
                let rows = out.shape()[0];
                let total = out.shape()[1];
                let mut res = Vec::with_capacity(parts.len());
                let mut off = 0;
                for &p in parts {
                    let w = val(p).shape()[1];
                    let mut gp = Vec::with_capacity(rows * w);
                    for i in 0..rows {
                        gp.extend_from_slice(&g.data()[i * total + off..i * total + off + w]);
                    }
                    res.push((p, Tensor::new(vec![rows, w], gp)?));
                    off += w;
                }
                res
            }
            Op::ConcatRows(parts) => {
                let mut res = Vec::with_capacity(parts.len());
                let mut off = 0;
                for &p in parts {
                    let n = val(p).len();
                    res.push((p, Tensor::new(val(p).shape().to_vec(), g.data()[off..off + n].to_vec())?));
                    off += n;
                }
                res
            }
            Op::ShiftRows { x, by } => {
                let (r, c) = (out.shape()[0], out.shape()[1]);
                let mut gx = vec![0.0; r * c];
                if *by < r {
                    gx[..(r - by) * c].copy_from_slice(&g.data()[by * c..]);
                }
                vec![(*x, Tensor::new(vec![r, c], gx)?)]
            }
            Op::Sum(a) => vec![(*a, Tensor::filled(val(*a).shape(), g.item()))],
            Op::Dropout { x, mask } => {
                let data = g.data().iter().zip(mask).map(|(a, b)| a * b).collect();
                vec![(*x, Tensor::new(g.shape().to_vec(), data)?)]
            }
            Op::Custom { inputs, op } => {
                let ins: Vec<&Tensor> = inputs.iter().map(|&v| val(v)).collect();
                let gs = op.backward(&ins, out, g)?;
                inputs
                    .iter()
                    .zip(gs)
                    .filter_map(|(&v, gv)| gv.map(|t| (v, t)))
                    .collect()
            }
        };
        Ok(res)
    }
}
