use rayon::prelude::*;

use super::discretize::{phi1, phi1_prime};
use crate::autodiff::{CustomOp, Tape, Var};
use crate::error::{MatError, Result};
use crate::tensor::Tensor;

/// One step of a first-order linear recurrence, the map `x ↦ a·x + b`.
///
/// Composition `e1.then(e2)` applies `e1` first:
/// `(a₁, b₁) ∘ (a₂, b₂) = (a₁a₂, a₂b₁ + b₂)`. It is associative, which is what
/// lets the recurrence run as a prefix scan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanElement {
    pub a: f64,
    pub b: f64,
}

impl ScanElement {
    pub const IDENTITY: ScanElement = ScanElement { a: 1.0, b: 0.0 };

    pub fn new(a: f64, b: f64) -> Self {
        ScanElement { a, b }
    }

    #[inline]
    pub fn then(self, next: ScanElement) -> ScanElement {
        ScanElement {
            a: self.a * next.a,
            b: next.a * self.b + next.b,
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        self.a * x + self.b
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ScanMode {
    /// Left-to-right recurrence.
    #[default]
    Sequential,
    /// Work-efficient up-sweep/down-sweep prefix scan per lane.
    Parallel,
}

/// States `x_k` of `x_k = a_k x_{k-1} + b_k`, `x_{-1} = 0`.
pub(crate) fn recurrence_sequential(elems: &[ScanElement], out: &mut [f64]) {
    let mut x = 0.0;
    for (o, e) in out.iter_mut().zip(elems) {
        x = e.apply(x);
        *o = x;
    }
}

/// Same states as [`recurrence_sequential`], computed as an exclusive
/// Blelloch scan padded to a power of two with identity elements.
pub(crate) fn recurrence_blelloch(elems: &[ScanElement], out: &mut [f64]) {
    let n = elems.len();
    if n == 0 {
        return;
    }
    let m = n.next_power_of_two();
    let mut tree = Vec::with_capacity(m);
    tree.extend_from_slice(elems);
    tree.resize(m, ScanElement::IDENTITY);

    // up-sweep: tree[i] becomes the composition of its subtree
    let mut step = 1;
    while step < m {
        for i in (2 * step - 1..m).step_by(2 * step) {
            tree[i] = tree[i - step].then(tree[i]);
        }
        step *= 2;
    }

    // down-sweep: tree[i] becomes the composition of everything before i
    tree[m - 1] = ScanElement::IDENTITY;
    step = m / 2;
    while step >= 1 {
        for i in (2 * step - 1..m).step_by(2 * step) {
            let left = tree[i - step];
            let prefix = tree[i];
            tree[i - step] = prefix;
            tree[i] = prefix.then(left);
        }
        step /= 2;
    }

    for k in 0..n {
        out[k] = tree[k].then(elems[k]).b;
    }
}

fn run_recurrence(elems: &[ScanElement], out: &mut [f64], mode: ScanMode) {
    match mode {
        ScanMode::Sequential => recurrence_sequential(elems, out),
        ScanMode::Parallel => recurrence_blelloch(elems, out),
    }
}

/// Borrowed operands of a selective scan.
///
/// Shapes: `u`, `delta`: `ℓ × d`; `a`: `d × N`; `b`, `c`: `ℓ × N`;
/// `d_feed`: `d`.
#[derive(Clone, Copy, Debug)]
pub struct ScanInputs<'a> {
    pub u: &'a Tensor,
    pub delta: &'a Tensor,
    pub a: &'a Tensor,
    pub b: &'a Tensor,
    pub c: &'a Tensor,
    pub d_feed: &'a Tensor,
}

#[derive(Clone, Copy, Debug)]
struct Dims {
    len: usize,
    width: usize,
    state: usize,
}

impl ScanInputs<'_> {
    fn dims(&self) -> Result<Dims> {
        let err = |what: String| MatError::dim("selective_scan", what);
        let (len, width) = match self.u.shape() {
            [l, d] => (*l, *d),
            s => return Err(err(format!("u must be ℓ×d, got {s:?}"))),
        };
        let state = match self.a.shape() {
            [d, n] if *d == width => *n,
            s => return Err(err(format!("A must be {width}×N, got {s:?}"))),
        };
        if self.delta.shape() != [len, width] {
            return Err(err(format!("Δ has shape {:?}, u has {:?}", self.delta.shape(), self.u.shape())));
        }
        for (name, t) in [("B", self.b), ("C", self.c)] {
            if t.shape() != [len, state] {
                return Err(err(format!("{name} has shape {:?}, expected [{len}, {state}]", t.shape())));
            }
        }
        if self.d_feed.len() != width {
            return Err(err(format!("D has {} entries, expected {width}", self.d_feed.len())));
        }
        if let Some(bad) = self.delta.data().iter().find(|&&v| !(v > 0.0)) {
            return Err(MatError::Contract(format!("Δ must be positive, found {bad}")));
        }
        Ok(Dims { len, width, state })
    }
}

const PAR_LANE_THRESHOLD: usize = 1 << 15;

/// Lane-major states: `states[(i·N + n)·ℓ + k]`.
fn lane_states(inp: &ScanInputs<'_>, dims: Dims, mode: ScanMode) -> Vec<f64> {
    let Dims { len, width, state } = dims;
    let (u, dl, a, b) = (inp.u.data(), inp.delta.data(), inp.a.data(), inp.b.data());
    let fill = |lane: usize, out: &mut [f64]| {
        let (i, n) = (lane / state, lane % state);
        let ai = a[i * state + n];
        let elems: Vec<ScanElement> = (0..len)
            .map(|k| {
                let dt = dl[k * width + i];
                let x = dt * ai;
                ScanElement::new(x.exp(), dt * phi1(x) * b[k * state + n] * u[k * width + i])
            })
            .collect();
        run_recurrence(&elems, out, mode);
    };
    let mut states = vec![0.0; width * state * len];
    if mode == ScanMode::Parallel && states.len() >= PAR_LANE_THRESHOLD {
        states.par_chunks_mut(len).enumerate().for_each(|(lane, out)| fill(lane, out));
    } else {
        states.chunks_mut(len).enumerate().for_each(|(lane, out)| fill(lane, out));
    }
    states
}

fn readout(inp: &ScanInputs<'_>, dims: Dims, states: &[f64]) -> Tensor {
    let Dims { len, width, state } = dims;
    let (u, c, d) = (inp.u.data(), inp.c.data(), inp.d_feed.data());
    let mut y = vec![0.0; len * width];
    for i in 0..width {
        for k in 0..len {
            let mut acc = d[i] * u[k * width + i];
            for n in 0..state {
                acc += c[k * state + n] * states[(i * state + n) * len + k];
            }
            y[k * width + i] = acc;
        }
    }
    Tensor::matrix(len, width, y).expect("scan output shape")
}

/// Hidden states as an `ℓ × d × N` tensor.
pub fn scan_states(inp: ScanInputs<'_>, mode: ScanMode) -> Result<Tensor> {
    let dims = inp.dims()?;
    let lanes = lane_states(&inp, dims, mode);
    let Dims { len, width, state } = dims;
    let mut out = vec![0.0; lanes.len()];
    for lane in 0..width * state {
        for k in 0..len {
            out[k * width * state + lane] = lanes[lane * len + k];
        }
    }
    Tensor::new(vec![len, width, state], out)
}

fn scan_forward(inp: ScanInputs<'_>, mode: ScanMode) -> Result<Tensor> {
    let dims = inp.dims()?;
    let states = lane_states(&inp, dims, mode);
    Ok(readout(&inp, dims, &states))
}

/// Left-to-right selective scan.
pub fn selective_scan_sequential(inp: ScanInputs<'_>) -> Result<Tensor> {
    scan_forward(inp, ScanMode::Sequential)
}

/// Selective scan evaluated as an associative prefix scan.
pub fn selective_scan_parallel(inp: ScanInputs<'_>) -> Result<Tensor> {
    scan_forward(inp, ScanMode::Parallel)
}

struct SelectiveScanOp {
    mode: ScanMode,
}

impl CustomOp for SelectiveScanOp {
    fn name(&self) -> &'static str {
        "selective_scan"
    }

    fn backward(&self, ins: &[&Tensor], _out: &Tensor, gy: &Tensor) -> Result<Vec<Option<Tensor>>> {
        let inp = ScanInputs {
            u: ins[0],
            delta: ins[1],
            a: ins[2],
            b: ins[3],
            c: ins[4],
            d_feed: ins[5],
        };
        let dims = inp.dims()?;
        let Dims { len, width, state } = dims;
        let states = lane_states(&inp, dims, self.mode);
        let (u, dl, a, b, c, d) = (
            inp.u.data(),
            inp.delta.data(),
            inp.a.data(),
            inp.b.data(),
            inp.c.data(),
            inp.d_feed.data(),
        );
        let g = gy.data();

        let mut gu = vec![0.0; len * width];
        let mut gdelta = vec![0.0; len * width];
        let mut ga = vec![0.0; width * state];
        let mut gb = vec![0.0; len * state];
        let mut gc = vec![0.0; len * state];
        let mut gd = vec![0.0; width];

        for i in 0..width {
            for k in 0..len {
                gd[i] += g[k * width + i] * u[k * width + i];
                gu[k * width + i] += g[k * width + i] * d[i];
            }
        }

        let mut rev = vec![ScanElement::IDENTITY; len];
        let mut adj = vec![0.0; len];
        for i in 0..width {
            for n in 0..state {
                let lane = i * state + n;
                let xs = &states[lane * len..(lane + 1) * len];
                let ai = a[lane];
                // adjoint λ_k = C_k g_k + Ā_{k+1} λ_{k+1}, run as a reversed recurrence
                for j in 0..len {
                    let k = len - 1 - j;
                    let next_decay = if k + 1 < len { (dl[(k + 1) * width + i] * ai).exp() } else { 0.0 };
                    rev[j] = ScanElement::new(next_decay, c[k * state + n] * g[k * width + i]);
                }
                run_recurrence(&rev, &mut adj, self.mode);
                for k in 0..len {
                    let lam = adj[len - 1 - k];
                    let gk = g[k * width + i];
                    gc[k * state + n] += gk * xs[k];
                    let dt = dl[k * width + i];
                    let x = dt * ai;
                    let decay = x.exp();
                    let gain = dt * phi1(x);
                    let prev = if k > 0 { xs[k - 1] } else { 0.0 };
                    let g_decay = lam * prev;
                    let bu = b[k * state + n] * u[k * width + i];
                    let g_gain = lam * bu;
                    gu[k * width + i] += lam * gain * b[k * state + n];
                    gb[k * state + n] += lam * gain * u[k * width + i];
                    // ∂Ā/∂Δ = aĀ, ∂gain/∂Δ = Ā; ∂Ā/∂a = ΔĀ, ∂gain/∂a = Δ²φ₁'(Δa)
                    gdelta[k * width + i] += g_decay * ai * decay + g_gain * decay;
                    ga[lane] += g_decay * dt * decay + g_gain * dt * dt * phi1_prime(x);
                }
            }
        }

        Ok(vec![
            Some(Tensor::matrix(len, width, gu)?),
            Some(Tensor::matrix(len, width, gdelta)?),
            Some(Tensor::matrix(width, state, ga)?),
            Some(Tensor::matrix(len, state, gb)?),
            Some(Tensor::matrix(len, state, gc)?),
            Some(Tensor::new(inp.d_feed.shape().to_vec(), gd)?),
        ])
    }
}

/// Differentiable selective scan recorded on `tape` as one fused node.
#[allow(clippy::too_many_arguments)]
pub fn selective_scan(
    tape: &mut Tape,
    u: Var,
    delta: Var,
    a: Var,
    b: Var,
    c: Var,
    d_feed: Var,
    mode: ScanMode,
) -> Result<Var> {
    let y = scan_forward(
        ScanInputs {
            u: tape.value(u),
            delta: tape.value(delta),
            a: tape.value(a),
            b: tape.value(b),
            c: tape.value(c),
            d_feed: tape.value(d_feed),
        },
        mode,
    )?;
    Ok(tape.custom(&[u, delta, a, b, c, d_feed], y, Box::new(SelectiveScanOp { mode })))
}
