use crate::autodiff::{Tape, Var};
use crate::error::{MatError, Result};
use crate::params::{Bound, ParamId, ParamStore};
use crate::tensor::Tensor;

pub const REVIN_EPS: f64 = 1e-5;

/// Look-back statistics of one instance, kept for the inverse map.
#[derive(Clone, Debug, PartialEq)]
pub struct RevinState {
    pub mean: Vec<f64>,
    /// Population standard deviation, floored at `eps`.
    pub std: Vec<f64>,
    pub eps: f64,
}

impl RevinState {
    /// Per-row statistics of an `M × L` block.
    pub fn from_block(x: &Tensor, eps: f64) -> Result<Self> {
        let (m, l) = match x.shape() {
            [m, l] => (*m, *l),
            s => return Err(MatError::dim("revin", format!("expected M×L input, got {s:?}"))),
        };
        let mut mean = Vec::with_capacity(m);
        let mut std = Vec::with_capacity(m);
        for r in 0..m {
            let row = x.row(r);
            let mu = row.iter().sum::<f64>() / l as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / l as f64;
            mean.push(mu);
            std.push(var.sqrt().max(eps));
        }
        Ok(RevinState { mean, std, eps })
    }

    fn column(v: &[f64]) -> Tensor {
        Tensor::matrix(v.len(), 1, v.to_vec()).expect("column")
    }
}

/// Optional learnable per-channel affine `γ`, `β`, stored as `M × 1`.
#[derive(Clone, Copy, Debug)]
pub struct RevIn {
    pub gamma: Option<ParamId>,
    pub beta: Option<ParamId>,
    pub eps: f64,
}

impl RevIn {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, affine: bool) -> Self {
        let (gamma, beta) = if affine {
            (
                Some(store.add(format!("{name}.gamma"), Tensor::filled(&[channels, 1], 1.0))),
                Some(store.add(format!("{name}.beta"), Tensor::zeros(&[channels, 1]))),
            )
        } else {
            (None, None)
        };
        RevIn {
            gamma,
            beta,
            eps: REVIN_EPS,
        }
    }

    /// `γ ⊙ (x − mean) / std + β` per row.
    pub fn normalize(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<(Var, RevinState)> {
        let state = RevinState::from_block(tape.value(x), self.eps)?;
        let mean = tape.constant(RevinState::column(&state.mean));
        let inv: Vec<f64> = state.std.iter().map(|s| 1.0 / s).collect();
        let inv = tape.constant(RevinState::column(&inv));
        let centered = tape.sub(x, mean)?;
        let mut y = tape.mul(centered, inv)?;
        if let (Some(g), Some(b)) = (self.gamma, self.beta) {
            y = tape.mul(y, bound[g])?;
            y = tape.add(y, bound[b])?;
        }
        Ok((y, state))
    }

    /// Inverse of [`RevIn::normalize`] using the look-back statistics.
    pub fn denormalize(&self, tape: &mut Tape, bound: &Bound, y: Var, state: &RevinState) -> Result<Var> {
        if tape.shape(y).first() != Some(&state.mean.len()) {
            return Err(MatError::dim(
                "revin_denormalize",
                format!("{:?} rows vs {} channels", tape.shape(y), state.mean.len()),
            ));
        }
        let mut v = y;
        if let (Some(g), Some(b)) = (self.gamma, self.beta) {
            v = tape.sub(v, bound[b])?;
            v = tape.div(v, bound[g])?;
        }
        let std = tape.constant(RevinState::column(&state.std));
        let mean = tape.constant(RevinState::column(&state.mean));
        let v = tape.mul(v, std)?;
        tape.add(v, mean)
    }
}

/// Normalises an `M × L` block without affine parameters.
pub fn revin_normalize(x: &Tensor) -> Result<(Tensor, RevinState)> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let r = RevIn {
        gamma: None,
        beta: None,
        eps: REVIN_EPS,
    };
    let (y, state) = r.normalize(&mut tape, &Bound::from_vars(vec![]), xv)?;
    Ok((tape.value(y).clone(), state))
}

/// Inverse of [`revin_normalize`].
pub fn revin_denormalize(y: &Tensor, state: &RevinState) -> Result<Tensor> {
    let mut tape = Tape::new();
    let yv = tape.constant(y.clone());
    let r = RevIn {
        gamma: None,
        beta: None,
        eps: state.eps,
    };
    let out = r.denormalize(&mut tape, &Bound::from_vars(vec![]), yv, state)?;
    Ok(tape.value(out).clone())
}
