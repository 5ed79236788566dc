//! Finite-difference gradient suite at toy dimensions.

use crate::attention::{multi_head_attention, AttentionParams};
use crate::autodiff::{grad_check_many, Mode, Tape, Var};
use crate::error::Result;
use crate::model::{AxisMode, BlockOrder, MatBlock, MatModel, ModelConfig, RevIn};
use crate::params::{Bound, ParamStore};
use crate::rng::SplitRng;
use crate::ssm::{mamba_block_forward, selective_scan, ScanMode, SsmParams};
use crate::tensor::Tensor;
use crate::train::mse_loss;

pub const GRAD_TOLERANCE: f64 = 1e-4;
const STEP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRAD_TOLERANCE
    }
}

/// Reduces any tensor to a scalar through a fixed random weighting so every
/// output entry contributes a distinct gradient.
fn probe(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let mut rng = SplitRng::new(seed);
    let w = Tensor::uniform(tape.shape(y), 1.0, &mut rng);
    let w = tape.constant(w);
    let p = tape.mul(y, w)?;
    Ok(tape.sum(p))
}

fn check<F>(out: &mut Vec<CheckResult>, name: &str, inputs: &[Tensor], f: F) -> Result<()>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let errs = grad_check_many(|t: &mut Tape, v: &[Var]| {
        let y = f(t, v)?;
        probe(t, y, 99)
    }, inputs, STEP)?;
    out.push(CheckResult {
        name: name.to_string(),
        max_rel_error: errs.into_iter().fold(0.0, f64::max),
    });
    Ok(())
}

/// Checks a module with respect to its parameters and, when `input_grad`
/// is set, its input as well. Otherwise the input enters as a constant.
fn store_check<B>(out: &mut Vec<CheckResult>, name: &str, store: &ParamStore, x: &Tensor, input_grad: bool, f: B) -> Result<()>
where
    B: Fn(&mut Tape, &Bound, Var) -> Result<Var>,
{
    let mut inputs = store.tensors().to_vec();
    let k = inputs.len();
    if input_grad {
        inputs.push(x.clone());
    }
    check(out, name, &inputs, |t, v| {
        let bound = Bound::from_vars(v[..k].to_vec());
        let xv = if input_grad { v[k] } else { t.constant(x.clone()) };
        f(t, &bound, xv)
    })
}

/// Runs every check and returns one named result per op or module.
pub fn gradient_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = SplitRng::new(seed);
    let mut out = Vec::new();
    let a = Tensor::uniform(&[3, 4], 1.0, &mut rng);
    let b = Tensor::uniform(&[4, 2], 1.0, &mut rng);
    let c = Tensor::uniform(&[3, 4], 1.0, &mut rng);
    let row = Tensor::uniform(&[4], 1.0, &mut rng);
    let col = Tensor::uniform(&[3, 1], 1.0, &mut rng);
    let pos = c.map(|v| v.abs() + 0.5);
    let off_zero = a.map(|v| if v.abs() < 0.05 { v + 0.2 } else { v });

    check(&mut out, "matmul", &[a.clone(), b.clone()], |t, v| t.matmul(v[0], v[1]))?;
    check(&mut out, "add", &[a.clone(), c.clone()], |t, v| t.add(v[0], v[1]))?;
    check(&mut out, "add_row_broadcast", &[a.clone(), row.clone()], |t, v| t.add(v[0], v[1]))?;
    check(&mut out, "sub_column_broadcast", &[a.clone(), col.clone()], |t, v| t.sub(v[0], v[1]))?;
    check(&mut out, "mul", &[a.clone(), c.clone()], |t, v| t.mul(v[0], v[1]))?;
    check(&mut out, "div", &[a.clone(), pos.clone()], |t, v| t.div(v[0], v[1]))?;
    check(&mut out, "scale", std::slice::from_ref(&a), |t, v| Ok(t.scale(v[0], -1.7)))?;
    check(&mut out, "exp", std::slice::from_ref(&a), |t, v| Ok(t.exp(v[0])))?;
    check(&mut out, "expm1", std::slice::from_ref(&a), |t, v| Ok(t.expm1(v[0])))?;
    check(&mut out, "softplus", std::slice::from_ref(&a), |t, v| Ok(t.softplus(v[0])))?;
    check(&mut out, "silu", std::slice::from_ref(&a), |t, v| Ok(t.silu(v[0])))?;
    check(&mut out, "sigmoid", std::slice::from_ref(&a), |t, v| Ok(t.sigmoid(v[0])))?;
    check(&mut out, "abs", &[off_zero], |t, v| Ok(t.abs(v[0])))?;
    check(&mut out, "softmax_rows", std::slice::from_ref(&a), |t, v| t.softmax(v[0], 1))?;
    check(&mut out, "softmax_cols", std::slice::from_ref(&a), |t, v| t.softmax(v[0], 0))?;
    check(&mut out, "transpose", std::slice::from_ref(&a), |t, v| t.transpose(v[0]))?;
    check(&mut out, "reshape", std::slice::from_ref(&a), |t, v| t.reshape(v[0], &[2, 6]))?;
    check(&mut out, "slice_cols", std::slice::from_ref(&a), |t, v| t.slice_cols(v[0], 1, 2))?;
    check(&mut out, "slice_rows", std::slice::from_ref(&a), |t, v| t.slice_rows(v[0], 1, 2))?;
    check(&mut out, "concat_cols", &[a.clone(), c.clone()], |t, v| t.concat_cols(&[v[0], v[1]]))?;
    check(&mut out, "concat_rows", &[a.clone(), c.clone()], |t, v| t.concat_rows(&[v[0], v[1]]))?;
    check(&mut out, "shift_rows", std::slice::from_ref(&a), |t, v| t.shift_rows(v[0], 1))?;
    check(&mut out, "sum", std::slice::from_ref(&a), |t, v| Ok(t.sum(v[0])))?;
    check(&mut out, "mean", std::slice::from_ref(&a), |t, v| Ok(t.mean(v[0])))?;
    check(&mut out, "dropout", std::slice::from_ref(&a), |t, v| {
        t.dropout(v[0], 0.3, Mode::Train, &mut SplitRng::new(5))
    })?;
    check(&mut out, "mse_loss", std::slice::from_ref(&a), |t, v| mse_loss(t, v[0], &c))?;

    let (len, d, n) = (6, 2, 2);
    let u = Tensor::uniform(&[len, d], 1.0, &mut rng);
    let delta = Tensor::uniform(&[len, d], 1.0, &mut rng).map(|v| 0.1 + v.abs() * 0.5);
    let a_mat = Tensor::uniform(&[d, n], 1.0, &mut rng).map(|v| -0.3 - v.abs());
    let bm = Tensor::uniform(&[len, n], 1.0, &mut rng);
    let cm = Tensor::uniform(&[len, n], 1.0, &mut rng);
    let dfeed = Tensor::uniform(&[d], 1.0, &mut rng);
    for (name, mode) in [("selective_scan_sequential", ScanMode::Sequential), ("selective_scan_parallel", ScanMode::Parallel)] {
        check(
            &mut out,
            name,
            &[u.clone(), delta.clone(), a_mat.clone(), bm.clone(), cm.clone(), dfeed.clone()],
            |t, v| selective_scan(t, v[0], v[1], v[2], v[3], v[4], v[5], mode),
        )?;
    }

    let z = Tensor::uniform(&[5, 4], 1.0, &mut rng);
    let mut store = ParamStore::new();
    let attn = AttentionParams::new(&mut store, "attn", 4, 2, &mut rng)?;
    store_check(&mut out, "multi_head_attention", &store, &z, true, |t, b, x| {
        multi_head_attention(t, b, &attn, x, x, x)
    })?;

    let mut store = ParamStore::new();
    let ssm = SsmParams::new(&mut store, "ssm", 4, 4, 1, 2, &mut rng)?;
    store_check(&mut out, "mamba_block", &store, &z, true, |t, b, x| mamba_block_forward(t, b, &ssm, x))?;

    let m_block = Tensor::uniform(&[3, 8], 1.0, &mut rng);
    for axis in [AxisMode::Temporal, AxisMode::Channel] {
        for order in [BlockOrder::MambaFirst, BlockOrder::AttentionFirst] {
            let mut store = ParamStore::new();
            let block = MatBlock::new(&mut store, "blk", axis, 8, 4, 1, 2, 2, order, true, ScanMode::Sequential, &mut rng)?;
            let name = format!("mat_block_{axis:?}_{order:?}").to_lowercase();
            store_check(&mut out, &name, &store, &m_block, true, |t, b, x| block.forward(t, b, x))?;
        }
    }

    let mut store = ParamStore::new();
    let revin = RevIn::new(&mut store, "revin", 3, true);
    for (i, t) in store.tensors_mut().iter_mut().enumerate() {
        *t = t.map(|v| v + 0.1 * (i as f64 + 1.0));
    }
    store_check(&mut out, "revin_affine", &store, &m_block, false, |t, b, x| {
        let (n, st) = revin.normalize(t, b, x)?;
        let sq = t.mul(n, n)?;
        revin.denormalize(t, b, sq, &st)
    })?;

    let cfg = ModelConfig {
        seed,
        ..ModelConfig::toy()
    };
    let model = MatModel::new(cfg.clone())?;
    let x = Tensor::uniform(&[cfg.channels, cfg.lookback], 1.0, &mut rng);
    check(&mut out, "mat_model", model.params.tensors(), |t, v| {
        let bound = Bound::from_vars(v.to_vec());
        model.forward(t, &bound, &x, Mode::Eval, &mut SplitRng::new(0))
    })?;
    Ok(out)
}
