use super::scan::{selective_scan, ScanMode};
use crate::autodiff::{Tape, Var};
use crate::error::{MatError, Result};
use crate::params::{Bound, Linear, ParamId, ParamStore};
use crate::rng::SplitRng;
use crate::tensor::Tensor;

/// Weights of one gated selective-SSM block.
///
/// `A = −exp(a_log)` keeps the continuous dynamics strictly stable, and
/// `Δ = softplus(delta_proj(·))` keeps every sampling interval positive.
#[derive(Clone, Debug)]
pub struct SsmParams {
    pub in_proj: Linear,
    pub gate_proj: Linear,
    pub conv_weight: ParamId,
    pub conv_bias: ParamId,
    pub delta_proj: Linear,
    pub b_proj: Linear,
    pub c_proj: Linear,
    pub a_log: ParamId,
    pub d_feed: ParamId,
    pub out_proj: Linear,
    pub d_model: usize,
    pub d_inner: usize,
    pub state: usize,
    pub conv_width: usize,
    pub scan_mode: ScanMode,
}

fn inverse_softplus(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

impl SsmParams {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        d_inner: usize,
        state: usize,
        conv_width: usize,
        rng: &mut SplitRng,
    ) -> Result<Self> {
        if d_model == 0 || d_inner == 0 || state == 0 || conv_width == 0 {
            return Err(MatError::Config(format!(
                "ssm widths must be positive (d_model={d_model}, d_inner={d_inner}, N={state}, conv={conv_width})"
            )));
        }
        let in_proj = Linear::new(store, &format!("{name}.in_proj"), d_model, d_inner, false, rng);
        let gate_proj = Linear::new(store, &format!("{name}.gate_proj"), d_model, d_inner, false, rng);
        let conv_weight = store.add_uniform(format!("{name}.conv.weight"), &[conv_width, d_inner], conv_width, rng);
        let conv_bias = store.add_uniform(format!("{name}.conv.bias"), &[d_inner], conv_width, rng);
        let delta_proj = Linear::new(store, &format!("{name}.delta_proj"), d_inner, d_inner, true, rng);
        // initial Δ log-uniform in [1e-3, 1e-1]
        let bias = delta_proj.bias.expect("delta bias");
        for v in store.get_mut(bias).data_mut() {
            let dt = (rng.uniform_range(0.001f64.ln(), 0.1f64.ln())).exp();
            *v = inverse_softplus(dt);
        }
        let b_proj = Linear::new(store, &format!("{name}.b_proj"), d_inner, state, false, rng);
        let c_proj = Linear::new(store, &format!("{name}.c_proj"), d_inner, state, false, rng);
        let a_log = store.add(
            format!("{name}.a_log"),
            Tensor::matrix(
                d_inner,
                state,
                (0..d_inner).flat_map(|_| (1..=state).map(|n| (n as f64).ln())).collect(),
            )?,
        );
        let d_feed = store.add(format!("{name}.d_feed"), Tensor::filled(&[d_inner], 1.0));
        let out_proj = Linear::new(store, &format!("{name}.out_proj"), d_inner, d_model, false, rng);
        Ok(SsmParams {
            in_proj,
            gate_proj,
            conv_weight,
            conv_bias,
            delta_proj,
            b_proj,
            c_proj,
            a_log,
            d_feed,
            out_proj,
            d_model,
            d_inner,
            state,
            conv_width,
            scan_mode: ScanMode::Sequential,
        })
    }
}

/// Causal depthwise convolution along rows: `out[t] = bias + Σ_j w[W-1-j] ⊙ x[t-j]`.
fn causal_conv(tape: &mut Tape, x: Var, weight: Var, bias: Var, width: usize) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for j in 0..width {
        let shifted = if j == 0 { x } else { tape.shift_rows(x, j)? };
        let tap = tape.slice_rows(weight, width - 1 - j, 1)?;
        let term = tape.mul(shifted, tap)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, term)?,
            None => term,
        });
    }
    tape.add(acc.expect("conv width > 0"), bias)
}

/// Gated selective-SSM block mapping `ℓ × d_model` to `ℓ × d_model`:
/// input projection, causal conv, SiLU, selective scan with input-dependent
/// `Δ`, `B`, `C`, SiLU gate, output projection.
pub fn mamba_block_forward(tape: &mut Tape, bound: &Bound, p: &SsmParams, z: Var) -> Result<Var> {
    match tape.shape(z) {
        [_, w] if *w == p.d_model => {}
        s => {
            return Err(MatError::dim(
                "mamba_block",
                format!("input {s:?} does not have width {}", p.d_model),
            ))
        }
    }
    if !tape.value(z).all_finite() {
        return Err(MatError::Numeric("mamba block input is not finite".into()));
    }
    let xi = p.in_proj.forward(tape, bound, z)?;
    let xc = causal_conv(tape, xi, bound[p.conv_weight], bound[p.conv_bias], p.conv_width)?;
    let xs = tape.silu(xc);

    let dt_pre = p.delta_proj.forward(tape, bound, xs)?;
    let delta = tape.softplus(dt_pre);
    let b = p.b_proj.forward(tape, bound, xs)?;
    let c = p.c_proj.forward(tape, bound, xs)?;
    let a_exp = tape.exp(bound[p.a_log]);
    let a = tape.neg(a_exp);

    let y = selective_scan(tape, xs, delta, a, b, c, bound[p.d_feed], p.scan_mode)?;
    let g = p.gate_proj.forward(tape, bound, z)?;
    let gate = tape.silu(g);
    let gated = tape.mul(y, gate)?;
    p.out_proj.forward(tape, bound, gated)
}
