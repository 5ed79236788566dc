use super::{Tape, Var};
use crate::error::{MatError, Result};
use crate::tensor::Tensor;

fn eval_scalar<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let v = tape.value(out);
    if v.len() != 1 {
        return Err(MatError::Contract(format!(
            "gradient check needs a scalar function, got shape {:?}",
            v.shape()
        )));
    }
    Ok(v.item())
}

/// Central-difference gradient of `f` with respect to input `which`.
pub fn numeric_gradient<F>(f: &F, inputs: &[Tensor], which: usize, h: f64) -> Result<Tensor>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut work = inputs.to_vec();
    let mut out = Tensor::zeros(inputs[which].shape());
    for i in 0..inputs[which].len() {
        let orig = inputs[which].data()[i];
        work[which].data_mut()[i] = orig + h;
        let fp = eval_scalar(f, &work)?;
        work[which].data_mut()[i] = orig - h;
        let fm = eval_scalar(f, &work)?;
        work[which].data_mut()[i] = orig;
        out.data_mut()[i] = (fp - fm) / (2.0 * h);
    }
    Ok(out)
}

/// Compares tape gradients against central differences for every input.
///
/// Returns, per input, `max_i |analytic_i - numeric_i| / max(1, |analytic_i|)`.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let mut errs = Vec::with_capacity(inputs.len());
    for (k, (v, x)) in vars.iter().zip(inputs).enumerate() {
        let analytic = grads.get_or_zeros(*v, x.shape());
        let numeric = numeric_gradient(&f, inputs, k, h)?;
        let err = analytic
            .data()
            .iter()
            .zip(numeric.data())
            .map(|(a, n)| (a - n).abs() / a.abs().max(1.0))
            .fold(0.0, f64::max);
        errs.push(err);
    }
    Ok(errs)
}

/// Single-input form of [`grad_check_many`].
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let errs = grad_check_many(|t: &mut Tape, v: &[Var]| f(t, v[0]), std::slice::from_ref(x), h)?;
    Ok(errs[0])
}
