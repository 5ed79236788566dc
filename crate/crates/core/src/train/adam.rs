use crate::error::{MatError, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Moment estimates mirroring the parameter list.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr: f64,
}

impl AdamState {
    pub fn new(params: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            lr,
        }
    }
}

/// One bias-corrected Adam update. Gradients are checked before anything
/// is modified, so a failure leaves parameters and state untouched.
pub fn adam_step(params: &mut ParamStore, grads: &[Tensor], state: &mut AdamState) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(MatError::dim(
            "adam",
            format!("{} parameters, {} gradients, {} moments", params.len(), grads.len(), state.m.len()),
        ));
    }
    for (id, g) in params.ids().zip(grads) {
        if g.shape() != params.get(id).shape() {
            return Err(MatError::dim(
                "adam",
                format!("gradient {:?} for {} of shape {:?}", g.shape(), params.name(id), params.get(id).shape()),
            ));
        }
        if !g.all_finite() {
            return Err(MatError::Numeric(format!("non-finite gradient for parameter {}", params.name(id))));
        }
    }
    state.t += 1;
    let c1 = 1.0 - state.beta1.powi(state.t as i32);
    let c2 = 1.0 - state.beta2.powi(state.t as i32);
    let (b1, b2, eps, lr) = (state.beta1, state.beta2, state.eps, state.lr);
    for (k, p) in params.tensors_mut().iter_mut().enumerate() {
        let g = grads[k].data();
        let m = state.m[k].data_mut();
        let v = state.v[k].data_mut();
        for (i, theta) in p.data_mut().iter_mut().enumerate() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let step = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            if step != 0.0 {
                *theta -= step;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("theta", Tensor::vector(values));
        s
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut p = store(vec![0.5, -2.0, 3.0]);
        let mut st = AdamState::new(&p, 0.01);
        adam_step(&mut p, &[Tensor::vector(vec![4.0, -0.001, 1e3])], &mut st).unwrap();
        let moved: Vec<f64> = p.get(p.find("theta").unwrap()).data().to_vec();
        let delta = [moved[0] - 0.5, moved[1] + 2.0, moved[2] - 3.0];
        assert!(delta[0] < 0.0 && delta[1] > 0.0 && delta[2] < 0.0);
        for d in delta {
            assert!(d.abs() <= 0.01 * (1.0 + 1e-5), "{d}");
            assert!(d.abs() > 0.0099);
        }
    }

    #[test]
    fn zero_gradient_and_zero_rate_leave_bits() {
        let init = vec![0.1, -0.7, 1e-300];
        let mut p = store(init.clone());
        let mut st = AdamState::new(&p, 0.1);
        for _ in 0..5 {
            adam_step(&mut p, &[Tensor::vector(vec![0.0; 3])], &mut st).unwrap();
        }
        assert_eq!(p.tensors()[0].data(), init.as_slice());
        let mut st = AdamState::new(&p, 0.0);
        adam_step(&mut p, &[Tensor::vector(vec![1.0, -3.0, 2.0])], &mut st).unwrap();
        let bits: Vec<u64> = p.tensors()[0].data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, init.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn quadratic_bowl() {
        let mut p = store(vec![1.0]);
        let mut st = AdamState::new(&p, 0.01);
        for _ in 0..500 {
            let g = 2.0 * p.tensors()[0].data()[0];
            adam_step(&mut p, &[Tensor::vector(vec![g])], &mut st).unwrap();
        }
        assert!(p.tensors()[0].data()[0].abs() < 1e-2);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = store(vec![1.0, 2.0]);
        let mut st = AdamState::new(&p, 0.01);
        let err = adam_step(&mut p, &[Tensor::vector(vec![f64::NAN, 0.0])], &mut st).unwrap_err();
        assert!(err.to_string().contains("theta"));
        assert_eq!(st.t, 0);
        assert_eq!(p.tensors()[0].data(), &[1.0, 2.0]);
    }
}
