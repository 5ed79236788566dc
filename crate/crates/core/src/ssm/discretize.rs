use crate::error::{MatError, Result};

/// `expm1(x) / x`, continuous at zero.
pub(crate) fn phi1(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 + x / 2.0 + x * x / 6.0
    } else {
        x.exp_m1() / x
    }
}

/// Derivative of [`phi1`].
pub(crate) fn phi1_prime(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        0.5 + x / 3.0 + x * x / 8.0 + x * x * x / 30.0
    } else {
        (x * x.exp() - x.exp_m1()) / (x * x)
    }
}

/// Input gain `(exp(Δa) − 1) / a` of the zero-order hold, equal to `Δ` when `a = 0`.
pub fn zoh_gain(a: f64, delta: f64) -> f64 {
    delta * phi1(delta * a)
}

/// Zero-order hold for one scalar lane: returns `(Ā, B̄)` with
/// `Ā = exp(Δa)` and `B̄ = (exp(Δa) − 1)/a · b`.
pub fn discretize_zoh_scalar(a: f64, b: f64, delta: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0) {
        return Err(MatError::Contract(format!("sampling interval must be positive, got {delta}")));
    }
    Ok(((delta * a).exp(), zoh_gain(a, delta) * b))
}

/// Zero-order hold for a diagonal `A` sharing one `Δ`.
pub fn discretize_zoh(a: &[f64], b: &[f64], delta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != b.len() {
        return Err(MatError::dim(
            "discretize_zoh",
            format!("A has {} diagonal entries but B has {}", a.len(), b.len()),
        ));
    }
    a.iter()
        .zip(b)
        .map(|(&ai, &bi)| discretize_zoh_scalar(ai, bi, delta))
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().unzip())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_scalar_case() {
        let (ab, bb) = discretize_zoh_scalar(-1.0, 1.0, 0.1).unwrap();
        assert!((ab - (-0.1f64).exp()).abs() < 1e-15);
        assert!((bb - (1.0 - (-0.1f64).exp())).abs() < 1e-15);
        assert!((ab - 0.904837).abs() < 1e-6);
        assert!((bb - 0.0951626).abs() < 1e-7);
    }

    #[test]
    fn zero_a_limit() {
        assert_eq!(discretize_zoh_scalar(0.0, 1.0, 1.0).unwrap(), (1.0, 1.0));
        let (ab, bb) = discretize_zoh_scalar(1e-12, 2.0, 0.5).unwrap();
        assert!((ab - 1.0).abs() < 1e-12 && (bb - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vanishing_interval() {
        let (ab, bb) = discretize_zoh_scalar(-3.0, 1.0, 1e-12).unwrap();
        assert!((ab - 1.0).abs() < 1e-11);
        assert!(bb.abs() < 1e-11);
    }

    #[test]
    fn nonpositive_interval_is_rejected() {
        assert!(matches!(discretize_zoh_scalar(-1.0, 1.0, 0.0), Err(MatError::Contract(_))));
        assert!(matches!(discretize_zoh_scalar(-1.0, 1.0, -0.5), Err(MatError::Contract(_))));
        assert!(discretize_zoh_scalar(-1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn phi1_derivative_matches_differences() {
        for &x in &[-3.0, -0.5, -1e-2, -5e-4, 0.0, 2e-4, 0.7] {
            let h = 1e-6;
            let fd = (phi1(x + h) - phi1(x - h)) / (2.0 * h);
            assert!((fd - phi1_prime(x)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn vector_form_checks_lengths() {
        assert!(discretize_zoh(&[-1.0, -2.0], &[1.0], 0.1).is_err());
        let (a, b) = discretize_zoh(&[-1.0, -2.0], &[1.0, 3.0], 0.1).unwrap();
        assert_eq!(a.len(), 2);
        assert!((b[1] - 3.0 * (1.0 - (-0.2f64).exp()) / 2.0).abs() < 1e-15);
    }
}
