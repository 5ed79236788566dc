use crate::autodiff::{Tape, Var};
use crate::error::{MatError, Result};
use crate::tensor::Tensor;

fn check(op: &'static str, pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(MatError::dim(op, format!("{:?} vs {:?}", pred.shape(), target.shape())));
    }
    Ok(())
}

/// Mean squared error over every element.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check("mse", pred, target)?;
    let s: f64 = pred.data().iter().zip(target.data()).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(s / pred.len() as f64)
}

/// Mean absolute error over every element.
pub fn mae(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check("mae", pred, target)?;
    let s: f64 = pred.data().iter().zip(target.data()).map(|(p, t)| (p - t).abs()).sum();
    Ok(s / pred.len() as f64)
}

/// The L2 training objective recorded on the tape.
pub fn mse_loss(tape: &mut Tape, pred: Var, target: &Tensor) -> Result<Var> {
    if tape.shape(pred) != target.shape() {
        return Err(MatError::dim("mse_loss", format!("{:?} vs {:?}", tape.shape(pred), target.shape())));
    }
    let t = tape.constant(target.clone());
    let diff = tape.sub(pred, t)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.mean(sq))
}

/// Running error sums, merged in a fixed order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorStats {
    pub sq_sum: f64,
    pub abs_sum: f64,
    pub count: usize,
}

impl ErrorStats {
    pub fn of(pred: &Tensor, target: &Tensor) -> Result<Self> {
        check("error_stats", pred, target)?;
        let mut s = ErrorStats {
            count: pred.len(),
            ..Default::default()
        };
        for (p, t) in pred.data().iter().zip(target.data()) {
            s.sq_sum += (p - t) * (p - t);
            s.abs_sum += (p - t).abs();
        }
        Ok(s)
    }

    pub fn merge(self, other: ErrorStats) -> ErrorStats {
        ErrorStats {
            sq_sum: self.sq_sum + other.sq_sum,
            abs_sum: self.abs_sum + other.abs_sum,
            count: self.count + other.count,
        }
    }

    pub fn mse(&self) -> f64 {
        self.sq_sum / self.count.max(1) as f64
    }

    pub fn mae(&self) -> f64 {
        self.abs_sum / self.count.max(1) as f64
    }
}
