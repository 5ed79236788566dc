//! Optimisation, losses, baselines and the epoch loop.

mod adam;
mod baseline;
mod harness;
mod metrics;
mod report;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use baseline::{LinearBaseline, NaiveRepeat};
pub use harness::{evaluate, train, EpochRecord, MetricsSpace, TrainConfig, TrainOutcome};
pub use metrics::{mae, mse, mse_loss, ErrorStats};
pub use report::{loss_curve_csv, MetricsReport, METRICS_CSV_HEADER};

use crate::autodiff::{Mode, Tape, Var};
use crate::error::Result;
use crate::model::MatModel;
use crate::params::{Bound, ParamStore};
use crate::rng::SplitRng;
use crate::tensor::Tensor;

/// A trainable `M × L → M × T` map whose parameters live in a [`ParamStore`].
pub trait Forecaster: Sync {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn forward(&self, tape: &mut Tape, bound: &Bound, x: &Tensor, mode: Mode, rng: &mut SplitRng) -> Result<Var>;
}

/// Anything that turns a look-back block into a forecast block.
pub trait Predictor: Sync {
    fn predict(&self, x: &Tensor) -> Result<Tensor>;
}

impl Forecaster for MatModel {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn forward(&self, tape: &mut Tape, bound: &Bound, x: &Tensor, mode: Mode, rng: &mut SplitRng) -> Result<Var> {
        MatModel::forward(self, tape, bound, x, mode, rng)
    }
}

impl Predictor for MatModel {
    fn predict(&self, x: &Tensor) -> Result<Tensor> {
        MatModel::predict(self, x)
    }
}
