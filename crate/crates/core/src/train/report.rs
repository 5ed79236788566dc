use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::harness::{EpochRecord, MetricsSpace};

pub const METRICS_CSV_HEADER: &str = "dataset,model,lookback,horizon,metrics_space,mse,mae";

/// Errors for one (dataset, model, horizon) run plus its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub model: String,
    pub lookback: usize,
    pub horizon: usize,
    pub metrics_space: MetricsSpace,
    pub mse: f64,
    pub mae: f64,
    pub seed: u64,
    pub history: Vec<EpochRecord>,
    pub config: Value,
    pub wall_clock_secs: f64,
}

impl MetricsReport {
    /// One CSV line matching [`METRICS_CSV_HEADER`]; wall clock is left out
    /// so identical runs give identical bytes.
    pub fn csv_row(&self) -> String {
        let space = match self.metrics_space {
            MetricsSpace::Scaled => "scaled",
            MetricsSpace::Raw => "raw",
        };
        format!(
            "{},{},{},{},{},{:e},{:e}",
            self.dataset, self.model, self.lookback, self.horizon, space, self.mse, self.mae
        )
    }
}

/// `epoch,train_loss,val_loss` with an empty cell when there is no validation split.
pub fn loss_curve_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for r in history {
        let val = r.val_loss.map(|v| format!("{v:e}")).unwrap_or_default();
        out.push_str(&format!("{},{:e},{}\n", r.epoch, r.train_loss, val));
    }
    out
}
