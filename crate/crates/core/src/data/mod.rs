//! Time-series ingestion and supervised windowing.

mod cache;
mod csv_load;
mod scaler;
mod split;
pub mod synthetic;
mod window;

pub use cache::{load_cache, save_cache};
pub use csv_load::{load_csv, CsvOptions, Imputation};
pub use scaler::{apply_scaler, fit_scaler, Scaler};
pub use split::{chronological_split, Split, Splits};
pub use window::{batch_indices, batches, window_count, windows, WindowSample};

use crate::tensor::Tensor;

/// `M` channels over `n` time steps, stored channel-major as `M × n`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesDataset {
    pub values: Tensor,
    /// ISO-8601 timestamps, strictly increasing.
    pub timestamps: Vec<String>,
    pub channels: Vec<String>,
}

impl TimeSeriesDataset {
    pub fn num_channels(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn len(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
