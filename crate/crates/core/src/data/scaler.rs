use serde::{Deserialize, Serialize};

use super::split::Split;
use super::TimeSeriesDataset;
use crate::error::{MatError, Result};
use crate::tensor::Tensor;

pub const SCALER_EPS: f64 = 1e-8;

/// Per-channel standardisation fitted on the training segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn fit_scaler(train: &Split) -> Result<Scaler> {
    if train.is_empty() {
        return Err(MatError::Data("cannot fit a scaler on an empty training split".into()));
    }
    let n = train.len() as f64;
    let (mut mean, mut std) = (Vec::new(), Vec::new());
    for c in 0..train.channels() {
        let row = train.channel(c);
        let mu = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        mean.push(mu);
        std.push(var.sqrt().max(SCALER_EPS));
    }
    Ok(Scaler { mean, std })
}

pub fn apply_scaler(ds: &TimeSeriesDataset, scaler: &Scaler) -> Result<TimeSeriesDataset> {
    Ok(TimeSeriesDataset {
        values: scaler.transform(&ds.values)?,
        timestamps: ds.timestamps.clone(),
        channels: ds.channels.clone(),
    })
}

impl Scaler {
    fn check(&self, rows: usize) -> Result<()> {
        if rows != self.mean.len() {
            return Err(MatError::dim("scaler", format!("{rows} channels vs scaler for {}", self.mean.len())));
        }
        Ok(())
    }

    /// Standardises an `M × k` block.
    pub fn transform(&self, block: &Tensor) -> Result<Tensor> {
        let (m, k) = block.dims2()?;
        self.check(m)?;
        let data = (0..m * k)
            .map(|i| (block.data()[i] - self.mean[i / k]) / self.std[i / k])
            .collect();
        Tensor::new(block.shape().to_vec(), data)
    }

    /// Maps a standardised `M × k` block back to raw units.
    pub fn inverse(&self, block: &Tensor) -> Result<Tensor> {
        let (m, k) = block.dims2()?;
        self.check(m)?;
        let data = (0..m * k)
            .map(|i| block.data()[i] * self.std[i / k] + self.mean[i / k])
            .collect();
        Tensor::new(block.shape().to_vec(), data)
    }

    pub fn transform_split(&self, split: &Split) -> Result<Split> {
        self.check(split.channels())?;
        let mut out = split.clone();
        for c in 0..split.channels() {
            let (mu, sd) = (self.mean[c], self.std[c]);
            for v in out.channel_mut(c) {
                *v = (*v - mu) / sd;
            }
        }
        Ok(out)
    }
}
