use super::TimeSeriesDataset;
use crate::error::{MatError, Result};

/// A contiguous time segment of a dataset. May be empty.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub name: String,
    channels: usize,
    len: usize,
    /// Channel-major `channels × len`.
    data: Vec<f64>,
    /// Index of the first step in the parent dataset.
    pub offset: usize,
}

impl Split {
    pub fn new(name: impl Into<String>, channels: usize, len: usize, data: Vec<f64>, offset: usize) -> Result<Self> {
        if data.len() != channels * len {
            return Err(MatError::dim("split", format!("{channels}×{len} needs {} values", channels * len)));
        }
        Ok(Split {
            name: name.into(),
            channels,
            len,
            data,
            offset,
        })
    }

    /// The whole dataset as one segment.
    pub fn whole(name: impl Into<String>, ds: &TimeSeriesDataset) -> Split {
        Split {
            name: name.into(),
            channels: ds.num_channels(),
            len: ds.len(),
            data: ds.values.data().to_vec(),
            offset: 0,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    pub(crate) fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let len = self.len;
        &mut self.data[c * len..(c + 1) * len]
    }
}

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Split,
    pub val: Split,
    pub test: Split,
}

/// Cuts `ds` into consecutive train/validation/test segments, in time order.
pub fn chronological_split(ds: &TimeSeriesDataset, ratios: [f64; 3]) -> Result<Splits> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || ratios[0] <= 0.0 {
        return Err(MatError::Config(format!("split ratios {ratios:?} must be non-negative with a positive train share")));
    }
    let total: f64 = ratios.iter().sum();
    if total > 1.0 + 1e-9 {
        return Err(MatError::Config(format!("split ratios {ratios:?} sum to more than 1")));
    }
    let n = ds.len();
    let take = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
    let train = take(ratios[0]).min(n);
    let val = take(ratios[1]).min(n - train);
    let test = if (total - 1.0).abs() < 1e-9 {
        n - train - val
    } else {
        take(ratios[2]).min(n - train - val)
    };
    let m = ds.num_channels();
    let cut = |name: &str, start: usize, len: usize| -> Result<Split> {
        let mut data = Vec::with_capacity(m * len);
        for c in 0..m {
            data.extend_from_slice(&ds.values.row(c)[start..start + len]);
        }
        Split::new(name, m, len, data, start)
    };
    Ok(Splits {
        train: cut("train", 0, train)?,
        val: cut("val", train, val)?,
        test: cut("test", train + val, test)?,
    })
}
