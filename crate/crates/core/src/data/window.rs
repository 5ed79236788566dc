use super::split::Split;
use crate::error::{MatError, Result};
use crate::rng::SplitRng;
use crate::tensor::Tensor;

/// One supervised pair: look-back `x` (`M × L`) followed by target `y` (`M × T`).
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    pub x: Tensor,
    pub y: Tensor,
    /// Dataset index of the first look-back step.
    pub origin: usize,
}

/// `n − L − T + 1`, or zero when the segment is too short.
pub fn window_count(n: usize, lookback: usize, horizon: usize) -> usize {
    (n + 1).saturating_sub(lookback + horizon)
}

impl Split {
    /// The window whose look-back starts `start` steps into this split.
    pub fn window(&self, start: usize, lookback: usize, horizon: usize) -> WindowSample {
        let m = self.channels();
        let mut x = Vec::with_capacity(m * lookback);
        let mut y = Vec::with_capacity(m * horizon);
        for c in 0..m {
            let row = self.channel(c);
            x.extend_from_slice(&row[start..start + lookback]);
            y.extend_from_slice(&row[start + lookback..start + lookback + horizon]);
        }
        WindowSample {
            x: Tensor::matrix(m, lookback, x).expect("window shape"),
            y: Tensor::matrix(m, horizon, y).expect("window shape"),
            origin: self.offset + start,
        }
    }

    pub fn num_windows(&self, lookback: usize, horizon: usize) -> usize {
        window_count(self.len(), lookback, horizon)
    }

    pub fn check_windows(&self, lookback: usize, horizon: usize) -> Result<usize> {
        if lookback == 0 || horizon == 0 {
            return Err(MatError::Config("look-back and horizon must be positive".into()));
        }
        match self.num_windows(lookback, horizon) {
            0 => Err(MatError::Data(format!(
                "{} split has {} steps, fewer than L+T = {}",
                self.name,
                self.len(),
                lookback + horizon
            ))),
            n => Ok(n),
        }
    }
}

/// Every window of `split`, in time order.
pub fn windows(split: &Split, lookback: usize, horizon: usize) -> Result<impl Iterator<Item = WindowSample> + '_> {
    let n = split.check_windows(lookback, horizon)?;
    Ok((0..n).map(move |s| split.window(s, lookback, horizon)))
}

/// Index batches over `0..n`; the last one may be short.
pub fn batch_indices(n: usize, batch_size: usize, shuffle: bool, seed: u64) -> Vec<Vec<usize>> {
    let order = if shuffle {
        SplitRng::new(seed).permutation(n)
    } else {
        (0..n).collect()
    };
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

pub fn batches(items: &[WindowSample], batch_size: usize, shuffle: bool, seed: u64) -> impl Iterator<Item = Vec<&WindowSample>> {
    batch_indices(items.len(), batch_size, shuffle, seed)
        .into_iter()
        .map(move |b| b.into_iter().map(|i| &items[i]).collect())
}
