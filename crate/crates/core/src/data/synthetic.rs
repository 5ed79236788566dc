//! Seeded synthetic series for smoke runs and desk-scale experiments.

use super::TimeSeriesDataset;
use crate::rng::SplitRng;
use crate::tensor::Tensor;

fn stamps(n: usize) -> Vec<String> {
    (0..n)
        .map(|t| {
            let minutes = 10 * t;
            format!("2020-01-{:02}T{:02}:{:02}:00", 1 + minutes / 1440, minutes / 60 % 24, minutes % 60)
        })
        .collect()
}

fn build(m: usize, n: usize, data: Vec<f64>) -> TimeSeriesDataset {
    TimeSeriesDataset {
        values: Tensor::matrix(m, n, data).expect("synthetic shape"),
        timestamps: stamps(n),
        channels: (0..m).map(|c| format!("ch{c}")).collect(),
    }
}

/// Two sinusoids per channel with channel-specific periods and phases,
/// plus i.i.d. Gaussian noise of standard deviation `noise`.
pub fn two_tone(n: usize, m: usize, noise: f64, seed: u64) -> TimeSeriesDataset {
    let root = SplitRng::new(seed);
    let mut data = Vec::with_capacity(m * n);
    for c in 0..m {
        let mut rng = root.derive(c as u64);
        let p1 = 24.0 + 6.0 * c as f64;
        let p2 = 7.0 + 2.0 * c as f64;
        let phase1 = rng.uniform_range(0.0, std::f64::consts::TAU);
        let phase2 = rng.uniform_range(0.0, std::f64::consts::TAU);
        for t in 0..n {
            let t = t as f64;
            let clean = (std::f64::consts::TAU * t / p1 + phase1).sin()
                + 0.5 * (std::f64::consts::TAU * t / p2 + phase2).sin();
            data.push(clean + noise * rng.normal());
        }
    }
    build(m, n, data)
}

/// Noiseless straight lines: channel `c` takes value `(c + 1) · t / n` at step `t`.
pub fn linear(n: usize, m: usize) -> TimeSeriesDataset {
    let data = (0..m)
        .flat_map(|c| (0..n).map(move |t| (c + 1) as f64 * t as f64 / n as f64))
        .collect();
    build(m, n, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded() {
        assert_eq!(two_tone(100, 2, 0.1, 4), two_tone(100, 2, 0.1, 4));
        assert_ne!(two_tone(100, 2, 0.1, 4), two_tone(100, 2, 0.1, 5));
        let ds = two_tone(500, 3, 0.0, 1);
        assert!(ds.values.data().iter().all(|v| v.abs() <= 1.5 + 1e-12));
    }

    #[test]
    fn linear_values() {
        let ds = linear(10, 2);
        assert_eq!(ds.values.at(1, 5), 1.0);
        assert_eq!(ds.timestamps[7], "2020-01-01T01:10:00");
    }
}
