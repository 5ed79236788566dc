//! Shared fixtures for the criterion benches.

use mat_core::ssm::ScanMode;
use mat_core::{ModelConfig, SplitRng, Tensor};

/// Random selective-scan operands of length `len` with `d` channels and
/// state size `n`: `(u, Δ, A, B, C, D)`.
pub fn scan_operands(len: usize, d: usize, n: usize, seed: u64) -> [Tensor; 6] {
    let mut rng = SplitRng::new(seed);
    [
        Tensor::uniform(&[len, d], 1.0, &mut rng),
        Tensor::uniform(&[len, d], 1.0, &mut rng).map(|v| 0.01 + 0.1 * v.abs()),
        Tensor::uniform(&[d, n], 1.0, &mut rng).map(|v| -0.5 - v.abs()),
        Tensor::uniform(&[len, n], 1.0, &mut rng),
        Tensor::uniform(&[len, n], 1.0, &mut rng),
        Tensor::uniform(&[d], 1.0, &mut rng),
    ]
}

/// Desk-scale model configuration used by the forward bench.
pub fn bench_config(horizon: usize, mode: ScanMode) -> ModelConfig {
    ModelConfig {
        horizon,
        dim: 16,
        n1: 64,
        n2: 32,
        heads: 2,
        parallel_scan: mode == ScanMode::Parallel,
        ..ModelConfig::default()
    }
}
