//! Selective state-space machinery.
//!
//! Each inner channel `i` and state index `n` forms an independent lane with
//! diagonal continuous dynamics `A[i,n] < 0`. Per step, the input-dependent
//! `Δ`, `B` and `C` are discretised by zero-order hold and the lane evolves as
//! `x_k = Ā_k x_{k-1} + B̄_k u_k`, read out as `y_k = Σ_n C_k[n] x_k + D u_k`.

mod block;
mod discretize;
mod scan;

pub use block::{mamba_block_forward, SsmParams};
pub use discretize::{discretize_zoh, discretize_zoh_scalar, zoh_gain};
pub use scan::{
    scan_states, selective_scan, selective_scan_parallel, selective_scan_sequential, ScanElement, ScanMode,
    ScanInputs,
};
