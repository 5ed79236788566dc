//! The hybrid forecaster: instance normalisation, two-stage embedding, four
//! hybrid blocks over two resolutions and two axes, and a two-stage
//! projection head with a residual from the high-resolution level.

mod block;
mod checkpoint;
mod config;
mod mat;
mod revin;

pub use block::{AxisMode, MatBlock};
pub use checkpoint::{read_archive, write_archive, Archive, ArchiveEntry, CHECKPOINT_VERSION};
pub use config::{BlockOrder, ModelConfig};
pub use mat::{MatLayout, MatModel, Mlp};
pub use revin::{revin_denormalize, revin_normalize, RevIn, RevinState, REVIN_EPS};
