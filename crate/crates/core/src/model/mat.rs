use super::block::{AxisMode, MatBlock};
use super::config::ModelConfig;
use super::revin::RevIn;
use crate::autodiff::{Mode, Tape, Var};
use crate::error::{MatError, Result};
use crate::params::{Bound, Linear, ParamStore};
use crate::rng::SplitRng;
use crate::tensor::Tensor;

/// Row-wise MLP along the time axis; SiLU between layers.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, depth: usize, rng: &mut SplitRng) -> Self {
        let layers = (0..depth)
            .map(|i| {
                let input = if i == 0 { fan_in } else { fan_out };
                Linear::new(store, &format!("{name}.{i}"), input, fan_out, true, rng)
            })
            .collect();
        Mlp { layers }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                h = tape.silu(h);
            }
            h = layer.forward(tape, bound, h)?;
        }
        Ok(h)
    }
}

/// Where each piece of the network lives inside the [`ParamStore`].
#[derive(Clone, Debug)]
pub struct MatLayout {
    pub revin: RevIn,
    pub emb1: Mlp,
    pub emb2: Mlp,
    pub high_temporal: MatBlock,
    pub high_channel: MatBlock,
    pub low_temporal: MatBlock,
    pub low_channel: MatBlock,
    pub proj1: Mlp,
    pub proj2: Mlp,
}

/// The full forecaster, mapping an `M × L` look-back block to `M × T`.
#[derive(Clone, Debug)]
pub struct MatModel {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub layout: MatLayout,
}

fn in_stage(stage: &'static str) -> impl Fn(MatError) -> MatError {
    move |e| match e {
        MatError::Dimension { op, detail } => MatError::Dimension {
            op: format!("{stage}/{op}"),
            detail,
        },
        other => other,
    }
}

impl MatModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let mut rng = SplitRng::new(c.seed);
        let mut store = ParamStore::new();
        let revin = RevIn::new(&mut store, "revin", c.channels, c.revin_affine);
        let emb1 = Mlp::new(&mut store, "emb1", c.lookback, c.n1, c.mlp_depth, &mut rng);
        let emb2 = Mlp::new(&mut store, "emb2", c.n1, c.n2, c.mlp_depth, &mut rng);
        let mut block = |name: &str, axis: AxisMode, width: usize| {
            MatBlock::new(
                &mut store,
                name,
                axis,
                width,
                c.dim,
                c.state,
                c.heads,
                c.conv_width,
                c.block_order,
                c.positional,
                c.scan_mode(),
                &mut rng,
            )
        };
        let high_temporal = block("blocks.high.temporal", AxisMode::Temporal, c.n1)?;
        let high_channel = block("blocks.high.channel", AxisMode::Channel, c.n1)?;
        let low_temporal = block("blocks.low.temporal", AxisMode::Temporal, c.n2)?;
        let low_channel = block("blocks.low.channel", AxisMode::Channel, c.n2)?;
        let proj1 = Mlp::new(&mut store, "proj1", c.n2, c.n1, c.mlp_depth, &mut rng);
        let proj2 = Mlp::new(&mut store, "proj2", c.n1, c.horizon, c.mlp_depth, &mut rng);
        Ok(MatModel {
            config,
            params: store,
            layout: MatLayout {
                revin,
                emb1,
                emb2,
                high_temporal,
                high_channel,
                low_temporal,
                low_channel,
                proj1,
                proj2,
            },
        })
    }

    /// Sets every weight inside the four hybrid blocks to zero.
    pub fn zero_blocks(&mut self) {
        self.params.zero_prefix("blocks.");
    }

    /// Records the forward pass of one `M × L` window on `tape`.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: &Tensor, mode: Mode, rng: &mut SplitRng) -> Result<Var> {
        let c = &self.config;
        if x.shape() != [c.channels, c.lookback] {
            return Err(MatError::dim(
                "input",
                format!("expected [{}, {}], got {:?}", c.channels, c.lookback, x.shape()),
            ));
        }
        let l = &self.layout;
        let xv = tape.constant(x.clone());
        let (xn, stats) = l.revin.normalize(tape, bound, xv).map_err(in_stage("revin"))?;

        let x1 = l.emb1.forward(tape, bound, xn).map_err(in_stage("emb1"))?;
        let ht = l.high_temporal.forward(tape, bound, x1).map_err(in_stage("high_temporal"))?;
        let hc = l.high_channel.forward(tape, bound, x1).map_err(in_stage("high_channel"))?;
        let fused_high = tape.add(ht, hc).map_err(in_stage("high_fusion"))?;

        let x2 = l.emb2.forward(tape, bound, x1).map_err(in_stage("emb2"))?;
        let x2 = tape.dropout(x2, c.dropout, mode, rng)?;
        let lt = l.low_temporal.forward(tape, bound, x2).map_err(in_stage("low_temporal"))?;
        let lc = l.low_channel.forward(tape, bound, x2).map_err(in_stage("low_channel"))?;
        let fused_low = tape.add(lt, lc).map_err(in_stage("low_fusion"))?;

        let p1 = l.proj1.forward(tape, bound, fused_low).map_err(in_stage("proj1"))?;
        let merged = tape.add(p1, fused_high).map_err(in_stage("residual"))?;
        let out = l.proj2.forward(tape, bound, merged).map_err(in_stage("proj2"))?;
        l.revin.denormalize(tape, bound, out, &stats).map_err(in_stage("revin_denormalize"))
    }

    /// Evaluation-mode forecast for one window.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.params.bind_constant(&mut tape);
        let mut rng = SplitRng::new(0);
        let y = self.forward(&mut tape, &bound, x, Mode::Eval, &mut rng)?;
        Ok(tape.value(y).clone())
    }
}
