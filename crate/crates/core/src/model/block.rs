use serde::{Deserialize, Serialize};

use super::config::BlockOrder;
use crate::attention::{multi_head_attention, AttentionParams, PositionalEncoding};
use crate::autodiff::{Tape, Var};
use crate::error::{MatError, Result};
use crate::params::{Bound, Linear, ParamStore};
use crate::rng::SplitRng;
use crate::ssm::{mamba_block_forward, ScanMode, SsmParams};

/// Which axis of an `M × n` block a hybrid block treats as its sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisMode {
    /// Each channel's row is a length-`n` sequence of scalars, lifted to the
    /// block width. Channels share weights and never mix.
    Temporal,
    /// The `M` channels are tokens of width `n`.
    Channel,
}

/// One SSM sublayer and one attention sublayer, each residual-wrapped.
#[derive(Clone, Debug)]
pub struct MatBlock {
    pub axis: AxisMode,
    pub ssm: SsmParams,
    pub attention: AttentionParams,
    /// Temporal mode only: scalar token → block width, and back.
    pub lift: Option<Linear>,
    pub down: Option<Linear>,
    pub order: BlockOrder,
    pub positional: bool,
}

impl MatBlock {
    /// `seq_width` is the level width `n`; `dim` is the SSM inner width.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        axis: AxisMode,
        seq_width: usize,
        dim: usize,
        state: usize,
        heads: usize,
        conv_width: usize,
        order: BlockOrder,
        positional: bool,
        scan_mode: ScanMode,
        rng: &mut SplitRng,
    ) -> Result<Self> {
        let (d_model, lift, down) = match axis {
            AxisMode::Temporal => (
                dim,
                Some(Linear::new(store, &format!("{name}.lift"), 1, dim, true, rng)),
                Some(Linear::new(store, &format!("{name}.down"), dim, 1, true, rng)),
            ),
            AxisMode::Channel => (seq_width, None, None),
        };
        let mut ssm = SsmParams::new(store, &format!("{name}.ssm"), d_model, dim, state, conv_width, rng)?;
        ssm.scan_mode = scan_mode;
        let attention = AttentionParams::new(store, &format!("{name}.attn"), d_model, heads, rng)?;
        Ok(MatBlock {
            axis,
            ssm,
            attention,
            lift,
            down,
            order,
            positional,
        })
    }

    pub fn d_model(&self) -> usize {
        self.attention.d_model
    }

    fn attend(&self, tape: &mut Tape, bound: &Bound, h: Var) -> Result<Var> {
        let input = if self.positional {
            let len = tape.shape(h)[0];
            let pe = tape.constant(PositionalEncoding::new(self.d_model()).table(len));
            tape.add(h, pe)?
        } else {
            h
        };
        let a = multi_head_attention(tape, bound, &self.attention, input, input, input)?;
        tape.add(h, a)
    }

    fn mix(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        match self.order {
            BlockOrder::MambaFirst => {
                let m = mamba_block_forward(tape, bound, &self.ssm, x)?;
                let h = tape.add(x, m)?;
                self.attend(tape, bound, h)
            }
            BlockOrder::AttentionFirst => {
                let h = self.attend(tape, bound, x)?;
                let m = mamba_block_forward(tape, bound, &self.ssm, h)?;
                tape.add(h, m)
            }
        }
    }

    /// Shape-preserving map of an `M × n` block.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, z: Var) -> Result<Var> {
        if tape.shape(z).len() != 2 {
            return Err(MatError::dim("mat_block", format!("expected M×n input, got {:?}", tape.shape(z))));
        }
        match self.axis {
            AxisMode::Channel => self.mix(tape, bound, z),
            AxisMode::Temporal => {
                let (lift, down) = (self.lift.expect("temporal lift"), self.down.expect("temporal down"));
                let channels = tape.shape(z)[0];
                let zt = tape.transpose(z)?;
                let mut cols = Vec::with_capacity(channels);
                for c in 0..channels {
                    let col = tape.slice_cols(zt, c, 1)?;
                    let e = lift.forward(tape, bound, col)?;
                    let a = self.mix(tape, bound, e)?;
                    cols.push(down.forward(tape, bound, a)?);
                }
                let stacked = if cols.len() == 1 { cols[0] } else { tape.concat_cols(&cols)? };
                let update = tape.transpose(stacked)?;
                tape.add(z, update)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check_many;
    use crate::tensor::Tensor;

    fn make(axis: AxisMode, order: BlockOrder, positional: bool) -> (ParamStore, MatBlock) {
        let mut store = ParamStore::new();
        let mut rng = SplitRng::new(17);
        let b = MatBlock::new(&mut store, "blk", axis, 4, 4, 1, 2, 2, order, positional, ScanMode::Sequential, &mut rng)
            .unwrap();
        (store, b)
    }

    fn run(store: &ParamStore, b: &MatBlock, z: &Tensor) -> Tensor {
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let zv = tape.constant(z.clone());
        let y = b.forward(&mut tape, &bound, zv).unwrap();
        tape.value(y).clone()
    }

    #[test]
    fn zero_weights_give_identity() {
        let mut rng = SplitRng::new(1);
        let z = Tensor::uniform(&[3, 4], 1.0, &mut rng);
        for axis in [AxisMode::Temporal, AxisMode::Channel] {
            for order in [BlockOrder::MambaFirst, BlockOrder::AttentionFirst] {
                let (mut store, b) = make(axis, order, false);
                store.zero_prefix("blk");
                assert_eq!(run(&store, &b, &z), z, "{axis:?} {order:?}");
            }
        }
    }

    #[test]
    fn shape_is_preserved() {
        let mut rng = SplitRng::new(2);
        let z = Tensor::uniform(&[3, 4], 1.0, &mut rng);
        for axis in [AxisMode::Temporal, AxisMode::Channel] {
            let (store, b) = make(axis, BlockOrder::MambaFirst, true);
            assert_eq!(run(&store, &b, &z).shape(), &[3, 4]);
        }
    }

    #[test]
    fn temporal_mode_keeps_channels_separate() {
        let (store, b) = make(AxisMode::Temporal, BlockOrder::MambaFirst, false);
        let mut rng = SplitRng::new(3);
        let z = Tensor::uniform(&[3, 4], 1.0, &mut rng);
        let base = run(&store, &b, &z);
        let mut zp = z.clone();
        zp.data_mut()[4] += 1.0; // channel 1 only
        let y = run(&store, &b, &zp);
        assert_eq!(y.row(0), base.row(0));
        assert_eq!(y.row(2), base.row(2));
        // identical rows stay identical
        let same = Tensor::from_rows(&[z.row(0).to_vec(), z.row(0).to_vec()]).unwrap();
        let ys = run(&store, &b, &same);
        assert_eq!(ys.row(0), ys.row(1));
    }

    #[test]
    fn block_gradients_match_finite_differences() {
        for axis in [AxisMode::Temporal, AxisMode::Channel] {
            let (store, b) = make(axis, BlockOrder::MambaFirst, true);
            let mut rng = SplitRng::new(4);
            let z = Tensor::uniform(&[3, 4], 1.0, &mut rng);
            let mut inputs = vec![z];
            inputs.extend(store.tensors().iter().cloned());
            let errs = grad_check_many(
                |tape: &mut Tape, v: &[Var]| {
                    let bound = Bound::from_vars(v[1..].to_vec());
                    let y = b.forward(tape, &bound, v[0])?;
                    let sq = tape.mul(y, y)?;
                    Ok(tape.mean(sq))
                },
                &inputs,
                1e-5,
            )
            .unwrap();
            let worst = errs.iter().cloned().fold(0.0, f64::max);
            assert!(worst < 1e-4, "{axis:?}: {worst}");
        }
    }
}
