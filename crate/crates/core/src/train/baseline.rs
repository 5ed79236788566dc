use std::path::Path;

use serde_json::json;

use super::{Forecaster, Predictor};
use crate::autodiff::{Mode, Tape, Var};
use crate::error::{MatError, Result};
use crate::model::{read_archive, write_archive, Archive};
use crate::params::{Bound, Linear, ParamStore};
use crate::rng::SplitRng;
use crate::tensor::Tensor;

/// Repeats the last look-back value of each channel across the horizon.
#[derive(Clone, Copy, Debug)]
pub struct NaiveRepeat {
    pub horizon: usize,
}

impl Predictor for NaiveRepeat {
    fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let (m, l) = x.dims2()?;
        let data = (0..m)
            .flat_map(|c| std::iter::repeat_n(x.at(c, l - 1), self.horizon))
            .collect();
        Tensor::matrix(m, self.horizon, data)
    }
}

/// One `L → T` affine map shared by every channel.
#[derive(Clone, Debug)]
pub struct LinearBaseline {
    pub lookback: usize,
    pub horizon: usize,
    pub params: ParamStore,
    pub map: Linear,
}

impl LinearBaseline {
    pub fn new(lookback: usize, horizon: usize, seed: u64) -> Self {
        let mut params = ParamStore::new();
        let mut rng = SplitRng::new(seed).derive(0x11_4e);
        let map = Linear::new(&mut params, "linear", lookback, horizon, true, &mut rng);
        LinearBaseline {
            lookback,
            horizon,
            params,
            map,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_archive(
            path,
            &Archive {
                kind: "linear".into(),
                meta: json!({ "lookback": self.lookback, "horizon": self.horizon }),
                tensors: self.params.iter().map(|(n, t)| (n.to_string(), t.clone())).collect(),
            },
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let a = read_archive(path)?;
        let dim = |k: &str| {
            a.meta[k]
                .as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| MatError::Checkpoint(format!("linear baseline meta lacks {k}")))
        };
        if a.kind != "linear" {
            return Err(MatError::Checkpoint(format!("archive kind {:?} is not a linear baseline", a.kind)));
        }
        let mut model = LinearBaseline::new(dim("lookback")?, dim("horizon")?, 0);
        let mut loaded = ParamStore::new();
        for (n, t) in a.tensors {
            loaded.add(n, t);
        }
        model.params.load_from(&loaded)?;
        Ok(model)
    }
}

impl Forecaster for LinearBaseline {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn forward(&self, tape: &mut Tape, bound: &Bound, x: &Tensor, _mode: Mode, _rng: &mut SplitRng) -> Result<Var> {
        if x.rank() != 2 || x.shape()[1] != self.lookback {
            return Err(MatError::dim("linear_baseline", format!("expected [M, {}], got {:?}", self.lookback, x.shape())));
        }
        let xv = tape.constant(x.clone());
        self.map.forward(tape, bound, xv)
    }
}

impl Predictor for LinearBaseline {
    fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.params.bind_constant(&mut tape);
        let y = self.forward(&mut tape, &bound, x, Mode::Eval, &mut SplitRng::new(0))?;
        Ok(tape.value(y).clone())
    }
}
