use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::metrics::{mse_loss, ErrorStats};
use super::{Forecaster, Predictor};
use crate::autodiff::{Mode, Tape};
use crate::data::{batch_indices, Scaler, WindowSample};
use crate::error::{MatError, Result};
use crate::rng::SplitRng;
use crate::tensor::Tensor;

/// Units in which errors are reported.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricsSpace {
    #[default]
    Scaled,
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
    /// Global gradient-norm ceiling.
    pub grad_clip: Option<f64>,
    pub metrics_space: MetricsSpace,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch: 32,
            lr: 1e-4,
            seed: 2024,
            patience: None,
            grad_clip: None,
            metrics_space: MetricsSpace::Scaled,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(MatError::Config(format!("train.{what} must be positive")));
        if self.epochs == 0 {
            return bad("epochs");
        }
        if self.batch == 0 {
            return bad("batch");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr");
        }
        if self.workers == 0 {
            return bad("workers");
        }
        if self.patience == Some(0) {
            return bad("patience");
        }
        if matches!(self.grad_clip, Some(c) if !(c.is_finite() && c > 0.0)) {
            return bad("grad_clip");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

fn run_ordered<T, F>(pool: Option<&rayon::ThreadPool>, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match pool {
        Some(pool) => pool.install(|| {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(&f).collect()
        }),
        None => (0..n).map(f).collect(),
    }
}

fn build_pool(workers: usize) -> Result<Option<rayon::ThreadPool>> {
    if workers <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map(Some)
        .map_err(|e| MatError::Config(format!("worker pool: {e}")))
}

fn sample_grad<F: Forecaster>(model: &F, w: &WindowSample, rng: &mut SplitRng) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let bound = model.params().bind(&mut tape);
    let pred = model.forward(&mut tape, &bound, &w.x, Mode::Train, rng)?;
    let loss = mse_loss(&mut tape, pred, &w.y)?;
    let value = tape.value(loss).item();
    let grads = tape.backward(loss)?;
    Ok((value, model.params().collect_grads(&bound, &grads)))
}

fn clip(grads: &mut [Tensor], max_norm: f64) {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let k = max_norm / norm;
        for g in grads {
            g.data_mut().iter_mut().for_each(|v| *v *= k);
        }
    }
}

fn evaluate_with_pool<P: Predictor + ?Sized>(
    pool: Option<&rayon::ThreadPool>,
    model: &P,
    windows: &[WindowSample],
    scaler: Option<&Scaler>,
) -> Result<ErrorStats> {
    let per = run_ordered(pool, windows.len(), |i| -> Result<ErrorStats> {
        let w = &windows[i];
        let pred = model.predict(&w.x)?;
        match scaler {
            Some(s) => ErrorStats::of(&s.inverse(&pred)?, &s.inverse(&w.y)?),
            None => ErrorStats::of(&pred, &w.y),
        }
    });
    per.into_iter().try_fold(ErrorStats::default(), |acc, s| Ok(acc.merge(s?)))
}

/// Forecast errors over `windows`; raw units when a scaler is given.
///
/// Pure with respect to the model: repeated calls return identical values.
pub fn evaluate<P: Predictor + ?Sized>(model: &P, windows: &[WindowSample], scaler: Option<&Scaler>, workers: usize) -> Result<ErrorStats> {
    let pool = build_pool(workers)?;
    evaluate_with_pool(pool.as_ref(), model, windows, scaler)
}

fn run_epoch<F: Forecaster>(
    model: &mut F,
    train: &[WindowSample],
    cfg: &TrainConfig,
    pool: Option<&rayon::ThreadPool>,
    adam: &mut AdamState,
    epoch_rng: SplitRng,
    epoch: usize,
) -> Result<f64> {
    let order = batch_indices(train.len(), cfg.batch, true, epoch_rng.derive(0).seed());
    let mut loss_sum = 0.0;
    for batch in &order {
        let shared: &F = model;
        let results = run_ordered(pool, batch.len(), |k| {
            let idx = batch[k];
            let mut rng = epoch_rng.derive(1 + idx as u64);
            sample_grad(shared, &train[idx], &mut rng)
        });
        let mut total: Option<Vec<Tensor>> = None;
        for r in results {
            let (loss, grads) = r?;
            if !loss.is_finite() {
                return Err(MatError::Numeric(format!("non-finite training loss in epoch {}", epoch + 1)));
            }
            loss_sum += loss;
            total = Some(match total {
                None => grads,
                Some(mut acc) => {
                    for (a, g) in acc.iter_mut().zip(&grads) {
                        a.data_mut().iter_mut().zip(g.data()).for_each(|(x, y)| *x += y);
                    }
                    acc
                }
            });
        }
        let mut grads = total.expect("non-empty batch");
        let inv = 1.0 / batch.len() as f64;
        for g in &mut grads {
            g.data_mut().iter_mut().for_each(|v| *v *= inv);
        }
        if let Some(c) = cfg.grad_clip {
            clip(&mut grads, c);
        }
        adam_step(model.params_mut(), &grads, adam)?;
    }
    Ok(loss_sum)
}

/// Mini-batch Adam on the L2 loss.
///
/// Each sample gets its own tape; gradients are averaged over the batch in
/// sample order so the result does not depend on `cfg.workers`. On a
/// non-finite loss or gradient the model is rolled back to the parameters
/// it held when the failing epoch began and a numeric error is returned.
pub fn train<F: Forecaster>(model: &mut F, train: &[WindowSample], val: &[WindowSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(MatError::Data("training split yields no windows".into()));
    }
    let pool = build_pool(cfg.workers)?;
    let mut adam = AdamState::new(model.params(), cfg.lr);
    let root = SplitRng::new(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<Tensor>)> = None;
    let mut stopped_early = false;

    for epoch in 0..cfg.epochs {
        let snapshot = model.params().tensors().to_vec();
        let loss_sum = match run_epoch(model, train, cfg, pool.as_ref(), &mut adam, root.derive(epoch as u64), epoch) {
            Ok(s) => s,
            Err(e) => {
                if matches!(e, MatError::Numeric(_)) {
                    model.params_mut().tensors_mut().clone_from_slice(&snapshot);
                }
                return Err(e);
            }
        };
        let train_loss = loss_sum / train.len() as f64;
        let val_loss = if val.is_empty() {
            None
        } else {
            let stats = evaluate_with_pool(pool.as_ref(), &ParamsPredictor(&*model), val, None)?;
            if !stats.mse().is_finite() {
                return Err(MatError::Numeric(format!("non-finite validation loss in epoch {}", epoch + 1)));
            }
            Some(stats.mse())
        };
        history.push(EpochRecord {
            epoch: epoch + 1,
            train_loss,
            val_loss,
        });
        if let (Some(v), Some(patience)) = (val_loss, cfg.patience) {
            match &best {
                Some((b, _, _)) if v >= *b => {
                    if epoch + 1 - best.as_ref().map_or(0, |b| b.1) >= patience {
                        stopped_early = true;
                        break;
                    }
                }
                _ => best = Some((v, epoch + 1, model.params().tensors().to_vec())),
            }
        }
    }
    let best_epoch = match best {
        Some((_, e, tensors)) => {
            model.params_mut().tensors_mut().clone_from_slice(&tensors);
            e
        }
        None => history.len(),
    };
    Ok(TrainOutcome {
        history,
        best_epoch,
        stopped_early,
    })
}

/// Evaluation-mode view of a [`Forecaster`].
struct ParamsPredictor<'a, F>(&'a F);

impl<F: Forecaster> Predictor for ParamsPredictor<'_, F> {
    fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.0.params().bind_constant(&mut tape);
        let y = self.0.forward(&mut tape, &bound, x, Mode::Eval, &mut SplitRng::new(0))?;
        Ok(tape.value(y).clone())
    }
}
