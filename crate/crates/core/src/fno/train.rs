//! Mini-batch training and evaluation on extracted window datasets.
//!
//! Inputs are normalized per the dataset's [`Normalization`]; the loss and
//! every reported metric are computed on de-normalized Celsius values over
//! the masked (active) voxels. The loss is the per-window NL2 averaged over
//! the batch.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, TrainState};
use super::model::FnoModel;
use crate::error::{Error, Result};
use crate::grid::Dims;
use crate::metrics::{aggregate, score_window, WindowScore};
use crate::windowing::{Channel, Normalization, WindowDataset, WindowSample, INPUT_CHANNELS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Share of windows used for training; the rest is the test split.
    pub train_fraction: f64,
    pub split_seed: u64,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            adam: AdamConfig::default(),
            train_fraction: 0.9,
            split_seed: 0,
            shuffle_seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be positive".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!("train fraction {} not in (0, 1)", self.train_fraction)));
        }
        if !(self.adam.lr > 0.0) || self.adam.weight_decay < 0.0 {
            return Err(Error::InvalidArgument("learning rate must be positive and weight decay non-negative".into()));
        }
        Ok(())
    }
}

/// Means over windows, as in [`crate::metrics::AggregateReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub mse: f64,
    pub nrmse: f64,
    pub nl2: f64,
    /// `None` when every window was degenerate.
    pub r2: Option<f64>,
}

impl SplitMetrics {
    pub fn from_scores(scores: &[WindowScore]) -> Result<Self> {
        let a = aggregate(scores, 0)?;
        Ok(SplitMetrics { mse: a.mse, nrmse: a.nrmse, nl2: a.nl2, r2: a.r2.is_finite().then_some(a.r2) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch loss seen during the epoch.
    pub loss: f64,
    /// Scored from the training forward passes, before each update.
    pub train: SplitMetrics,
    pub test: SplitMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: FnoModel,
    pub normalization: Normalization,
    pub history: Vec<EpochRecord>,
    pub split: Split,
}

/// Seeded unstratified shuffle, first `round(n * fraction)` go to training.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<Split> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (n as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::Training(format!(
            "{n} windows at train fraction {train_fraction} leave an empty split"
        )));
    }
    let test = idx.split_off(n_train);
    Ok(Split { train: idx, test })
}

/// Writes the `INPUT_CHANNELS x N` network input for one window.
pub fn encode_input(sample: &WindowSample, norm: &Normalization, out: &mut [f64]) {
    let n = sample.voxels();
    debug_assert_eq!(out.len(), INPUT_CHANNELS * n);
    for (c, ch) in Channel::ALL[..INPUT_CHANNELS].iter().enumerate() {
        let src = sample.channel(*ch);
        let dst = &mut out[c * n..(c + 1) * n];
        match ch {
            Channel::TIn => dst.iter_mut().zip(src).for_each(|(d, &s)| *d = norm.temperature(s as f64)),
            Channel::DConv | Channel::DDirichlet => {
                dst.iter_mut().zip(src).for_each(|(d, &s)| *d = s as f64 / norm.distance_scale_mm)
            }
            _ => dst.iter_mut().zip(src).for_each(|(d, &s)| *d = s as f64),
        }
    }
}

fn window_grid(ds: &WindowDataset) -> Dims {
    Dims::cube(ds.edge)
}

fn encode_batch(ds: &WindowDataset, ids: &[usize], norm: &Normalization) -> Vec<f64> {
    let n = ds.edge.pow(3);
    let mut x = vec![0.0; ids.len() * INPUT_CHANNELS * n];
    for (b, &i) in ids.iter().enumerate() {
        encode_input(&ds.samples[i], norm, &mut x[b * INPUT_CHANNELS * n..(b + 1) * INPUT_CHANNELS * n]);
    }
    x
}

/// De-normalizes one predicted window and scores it; also returns the loss
/// gradient with respect to the normalized output when `grad` is given.
fn score_prediction(
    sample: &WindowSample,
    pred_norm: &[f64],
    norm: &Normalization,
    grad: Option<&mut [f64]>,
) -> Result<WindowScore> {
    let pred: Vec<f64> = pred_norm.iter().map(|&u| norm.temperature_inv(u)).collect();
    let truth: Vec<f64> = sample.channel(Channel::TOut).iter().map(|&t| t as f64).collect();
    let mask = sample.mask();
    let score = score_window(&pred, &truth, &mask)?;
    if let Some(g) = grad {
        let span = norm.temperature_span();
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = if mask[k] {
                let d = pred[k] - truth[k];
                if d == 0.0 {
                    0.0
                } else {
                    d.signum() * span / truth[k].abs()
                }
            } else {
                0.0
            };
        }
    }
    Ok(score)
}

/// Per-window scores for `ids`, in order, with inputs scaled by `norm`
/// (the constants the model was trained with).
pub fn evaluate(
    model: &FnoModel,
    ds: &WindowDataset,
    ids: &[usize],
    norm: &Normalization,
    batch_size: usize,
) -> Result<Vec<WindowScore>> {
    if model.config.out_channels != 1 || model.config.in_channels != INPUT_CHANNELS {
        return Err(Error::Shape("model channels do not match the window schema".into()));
    }
    let norm = *norm;
    let n = ds.edge.pow(3);
    let mut scores = Vec::with_capacity(ids.len());
    for chunk in ids.chunks(batch_size.max(1)) {
        let x = encode_batch(ds, chunk, &norm);
        let out = model.predict(&x, chunk.len(), window_grid(ds))?;
        for (b, &i) in chunk.iter().enumerate() {
            scores.push(score_prediction(&ds.samples[i], &out[b * n..(b + 1) * n], &norm, None)?);
        }
    }
    Ok(scores)
}

/// Trains on a seeded split of `ds`. Deterministic for fixed seeds.
pub fn train(mut model: FnoModel, ds: &WindowDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Training("dataset is empty".into()));
    }
    if model.config.out_channels != 1 || model.config.in_channels != INPUT_CHANNELS {
        return Err(Error::Shape("model channels do not match the window schema".into()));
    }
    let split = split_indices(ds.len(), cfg.train_fraction, cfg.split_seed)?;
    let norm = ds.normalization;
    let n = ds.edge.pow(3);
    let grid = window_grid(ds);
    let mut state = TrainState::new(model.param_count(), cfg.adam);
    let mut order = split.train.clone();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.shuffle_seed.wrapping_add(epoch as u64)));
        let mut train_scores = Vec::with_capacity(order.len());
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = encode_batch(ds, chunk, &norm);
            let cache = model.forward_cached(&x, chunk.len(), grid)?;
            let out = cache.output();
            let mut upstream = vec![0.0; chunk.len() * n];
            let mut loss = 0.0;
            for (b, &i) in chunk.iter().enumerate() {
                let s = score_prediction(
                    &ds.samples[i],
                    &out[b * n..(b + 1) * n],
                    &norm,
                    Some(&mut upstream[b * n..(b + 1) * n]),
                )?;
                loss += s.nl2;
                train_scores.push(s);
            }
            let inv = 1.0 / chunk.len() as f64;
            upstream.iter_mut().for_each(|g| *g *= inv);
            loss *= inv;
            if !loss.is_finite() {
                return Err(Error::Training(format!("loss became non-finite in epoch {epoch}")));
            }
            let grad = model.backward(&cache, &upstream)?;
            drop(cache);
            state.adam_step(&mut model.params, &grad)?;
            loss_sum += loss;
            batches += 1;
        }
        let test_scores = evaluate(&model, ds, &split.test, &norm, cfg.batch_size)?;
        let rec = EpochRecord {
            epoch,
            loss: loss_sum / batches as f64,
            train: SplitMetrics::from_scores(&train_scores)?,
            test: SplitMetrics::from_scores(&test_scores)?,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} test nl2 {:.4} test r2 {:?}",
            rec.loss,
            rec.test.nl2,
            rec.test.r2
        );
        history.push(rec);
    }
    Ok(TrainOutcome { model, normalization: norm, history, split })
}
