use std::collections::BTreeMap;
use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{EncoderTrace, Predictor};
use super::ConditioningInput;
use crate::error::{Error, Result};
use crate::geometry::OccupancyGrid;
use crate::optim::{adam_step, loss_and_grad, loss_only, AdamConfig, OptimizerState};
use crate::rng::{derive_seed, rng_from_seed};
use crate::spectral::{MelSpectrum, SpectralContext};

/// Samples per parallel work unit; partial gradients are reduced in order.
const SAMPLE_CHUNK: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSample {
    /// Index into [`TrainData::grids`].
    pub shape: usize,
    pub cond: ConditioningInput,
    pub target: MelSpectrum,
}

#[derive(Clone, Debug, Default)]
pub struct TrainData {
    pub grids: Vec<OccupancyGrid>,
    pub samples: Vec<TrainSample>,
}

/// Sample indices of the training and validation sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Holds out `val_fraction` of the shapes (at least one) so that no shape is in both sets.
/// With a single shape, training and validation use the same samples.
pub fn split_by_shape(data: &TrainData, val_fraction: f64, seed: u64) -> Split {
    let mut shapes: Vec<usize> = data.samples.iter().map(|s| s.shape).collect();
    shapes.sort_unstable();
    shapes.dedup();
    if shapes.len() < 2 {
        let all: Vec<usize> = (0..data.samples.len()).collect();
        return Split { train: all.clone(), val: all };
    }
    shapes.shuffle(&mut rng_from_seed(derive_seed(seed, &[0x5917])));
    let n_val = ((shapes.len() as f64 * val_fraction).round() as usize).clamp(1, shapes.len() - 1);
    let val_shapes = &shapes[..n_val];
    let (val, train): (Vec<usize>, Vec<usize>) =
        (0..data.samples.len()).partition(|&i| val_shapes.contains(&data.samples[i].shape));
    Split { train, val }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Stop after this many steps without a validation improvement.
    pub patience: usize,
    pub eval_every: usize,
    pub val_fraction: f64,
    pub seed: u64,
    /// Wall-clock budget; training stops at the first evaluation past it.
    pub max_seconds: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_steps: 100_000,
            batch_size: 64,
            adam: AdamConfig::default(),
            patience: 20_000,
            eval_every: 100,
            val_fraction: 0.25,
            seed: 0,
            max_seconds: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub step: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Weights with the best validation loss.
    pub model: Predictor,
    pub best_val: f64,
    /// Validation loss of the untrained (bias-only) model.
    pub baseline_val: f64,
    pub history: Vec<TrainLog>,
    pub steps: usize,
    pub seconds: f64,
}

#[derive(Debug, thiserror::Error)]
#[error("training aborted at step {step}: {error}")]
pub struct TrainFailure {
    pub error: Error,
    pub step: usize,
    /// Best finite-loss weights seen before the failure.
    pub last_good: Box<Predictor>,
}

impl From<TrainFailure> for Error {
    fn from(f: TrainFailure) -> Error {
        f.error
    }
}

fn encode_shapes(model: &Predictor, data: &TrainData, indices: &[usize]) -> BTreeMap<usize, EncoderTrace> {
    let mut shapes: Vec<usize> = indices.iter().map(|&i| data.samples[i].shape).collect();
    shapes.sort_unstable();
    shapes.dedup();
    let traces: Vec<EncoderTrace> = shapes.par_iter().map(|&s| model.encode_traced(&data.grids[s])).collect();
    shapes.into_iter().zip(traces).collect()
}

/// Mean loss over `indices`; each distinct shape is encoded once.
pub fn evaluate(model: &Predictor, data: &TrainData, indices: &[usize], ctx: &SpectralContext) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty sample set"));
    }
    let emb = encode_shapes(model, data, indices);
    let losses: Vec<f64> = indices
        .par_iter()
        .map(|&i| {
            let s = &data.samples[i];
            let params = model.predict(&emb[&s.shape].embedding, &s.cond)?;
            loss_only(&params, &s.target, ctx)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / indices.len() as f64)
}

/// Mean loss and gradient with respect to every weight, end to end.
pub fn batch_loss_grad(model: &Predictor, data: &TrainData, indices: &[usize], ctx: &SpectralContext) -> Result<(f64, Vec<f64>)> {
    if indices.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let traces = encode_shapes(model, data, indices);
    let n = model.n_weights();
    let embed_dim = model.arch.embed_dim;
    let partials: Vec<(f64, Vec<f64>, BTreeMap<usize, Vec<f64>>)> = indices
        .par_chunks(SAMPLE_CHUNK)
        .map(|chunk| {
            let mut grad = vec![0.0; n];
            let mut d_emb: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            let mut loss = 0.0;
            for &i in chunk {
                let s = &data.samples[i];
                let head = model.predict_traced(&traces[&s.shape].embedding, &s.cond)?;
                let (l, g) = loss_and_grad(&head.params, &s.target, ctx)?;
                loss += l;
                let d = model.backward_head(&head, &g, &mut grad);
                let acc = d_emb.entry(s.shape).or_insert_with(|| vec![0.0; embed_dim]);
                acc.iter_mut().zip(&d).for_each(|(a, v)| *a += v);
            }
            Ok((loss, grad, d_emb))
        })
        .collect::<Result<_>>()?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    let mut d_emb: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (l, g, d) in partials {
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, v)| *a += v);
        for (shape, v) in d {
            let acc = d_emb.entry(shape).or_insert_with(|| vec![0.0; embed_dim]);
            acc.iter_mut().zip(&v).for_each(|(a, x)| *a += x);
        }
    }
    let enc: Vec<Vec<f64>> = d_emb
        .par_iter()
        .map(|(shape, d)| {
            let mut g = vec![0.0; n];
            model.backward_encoder(&traces[shape], d, &mut g);
            g
        })
        .collect();
    for g in enc {
        grad.iter_mut().zip(&g).for_each(|(a, v)| *a += v);
    }
    let scale = 1.0 / indices.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((loss * scale, grad))
}

/// Loss and full weight gradient for one (grid, conditioning, target) triple.
pub fn sample_loss_grad(
    model: &Predictor,
    grid: &OccupancyGrid,
    cond: &ConditioningInput,
    target: &MelSpectrum,
    ctx: &SpectralContext,
) -> Result<(f64, Vec<f64>)> {
    let data = TrainData {
        grids: vec![grid.clone()],
        samples: vec![TrainSample { shape: 0, cond: *cond, target: target.clone() }],
    };
    batch_loss_grad(model, &data, &[0], ctx)
}

pub fn train(
    initial: Predictor,
    data: &TrainData,
    split: &Split,
    ctx: &SpectralContext,
    cfg: &TrainConfig,
) -> std::result::Result<TrainOutcome, TrainFailure> {
    let start = Instant::now();
    let fail = |error: Error, step: usize, model: &Predictor| TrainFailure { error, step, last_good: Box::new(model.clone()) };
    if split.train.is_empty() || split.val.is_empty() || cfg.batch_size == 0 {
        return Err(fail(Error::invalid("training needs nonempty train/val sets and batch_size >= 1"), 0, &initial));
    }
    let baseline_val = evaluate(&initial, data, &split.val, ctx).map_err(|e| fail(e, 0, &initial))?;
    let mut model = initial;
    let mut best = (baseline_val, model.clone(), 0usize);
    let mut state = OptimizerState::new(model.n_weights(), cfg.adam);
    let mut rng = rng_from_seed(derive_seed(cfg.seed, &[0xba7c]));
    let mut order = split.train.clone();
    let mut cursor = order.len();
    let mut history = vec![TrainLog { step: 0, train_loss: f64::NAN, val_loss: Some(baseline_val), lr: state.current_lr() }];
    let mut step = 0;
    while step < cfg.max_steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size.min(order.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let (loss, grad) = match batch_loss_grad(&model, data, &batch, ctx) {
            Ok(v) if v.0.is_finite() => v,
            Ok(v) => return Err(fail(Error::Diverged { step, detail: format!("loss {}", v.0) }, step, &best.1)),
            Err(e) => return Err(fail(e, step, &best.1)),
        };
        let lr = adam_step(&mut state, &mut model.weights, &grad).map_err(|e| fail(e, step, &best.1))?;
        step += 1;
        let due = step % cfg.eval_every.max(1) == 0 || step == cfg.max_steps;
        let mut val_loss = None;
        if due {
            let v = evaluate(&model, data, &split.val, ctx).map_err(|e| fail(e, step, &best.1))?;
            if !v.is_finite() {
                return Err(fail(Error::Diverged { step, detail: format!("validation loss {v}") }, step, &best.1));
            }
            if v < best.0 {
                best = (v, model.clone(), step);
            }
            info!("step {step}: train {loss:.4} val {v:.4} (best {:.4} at {}) lr {lr:.2e}", best.0, best.2);
            val_loss = Some(v);
        }
        history.push(TrainLog { step, train_loss: loss, val_loss, lr });
        if due {
            if step - best.2 >= cfg.patience {
                break;
            }
            if cfg.max_seconds.is_some_and(|s| start.elapsed().as_secs_f64() > s) {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: best.1,
        best_val: best.0,
        baseline_val,
        history,
        steps: step,
        seconds: start.elapsed().as_secs_f64(),
    })
}
