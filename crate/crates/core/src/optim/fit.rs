use std::io::Write;

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, OptimizerState};
use super::grad::loss_and_grad;
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::filterbank::{FilterBankParams, Topology};
use crate::spectral::{MelSpectrum, SpectralContext};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitBudget {
    pub max_steps: usize,
    /// Stop after this many steps without a new best loss.
    pub patience: usize,
    pub adam: AdamConfig,
    /// Seed of the initialization noise.
    pub seed: u64,
}

impl Default for FitBudget {
    fn default() -> Self {
        FitBudget { max_steps: 5000, patience: 2000, adam: AdamConfig { lr: 1e-2, ..Default::default() }, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    /// Parameters with the lowest observed loss.
    pub params: FilterBankParams,
    pub best_loss: f64,
    pub initial_loss: f64,
    pub history: Vec<HistoryEntry>,
    pub stopped_early: bool,
}

/// A fit that hit a numeric error; carries the best parameters seen before it.
#[derive(Debug, thiserror::Error)]
#[error("fit aborted after {} steps: {error}", history.len())]
pub struct FitFailure {
    pub error: Error,
    pub best: Option<FilterBankParams>,
    pub history: Vec<HistoryEntry>,
}

impl From<FitFailure> for Error {
    fn from(f: FitFailure) -> Error {
        f.error
    }
}

pub fn fit(
    target: &AudioBuffer,
    topology: Topology,
    ctx: &SpectralContext,
    budget: &FitBudget,
) -> std::result::Result<FitOutcome, FitFailure> {
    let x = ctx
        .mel_spectrum(target)
        .map_err(|error| FitFailure { error, best: None, history: vec![] })?;
    fit_mel(&x, topology, ctx, budget)
}

pub fn fit_mel(
    x_mel: &MelSpectrum,
    topology: Topology,
    ctx: &SpectralContext,
    budget: &FitBudget,
) -> std::result::Result<FitOutcome, FitFailure> {
    if budget.max_steps == 0 {
        return Err(FitFailure { error: Error::invalid("max_steps must be >= 1"), best: None, history: vec![] });
    }
    let mut params = FilterBankParams::init(topology, ctx.cfg.sample_rate, budget.seed);
    let mut flat = params.to_flat();
    let mut state = OptimizerState::new(flat.len(), budget.adam);
    let mut history = Vec::with_capacity(budget.max_steps + 1);
    let mut best: Option<(f64, FilterBankParams)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    for step in 0..=budget.max_steps {
        let (loss, grad) = match loss_and_grad(&params, x_mel, ctx) {
            Ok(v) => v,
            Err(error) => return Err(FitFailure { error, best: best.map(|b| b.1), history }),
        };
        history.push(HistoryEntry { step, loss, lr: state.current_lr() });
        if best.as_ref().is_none_or(|b| loss < b.0) {
            best = Some((loss, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if step == budget.max_steps {
            break;
        }
        if since_best >= budget.patience {
            stopped_early = true;
            break;
        }
        adam_step(&mut state, &mut flat, &grad).expect("shapes fixed by topology");
        params.set_flat(&flat);
    }
    let (best_loss, params) = best.unwrap();
    Ok(FitOutcome { params, best_loss, initial_loss: history[0].loss, history, stopped_early })
}

/// CSV with header `step,loss,lr`.
pub fn write_history_csv<W: Write>(history: &[HistoryEntry], mut w: W) -> Result<()> {
    writeln!(w, "step,loss,lr")?;
    for h in history {
        writeln!(w, "{},{},{}", h.step, h.loss, h.lr)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::render_recursive;
    use crate::spectral::SpectralConfig;

    fn ctx() -> SpectralContext {
        SpectralContext::new(SpectralConfig { n_samples: 2048, n_mels: 48, ..Default::default() }).unwrap()
    }

    #[test]
    fn running_minimum_and_determinism() {
        let c = ctx();
        let t = Topology::new(2, 1).unwrap();
        let truth = FilterBankParams::init(t, 32000, 77);
        let target = render_recursive(&truth, &AudioBuffer::impulse(2048, 32000)).unwrap();
        let budget = FitBudget { max_steps: 60, seed: 3, ..Default::default() };
        let a = fit(&target, t, &c, &budget).unwrap();
        let b = fit(&target, t, &c, &budget).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.history, b.history);
        assert_eq!(a.history.len(), 61);
        let mut running = f64::INFINITY;
        for h in &a.history {
            running = running.min(h.loss);
        }
        assert_eq!(running, a.best_loss);
        assert!(a.best_loss < a.initial_loss);
    }

    #[test]
    fn patience_stops_early() {
        let c = ctx();
        let t = Topology::new(1, 1).unwrap();
        let x = MelSpectrum(vec![0.0; 48]);
        let budget = FitBudget { max_steps: 500, patience: 3, adam: AdamConfig { lr: 10.0, ..Default::default() }, seed: 0 };
        let out = fit_mel(&x, t, &c, &budget).unwrap();
        assert!(out.history.len() <= 501);
        if out.stopped_early {
            assert!(out.history.len() < 501);
        }
    }

    #[test]
    fn silence_target_shrinks_gains() {
        let c = ctx();
        let t = Topology::new(2, 1).unwrap();
        let x = MelSpectrum(vec![0.0; 48]);
        let out = fit_mel(&x, t, &c, &FitBudget { max_steps: 300, ..Default::default() }).unwrap();
        let init = FilterBankParams::init(t, 32000, 0);
        let k0: f64 = init.k.iter().map(|k| k.abs()).sum();
        let k1: f64 = out.params.k.iter().map(|k| k.abs()).sum();
        assert!(k1 < 0.1 * k0, "{k1} vs {k0}");
        assert!(out.best_loss < 0.1 * out.initial_loss);
    }

    #[test]
    fn csv_format() {
        let mut buf = Vec::new();
        write_history_csv(&[HistoryEntry { step: 0, loss: 1.5, lr: 0.01 }], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "step,loss,lr\n0,1.5,0.01\n");
    }

    #[test]
    fn zero_steps_rejected() {
        let c = ctx();
        let budget = FitBudget { max_steps: 0, ..Default::default() };
        assert!(fit_mel(&MelSpectrum(vec![0.0; 48]), Topology::new(1, 1).unwrap(), &c, &budget).is_err());
    }
}
