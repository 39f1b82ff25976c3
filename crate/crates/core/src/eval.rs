//! Log-magnitude spectrogram error between oracle and model audio.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

pub const STFT_FRAME: usize = 1024;
pub const STFT_HOP: usize = 256;
pub const STFT_EPS: f64 = 1e-7;

/// Periodic Hann window, frames of `frame` samples every `hop`. Signals shorter than one
/// frame are zero-padded to a single frame; otherwise only full frames are used.
pub struct Stft {
    frame: usize,
    hop: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(frame: usize, hop: usize) -> Result<Self> {
        if frame < 2 || hop == 0 {
            return Err(Error::invalid(format!("bad STFT frame {frame} / hop {hop}")));
        }
        let window = (0..frame)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / frame as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(frame);
        Ok(Stft { frame, hop, window, fft })
    }

    pub fn n_frames(&self, len: usize) -> usize {
        if len <= self.frame {
            1
        } else {
            (len - self.frame) / self.hop + 1
        }
    }

    pub fn n_bins(&self) -> usize {
        self.frame / 2 + 1
    }

    /// Row-major (frame, bin) magnitudes.
    pub fn magnitude(&self, x: &[f64]) -> Vec<f64> {
        let nb = self.n_bins();
        let mut out = Vec::with_capacity(self.n_frames(x.len()) * nb);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.frame];
        for f in 0..self.n_frames(x.len()) {
            let start = f * self.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                let s = x.get(start + i).copied().unwrap_or(0.0);
                *b = Complex64::new(s * self.window[i], 0.0);
            }
            self.fft.process(&mut buf);
            out.extend(buf[..nb].iter().map(|c| c.norm()));
        }
        out
    }

    pub fn log_magnitude(&self, x: &[f64], eps: f64) -> Vec<f64> {
        self.magnitude(x).into_iter().map(|m| (m + eps).ln()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub mae: f64,
    pub mse: f64,
}

/// MAE and MSE of `log(|STFT| + eps)` over all time-frequency bins.
pub fn eval_metrics_with(oracle: &AudioBuffer, model: &AudioBuffer, stft: &Stft, eps: f64) -> Result<SampleMetrics> {
    if oracle.len() != model.len() {
        return Err(Error::invalid(format!("oracle has {} samples, model has {}", oracle.len(), model.len())));
    }
    let a = stft.log_magnitude(&oracle.samples, eps);
    let b = stft.log_magnitude(&model.samples, eps);
    let n = a.len() as f64;
    let (mut mae, mut mse) = (0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        let d = x - y;
        mae += d.abs();
        mse += d * d;
    }
    Ok(SampleMetrics { mae: mae / n, mse: mse / n })
}

pub fn eval_metrics(oracle: &AudioBuffer, model: &AudioBuffer) -> Result<SampleMetrics> {
    eval_metrics_with(oracle, model, &Stft::new(STFT_FRAME, STFT_HOP)?, STFT_EPS)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub topology: String,
    pub n_samples: usize,
    pub mae: f64,
    pub mse: f64,
    pub per_sample: Vec<SampleMetrics>,
}

impl EvalReport {
    pub fn from_samples(topology: impl Into<String>, per_sample: Vec<SampleMetrics>) -> Result<Self> {
        if per_sample.is_empty() {
            return Err(Error::invalid("no samples to evaluate"));
        }
        let n = per_sample.len() as f64;
        Ok(EvalReport {
            topology: topology.into(),
            n_samples: per_sample.len(),
            mae: per_sample.iter().map(|s| s.mae).sum::<f64>() / n,
            mse: per_sample.iter().map(|s| s.mse).sum::<f64>() / n,
            per_sample,
        })
    }
}
