//! DFT magnitudes, mel projection and the mel-spectral training loss.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralConfig {
    pub sample_rate: u32,
    pub n_samples: usize,
    pub n_mels: usize,
    pub f_min: f64,
    /// Upper mel edge in Hz; `None` means Nyquist.
    pub f_max: Option<f64>,
    pub log_eps: f64,
    pub lambda: f64,
    pub gamma: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            sample_rate: 32000,
            n_samples: 32768,
            n_mels: 128,
            f_min: 20.0,
            f_max: None,
            log_eps: 1e-7,
            lambda: 1.0,
            gamma: 0.1,
        }
    }
}

impl SpectralConfig {
    pub fn nyquist(&self) -> f64 {
        self.sample_rate as f64 / 2.0
    }

    pub fn f_max(&self) -> f64 {
        self.f_max.unwrap_or_else(|| self.nyquist())
    }

    pub fn n_bins(&self) -> usize {
        self.n_samples / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample_rate must be positive"));
        }
        if !self.n_samples.is_power_of_two() || self.n_samples < 2 {
            return Err(Error::invalid(format!("n_samples must be a power of two, got {}", self.n_samples)));
        }
        if !(self.f_min > 0.0 && self.f_min < self.f_max() && self.f_max() <= self.nyquist()) {
            return Err(Error::invalid("need 0 < f_min < f_max <= sample_rate / 2"));
        }
        if self.n_mels == 0 || self.n_mels > self.n_samples / 2 {
            return Err(Error::invalid(format!("n_mels must be in [1, N/2], got {}", self.n_mels)));
        }
        if !(self.lambda >= 0.0 && self.gamma >= 0.0 && self.log_eps > 0.0) {
            return Err(Error::invalid("loss weights must be >= 0 and log_eps > 0"));
        }
        Ok(())
    }
}

/// HTK mel scale.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MelSpectrum(pub Vec<f64>);

impl MelSpectrum {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Triangular mel filterbank stored as one contiguous run of bin weights per filter.
#[derive(Clone, Debug, PartialEq)]
pub struct MelMatrix {
    n_bins: usize,
    centers_hz: Vec<f64>,
    starts: Vec<usize>,
    weights: Vec<Vec<f64>>,
}

impl MelMatrix {
    /// Filters peak at `n_mels` points equally spaced in mel between f_min and f_max.
    /// Each row is scaled so its largest weight is exactly 1; a filter narrower than the
    /// bin spacing degenerates to its nearest bin.
    pub fn new(cfg: &SpectralConfig) -> Result<Self> {
        cfg.validate()?;
        let n_bins = cfg.n_bins();
        let b = cfg.n_mels;
        let (m_lo, m_hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max()));
        let mut edges: Vec<f64> =
            (0..b + 2).map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (b + 1) as f64)).collect();
        edges[0] = cfg.f_min;
        edges[b + 1] = cfg.f_max();
        let df = cfg.sample_rate as f64 / cfg.n_samples as f64;
        let mut starts = Vec::with_capacity(b);
        let mut weights = Vec::with_capacity(b);
        for i in 0..b {
            let (lo, mid, hi) = (edges[i], edges[i + 1], edges[i + 2]);
            let k0 = ((lo / df).floor() as usize).min(n_bins - 1);
            let k1 = ((hi / df).ceil() as usize).min(n_bins - 1);
            let mut row: Vec<f64> = (k0..=k1)
                .map(|k| {
                    let f = k as f64 * df;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect();
            let peak = row.iter().cloned().fold(0.0, f64::max);
            if peak > 0.0 {
                let arg = row.iter().position(|&w| w == peak).unwrap();
                for (j, w) in row.iter_mut().enumerate() {
                    *w /= peak;
                    // exact ties would give two apex bins
                    if j != arg && *w >= 1.0 {
                        *w = 1.0 - f64::EPSILON;
                    }
                }
                let first = row.iter().position(|&w| w > 0.0).unwrap();
                let last = row.iter().rposition(|&w| w > 0.0).unwrap();
                starts.push(k0 + first);
                weights.push(row[first..=last].to_vec());
            } else {
                let kc = ((mid / df).round() as usize).min(n_bins - 1);
                starts.push(kc);
                weights.push(vec![1.0]);
            }
        }
        let centers_hz = edges[1..=b].to_vec();
        Ok(MelMatrix { n_bins, centers_hz, starts, weights })
    }

    pub fn n_mels(&self) -> usize {
        self.weights.len()
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// (first bin, weights) of filter `b`.
    pub fn row(&self, b: usize) -> (usize, &[f64]) {
        (self.starts[b], &self.weights[b])
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n_mels())
            .map(|b| {
                let mut r = vec![0.0; self.n_bins];
                let (s, w) = self.row(b);
                r[s..s + w.len()].copy_from_slice(w);
                r
            })
            .collect()
    }

    pub fn project(&self, mag: &[f64]) -> MelSpectrum {
        MelSpectrum(
            (0..self.n_mels())
                .map(|b| {
                    let (s, w) = self.row(b);
                    w.iter().zip(&mag[s..s + w.len()]).map(|(a, m)| a * m).sum()
                })
                .collect(),
        )
    }

    /// Transpose application: d/d(mag) of sum_b g_b * mel_b.
    pub fn project_transpose(&self, g: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (b, &gb) in g.iter().enumerate() {
            let (s, w) = self.row(b);
            for (o, a) in out[s..s + w.len()].iter_mut().zip(w) {
                *o += a * gb;
            }
        }
    }
}

pub fn mel_matrix(cfg: &SpectralConfig) -> Result<MelMatrix> {
    MelMatrix::new(cfg)
}

/// Precomputed per-configuration state shared read-only by all evaluations.
#[derive(Clone)]
pub struct SpectralContext {
    pub cfg: SpectralConfig,
    pub mel: Arc<MelMatrix>,
    /// z_k^-1 = e^{-j 2 pi k / N} for k = 0..=N/2.
    pub inv_z: Arc<Vec<Complex64>>,
    fft: Arc<dyn rustfft::Fft<f64>>,
}

impl std::fmt::Debug for SpectralContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralContext").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl SpectralContext {
    pub fn new(cfg: SpectralConfig) -> Result<Self> {
        let mel = Arc::new(MelMatrix::new(&cfg)?);
        let n = cfg.n_samples;
        let inv_z = Arc::new(
            (0..cfg.n_bins())
                .map(|k| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * k as f64 / n as f64))
                .collect(),
        );
        let fft = FftPlanner::new().plan_fft_forward(n);
        Ok(SpectralContext { cfg, mel, inv_z, fft })
    }

    pub fn n_bins(&self) -> usize {
        self.cfg.n_bins()
    }

    /// |DFT(s)|[k] for k = 0..=N/2, no window.
    pub fn dft_mag(&self, buffer: &AudioBuffer) -> Result<Vec<f64>> {
        self.dft(buffer).map(|s| s.iter().map(|c| c.norm()).collect())
    }

    pub fn dft(&self, buffer: &AudioBuffer) -> Result<Vec<Complex64>> {
        let n = self.cfg.n_samples;
        if buffer.len() != n {
            return Err(Error::invalid(format!("buffer length {} != N = {n}", buffer.len())));
        }
        let mut data: Vec<Complex64> = buffer.samples.iter().map(|&s| Complex64::new(s, 0.0)).collect();
        self.fft.process(&mut data);
        data.truncate(n / 2 + 1);
        Ok(data)
    }

    pub fn mel_spectrum(&self, buffer: &AudioBuffer) -> Result<MelSpectrum> {
        Ok(self.mel.project(&self.dft_mag(buffer)?))
    }

    pub fn loss(&self, x: &MelSpectrum, h: &MelSpectrum) -> Result<f64> {
        loss(x, h, &self.cfg)
    }
}

pub fn dft_mag(buffer: &AudioBuffer, cfg: &SpectralConfig) -> Result<Vec<f64>> {
    SpectralContext::new(*cfg)?.dft_mag(buffer)
}

/// lambda ||X - H||^2 + gamma ||log(X + eps) - log(H + eps)||^2, summed over bins.
pub fn loss(x: &MelSpectrum, h: &MelSpectrum, cfg: &SpectralConfig) -> Result<f64> {
    if x.len() != h.len() {
        return Err(Error::invalid(format!("mel lengths differ: {} vs {}", x.len(), h.len())));
    }
    if x.0.iter().chain(&h.0).any(|&v| !(v >= 0.0)) {
        return Err(Error::invalid("mel spectra must be non-negative"));
    }
    let eps = cfg.log_eps;
    let (mut lin, mut log) = (0.0, 0.0);
    for (&a, &b) in x.0.iter().zip(&h.0) {
        lin += (a - b) * (a - b);
        let d = (a + eps).ln() - (b + eps).ln();
        log += d * d;
    }
    Ok(cfg.lambda * lin + cfg.gamma * log)
}
