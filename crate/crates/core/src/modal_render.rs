//! Ground-truth impulse responses from modal data (damped-sinusoid oscillator bank).

use log::warn;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio::AudioBuffer;
use crate::elastodynamics::ModalModel;
use crate::error::{Error, Result};
use crate::spectral::SpectralConfig;

/// Phasor recurrences are re-anchored to exact values this often.
const REANCHOR: usize = 1024;

/// Damped angular frequency sqrt(omega^2 - sigma^2), or `None` when overdamped.
pub fn damped_omega(omega: f64, sigma: f64) -> Option<f64> {
    let w2 = omega * omega - sigma * sigma;
    (w2 > 0.0).then(|| w2.sqrt())
}

/// Whether a mode sits below Nyquist and is eligible for rendering.
pub fn is_renderable(omega: f64, sigma: f64, sample_rate: u32) -> bool {
    damped_omega(omega, sigma)
        .map(|wd| wd / (2.0 * std::f64::consts::PI) < sample_rate as f64 / 2.0)
        .unwrap_or(false)
}

/// Sum of a_i e^{-sigma_i t / fs} sin(omega_d,i t / fs) with a_i = g_i^2 / omega_d,i, not normalized.
pub fn render_modes_raw(omegas: &[f64], sigmas: &[f64], gains: &[f64], cfg: &SpectralConfig) -> Result<Vec<f64>> {
    if omegas.len() != sigmas.len() || gains.len() != omegas.len() {
        return Err(Error::invalid(format!(
            "mode arrays disagree: {} omegas, {} sigmas, {} gains",
            omegas.len(),
            sigmas.len(),
            gains.len()
        )));
    }
    let fs = cfg.sample_rate as f64;
    let n = cfg.n_samples;
    let mut out = vec![0.0; n];
    let mut rendered = 0;
    for i in 0..omegas.len() {
        if !is_renderable(omegas[i], sigmas[i], cfg.sample_rate) {
            continue;
        }
        let wd = damped_omega(omegas[i], sigmas[i]).unwrap();
        let a = gains[i] * gains[i] / wd;
        if a == 0.0 {
            rendered += 1;
            continue;
        }
        let (decay, phase) = (sigmas[i] / fs, wd / fs);
        let step_mag = (-decay).exp();
        let (step_sin, step_cos) = phase.sin_cos();
        for start in (0..n).step_by(REANCHOR) {
            let t0 = start as f64;
            let mag0 = a * (-decay * t0).exp();
            let (mut s, mut c) = (phase * t0).sin_cos();
            let mut mag = mag0;
            for v in &mut out[start..(start + REANCHOR).min(n)] {
                *v += mag * s;
                let s1 = s * step_cos + c * step_sin;
                c = c * step_cos - s * step_sin;
                s = s1;
                mag *= step_mag;
            }
        }
        rendered += 1;
    }
    if rendered == 0 {
        warn!("no modes below Nyquist; rendering silence");
    }
    Ok(out)
}

/// Peak-normalized impulse response (max |s| = 1; silence stays silent).
pub fn render_modes(omegas: &[f64], sigmas: &[f64], gains: &[f64], cfg: &SpectralConfig) -> Result<AudioBuffer> {
    let mut s = render_modes_raw(omegas, sigmas, gains, cfg)?;
    peak_normalize(&mut s);
    Ok(AudioBuffer::new(s, cfg.sample_rate))
}

pub fn render_ir(model: &ModalModel, gains: &[f64], cfg: &SpectralConfig) -> Result<AudioBuffer> {
    render_modes(&model.omegas, &model.sigmas, gains, cfg)
}

pub fn render_ir_raw(model: &ModalModel, gains: &[f64], cfg: &SpectralConfig) -> Result<Vec<f64>> {
    render_modes_raw(&model.omegas, &model.sigmas, gains, cfg)
}

/// Linear convolution of `excitation` with `ir`, truncated to the excitation length.
pub fn excite(ir: &AudioBuffer, excitation: &AudioBuffer) -> Result<AudioBuffer> {
    if ir.sample_rate != excitation.sample_rate {
        return Err(Error::invalid(format!("sample rates differ: {} vs {}", ir.sample_rate, excitation.sample_rate)));
    }
    let n = excitation.len();
    if n == 0 || ir.is_empty() {
        return Ok(AudioBuffer::silence(n, excitation.sample_rate));
    }
    let ir = &ir.samples[..ir.len().min(n)];
    let size = (n + ir.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::new();
    let (fwd, inv) = (planner.plan_fft_forward(size), planner.plan_fft_inverse(size));
    let pad = |x: &[f64]| {
        let mut v: Vec<Complex64> = x.iter().map(|&s| Complex64::new(s, 0.0)).collect();
        v.resize(size, Complex64::new(0.0, 0.0));
        v
    };
    let (mut a, mut b) = (pad(ir), pad(&excitation.samples));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inv.process(&mut a);
    let scale = 1.0 / size as f64;
    Ok(AudioBuffer::new(a[..n].iter().map(|c| c.re * scale).collect(), excitation.sample_rate))
}

pub fn peak_normalize(s: &mut [f64]) {
    let peak = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        s.iter_mut().for_each(|v| *v /= peak);
    }
}
