//! Parallel/cascade biquad resonator bank with frequency-sampled evaluation.
//!
//! Each section carries one conjugate pole pair `h(p)` and one conjugate zero pair `q`:
//!
//! ```text
//! H_lm(z) = (1 - 2 Re(q) z^-1 + |q|^2 z^-2) / (1 - 2 Re(h) z^-1 + |h|^2 z^-2)
//! H(z)    = sum_l prod_m k_lm H_lm(z)
//! ```
//!
//! Sections are stored branch-major, cascade-minor.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::spectral::{hz_to_mel, mel_to_hz};

/// Real parameters per section: Re p, Im p, Re q, Im q, k.
pub const PARAMS_PER_SECTION: usize = 5;

/// Upper bound on |h(p)|. `tanh` rounds to 1.0 for |p| > ~19, and a pole radius this
/// close to 1 still leaves representable margin inside the stability triangle.
pub const MAX_POLE_RADIUS: f64 = 1.0 - 1e-7;

pub const INIT_POLE_RADIUS: f64 = 0.98;
pub const INIT_NOISE: f64 = 0.01;
pub const INIT_F_MIN: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Topology {
    pub l: usize,
    pub m: usize,
}

impl Topology {
    pub fn new(l: usize, m: usize) -> Result<Self> {
        if l == 0 || m == 0 {
            return Err(Error::invalid(format!("topology {l}x{m} must have L, M >= 1")));
        }
        Ok(Topology { l, m })
    }

    pub fn n_sections(&self) -> usize {
        self.l * self.m
    }

    pub fn n_params(&self) -> usize {
        self.n_sections() * PARAMS_PER_SECTION
    }

    /// The three 64-pole configurations compared in the topology ablation.
    pub fn ablation() -> [Topology; 3] {
        [Topology { l: 16, m: 8 }, Topology { l: 32, m: 4 }, Topology { l: 64, m: 2 }]
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.l, self.m)
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .trim()
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::invalid(format!("topology {s:?} is not of the form LxM")))?;
        let l = a.parse().map_err(|_| Error::invalid(format!("bad L in topology {s:?}")))?;
        let m = b.parse().map_err(|_| Error::invalid(format!("bad M in topology {s:?}")))?;
        Topology::new(l, m)
    }
}

impl TryFrom<String> for Topology {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Topology> for String {
    fn from(t: Topology) -> String {
        t.to_string()
    }
}

/// h(p) = tanh(|p|) / |p| * p, with h(0) = 0.
pub fn pole_activation(p: Complex64) -> Complex64 {
    p * radial_scale(p.norm())
}

/// tanh(r) / r, capped so that r * scale <= MAX_POLE_RADIUS.
fn radial_scale(r: f64) -> f64 {
    if r < 1e-8 {
        1.0 - r * r / 3.0
    } else {
        r.tanh().min(MAX_POLE_RADIUS) / r
    }
}

/// Jacobian pieces of the activation at p = x + iy.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ActivationDerivs {
    pub h: Complex64,
    pub dre_dx: f64,
    pub dre_dy: f64,
    pub dabs2_dx: f64,
    pub dabs2_dy: f64,
}

/// (r sech^2 r - tanh r) / r^3, the radial derivative of tanh(r)/r divided by r.
fn radial_derivative_over_r(r: f64) -> f64 {
    if r < 0.05 {
        let r2 = r * r;
        -2.0 / 3.0 + r2 * (8.0 / 15.0 + r2 * (-34.0 / 105.0 + r2 * 496.0 / 2835.0))
    } else {
        let sech = 1.0 / r.cosh();
        (r * sech * sech - r.tanh()) / (r * r * r)
    }
}

pub(crate) fn activation_derivs(p: Complex64) -> ActivationDerivs {
    let (x, y) = (p.re, p.im);
    let r = p.norm();
    let f = radial_scale(r);
    let h = p * f;
    if r > 0.0 && r.tanh() >= MAX_POLE_RADIUS {
        // capped: |h| is constant, only the angle moves
        let g = -MAX_POLE_RADIUS / (r * r * r);
        return ActivationDerivs { h, dre_dx: f + x * x * g, dre_dy: x * y * g, dabs2_dx: 0.0, dabs2_dy: 0.0 };
    }
    let g = radial_derivative_over_r(r);
    let sech2 = if r > 350.0 { 0.0 } else { 1.0 / r.cosh().powi(2) };
    ActivationDerivs {
        h,
        dre_dx: f + x * x * g,
        dre_dy: x * y * g,
        dabs2_dx: 2.0 * sech2 * f * x,
        dabs2_dy: 2.0 * sech2 * f * y,
    }
}

/// 1 + c1 w + c2 w^2 for w = z^-1.
#[inline]
pub(crate) fn quad(c1: f64, c2: f64, w: Complex64) -> Complex64 {
    Complex64::new(1.0, 0.0) + w * (c1 + w * c2)
}

/// Single section (without gain) at each point `w = z^-1` of the grid.
pub fn biquad_response(p_raw: Complex64, q: Complex64, inv_z: &[Complex64]) -> Vec<Complex64> {
    let h = pole_activation(p_raw);
    let (b1, b2, a1, a2) = (-2.0 * q.re, q.norm_sqr(), -2.0 * h.re, h.norm_sqr());
    inv_z.iter().map(|&w| quad(b1, b2, w) / quad(a1, a2, w)).collect()
}

/// Raw (pre-activation) parameters of an L x M bank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterBankParams {
    pub topology: Topology,
    pub p_raw: Vec<Complex64>,
    pub q: Vec<Complex64>,
    pub k: Vec<f64>,
}

impl FilterBankParams {
    /// Identity-like bank: p = q = 0, k = 1.
    pub fn identity(topology: Topology) -> Self {
        let n = topology.n_sections();
        FilterBankParams {
            topology,
            p_raw: vec![Complex64::new(0.0, 0.0); n],
            q: vec![Complex64::new(0.0, 0.0); n],
            k: vec![1.0; n],
        }
    }

    /// Fixed initialization bias: poles of radius 0.98 at mel-spaced angles between 20 Hz
    /// and Nyquist, zeros at the origin, gains 1 / (L M).
    pub fn bias(topology: Topology, sample_rate: u32) -> Self {
        let n = topology.n_sections();
        let nyq = sample_rate as f64 / 2.0;
        let (m_lo, m_hi) = (hz_to_mel(INIT_F_MIN.min(nyq * 0.5)), hz_to_mel(nyq));
        let radius = INIT_POLE_RADIUS.atanh();
        let p_raw = (0..n)
            .map(|i| {
                let f = mel_to_hz(m_lo + (m_hi - m_lo) * (i as f64 + 0.5) / n as f64);
                Complex64::from_polar(radius, 2.0 * std::f64::consts::PI * f / sample_rate as f64)
            })
            .collect();
        FilterBankParams {
            topology,
            p_raw,
            q: vec![Complex64::new(0.0, 0.0); n],
            k: vec![1.0 / n as f64; n],
        }
    }

    /// Bias plus N(0, 0.01^2) noise on the real and imaginary parts of every p and q.
    pub fn init(topology: Topology, sample_rate: u32, seed: u64) -> Self {
        let mut p = Self::bias(topology, sample_rate);
        let mut rng = rng_from_seed(seed);
        let noise = Normal::new(0.0, INIT_NOISE).unwrap();
        for i in 0..topology.n_sections() {
            p.p_raw[i] += Complex64::new(noise.sample(&mut rng), noise.sample(&mut rng));
            p.q[i] += Complex64::new(noise.sample(&mut rng), noise.sample(&mut rng));
        }
        p
    }

    pub fn n_sections(&self) -> usize {
        self.k.len()
    }

    pub fn n_params(&self) -> usize {
        self.n_sections() * PARAMS_PER_SECTION
    }

    pub fn section_index(&self, l: usize, m: usize) -> usize {
        l * self.topology.m + m
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.topology.n_sections();
        if self.p_raw.len() != n || self.q.len() != n || self.k.len() != n {
            return Err(Error::invalid(format!("parameter arrays do not match topology {}", self.topology)));
        }
        if !self.to_flat().iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite filter parameters"));
        }
        Ok(())
    }

    /// [Re p, Im p, Re q, Im q, k] per section, sections in storage order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for i in 0..self.n_sections() {
            out.extend_from_slice(&[self.p_raw[i].re, self.p_raw[i].im, self.q[i].re, self.q[i].im, self.k[i]]);
        }
        out
    }

    pub fn from_flat(topology: Topology, flat: &[f64]) -> Result<Self> {
        if flat.len() != topology.n_params() {
            return Err(Error::invalid(format!("expected {} parameters, got {}", topology.n_params(), flat.len())));
        }
        let mut p = Self::identity(topology);
        p.set_flat(flat);
        Ok(p)
    }

    pub(crate) fn set_flat(&mut self, flat: &[f64]) {
        for (i, c) in flat.chunks_exact(PARAMS_PER_SECTION).enumerate() {
            self.p_raw[i] = Complex64::new(c[0], c[1]);
            self.q[i] = Complex64::new(c[2], c[3]);
            self.k[i] = c[4];
        }
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.p_raw.iter().map(|&p| pole_activation(p)).collect()
    }

    pub fn max_pole_radius(&self) -> f64 {
        self.poles().iter().fold(0.0, |m, h| m.max(h.norm()))
    }

    /// Branch-major (b0, b1, b2, a1, a2) with the gain folded into the numerator.
    pub fn realize_coefficients(&self) -> Vec<[f64; 5]> {
        (0..self.n_sections())
            .map(|i| {
                let (k, q, h) = (self.k[i], self.q[i], pole_activation(self.p_raw[i]));
                [k, -2.0 * k * q.re, k * q.norm_sqr(), -2.0 * h.re, h.norm_sqr()]
            })
            .collect()
    }

    pub fn to_sos(&self) -> SosBank {
        SosBank { topology: self.topology, sections: self.realize_coefficients() }
    }

    /// Bank response at each `w = z^-1` of the grid; bins are evaluated in parallel.
    pub fn response(&self, inv_z: &[Complex64]) -> Vec<Complex64> {
        let sos = self.realize_coefficients();
        let t = self.topology;
        inv_z.par_iter().with_min_len(256).map(|&w| sos_response_at(&sos, t, w)).collect()
    }
}

pub fn bank_response(params: &FilterBankParams, inv_z: &[Complex64]) -> Vec<Complex64> {
    params.response(inv_z)
}

pub fn realize_coefficients(params: &FilterBankParams) -> Vec<[f64; 5]> {
    params.realize_coefficients()
}

#[inline]
fn sos_response_at(sos: &[[f64; 5]], t: Topology, w: Complex64) -> Complex64 {
    let mut total = Complex64::new(0.0, 0.0);
    for branch in sos.chunks_exact(t.m) {
        let mut prod = Complex64::new(1.0, 0.0);
        for c in branch {
            let num = Complex64::new(c[0], 0.0) + w * (c[1] + w * c[2]);
            prod *= num / quad(c[3], c[4], w);
        }
        total += prod;
    }
    total
}

/// Realized second-order sections; the export contract consumed by audio clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SosRepr", into = "SosRepr")]
pub struct SosBank {
    pub topology: Topology,
    pub sections: Vec<[f64; 5]>,
}

#[derive(Serialize, Deserialize)]
struct SosRepr {
    #[serde(rename = "L")]
    l: usize,
    #[serde(rename = "M")]
    m: usize,
    sections: Vec<[f64; 5]>,
}

impl TryFrom<SosRepr> for SosBank {
    type Error = Error;
    fn try_from(r: SosRepr) -> Result<Self> {
        let topology = Topology::new(r.l, r.m)?;
        if r.sections.len() != topology.n_sections() {
            return Err(Error::invalid(format!("{} sections for topology {topology}", r.sections.len())));
        }
        Ok(SosBank { topology, sections: r.sections })
    }
}

impl From<SosBank> for SosRepr {
    fn from(b: SosBank) -> Self {
        SosRepr { l: b.topology.l, m: b.topology.m, sections: b.sections }
    }
}

impl SosBank {
    pub fn response(&self, inv_z: &[Complex64]) -> Vec<Complex64> {
        inv_z.iter().map(|&w| sos_response_at(&self.sections, self.topology, w)).collect()
    }

    /// Whether every denominator lies strictly inside the stability triangle.
    pub fn is_stable(&self) -> bool {
        self.sections.iter().all(|c| in_stability_triangle(c[3], c[4]))
    }

    /// Filters `excitation` through each branch's cascade (transposed direct form II)
    /// and sums the branch outputs.
    pub fn render(&self, excitation: &AudioBuffer) -> Result<AudioBuffer> {
        let n = excitation.len();
        let mut out = vec![0.0; n];
        let mut buf = vec![0.0; n];
        for branch in self.sections.chunks_exact(self.topology.m) {
            buf.copy_from_slice(&excitation.samples);
            for c in branch {
                let (mut s1, mut s2) = (0.0, 0.0);
                for x in buf.iter_mut() {
                    let y = c[0] * *x + s1;
                    s1 = c[1] * *x - c[3] * y + s2;
                    s2 = c[2] * *x - c[4] * y;
                    *x = y;
                }
            }
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += b;
            }
        }
        if let Some(sample) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::Overflow { sample });
        }
        Ok(AudioBuffer::new(out, excitation.sample_rate))
    }
}

pub fn in_stability_triangle(a1: f64, a2: f64) -> bool {
    a2 < 1.0 && a2 > -1.0 && a1.abs() < 1.0 + a2
}

pub fn render_recursive(params: &FilterBankParams, excitation: &AudioBuffer) -> Result<AudioBuffer> {
    params.to_sos().render(excitation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{SpectralConfig, SpectralContext};
    use proptest::prelude::*;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn grid(n: usize) -> Vec<Complex64> {
        (0..=n / 2).map(|k| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * k as f64 / n as f64)).collect()
    }

    fn random_params(t: Topology, max_radius: f64, seed: u64) -> FilterBankParams {
        let mut rng = rng_from_seed(seed);
        let mut p = FilterBankParams::identity(t);
        for i in 0..t.n_sections() {
            let r = (rng.random::<f64>() * max_radius).atanh();
            p.p_raw[i] = Complex64::from_polar(r, rng.random::<f64>() * std::f64::consts::PI);
            p.q[i] = c(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0);
            p.k[i] = rng.random::<f64>() * 2.0 - 1.0;
        }
        p
    }

    #[test]
    fn activation_values() {
        let h = pole_activation(c(0.5, 0.0));
        assert!((h.re - 0.46211715726000975).abs() < 1e-15 && h.im == 0.0);
        assert_eq!(pole_activation(c(0.0, 0.0)), c(0.0, 0.0));
        for p in [c(1e6, -3.0), c(25.0, 25.0), c(1e-12, 1e-12)] {
            let h = pole_activation(p);
            assert!(h.norm() < 1.0 - 1e-12);
            assert!((h.arg() - p.arg()).abs() < 1e-12);
        }
        assert!(pole_activation(c(8.0, 0.0)).norm() > 1.0 - 1e-6);
    }

    #[test]
    fn radial_series_matches_closed_form() {
        for &r in &[0.049, 0.05, 0.0501] {
            let sech = 1.0 / f64::cosh(r);
            let exact = (r * sech * sech - r.tanh()) / (r * r * r);
            assert!((radial_derivative_over_r(r) - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn biquad_examples() {
        let g = grid(64);
        assert!(biquad_response(c(0.0, 0.0), c(0.0, 0.0), &g).iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-15));
        let p = c(0.3, 0.9);
        let cancel = biquad_response(p, pole_activation(p), &g);
        assert!(cancel.iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-12));
        let h = pole_activation(c(10.0, 0.0)).norm();
        let at_nyq = biquad_response(c(10.0, 0.0), c(0.0, 0.0), &[c(-1.0, 0.0)]);
        assert!((at_nyq[0].re - 1.0 / (1.0 + h).powi(2)).abs() < 1e-15);
        // tanh(10) exceeds the radius cap, so |h| is the cap itself
        assert!((h - MAX_POLE_RADIUS).abs() < 1e-15);
    }

    #[test]
    fn bank_matches_composed_biquads() {
        let t = Topology::new(2, 2).unwrap();
        let p = random_params(t, 0.95, 3);
        let g = grid(256);
        let bank = p.response(&g);
        let parts: Vec<Vec<Complex64>> = (0..4).map(|i| biquad_response(p.p_raw[i], p.q[i], &g)).collect();
        for k in 0..g.len() {
            let mut expect = c(0.0, 0.0);
            for l in 0..2 {
                expect += parts[2 * l][k] * p.k[2 * l] * parts[2 * l + 1][k] * p.k[2 * l + 1];
            }
            assert!((bank[k] - expect).norm() < 1e-12 * expect.norm().max(1.0));
        }
    }

    #[test]
    fn single_section_and_branch_scaling() {
        let g = grid(128);
        let t = Topology::new(1, 1).unwrap();
        let p = random_params(t, 0.9, 5);
        let b = biquad_response(p.p_raw[0], p.q[0], &g);
        for (x, y) in p.response(&g).iter().zip(&b) {
            assert!((x - y * p.k[0]).norm() < 1e-13);
        }
        let t = Topology::new(3, 1).unwrap();
        let p = random_params(t, 0.9, 6);
        let mut scaled = p.clone();
        scaled.k[1] *= 2.5;
        let b1: Vec<Complex64> = biquad_response(p.p_raw[1], p.q[1], &g).iter().map(|v| v * p.k[1]).collect();
        for ((x, y), z) in p.response(&g).iter().zip(scaled.response(&g)).zip(&b1) {
            assert!((x + z * 1.5 - y).norm() < 1e-12);
        }
    }

    #[test]
    fn coefficient_examples() {
        let t = Topology::new(1, 1).unwrap();
        let id = FilterBankParams::identity(t);
        assert_eq!(id.realize_coefficients(), vec![[1.0, 0.0, 0.0, 0.0, 0.0]]);
        let mut p = id.clone();
        p.q[0] = c(1.0, 0.0);
        p.k[0] = 2.0;
        let s = p.realize_coefficients()[0];
        assert_eq!(&s[..3], &[2.0, -4.0, 2.0]);
    }

    #[test]
    fn sos_json_contract() {
        let t = Topology::new(2, 3).unwrap();
        let sos = random_params(t, 0.9, 1).to_sos();
        let v: serde_json::Value = serde_json::to_value(&sos).unwrap();
        assert_eq!(v["L"], 2);
        assert_eq!(v["M"], 3);
        assert_eq!(v["sections"].as_array().unwrap().len(), 6);
        let back: SosBank = serde_json::from_value(v).unwrap();
        assert_eq!(back, sos);
        assert!(serde_json::from_str::<SosBank>(r#"{"L":2,"M":2,"sections":[[1,0,0,0,0]]}"#).is_err());
    }

    #[test]
    fn topology_parse() {
        assert_eq!("32x4".parse::<Topology>().unwrap(), Topology { l: 32, m: 4 });
        assert!("0x4".parse::<Topology>().is_err());
        assert!("32".parse::<Topology>().is_err());
        assert_eq!(serde_json::to_string(&Topology { l: 64, m: 2 }).unwrap(), "\"64x2\"");
    }

    #[test]
    fn recursion_examples() {
        let t = Topology::new(1, 1).unwrap();
        let id = FilterBankParams::identity(t);
        let imp = AudioBuffer::impulse(64, 32000);
        assert_eq!(render_recursive(&id, &imp).unwrap(), imp);
        let p = random_params(Topology::new(3, 2).unwrap(), 0.99, 2);
        let z = render_recursive(&p, &AudioBuffer::silence(64, 32000)).unwrap();
        assert!(z.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn recursion_matches_frequency_sampling() {
        let cfg = SpectralConfig { n_samples: 8192, ..Default::default() };
        let ctx = SpectralContext::new(cfg).unwrap();
        let p = random_params(Topology::new(4, 2).unwrap(), 0.99, 11);
        let ir = render_recursive(&p, &AudioBuffer::impulse(cfg.n_samples, cfg.sample_rate)).unwrap();
        let mag = ctx.dft_mag(&ir).unwrap();
        let h = p.response(&ctx.inv_z);
        let hmax = h.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let bound = 10.0 * hmax * p.max_pole_radius().powi(cfg.n_samples as i32) + 1e-6;
        for (a, b) in mag.iter().zip(&h) {
            assert!((a - b.norm()).abs() <= bound);
        }
    }

    #[test]
    fn bias_init_layout() {
        let t = Topology::new(4, 2).unwrap();
        let b = FilterBankParams::bias(t, 32000);
        assert!(b.k.iter().all(|&k| k == 0.125));
        let hs = b.poles();
        assert!(hs.iter().all(|h| (h.norm() - 0.98).abs() < 1e-12));
        assert!(hs.windows(2).all(|w| w[1].arg() > w[0].arg()));
        assert!(hs[0].arg() > 2.0 * std::f64::consts::PI * 20.0 / 32000.0);
        assert!(hs[7].arg() < std::f64::consts::PI);
        let i1 = FilterBankParams::init(t, 32000, 9);
        assert_eq!(i1, FilterBankParams::init(t, 32000, 9));
        assert_ne!(i1, b);
    }

    #[test]
    fn parallel_response_equals_sequential() {
        let p = random_params(Topology::new(8, 3).unwrap(), 0.99, 4);
        let g = grid(4096);
        let par = p.response(&g);
        let seq = p.to_sos().response(&g);
        assert_eq!(par, seq);
    }

    #[test]
    fn flat_round_trip() {
        let t = Topology::new(3, 2).unwrap();
        let p = random_params(t, 0.9, 8);
        assert_eq!(FilterBankParams::from_flat(t, &p.to_flat()).unwrap(), p);
        assert!(FilterBankParams::from_flat(t, &[0.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn activation_preserves_angle_and_radius(re in -1e3f64..1e3, im in -1e3f64..1e3) {
            let p = c(re, im);
            let h = pole_activation(p);
            prop_assert!(h.norm() < 1.0 - 1e-12);
            if p.norm() > 1e-300 {
                prop_assert!((h.arg() - p.arg()).abs() < 1e-12);
            }
        }

        #[test]
        fn coefficients_always_stable(mag_exp in -12.0f64..6.0, angle in -4.0f64..4.0) {
            let p = Complex64::from_polar(10f64.powf(mag_exp), angle);
            let h = pole_activation(p);
            prop_assert!(in_stability_triangle(-2.0 * h.re, h.norm_sqr()));
        }

        #[test]
        fn cascade_order_is_irrelevant(seed in 0u64..1000) {
            let t = Topology::new(2, 3).unwrap();
            let p = random_params(t, 0.95, seed);
            let mut swapped = p.clone();
            swapped.k.swap(0, 2);
            swapped.p_raw.swap(0, 2);
            swapped.q.swap(0, 2);
            let g = grid(64);
            for (a, b) in p.response(&g).iter().zip(swapped.response(&g)) {
                prop_assert!((a - b).norm() < 1e-10 * a.norm().max(1.0));
            }
        }

        #[test]
        fn conjugate_symmetry(seed in 0u64..1000, k in 1usize..31) {
            let p = random_params(Topology::new(2, 2).unwrap(), 0.95, seed);
            let w = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * k as f64 / 64.0);
            let a = p.response(&[w])[0];
            let b = p.response(&[w.conj()])[0];
            prop_assert!((a.conj() - b).norm() < 1e-12 * a.norm().max(1.0));
        }
    }
}
