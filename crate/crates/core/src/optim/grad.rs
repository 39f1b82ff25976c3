use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filterbank::{activation_derivs, quad, FilterBankParams, PARAMS_PER_SECTION};
use crate::spectral::{MelSpectrum, SpectralConfig, SpectralContext};

/// Bins per work unit. Partial gradients are reduced in chunk order, so results do not
/// depend on how many threads ran.
pub const GRAD_CHUNK: usize = 512;

/// Bank response magnitudes on the bin grid, with the first non-finite bin reported.
fn response_mag(params: &FilterBankParams, ctx: &SpectralContext) -> Result<(Vec<Complex64>, Vec<f64>)> {
    let h = params.response(&ctx.inv_z);
    if let Some(bin) = h.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::Numeric { bin, detail: "non-finite bank response".into() });
    }
    let mag = h.iter().map(|v| v.norm()).collect();
    Ok((h, mag))
}

pub fn bank_mel(params: &FilterBankParams, ctx: &SpectralContext) -> Result<MelSpectrum> {
    let (_, mag) = response_mag(params, ctx)?;
    Ok(ctx.mel.project(&mag))
}

pub fn loss_only(params: &FilterBankParams, x_mel: &MelSpectrum, ctx: &SpectralContext) -> Result<f64> {
    let h_mel = bank_mel(params, ctx)?;
    ctx.loss(x_mel, &h_mel)
}

/// Loss and its gradient with respect to the mel values of `h`.
pub fn mel_loss_grad(x: &MelSpectrum, h: &MelSpectrum, cfg: &SpectralConfig) -> Result<(f64, Vec<f64>)> {
    let loss = crate::spectral::loss(x, h, cfg)?;
    let eps = cfg.log_eps;
    let g = x
        .0
        .iter()
        .zip(&h.0)
        .map(|(&a, &b)| 2.0 * cfg.lambda * (b - a) + 2.0 * cfg.gamma * ((b + eps).ln() - (a + eps).ln()) / (b + eps))
        .collect();
    Ok((loss, g))
}

/// Exact gradient of the mel-spectral loss with respect to every raw parameter, in
/// [`FilterBankParams::to_flat`] order, through the frequency-sampled response.
pub fn loss_and_grad(params: &FilterBankParams, x_mel: &MelSpectrum, ctx: &SpectralContext) -> Result<(f64, Vec<f64>)> {
    params.validate()?;
    if x_mel.len() != ctx.mel.n_mels() {
        return Err(Error::invalid(format!("target has {} mel bins, config has {}", x_mel.len(), ctx.mel.n_mels())));
    }
    let (h, mag) = response_mag(params, ctx)?;
    let h_mel = ctx.mel.project(&mag);
    let (loss, g_mel) = mel_loss_grad(x_mel, &h_mel, &ctx.cfg)?;
    if !loss.is_finite() {
        let bin = h_mel.0.iter().position(|v| !v.is_finite()).unwrap_or(0);
        return Err(Error::Numeric { bin, detail: format!("loss is {loss}") });
    }
    let mut g_mag = vec![0.0; mag.len()];
    ctx.mel.project_transpose(&g_mel, &mut g_mag);

    let t = params.topology;
    let n = t.n_sections();
    let derivs: Vec<_> = params.p_raw.iter().map(|&p| activation_derivs(p)).collect();
    let n_chunks = mag.len().div_ceil(GRAD_CHUNK);
    let partials: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; n * PARAMS_PER_SECTION];
            let mut terms = vec![Complex64::new(0.0, 0.0); t.m];
            let mut prefix = vec![Complex64::new(0.0, 0.0); t.m + 1];
            let mut suffix = vec![Complex64::new(0.0, 0.0); t.m + 1];
            let mut nums = vec![Complex64::new(0.0, 0.0); t.m];
            let mut dens = vec![Complex64::new(0.0, 0.0); t.m];
            for bin in c * GRAD_CHUNK..((c + 1) * GRAD_CHUNK).min(mag.len()) {
                let a = g_mag[bin];
                if a == 0.0 || mag[bin] == 0.0 {
                    continue;
                }
                // dL/dtheta = Re(conj(G) dH/dtheta) with G = dL/d|H| * H / |H|
                let gc = (h[bin] * (a / mag[bin])).conj();
                let w = ctx.inv_z[bin];
                let w2 = w * w;
                for l in 0..t.l {
                    let base = l * t.m;
                    for m in 0..t.m {
                        let s = base + m;
                        let q = params.q[s];
                        let hd = &derivs[s];
                        nums[m] = quad(-2.0 * q.re, q.norm_sqr(), w);
                        dens[m] = quad(-2.0 * hd.h.re, hd.h.norm_sqr(), w);
                        terms[m] = nums[m] * params.k[s] / dens[m];
                    }
                    prefix[0] = Complex64::new(1.0, 0.0);
                    for m in 0..t.m {
                        prefix[m + 1] = prefix[m] * terms[m];
                    }
                    suffix[t.m] = Complex64::new(1.0, 0.0);
                    for m in (0..t.m).rev() {
                        suffix[m] = suffix[m + 1] * terms[m];
                    }
                    for m in 0..t.m {
                        let s = base + m;
                        let others = gc * prefix[m] * suffix[m + 1];
                        let (k, q, hd) = (params.k[s], params.q[s], &derivs[s]);
                        let inv_d = 1.0 / dens[m];
                        let out = &mut acc[s * PARAMS_PER_SECTION..(s + 1) * PARAMS_PER_SECTION];
                        // denominator: D = 1 - 2 Re(h) w + |h|^2 w^2
                        let dt_dd = -(nums[m] * k) * inv_d * inv_d;
                        let dd_dx = w * (-2.0 * hd.dre_dx) + w2 * hd.dabs2_dx;
                        let dd_dy = w * (-2.0 * hd.dre_dy) + w2 * hd.dabs2_dy;
                        out[0] += (others * dt_dd * dd_dx).re;
                        out[1] += (others * dt_dd * dd_dy).re;
                        // numerator: N = 1 - 2 Re(q) w + |q|^2 w^2
                        let kd = others * (k * inv_d);
                        out[2] += (kd * (w * -2.0 + w2 * (2.0 * q.re))).re;
                        out[3] += (kd * (w2 * (2.0 * q.im))).re;
                        out[4] += (others * nums[m] * inv_d).re;
                    }
                }
            }
            acc
        })
        .collect();
    let mut grad = vec![0.0; n * PARAMS_PER_SECTION];
    for p in &partials {
        for (g, v) in grad.iter_mut().zip(p) {
            *g += v;
        }
    }
    if let Some(i) = grad.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric { bin: 0, detail: format!("non-finite gradient entry {i}") });
    }
    Ok((loss, grad))
}

/// Central differences with step `rel_step * max(|theta|, 1)`; a test oracle.
pub fn finite_difference_grad(
    params: &FilterBankParams,
    x_mel: &MelSpectrum,
    ctx: &SpectralContext,
    rel_step: f64,
) -> Result<Vec<f64>> {
    let flat = params.to_flat();
    let mut work = params.clone();
    let mut out = Vec::with_capacity(flat.len());
    for i in 0..flat.len() {
        let h = rel_step * flat[i].abs().max(1.0);
        let mut f = flat.clone();
        f[i] = flat[i] + h;
        work.set_flat(&f);
        let lp = loss_only(&work, x_mel, ctx)?;
        f[i] = flat[i] - h;
        work.set_flat(&f);
        let lm = loss_only(&work, x_mel, ctx)?;
        out.push((lp - lm) / (2.0 * h));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::Topology;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn ctx() -> SpectralContext {
        SpectralContext::new(SpectralConfig { n_samples: 512, n_mels: 32, ..Default::default() }).unwrap()
    }

    fn random_case(t: Topology, seed: u64) -> (FilterBankParams, MelSpectrum) {
        let mut rng = rng_from_seed(seed);
        let mut p = FilterBankParams::init(t, 32000, seed);
        for i in 0..t.n_sections() {
            p.p_raw[i] *= 0.5 + rng.random::<f64>();
            p.q[i] += Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            p.k[i] = 0.5 + rng.random::<f64>();
        }
        let x = MelSpectrum((0..32).map(|_| rng.random::<f64>() * 3.0).collect());
        (p, x)
    }

    fn check(analytic: &[f64], fd: &[f64]) {
        for (i, (a, f)) in analytic.iter().zip(fd).enumerate() {
            if a.abs() < 1e-10 && f.abs() < 1e-10 {
                assert!((a - f).abs() < 1e-10, "entry {i}: {a} vs {f}");
            } else {
                let rel = (a - f).abs() / a.abs().max(f.abs());
                assert!(rel < 1e-4, "entry {i}: {a} vs {f} (rel {rel})");
            }
        }
    }

    #[test]
    fn matches_finite_differences() {
        let c = ctx();
        for (seed, t) in [(1, Topology::new(2, 2).unwrap()), (2, Topology::new(3, 1).unwrap()), (3, Topology::new(1, 4).unwrap())] {
            let (p, x) = random_case(t, seed);
            let (_, g) = loss_and_grad(&p, &x, &c).unwrap();
            check(&g, &finite_difference_grad(&p, &x, &c, 1e-6).unwrap());
        }
    }

    #[test]
    fn imaginary_pole_gradient_on_real_axis() {
        let c = ctx();
        let t = Topology::new(1, 2).unwrap();
        let mut p = FilterBankParams::identity(t);
        p.p_raw = vec![Complex64::new(0.8, 0.0), Complex64::new(-1.7, 0.0)];
        p.q = vec![Complex64::new(0.2, 0.3), Complex64::new(-0.1, 0.0)];
        let x = MelSpectrum(vec![0.5; 32]);
        let (_, g) = loss_and_grad(&p, &x, &c).unwrap();
        check(&g, &finite_difference_grad(&p, &x, &c, 1e-6).unwrap());
        // |h|^2 is even in Im p, and so is Re h, so the gradient vanishes there
        assert!(g[1].abs() < 1e-12 && g[6].abs() < 1e-12);
        p.p_raw[0].im = 1e-3;
        let (_, g) = loss_and_grad(&p, &x, &c).unwrap();
        check(&g, &finite_difference_grad(&p, &x, &c, 1e-6).unwrap());
    }

    #[test]
    fn zero_gradient_at_perfect_fit() {
        let c = ctx();
        let (p, _) = random_case(Topology::new(2, 2).unwrap(), 7);
        let x = bank_mel(&p, &c).unwrap();
        let (l, g) = loss_and_grad(&p, &x, &c).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let c = SpectralContext::new(SpectralConfig { n_samples: 4096, n_mels: 64, ..Default::default() }).unwrap();
        let (p, _) = random_case(Topology::new(4, 2).unwrap(), 5);
        let x = MelSpectrum(vec![1.0; 64]);
        let a = loss_and_grad(&p, &x, &c).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| loss_and_grad(&p, &x, &c).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_mismatched_target() {
        let c = ctx();
        let p = FilterBankParams::identity(Topology::new(1, 1).unwrap());
        assert!(loss_and_grad(&p, &MelSpectrum(vec![1.0; 3]), &c).is_err());
    }
}
