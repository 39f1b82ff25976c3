//! Amortized predictor: a strided conv encoder over the occupancy grid and an MLP head
//! that maps (embedding, material, excitation position) to filterbank parameters.
//!
//! Head outputs are residuals on the fixed bias of [`FilterBankParams::bias`], so an
//! untrained model (zero output layer) predicts exactly the bias bank.
//!
//! [`FilterBankParams::bias`]: crate::filterbank::FilterBankParams::bias

mod checkpoint;
mod layers;
mod model;
mod train;

use serde::{Deserialize, Serialize};

use crate::elastodynamics::{Material, MaterialRanges};
use crate::geometry::Point;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointHeader, CHECKPOINT_VERSION};
pub use model::{Architecture, EncoderTrace, HeadTrace, Predictor, ShapeEmbedding, TensorSpec, COND_DIM};
pub use train::{
    batch_loss_grad, evaluate, sample_loss_grad, split_by_shape, train, Split, TrainConfig, TrainData, TrainFailure,
    TrainLog, TrainOutcome, TrainSample,
};

/// Material and position normalized to [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditioningInput {
    pub material_norm: [f64; 5],
    pub coords_norm: [f64; 2],
}

impl ConditioningInput {
    /// Positions are normalized against the unit square that contains every shape.
    pub fn new(material: &Material, position: Point, ranges: &MaterialRanges) -> Self {
        ConditioningInput {
            material_norm: ranges.normalize(material),
            coords_norm: [position.x.clamp(0.0, 1.0), position.y.clamp(0.0, 1.0)],
        }
    }

    pub fn as_array(&self) -> [f64; 7] {
        let m = self.material_norm;
        [m[0], m[1], m[2], m[3], m[4], self.coords_norm[0], self.coords_norm[1]]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        ConditioningInput { material_norm: [a[0], a[1], a[2], a[3], a[4]], coords_norm: [a[5], a[6]] }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::{in_stability_triangle, Topology};
    use crate::geometry::{gen_convex_shape, rasterize};
    use crate::spectral::{MelSpectrum, SpectralConfig, SpectralContext};
    use rand::Rng;

    fn tiny_arch() -> Architecture {
        Architecture { channels: vec![2, 3, 2, 2], embed_dim: 4, hidden: vec![8], topology: Topology { l: 2, m: 2 } }
    }

    fn small_ctx() -> SpectralContext {
        SpectralContext::new(SpectralConfig { n_samples: 512, n_mels: 16, ..Default::default() }).unwrap()
    }

    fn cond(seed: u64) -> ConditioningInput {
        let mut rng = crate::rng::rng_from_seed(seed);
        ConditioningInput::from_array(std::array::from_fn(|_| rng.random()))
    }

    fn grid(seed: u64) -> crate::geometry::OccupancyGrid {
        rasterize(&gen_convex_shape(12, seed).unwrap())
    }

    fn model(arch: Architecture, seed: u64) -> Predictor {
        Predictor::new(arch, MaterialRanges::default(), SpectralConfig::default(), seed).unwrap()
    }

    #[test]
    fn encode_is_deterministic_and_zero_weights_give_zero() {
        let m = model(Architecture::default(), 1);
        let g = grid(3);
        assert_eq!(m.encode(&g), m.encode(&g));
        let mut z = m.clone();
        z.weights.iter_mut().for_each(|w| *w = 0.0);
        assert!(z.encode(&g).0.iter().all(|&v| v == 0.0));
        assert_eq!(z.encode(&g).0.len(), 64);
    }

    #[test]
    fn untrained_model_predicts_bias() {
        let m = model(Architecture::default(), 2);
        let e = m.encode(&grid(4));
        let p = m.predict(&e, &cond(1)).unwrap();
        assert_eq!(p.n_params(), 32 * 4 * 5);
        assert_eq!(p, m.bias_params());
        assert!(m.predict(&ShapeEmbedding(vec![0.0; 3]), &cond(1)).is_err());
    }

    #[test]
    fn predictions_are_stable_for_any_output() {
        let mut m = model(tiny_arch(), 3);
        let mut rng = crate::rng::rng_from_seed(5);
        let out = m.out_layer_range();
        for w in &mut m.weights[out] {
            *w = (rng.random::<f64>() - 0.5) * 1e3;
        }
        let e = m.encode(&grid(1));
        for s in 0..20 {
            let sos = m.predict(&e, &cond(s)).unwrap().to_sos();
            assert!(sos.sections.iter().all(|c| in_stability_triangle(c[3], c[4])));
        }
    }

    #[test]
    fn cached_embedding_equals_recompute() {
        let m = model(tiny_arch(), 4);
        let g = grid(2);
        let cached = m.encode(&g);
        for s in 0..5 {
            assert_eq!(m.predict(&cached, &cond(s)).unwrap(), m.predict(&m.encode(&g), &cond(s)).unwrap());
        }
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        let ctx = small_ctx();
        let mut m = model(tiny_arch(), 5);
        let mut rng = crate::rng::rng_from_seed(6);
        // zero biases put empty-grid activations exactly on the ReLU kink
        for w in &mut m.weights {
            *w += (rng.random::<f64>() - 0.5) * 0.2;
        }
        let g = grid(7);
        let c = cond(8);
        let target = MelSpectrum((0..16).map(|_| rng.random::<f64>() * 2.0).collect());
        let (loss, grad) = sample_loss_grad(&m, &g, &c, &target, &ctx).unwrap();
        let loss_at = |w: &[f64]| {
            let mut mm = m.clone();
            mm.weights.copy_from_slice(w);
            let p = mm.predict(&mm.encode(&g), &c).unwrap();
            crate::optim::loss_only(&p, &target, &ctx).unwrap()
        };
        let mut checked = 0;
        for i in 0..m.n_weights() {
            // five-point stencil: the loss is O(1e4) here, so a short central step would be
            // dominated by roundoff on the small entries
            let h = 1e-4 * m.weights[i].abs().max(1.0);
            let at = |d: f64| {
                let mut w = m.weights.clone();
                w[i] += d;
                loss_at(&w)
            };
            let fd = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
            let a = grad[i];
            // below the stencil's roundoff floor only an absolute comparison is meaningful
            let floor = 64.0 * f64::EPSILON * loss / h;
            if a.abs() < floor && fd.abs() < floor {
                assert!((a - fd).abs() < floor, "weight {i}: analytic {a} fd {fd}");
                continue;
            }
            let rel = (a - fd).abs() / a.abs().max(fd.abs());
            assert!(rel < 1e-3, "weight {i}: analytic {a} fd {fd}");
            checked += 1;
        }
        assert!(checked > m.n_weights() / 4, "only {checked} informative entries");
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut m = model(tiny_arch(), 9);
        let out = m.out_layer_range();
        m.weights[out].iter_mut().for_each(|w| *w = 0.125);
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        let back = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back.arch, m.arch);
        assert_eq!(back.seed, 9);
        for (a, b) in back.weights.iter().zip(&m.weights) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert!(read_checkpoint(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        let hl = u32::from_le_bytes([bad[0], bad[1], bad[2], bad[3]]) as usize;
        let text = String::from_utf8(bad[4..4 + hl].to_vec()).unwrap().replace("\"version\":1", "\"version\":9");
        bad.splice(4..4 + hl, text.into_bytes());
        assert!(read_checkpoint(&bad[..]).is_err());
    }

    #[test]
    fn split_is_disjoint_by_shape() {
        let samples: Vec<TrainSample> = (0..40)
            .map(|i| TrainSample { shape: i % 8, cond: cond(i as u64), target: MelSpectrum(vec![]) })
            .collect();
        let data = TrainData { grids: vec![], samples };
        let s = split_by_shape(&data, 0.25, 1);
        assert_eq!(s.train.len() + s.val.len(), 40);
        assert_eq!(s.val.len(), 10);
        for &v in &s.val {
            assert!(s.train.iter().all(|&t| data.samples[t].shape != data.samples[v].shape));
        }
        assert_eq!(s, split_by_shape(&data, 0.25, 1));
    }

    #[test]
    fn training_reduces_validation_loss() {
        let ctx = small_ctx();
        let t = Topology { l: 2, m: 1 };
        let target_params = crate::filterbank::FilterBankParams::init(t, 32000, 3);
        let target = crate::optim::bank_mel(&target_params, &ctx).unwrap();
        let data = TrainData {
            grids: vec![grid(1)],
            samples: vec![TrainSample { shape: 0, cond: cond(0), target }],
        };
        let split = split_by_shape(&data, 0.25, 0);
        let arch = Architecture { topology: t, ..tiny_arch() };
        let cfg = TrainConfig {
            max_steps: 200,
            batch_size: 1,
            adam: crate::optim::AdamConfig { lr: 1e-2, ..Default::default() },
            eval_every: 20,
            ..Default::default()
        };
        let out = train(model(arch, 1), &data, &split, &ctx, &cfg).unwrap();
        assert!(out.best_val < 0.5 * out.baseline_val, "{} vs {}", out.best_val, out.baseline_val);
        assert_eq!(out.steps, 200);
    }
}
