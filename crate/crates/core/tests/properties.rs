use std::f64::consts::PI;

use modalbank::elastodynamics::{assemble, solve_modes, vertex_gains, Material};
use modalbank::filterbank::{bank_response, in_stability_triangle, render_recursive};
use modalbank::geometry::{convex_hull, gen_convex_shape, orient, polygon_area, rasterize, triangulate};
use modalbank::modal_render::render_modes_raw;
use modalbank::optim::{fit_mel, FitBudget};
use modalbank::predictor::{Architecture, ConditioningInput, Predictor};
use modalbank::{
    AudioBuffer, ConvexShape, FilterBankParams, MelSpectrum, OccupancyGrid, Point, SpectralConfig, SpectralContext,
    Topology,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn material() -> Material {
    Material { rho: 2700.0, youngs: 7e10, poisson: 0.33, alpha: 5.0, beta: 1e-6 }
}

fn small_ctx(n: usize) -> SpectralContext {
    SpectralContext::new(SpectralConfig { n_samples: n, n_mels: 32, ..Default::default() }).unwrap()
}

fn raw_pole() -> impl Strategy<Value = Complex64> {
    (-12.0f64..=6.0, -PI..PI).prop_map(|(e, a)| Complex64::from_polar(10f64.powf(e), a))
}

fn bank(t: Topology, max_radius: f64) -> impl Strategy<Value = FilterBankParams> {
    let n = t.n_sections();
    (
        prop::collection::vec((0.05..max_radius, 0.0..PI), n),
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n),
        prop::collection::vec(-1.0f64..1.0, n),
    )
        .prop_map(move |(poles, zeros, gains)| {
            let mut p = FilterBankParams::identity(t);
            for i in 0..n {
                let (r, a): (f64, f64) = poles[i];
                p.p_raw[i] = Complex64::from_polar(r.atanh(), a);
                p.q[i] = Complex64::new(zeros[i].0, zeros[i].1);
                p.k[i] = gains[i];
            }
            p
        })
}

#[test]
fn lowest_eigenfrequency_converges_under_refinement() {
    let square = ConvexShape::new(vec![
        Point::new(0.2, 0.2),
        Point::new(0.8, 0.2),
        Point::new(0.8, 0.8),
        Point::new(0.2, 0.8),
    ])
    .unwrap();
    let omega = |tris: usize| {
        let mesh = triangulate(&square, tris, 0).unwrap();
        let model = solve_modes(&assemble(&mesh, &material()).unwrap(), &material(), 4).unwrap();
        (mesh.n_faces(), model.omegas[0])
    };
    let ((f1, w1), (f2, w2)) = (omega(500), omega(1000));
    assert!(f2 as f64 > 1.6 * f1 as f64, "{f1} -> {f2} triangles");
    assert!((w2 - w1).abs() / w2 < 0.02, "omega_1 {w1} -> {w2}");
}

#[test]
fn fit_is_deterministic_with_monotone_running_minimum() {
    let ctx = small_ctx(1024);
    let t = Topology::new(2, 2).unwrap();
    let x = modalbank::optim::bank_mel(&FilterBankParams::init(t, 32000, 99), &ctx).unwrap();
    let budget = FitBudget { max_steps: 60, seed: 4, ..Default::default() };
    let a = fit_mel(&x, t, &ctx, &budget).unwrap();
    let b = fit_mel(&x, t, &ctx, &budget).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.history, b.history);
    let mut running = f64::INFINITY;
    for h in &a.history {
        let next = running.min(h.loss);
        assert!(next <= running);
        running = next;
    }
    assert_eq!(running, a.best_loss);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn generated_shapes_are_convex_hulls(seed in any::<u64>(), n in 3usize..=50) {
        let s = gen_convex_shape(n, seed).unwrap();
        let v = s.vertices();
        for i in 0..v.len() {
            prop_assert!(orient(v[i], v[(i + 1) % v.len()], v[(i + 2) % v.len()]) > 0.0);
        }
        // the hull may start at a different vertex; compare up to rotation
        let mut hull = convex_hull(v);
        prop_assert_eq!(hull.len(), v.len());
        let start = hull.iter().position(|p| *p == v[0]).unwrap();
        hull.rotate_left(start);
        prop_assert_eq!(hull, v.to_vec());
    }

    #[test]
    fn mesh_area_matches_polygon(seed in 0u64..10_000, n in 3usize..=30, tris in 20usize..300) {
        let s = gen_convex_shape(n, seed).unwrap();
        let mesh = triangulate(&s, tris, seed).unwrap();
        let want = polygon_area(s.vertices());
        prop_assert!((mesh.area() - want).abs() <= 1e-9 * want);
    }

    #[test]
    fn raster_agrees_with_contains(seed in any::<u64>(), n in 3usize..=50) {
        let s = gen_convex_shape(n, seed).unwrap();
        let g = rasterize(&s);
        let hits = (0..64).flat_map(|r| (0..64).map(move |c| (r, c)))
            .filter(|&(r, c)| s.contains(OccupancyGrid::cell_center(r, c)))
            .count();
        if hits > 0 {
            for r in 0..64 {
                for c in 0..64 {
                    prop_assert_eq!(g.get(r, c), s.contains(OccupancyGrid::cell_center(r, c)));
                }
            }
        } else {
            prop_assert_eq!(g.count(), 1);
        }
    }

    #[test]
    fn loss_is_symmetric_and_nonnegative(
        x in prop::collection::vec(0.0f64..100.0, 32),
        h in prop::collection::vec(0.0f64..100.0, 32),
    ) {
        let cfg = SpectralConfig { n_mels: 32, ..Default::default() };
        let (x, h) = (MelSpectrum(x), MelSpectrum(h));
        let a = modalbank::spectral::loss(&x, &h, &cfg).unwrap();
        let b = modalbank::spectral::loss(&h, &x, &cfg).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        prop_assert!(a >= 0.0);
        prop_assert_eq!(modalbank::spectral::loss(&x, &x, &cfg).unwrap(), 0.0);
        if x != h {
            prop_assert!(a > 0.0);
        }
    }

    #[test]
    fn mel_projection_is_linear(
        a in prop::collection::vec(0.0f64..10.0, 513),
        b in prop::collection::vec(0.0f64..10.0, 513),
        c in -3.0f64..3.0,
    ) {
        let ctx = small_ctx(1024);
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + c * y).collect();
        let (pa, pb, ps) = (ctx.mel.project(&a), ctx.mel.project(&b), ctx.mel.project(&sum));
        for i in 0..ps.len() {
            prop_assert!((ps.0[i] - (pa.0[i] + c * pb.0[i])).abs() <= 1e-9 * (1.0 + ps.0[i].abs()));
        }
    }

    #[test]
    fn any_raw_pole_is_stable(poles in prop::collection::vec(raw_pole(), 1..40)) {
        let t = Topology::new(poles.len(), 1).unwrap();
        let mut p = FilterBankParams::identity(t);
        p.p_raw = poles;
        for c in p.realize_coefficients() {
            prop_assert!(in_stability_triangle(c[3], c[4]), "{:?}", c);
        }
    }

    #[test]
    fn response_is_conjugate_symmetric(p in bank(Topology::new(4, 3).unwrap(), 0.95), w in 0.0f64..PI) {
        let z = [Complex64::from_polar(1.0, -w)];
        let zc = [Complex64::from_polar(1.0, w)];
        let (h, hc) = (bank_response(&p, &z)[0], bank_response(&p, &zc)[0]);
        prop_assert!((h - hc.conj()).norm() <= 1e-9 * h.norm().max(1e-12));
    }

    #[test]
    fn cascade_order_does_not_matter(p in bank(Topology::new(3, 4).unwrap(), 0.95), rot in 1usize..4) {
        let ctx = small_ctx(256);
        let mut q = p.clone();
        for l in 0..3 {
            let idx: Vec<usize> = (0..4).map(|m| l * 4 + (m + rot) % 4).collect();
            for (m, &src) in idx.iter().enumerate() {
                q.p_raw[l * 4 + m] = p.p_raw[src];
                q.q[l * 4 + m] = p.q[src];
                q.k[l * 4 + m] = p.k[src];
            }
        }
        let (a, b) = (bank_response(&p, &ctx.inv_z), bank_response(&q, &ctx.inv_z));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).norm() <= 1e-10 * x.norm().max(1.0));
        }
    }

    #[test]
    fn aliasing_error_shrinks_with_length(p in bank(Topology::new(2, 2).unwrap(), 0.97)) {
        let mut prev = f64::INFINITY;
        for n in [256usize, 1024, 4096] {
            let ctx = small_ctx(n);
            let y = render_recursive(&p, &AudioBuffer::impulse(n, 32000)).unwrap();
            let dft = ctx.dft_mag(&y).unwrap();
            let h = bank_response(&p, &ctx.inv_z);
            let err = h.iter().zip(&dft).map(|(a, b)| (a.norm() - b).abs()).fold(0.0, f64::max);
            prop_assert!(err <= prev + 1e-9, "N = {}: {} > {}", n, err, prev);
            prev = err;
        }
    }

    #[test]
    fn modal_render_is_quadratic_in_gains_and_decays(
        modes in prop::collection::vec((200.0f64..8000.0, 5.0f64..80.0, -1.0f64..1.0), 1..10),
    ) {
        let cfg = SpectralConfig { n_samples: 4096, ..Default::default() };
        let omegas: Vec<f64> = modes.iter().map(|m| 2.0 * PI * m.0).collect();
        let sigmas: Vec<f64> = modes.iter().map(|m| m.1).collect();
        let g: Vec<f64> = modes.iter().map(|m| m.2).collect();
        let g2: Vec<f64> = g.iter().map(|v| 2.0 * v).collect();
        let a = render_modes_raw(&omegas, &sigmas, &g, &cfg).unwrap();
        let b = render_modes_raw(&omegas, &sigmas, &g2, &cfg).unwrap();
        prop_assert_eq!(&a, &render_modes_raw(&omegas, &sigmas, &g, &cfg).unwrap());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((y - 4.0 * x).abs() <= 1e-12 * (1.0 + y.abs()));
        }
        let tenth = a.len() / 10;
        let rms = |s: &[f64]| (s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64).sqrt();
        let min_sigma = sigmas.iter().copied().fold(f64::INFINITY, f64::min);
        if min_sigma * cfg.n_samples as f64 / cfg.sample_rate as f64 > 1.0 && rms(&a[..tenth]) > 0.0 {
            prop_assert!(rms(&a[a.len() - tenth..]) < rms(&a[..tenth]));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn cached_embedding_predictions_are_bitwise_equal(seed in any::<u64>(), x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let arch = Architecture { channels: vec![4, 4, 4, 4], embed_dim: 8, hidden: vec![16], topology: Topology::new(4, 2).unwrap() };
        let ranges = Default::default();
        let mut model = Predictor::new(arch, ranges, SpectralConfig::default(), seed).unwrap();
        let out = model.out_layer_range();
        for (i, w) in model.weights[out].iter_mut().enumerate() {
            *w = 0.3 * (((i as u64 ^ seed) % 7) as f64 - 3.0);
        }
        let grid = rasterize(&gen_convex_shape(8, seed).unwrap());
        let cached = model.encode(&grid);
        let cond = ConditioningInput::new(&material(), Point::new(x, y), &ranges);
        let a = model.predict(&cached, &cond).unwrap();
        let b = model.predict(&model.encode(&grid), &cond).unwrap();
        prop_assert_eq!(a.to_flat(), b.to_flat());
        prop_assert!(a.to_sos().is_stable());
    }

    #[test]
    fn modes_ascend_with_rayleigh_damping(seed in 0u64..1000) {
        let mesh = triangulate(&gen_convex_shape(9, seed).unwrap(), 120, seed).unwrap();
        let m = material();
        let sys = assemble(&mesh, &m).unwrap();
        let model = solve_modes(&sys, &m, 10).unwrap();
        model.check_invariants(&sys).unwrap();
        for w in model.omegas.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        for (s, w) in model.sigmas.iter().zip(&model.omegas) {
            let want = (m.alpha + m.beta * w * w) / 2.0;
            prop_assert!((s - want).abs() <= 1e-12 * want);
        }
        let g = vertex_gains(&model, 0, [0.0, 1.0]);
        prop_assert_eq!(g.len(), model.n_modes());
    }
}
