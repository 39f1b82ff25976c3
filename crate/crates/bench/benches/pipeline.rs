use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use modalbank::elastodynamics::{assemble, solve_modes, MaterialRanges};
use modalbank::filterbank::render_recursive;
use modalbank::optim::loss_and_grad;
use modalbank::predictor::{Architecture, Predictor};
use modalbank::{AudioBuffer, FilterBankParams, SpectralConfig, SpectralContext, Topology};
use modalbank_bench::{conditions, midpoint_material, plate};
use std::hint::black_box;

fn fem(c: &mut Criterion) {
    let m = midpoint_material(&MaterialRanges::default());
    let mut g = c.benchmark_group("fem_assemble_solve");
    g.sample_size(10);
    for n in [96, 426, 1792] {
        let (mesh, _) = plate(n, 0).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &mesh, |b, mesh| {
            b.iter(|| solve_modes(&assemble(mesh, &m).unwrap(), &m, 32).unwrap())
        });
    }
    g.finish();
}

fn predictor(c: &mut Criterion) {
    let ranges = MaterialRanges::default();
    let model = Predictor::new(Architecture::default(), ranges, SpectralConfig::default(), 0).unwrap();
    let (mesh, grid) = plate(1792, 0).unwrap();
    let conds = conditions(&mesh, &midpoint_material(&ranges), &ranges, 16);
    let emb = model.encode(&grid);
    c.bench_function("encode", |b| b.iter(|| model.encode(black_box(&grid))));
    c.bench_function("predict_16_positions_cached", |b| {
        b.iter(|| {
            for cond in &conds {
                black_box(model.predict(&emb, cond).unwrap().realize_coefficients());
            }
        })
    });
}

fn filterbank(c: &mut Criterion) {
    let ctx = SpectralContext::new(SpectralConfig::default()).unwrap();
    let impulse = AudioBuffer::impulse(ctx.cfg.n_samples, ctx.cfg.sample_rate);
    let mut g = c.benchmark_group("filterbank");
    g.sample_size(10);
    for t in Topology::ablation() {
        let p = FilterBankParams::init(t, ctx.cfg.sample_rate, 0);
        let x = ctx.mel_spectrum(&render_recursive(&FilterBankParams::init(t, ctx.cfg.sample_rate, 1), &impulse).unwrap()).unwrap();
        g.bench_with_input(BenchmarkId::new("loss_and_grad", t), &p, |b, p| b.iter(|| loss_and_grad(p, &x, &ctx).unwrap()));
        g.bench_with_input(BenchmarkId::new("render_recursive", t), &p, |b, p| b.iter(|| render_recursive(p, &impulse).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, fem, predictor, filterbank);
criterion_main!(benches);
