//! Wall-clock comparison of the FEM path (assemble + eigensolve) against the predictor
//! path (encode + predict a batch of positions + realize coefficients).

use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::elastodynamics::{assemble, solve_modes, Material, MaterialRanges};
use crate::error::{Error, Result};
use crate::geometry::{gen_convex_shape, rasterize, triangulate_with_vertices};
use crate::predictor::{ConditioningInput, Predictor};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub vertices: Vec<usize>,
    pub repetitions: usize,
    /// Excitation positions predicted per mesh on the model path.
    pub positions: usize,
    pub n_modes: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { vertices: vec![96, 426, 1792], repetitions: 5, positions: 16, n_modes: 32, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub mean_ms: f64,
    pub median_ms: f64,
    pub min_ms: f64,
    pub samples_ms: Vec<f64>,
}

impl Timing {
    pub fn from_samples(samples_ms: Vec<f64>) -> Result<Self> {
        if samples_ms.is_empty() {
            return Err(Error::invalid("no timing samples"));
        }
        let mut sorted = samples_ms.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median_ms = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        Ok(Timing {
            mean_ms: sorted.iter().sum::<f64>() / n as f64,
            median_ms,
            min_ms: sorted[0],
            samples_ms,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshTiming {
    pub vertices: usize,
    pub faces: usize,
    pub fem: Timing,
    pub model_uncached: Timing,
    pub model_cached: Timing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub topology: String,
    pub repetitions: usize,
    pub positions: usize,
    pub meshes: Vec<MeshTiming>,
}

fn midpoint(ranges: &MaterialRanges) -> Material {
    Material::from_array(ranges.as_arrays().map(|r| 0.5 * (r[0] + r[1])))
}

fn elapsed_ms(t: Instant) -> f64 {
    // Timer resolution can round very fast paths to zero.
    (t.elapsed().as_secs_f64() * 1e3).max(1e-6)
}

pub fn run_bench(model: &Predictor, cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.repetitions == 0 || cfg.positions == 0 || cfg.vertices.is_empty() {
        return Err(Error::invalid("bench needs repetitions, positions and mesh sizes >= 1"));
    }
    let material = midpoint(&model.ranges);
    let mut meshes = Vec::with_capacity(cfg.vertices.len());
    for (i, &nv) in cfg.vertices.iter().enumerate() {
        let seed = derive_seed(cfg.seed, &[i as u64]);
        let shape = gen_convex_shape(16, seed)?;
        let mesh = triangulate_with_vertices(&shape, nv, seed)?;
        let grid = rasterize(&shape);
        let mut rng = rng_from_seed(seed);
        let conds: Vec<ConditioningInput> = (0..cfg.positions)
            .map(|_| {
                let p = mesh.vertices[rng.random_range(0..mesh.n_vertices())];
                ConditioningInput::new(&material, p, &model.ranges)
            })
            .collect();

        let (mut fem, mut unc, mut cached) = (vec![], vec![], vec![]);
        let emb = model.encode(&grid);
        for _ in 0..cfg.repetitions {
            let t = Instant::now();
            let sys = assemble(&mesh, &material)?;
            std::hint::black_box(solve_modes(&sys, &material, cfg.n_modes)?);
            fem.push(elapsed_ms(t));

            let t = Instant::now();
            let e = model.encode(&grid);
            for c in &conds {
                std::hint::black_box(model.predict(&e, c)?.realize_coefficients());
            }
            unc.push(elapsed_ms(t));

            let t = Instant::now();
            for c in &conds {
                std::hint::black_box(model.predict(&emb, c)?.realize_coefficients());
            }
            cached.push(elapsed_ms(t));
        }
        meshes.push(MeshTiming {
            vertices: mesh.n_vertices(),
            faces: mesh.n_faces(),
            fem: Timing::from_samples(fem)?,
            model_uncached: Timing::from_samples(unc)?,
            model_cached: Timing::from_samples(cached)?,
        });
    }
    Ok(BenchReport {
        topology: model.topology().to_string(),
        repetitions: cfg.repetitions,
        positions: cfg.positions,
        meshes,
    })
}
