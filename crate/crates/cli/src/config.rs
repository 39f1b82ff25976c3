//! JSON run configuration shared by every subcommand. Missing keys take defaults; the
//! top-level `seed` (or `--seed`) seeds every stage.

use std::path::Path;

use modalbank::bench::BenchConfig;
use modalbank::dataset::DatasetConfig;
use modalbank::elastodynamics::MaterialRanges;
use modalbank::optim::{AdamConfig, FitBudget};
use modalbank::predictor::{Architecture, TrainConfig};
use modalbank::{Error, Result, SpectralConfig, Topology};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub shapes: usize,
    pub materials_per_shape: usize,
    pub positions_per_pair: usize,
    pub n_boundary: [usize; 2],
    pub target_triangles: usize,
    pub n_modes: usize,
    pub direction: [f64; 2],
}

impl Default for DatasetSection {
    fn default() -> Self {
        let d = DatasetConfig::default();
        DatasetSection {
            shapes: d.n_shapes,
            materials_per_shape: d.materials_per_shape,
            positions_per_pair: d.positions_per_pair,
            n_boundary: d.n_boundary,
            target_triangles: d.target_triangles,
            n_modes: d.n_modes,
            direction: d.direction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub topology: Topology,
    pub max_steps: usize,
    pub patience: usize,
    pub adam: AdamConfig,
}

impl Default for FitSection {
    fn default() -> Self {
        let b = FitBudget::default();
        FitSection { topology: Topology { l: 32, m: 4 }, max_steps: b.max_steps, patience: b.patience, adam: b.adam }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub architecture: Architecture,
    pub max_steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub patience: usize,
    pub eval_every: usize,
    pub val_fraction: f64,
    pub max_seconds: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            architecture: Architecture::default(),
            max_steps: t.max_steps,
            batch_size: t.batch_size,
            adam: t.adam,
            patience: t.patience,
            eval_every: t.eval_every,
            val_fraction: t.val_fraction,
            max_seconds: t.max_seconds,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub vertices: Vec<usize>,
    pub repetitions: usize,
    pub positions: usize,
    pub n_modes: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        let b = BenchConfig::default();
        BenchSection { vertices: b.vertices, repetitions: b.repetitions, positions: b.positions, n_modes: b.n_modes }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub addr: String,
    /// Concurrent FEM solves / fits.
    pub workers: usize,
    pub n_modes: usize,
    pub direction: [f64; 2],
    /// Step budget for `source: "fit"` requests.
    pub fit_steps: usize,
    pub fit_topology: Topology,
}

impl Default for ServeSection {
    fn default() -> Self {
        ServeSection {
            addr: "127.0.0.1:8080".into(),
            workers: 2,
            n_modes: DatasetConfig::default().n_modes,
            direction: [0.0, 1.0],
            fit_steps: 300,
            fit_topology: Topology { l: 32, m: 4 },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub spectral: SpectralConfig,
    pub ranges: MaterialRanges,
    pub dataset: DatasetSection,
    pub fit: FitSection,
    pub train: TrainSection,
    pub bench: BenchSection,
    pub serve: ServeSection,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Config::default()),
            Some(p) => {
                let bytes = std::fs::read(p)?;
                serde_json::from_slice(&bytes).map_err(|e| Error::invalid(format!("config {}: {e}", p.display())))
            }
        }
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        let d = &self.dataset;
        DatasetConfig {
            n_shapes: d.shapes,
            materials_per_shape: d.materials_per_shape,
            positions_per_pair: d.positions_per_pair,
            seed: self.seed,
            spectral: self.spectral,
            ranges: self.ranges,
            n_boundary: d.n_boundary,
            target_triangles: d.target_triangles,
            n_modes: d.n_modes,
            direction: d.direction,
        }
    }

    pub fn fit_budget(&self) -> FitBudget {
        FitBudget { max_steps: self.fit.max_steps, patience: self.fit.patience, adam: self.fit.adam, seed: self.seed }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            max_steps: t.max_steps,
            batch_size: t.batch_size,
            adam: t.adam,
            patience: t.patience,
            eval_every: t.eval_every,
            val_fraction: t.val_fraction,
            seed: self.seed,
            max_seconds: t.max_seconds,
        }
    }

    pub fn bench_config(&self) -> BenchConfig {
        let b = &self.bench;
        BenchConfig {
            vertices: b.vertices.clone(),
            repetitions: b.repetitions,
            positions: b.positions,
            n_modes: b.n_modes,
            seed: self.seed,
        }
    }
}
