//! Dataset generation (shapes -> meshes -> modes -> renders -> mel targets) and the
//! on-disk container: `manifest.json` plus one append-only blob file per record type.

mod container;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use container::{BlobHeader, BlobReader, BlobRef, BlobWriter, DType, HEADER_LEN, MAGIC};

use crate::elastodynamics::{assemble, modal_gains, solve_modes, Material, MaterialRanges, ModalHeader, ModalModel};
use crate::error::{Error, Result};
use crate::geometry::{gen_convex_shape, rasterize, triangulate, ConvexShape, OccupancyGrid, Point, TriMesh};
use crate::modal_render::render_ir;
use crate::predictor::{ConditioningInput, TrainData, TrainSample};
use crate::rng::{derive_seed, rng_from_seed};
use crate::spectral::{MelSpectrum, SpectralConfig, SpectralContext};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILES: [&str; 6] = ["occupancy.bin", "mesh.bin", "modal.bin", "gains.bin", "conditioning.bin", "mel.bin"];

/// Independent uniform draws from each material interval.
pub fn sample_material(seed: u64, ranges: &MaterialRanges) -> Material {
    let mut rng = rng_from_seed(seed);
    let r = ranges.as_arrays();
    let mut v = [0.0; 5];
    for i in 0..5 {
        v[i] = rng.random_range(r[i][0]..=r[i][1]);
    }
    Material::from_array(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub n_shapes: usize,
    pub materials_per_shape: usize,
    pub positions_per_pair: usize,
    pub seed: u64,
    pub spectral: SpectralConfig,
    pub ranges: MaterialRanges,
    /// Inclusive range of boundary vertex counts.
    pub n_boundary: [usize; 2],
    pub target_triangles: usize,
    pub n_modes: usize,
    pub direction: [f64; 2],
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_shapes: 32,
            materials_per_shape: 8,
            positions_per_pair: 16,
            seed: 0,
            spectral: SpectralConfig::default(),
            ranges: MaterialRanges::default(),
            n_boundary: [10, 25],
            target_triangles: 650,
            n_modes: 32,
            direction: [0.0, 1.0],
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_shapes == 0 || self.materials_per_shape == 0 || self.positions_per_pair == 0 {
            return Err(Error::invalid("shape, material and position counts must all be >= 1"));
        }
        if self.n_boundary[0] < 3 || self.n_boundary[0] > self.n_boundary[1] {
            return Err(Error::invalid(format!("bad boundary vertex range {:?}", self.n_boundary)));
        }
        let d = self.direction;
        if !((d[0] * d[0] + d[1] * d[1]).sqrt() - 1.0).abs().lt(&1e-9) {
            return Err(Error::invalid("impulse direction must be a unit vector"));
        }
        self.spectral.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub shapes: usize,
    pub materials_per_shape: usize,
    pub positions_per_pair: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeRecord {
    pub id: usize,
    pub seed: u64,
    pub vertices: Vec<Point>,
    pub occupancy: BlobRef,
    pub mesh_vertices: BlobRef,
    pub mesh_faces: BlobRef,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub shape: usize,
    pub material_id: usize,
    pub modal: ModalHeader,
    pub omegas: BlobRef,
    pub sigmas: BlobRef,
    pub shapes: BlobRef,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub shape: usize,
    pub material_id: usize,
    pub position_id: usize,
    /// Index into [`DatasetManifest::pairs`].
    pub pair: usize,
    pub vertex: usize,
    pub position: Point,
    pub gains: BlobRef,
    pub conditioning: BlobRef,
    pub mel: BlobRef,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub shape: usize,
    pub material_id: Option<usize>,
    pub samples: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub counts: Counts,
    pub spectral: SpectralConfig,
    pub ranges: MaterialRanges,
    pub config: DatasetConfig,
    pub shapes: Vec<ShapeRecord>,
    pub pairs: Vec<PairRecord>,
    pub samples: Vec<SampleRecord>,
    pub skipped: Vec<SkipRecord>,
}

impl DatasetManifest {
    pub fn expected_samples(&self) -> usize {
        self.counts.shapes * self.counts.materials_per_shape * self.counts.positions_per_pair
    }

    pub fn skipped_samples(&self) -> usize {
        self.skipped.iter().map(|s| s.samples).sum()
    }
}

struct PairResult {
    material_id: usize,
    model: ModalModel,
    samples: Vec<(usize, usize, Point, Vec<f64>, ConditioningInput, MelSpectrum)>,
}

fn shape_seed(master: u64, s: usize) -> u64 {
    derive_seed(master, &[s as u64])
}

fn material_seed(master: u64, s: usize, r: usize) -> u64 {
    derive_seed(master, &[s as u64, r as u64])
}

fn position_seed(master: u64, s: usize, r: usize, p: usize) -> u64 {
    derive_seed(master, &[s as u64, r as u64, p as u64])
}

fn make_shape(cfg: &DatasetConfig, s: usize) -> Result<(u64, ConvexShape, TriMesh)> {
    let seed = shape_seed(cfg.seed, s);
    let mut rng = rng_from_seed(seed);
    let n = rng.random_range(cfg.n_boundary[0]..=cfg.n_boundary[1]);
    let shape = gen_convex_shape(n, seed)?;
    let mesh = triangulate(&shape, cfg.target_triangles, seed)?;
    Ok((seed, shape, mesh))
}

fn make_pair(cfg: &DatasetConfig, ctx: &SpectralContext, s: usize, r: usize, mesh: &Arc<TriMesh>) -> Result<PairResult> {
    let material = sample_material(material_seed(cfg.seed, s, r), &cfg.ranges);
    let sys = assemble(mesh, &material)?;
    let model = solve_modes(&sys, &material, cfg.n_modes)?;
    let mut samples = Vec::with_capacity(cfg.positions_per_pair);
    for p in 0..cfg.positions_per_pair {
        let mut rng = rng_from_seed(position_seed(cfg.seed, s, r, p));
        let vertex = rng.random_range(0..mesh.n_vertices());
        let position = mesh.vertices[vertex];
        let gains = modal_gains(&model, position, cfg.direction)?;
        let audio = render_ir(&model, &gains, &cfg.spectral)?;
        let mel = ctx.mel_spectrum(&audio)?;
        let cond = ConditioningInput::new(&material, position, &cfg.ranges);
        samples.push((p, vertex, position, gains, cond, mel));
    }
    Ok(PairResult { material_id: r, model, samples })
}

/// Generates every (shape, material, position) sample and writes the container to `dir`.
/// FEM failures skip the affected samples and are recorded in the manifest.
pub fn build(cfg: &DatasetConfig, dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    cfg.validate()?;
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let ctx = SpectralContext::new(cfg.spectral)?;
    let shapes: Vec<Result<(u64, ConvexShape, TriMesh)>> = (0..cfg.n_shapes).into_par_iter().map(|s| make_shape(cfg, s)).collect();

    let mut writer = BlobWriter::new();
    let mut manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        seed: cfg.seed,
        counts: Counts {
            shapes: cfg.n_shapes,
            materials_per_shape: cfg.materials_per_shape,
            positions_per_pair: cfg.positions_per_pair,
        },
        spectral: cfg.spectral,
        ranges: cfg.ranges,
        config: cfg.clone(),
        shapes: vec![],
        pairs: vec![],
        samples: vec![],
        skipped: vec![],
    };
    let per_shape = cfg.materials_per_shape * cfg.positions_per_pair;
    for (s, shape) in shapes.into_iter().enumerate() {
        let (seed, shape, mesh) = match shape {
            Ok(v) => v,
            Err(e) => {
                warn!("skipping shape {s}: {e}");
                manifest.skipped.push(SkipRecord { shape: s, material_id: None, samples: per_shape, reason: e.to_string() });
                continue;
            }
        };
        let grid = rasterize(&shape);
        let verts: Vec<f64> = mesh.vertices.iter().flat_map(|p| [p.x, p.y]).collect();
        let faces: Vec<u32> = mesh.faces.iter().flat_map(|f| f.map(|i| i as u32)).collect();
        manifest.shapes.push(ShapeRecord {
            id: s,
            seed,
            vertices: shape.vertices().to_vec(),
            occupancy: writer.push_u8("occupancy.bin", &[OccupancyGrid::BYTES as u32], &grid.to_bytes()),
            mesh_vertices: writer.push_f64("mesh.bin", &[mesh.n_vertices() as u32, 2], &verts),
            mesh_faces: writer.push_u32("mesh.bin", &[mesh.n_faces() as u32, 3], &faces),
        });
        let mesh = Arc::new(mesh);
        let pairs: Vec<Result<PairResult>> =
            (0..cfg.materials_per_shape).into_par_iter().map(|r| make_pair(cfg, &ctx, s, r, &mesh)).collect();
        for (r, pair) in pairs.into_iter().enumerate() {
            let pair = match pair {
                Ok(p) => p,
                Err(e) => {
                    warn!("skipping shape {s} material {r}: {e}");
                    manifest.skipped.push(SkipRecord {
                        shape: s,
                        material_id: Some(r),
                        samples: cfg.positions_per_pair,
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            let m = &pair.model;
            let n = m.n_modes() as u32;
            let pair_index = manifest.pairs.len();
            manifest.pairs.push(PairRecord {
                shape: s,
                material_id: pair.material_id,
                modal: m.header(),
                omegas: writer.push_f64("modal.bin", &[n], &m.omegas),
                sigmas: writer.push_f64("modal.bin", &[n], &m.sigmas),
                shapes: writer.push_f64("modal.bin", &[n, 2 * mesh.n_vertices() as u32], &m.shapes_flat()),
            });
            for (p, vertex, position, gains, cond, mel) in pair.samples {
                manifest.samples.push(SampleRecord {
                    shape: s,
                    material_id: r,
                    position_id: p,
                    pair: pair_index,
                    vertex,
                    position,
                    gains: writer.push_f64("gains.bin", &[gains.len() as u32], &gains),
                    conditioning: writer.push_f64("conditioning.bin", &[7], &cond.as_array()),
                    mel: writer.push_f64("mel.bin", &[mel.len() as u32], &mel.0),
                });
            }
        }
        info!("shape {s}: {} samples so far", manifest.samples.len());
    }
    writer.write_to(dir)?;
    for name in BLOB_FILES {
        let p = dir.join(name);
        if !p.exists() {
            std::fs::write(p, [])?;
        }
    }
    write_manifest(&manifest, dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

pub fn write_manifest(m: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(m)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let m: DatasetManifest = serde_json::from_slice(&std::fs::read(path)?)?;
    if m.version != MANIFEST_VERSION {
        return Err(Error::Format(format!("unsupported manifest version {}", m.version)));
    }
    Ok(m)
}

/// An opened dataset with its blobs in memory.
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
    blobs: BlobReader,
}

impl Dataset {
    /// Opens and structurally validates the container (every blob exists with its
    /// declared length, counts agree with the index).
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let manifest = read_manifest(dir.join(MANIFEST_FILE))?;
        let blobs = BlobReader::open(&dir, &BLOB_FILES)?;
        let ds = Dataset { dir, manifest, blobs };
        ds.validate_structure()?;
        Ok(ds)
    }

    fn validate_structure(&self) -> Result<()> {
        let m = &self.manifest;
        if m.samples.len() + m.skipped_samples() != m.expected_samples() {
            return Err(Error::Format(format!(
                "{} samples + {} skipped != {} expected",
                m.samples.len(),
                m.skipped_samples(),
                m.expected_samples()
            )));
        }
        for s in &m.shapes {
            for r in [&s.occupancy, &s.mesh_vertices, &s.mesh_faces] {
                self.blobs.check(r)?;
            }
        }
        for p in &m.pairs {
            for r in [&p.omegas, &p.sigmas, &p.shapes] {
                self.blobs.check(r)?;
            }
            if self.shape_index(p.shape).is_none() {
                return Err(Error::Format(format!("pair references unknown shape {}", p.shape)));
            }
        }
        for s in &m.samples {
            for r in [&s.gains, &s.conditioning, &s.mel] {
                self.blobs.check(r)?;
            }
            if s.pair >= m.pairs.len() || m.pairs[s.pair].shape != s.shape {
                return Err(Error::Format(format!("sample references bad pair {}", s.pair)));
            }
        }
        Ok(())
    }

    /// Position of shape `id` in the manifest's shape list.
    pub fn shape_index(&self, id: usize) -> Option<usize> {
        self.manifest.shapes.iter().position(|s| s.id == id)
    }

    pub fn shape(&self, id: usize) -> Result<ConvexShape> {
        let i = self.shape_index(id).ok_or_else(|| Error::invalid(format!("unknown shape {id}")))?;
        ConvexShape::new(self.manifest.shapes[i].vertices.clone())
    }

    pub fn occupancy(&self, id: usize) -> Result<OccupancyGrid> {
        let i = self.shape_index(id).ok_or_else(|| Error::invalid(format!("unknown shape {id}")))?;
        let (_, bytes) = self.blobs.u8s(&self.manifest.shapes[i].occupancy)?;
        OccupancyGrid::from_bytes(&bytes)
    }

    pub fn mesh(&self, id: usize) -> Result<TriMesh> {
        let i = self.shape_index(id).ok_or_else(|| Error::invalid(format!("unknown shape {id}")))?;
        let rec = &self.manifest.shapes[i];
        let (_, v) = self.blobs.f64s(&rec.mesh_vertices)?;
        let (_, f) = self.blobs.u32s(&rec.mesh_faces)?;
        Ok(TriMesh {
            vertices: v.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect(),
            faces: f.chunks_exact(3).map(|c| [c[0] as usize, c[1] as usize, c[2] as usize]).collect(),
        })
    }

    pub fn modal(&self, pair: usize) -> Result<ModalModel> {
        let p = &self.manifest.pairs[pair];
        let mesh = Arc::new(self.mesh(p.shape)?);
        let (_, omegas) = self.blobs.f64s(&p.omegas)?;
        let (_, sigmas) = self.blobs.f64s(&p.sigmas)?;
        let (_, shapes) = self.blobs.f64s(&p.shapes)?;
        ModalModel::from_parts(&p.modal, omegas, sigmas, &shapes, mesh)
    }

    pub fn gains(&self, sample: usize) -> Result<Vec<f64>> {
        Ok(self.blobs.f64s(&self.manifest.samples[sample].gains)?.1)
    }

    pub fn conditioning(&self, sample: usize) -> Result<ConditioningInput> {
        let (_, v) = self.blobs.f64s(&self.manifest.samples[sample].conditioning)?;
        let a: [f64; 7] = v.try_into().map_err(|_| Error::Format("conditioning blob must hold 7 values".into()))?;
        Ok(ConditioningInput::from_array(a))
    }

    pub fn mel(&self, sample: usize) -> Result<MelSpectrum> {
        Ok(MelSpectrum(self.blobs.f64s(&self.manifest.samples[sample].mel)?.1))
    }

    /// Semantic checks: stored positions lie inside their shapes and every modal record
    /// satisfies the mode invariants against freshly assembled system matrices.
    pub fn validate_deep(&self) -> Result<()> {
        for s in &self.manifest.samples {
            let shape = self.shape(s.shape)?;
            if !shape.contains(s.position) {
                return Err(Error::Format(format!("sample position {:?} outside shape {}", s.position, s.shape)));
            }
        }
        for i in 0..self.manifest.pairs.len() {
            let model = self.modal(i)?;
            let sys = assemble(&model.mesh, &model.material)?;
            model.check_invariants(&sys)?;
        }
        Ok(())
    }

    /// All samples with occupancy grids indexed by their position in the shape list.
    pub fn train_data(&self) -> Result<TrainData> {
        let grids = self.manifest.shapes.iter().map(|s| self.occupancy(s.id)).collect::<Result<Vec<_>>>()?;
        let samples = (0..self.manifest.samples.len())
            .map(|i| {
                let rec = &self.manifest.samples[i];
                Ok(TrainSample {
                    shape: self.shape_index(rec.shape).unwrap(),
                    cond: self.conditioning(i)?,
                    target: self.mel(i)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainData { grids, samples })
    }

    /// Re-renders a sample from its stored modal data and gains.
    pub fn replay_mel(&self, sample: usize) -> Result<MelSpectrum> {
        let rec = &self.manifest.samples[sample];
        let model = self.modal(rec.pair)?;
        let audio = render_ir(&model, &self.gains(sample)?, &self.manifest.spectral)?;
        SpectralContext::new(self.manifest.spectral)?.mel_spectrum(&audio)
    }
}
