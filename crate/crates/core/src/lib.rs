//! Modal sound synthesis with learned IIR resonator banks.
//!
//! The crate is organised as a pipeline:
//!
//! * [`geometry`] generates random convex shapes, Delaunay meshes and occupancy grids.
//! * [`elastodynamics`] assembles plane-stress FEM matrices and solves for the modes.
//! * [`modal_render`] turns modes into ground-truth impulse responses.
//! * [`spectral`] computes DFT magnitudes, mel projections and the training loss.
//! * [`filterbank`] is the differentiable parallel/cascade biquad bank.
//! * [`optim`] holds analytic gradients, Adam and direct per-target fitting.
//! * [`predictor`] is the shape encoder + MLP that predicts bank parameters.
//! * [`dataset`] generates and persists training data.
//! * [`eval`] and [`bench`] provide the evaluation metrics and timing harness.

pub mod audio;
pub mod bench;
pub mod dataset;
pub mod elastodynamics;
pub mod error;
pub mod eval;
pub mod filterbank;
pub mod geometry;
pub mod modal_render;
pub mod optim;
pub mod predictor;
pub mod rng;
pub mod sparse;
pub mod spectral;

pub use audio::AudioBuffer;
pub use elastodynamics::{Material, ModalModel, SystemMatrices};
pub use error::{Error, Result};
pub use filterbank::{FilterBankParams, SosBank, Topology};
pub use geometry::{ConvexShape, OccupancyGrid, Point, TriMesh};
pub use spectral::{MelSpectrum, SpectralConfig, SpectralContext};
