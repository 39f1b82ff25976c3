//! Shared fixtures for the criterion benches.

use modalbank::elastodynamics::{Material, MaterialRanges};
use modalbank::geometry::{gen_convex_shape, rasterize, triangulate_with_vertices};
use modalbank::predictor::ConditioningInput;
use modalbank::{OccupancyGrid, Result, TriMesh};

/// A random convex plate meshed with exactly `n_vertices` vertices, and its occupancy grid.
pub fn plate(n_vertices: usize, seed: u64) -> Result<(TriMesh, OccupancyGrid)> {
    let shape = gen_convex_shape(16, seed)?;
    Ok((triangulate_with_vertices(&shape, n_vertices, seed)?, rasterize(&shape)))
}

/// Centre of every sampling range.
pub fn midpoint_material(ranges: &MaterialRanges) -> Material {
    Material::from_array(ranges.as_arrays().map(|[lo, hi]| 0.5 * (lo + hi)))
}

/// Conditioning inputs at the first `n` mesh vertices.
pub fn conditions(mesh: &TriMesh, material: &Material, ranges: &MaterialRanges, n: usize) -> Vec<ConditioningInput> {
    mesh.vertices.iter().take(n).map(|&p| ConditioningInput::new(material, p, ranges)).collect()
}
