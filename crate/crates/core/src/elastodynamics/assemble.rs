use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::Material;
use crate::error::{Error, Result};
use crate::geometry::TriMesh;
use crate::sparse::CsrMatrix;

/// Triangles smaller than this are rejected as degenerate.
pub const MIN_TRIANGLE_AREA: f64 = 1e-14;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    #[default]
    PlaneStress,
    PlaneStrain,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassKind {
    #[default]
    Consistent,
    Lumped,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssemblyOptions {
    pub formulation: Formulation,
    pub mass: MassKind,
    pub thickness: f64,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions { formulation: Formulation::PlaneStress, mass: MassKind::Consistent, thickness: 1.0 }
    }
}

/// Global mass (kg) and stiffness (N/m) matrices, 2|V| x 2|V|.
#[derive(Clone, Debug)]
pub struct SystemMatrices {
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
    pub n_vertices: usize,
    pub mesh: Arc<TriMesh>,
}

impl SystemMatrices {
    pub fn n_dof(&self) -> usize {
        2 * self.n_vertices
    }

    /// Sum of the x-x block of the mass matrix: the body's total mass.
    pub fn total_mass(&self) -> f64 {
        let mut acc = 0.0;
        for i in (0..self.n_dof()).step_by(2) {
            acc += self.mass.row(i).filter(|(j, _)| j % 2 == 0).map(|(_, v)| v).sum::<f64>();
        }
        acc
    }
}

pub fn assemble(mesh: &TriMesh, material: &Material) -> Result<SystemMatrices> {
    assemble_with(mesh, material, &AssemblyOptions::default())
}

fn elasticity(material: &Material, formulation: Formulation) -> [[f64; 3]; 3] {
    let (e, nu) = (material.youngs, material.poisson);
    match formulation {
        Formulation::PlaneStress => {
            let c = e / (1.0 - nu * nu);
            [[c, c * nu, 0.0], [c * nu, c, 0.0], [0.0, 0.0, c * (1.0 - nu) / 2.0]]
        }
        Formulation::PlaneStrain => {
            let c = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
            [
                [c * (1.0 - nu), c * nu, 0.0],
                [c * nu, c * (1.0 - nu), 0.0],
                [0.0, 0.0, c * (1.0 - 2.0 * nu) / 2.0],
            ]
        }
    }
}

pub fn assemble_with(mesh: &TriMesh, material: &Material, opts: &AssemblyOptions) -> Result<SystemMatrices> {
    material.validate()?;
    let n_dof = 2 * mesh.n_vertices();
    let d = elasticity(material, opts.formulation);
    let t = opts.thickness;
    let mut k_trip = Vec::with_capacity(36 * mesh.n_faces());
    let mut m_trip = Vec::with_capacity(36 * mesh.n_faces());

    for (f, face) in mesh.faces.iter().enumerate() {
        let [p1, p2, p3] = mesh.triangle(f);
        let area = mesh.signed_area(f);
        if !(area >= MIN_TRIANGLE_AREA) {
            return Err(Error::DegenerateMesh { triangle: f, area });
        }
        let b = [p2.y - p3.y, p3.y - p1.y, p1.y - p2.y];
        let c = [p3.x - p2.x, p1.x - p3.x, p2.x - p1.x];
        let inv2a = 1.0 / (2.0 * area);
        // Strain-displacement matrix, 3 x 6.
        let mut bm = [[0.0; 6]; 3];
        for i in 0..3 {
            bm[0][2 * i] = b[i] * inv2a;
            bm[1][2 * i + 1] = c[i] * inv2a;
            bm[2][2 * i] = c[i] * inv2a;
            bm[2][2 * i + 1] = b[i] * inv2a;
        }
        let mut db = [[0.0; 6]; 3];
        for r in 0..3 {
            for col in 0..6 {
                db[r][col] = (0..3).map(|k| d[r][k] * bm[k][col]).sum();
            }
        }
        let dofs = [2 * face[0], 2 * face[0] + 1, 2 * face[1], 2 * face[1] + 1, 2 * face[2], 2 * face[2] + 1];
        let scale = t * area;
        for r in 0..6 {
            for col in 0..6 {
                let kv: f64 = (0..3).map(|k| bm[k][r] * db[k][col]).sum::<f64>() * scale;
                k_trip.push((dofs[r], dofs[col], kv));
            }
        }
        let m0 = material.rho * t * area;
        match opts.mass {
            MassKind::Consistent => {
                for i in 0..3 {
                    for j in 0..3 {
                        let w = if i == j { m0 / 6.0 } else { m0 / 12.0 };
                        m_trip.push((dofs[2 * i], dofs[2 * j], w));
                        m_trip.push((dofs[2 * i + 1], dofs[2 * j + 1], w));
                    }
                }
            }
            MassKind::Lumped => {
                for i in 0..6 {
                    m_trip.push((dofs[i], dofs[i], m0 / 3.0));
                }
            }
        }
    }
    let mut stiffness = CsrMatrix::from_triplets(n_dof, k_trip);
    let mass = CsrMatrix::from_triplets(n_dof, m_trip);
    symmetrize(&mut stiffness);
    Ok(SystemMatrices { mass, stiffness, n_vertices: mesh.n_vertices(), mesh: Arc::new(mesh.clone()) })
}

/// Averages K with its transpose to remove floating-point asymmetry from B^T D B.
fn symmetrize(k: &mut CsrMatrix) {
    let n = k.dim();
    let mut trip = Vec::with_capacity(k.nnz());
    for i in 0..n {
        for (j, v) in k.row(i) {
            trip.push((i, j, 0.5 * (v + k.get(j, i))));
        }
    }
    *k = CsrMatrix::from_triplets(n, trip);
}
