use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use super::eigen::{dense_smallest, krylov_smallest, Eigenpairs};
use super::{EigenStrategy, Material, SolveOptions, SystemMatrices, DENSE_DOF_LIMIT};
use crate::error::{Error, Result};
use crate::geometry::{Point, TriMesh};

/// Rigid modes are eigenvalues below this fraction of the fourth-smallest eigenvalue.
pub const RIGID_THRESHOLD: f64 = 1e-6;

/// Elastic modes of a (mesh, material) pair with Rayleigh decay rates.
#[derive(Clone, Debug)]
pub struct ModalModel {
    /// Angular eigenfrequencies sqrt(lambda_i) in rad/s, ascending.
    pub omegas: Vec<f64>,
    /// Decay rates (alpha + beta lambda_i) / 2 in 1/s.
    pub sigmas: Vec<f64>,
    /// Mass-normalized mode shapes, each of length 2|V|.
    pub shapes: Vec<Vec<f64>>,
    /// The rigid-body eigenvalues discarded by the solver; empty for models loaded from disk.
    pub rigid_eigenvalues: Vec<f64>,
    pub mesh: Arc<TriMesh>,
    pub material: Material,
}

/// JSON header that accompanies the binary omegas/sigmas/shapes arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalHeader {
    pub n_modes: usize,
    pub n_vertices: usize,
    pub material: Material,
    pub dof_order: String,
}

pub const DOF_ORDER: &str = "interleaved_xy";

impl ModalModel {
    pub fn n_modes(&self) -> usize {
        self.omegas.len()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.omegas.iter().map(|w| w * w).collect()
    }

    pub fn header(&self) -> ModalHeader {
        ModalHeader {
            n_modes: self.n_modes(),
            n_vertices: self.mesh.n_vertices(),
            material: self.material,
            dof_order: DOF_ORDER.to_string(),
        }
    }

    /// Mode shapes flattened mode-major (`n_modes x 2|V|`).
    pub fn shapes_flat(&self) -> Vec<f64> {
        self.shapes.iter().flatten().copied().collect()
    }

    pub fn from_parts(
        header: &ModalHeader,
        omegas: Vec<f64>,
        sigmas: Vec<f64>,
        shapes_flat: &[f64],
        mesh: Arc<TriMesh>,
    ) -> Result<Self> {
        let n = header.n_modes;
        let dof = 2 * header.n_vertices;
        if header.dof_order != DOF_ORDER {
            return Err(Error::Format(format!("unsupported dof order {:?}", header.dof_order)));
        }
        if omegas.len() != n || sigmas.len() != n || shapes_flat.len() != n * dof || mesh.n_vertices() != header.n_vertices {
            return Err(Error::Format("modal arrays disagree with header".into()));
        }
        Ok(ModalModel {
            omegas,
            sigmas,
            shapes: shapes_flat.chunks(dof.max(1)).map(<[f64]>::to_vec).collect(),
            rigid_eigenvalues: Vec::new(),
            mesh,
            material: header.material,
        })
    }

    /// Checks M-orthonormality, K-diagonality, damping consistency and underdamping.
    pub fn check_invariants(&self, sys: &SystemMatrices) -> Result<()> {
        let n = self.n_modes();
        let mphi: Vec<Vec<f64>> = self.shapes.iter().map(|s| sys.mass.apply(s)).collect();
        let kphi: Vec<Vec<f64>> = self.shapes.iter().map(|s| sys.stiffness.apply(s)).collect();
        let lam = self.eigenvalues();
        for i in 0..n {
            if !(self.sigmas[i] < self.omegas[i]) {
                return Err(Error::IllConditioned(format!("mode {i} is not underdamped")));
            }
            let expect_sigma = self.material.decay_rate(lam[i]);
            if (self.sigmas[i] - expect_sigma).abs() > 1e-12 * expect_sigma.abs().max(1.0) {
                return Err(Error::IllConditioned(format!("mode {i} decay rate disagrees with Rayleigh damping")));
            }
            for j in 0..n {
                let m_ij: f64 = self.shapes[i].iter().zip(&mphi[j]).map(|(a, b)| a * b).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                if (m_ij - target).abs() > 1e-6 {
                    return Err(Error::IllConditioned(format!("Phi^T M Phi[{i},{j}] = {m_ij}")));
                }
                let k_ij: f64 = self.shapes[i].iter().zip(&kphi[j]).map(|(a, b)| a * b).sum();
                let k_target = if i == j { lam[i] } else { 0.0 };
                if (k_ij - k_target).abs() > 1e-6 * lam[i].max(lam[j]) {
                    return Err(Error::IllConditioned(format!("Phi^T K Phi[{i},{j}] = {k_ij}")));
                }
            }
        }
        Ok(())
    }
}

pub fn solve_modes(sys: &SystemMatrices, material: &Material, n_modes: usize) -> Result<ModalModel> {
    solve_modes_with(sys, material, &SolveOptions { n_modes, ..Default::default() })
}

/// The `n_modes` smallest elastic modes; the three rigid-body modes of the free body
/// are detected and discarded.
pub fn solve_modes_with(sys: &SystemMatrices, material: &Material, opts: &SolveOptions) -> Result<ModalModel> {
    material.validate()?;
    let n_dof = sys.n_dof();
    let n_modes = opts.n_modes;
    if n_modes < 1 || n_modes + 3 > n_dof {
        return Err(Error::invalid(format!(
            "n_modes = {n_modes} is incompatible with {n_dof} degrees of freedom"
        )));
    }
    let want = n_modes + 3;
    let dense = match opts.strategy {
        EigenStrategy::Dense => true,
        EigenStrategy::Krylov => false,
        EigenStrategy::Auto => n_dof <= DENSE_DOF_LIMIT,
    };
    let pairs = if dense {
        dense_smallest(&sys.stiffness, &sys.mass, want)?
    } else {
        krylov_smallest(&sys.stiffness, &sys.mass, want, opts.tolerance)?
    };
    build_model(sys, material, pairs, n_modes)
}

fn build_model(sys: &SystemMatrices, material: &Material, pairs: Eigenpairs, n_modes: usize) -> Result<ModalModel> {
    let Eigenpairs { values, vectors } = pairs;
    if values.len() < 4 {
        return Err(Error::IllConditioned("fewer than four eigenvalues available".into()));
    }
    let threshold = RIGID_THRESHOLD * values[3];
    let rigid = values.iter().take_while(|&&v| v < threshold).count();
    if rigid != 3 {
        return Err(Error::IllConditioned(format!(
            "expected 3 rigid-body modes, found {rigid} (lambda_4 = {:e})",
            values[3]
        )));
    }
    let mut model = ModalModel {
        omegas: Vec::with_capacity(n_modes),
        sigmas: Vec::with_capacity(n_modes),
        shapes: Vec::with_capacity(n_modes),
        rigid_eigenvalues: values[..3].to_vec(),
        mesh: Arc::clone(&sys.mesh),
        material: *material,
    };
    for (lambda, mut phi) in values.into_iter().zip(vectors).skip(3).take(n_modes) {
        let omega = lambda.sqrt();
        let sigma = material.decay_rate(lambda);
        if !(sigma < omega) {
            warn!("discarding overdamped mode: omega = {omega:.3} rad/s, sigma = {sigma:.3} 1/s");
            continue;
        }
        let mphi = sys.mass.apply(&phi);
        let mnorm: f64 = phi.iter().zip(&mphi).map(|(a, b)| a * b).sum::<f64>().sqrt();
        phi.iter_mut().for_each(|v| *v /= mnorm);
        model.omegas.push(omega);
        model.sigmas.push(sigma);
        model.shapes.push(phi);
    }
    Ok(model)
}

/// Per-mode gains of an impulse at `position` along `direction`: the mode shape
/// interpolated barycentrically over the containing triangle, dotted with the direction.
pub fn modal_gains(model: &ModalModel, position: Point, direction: [f64; 2]) -> Result<Vec<f64>> {
    let (f, w) = model
        .mesh
        .locate(position)
        .ok_or(Error::OutOfDomain { x: position.x, y: position.y })?;
    let face = model.mesh.faces[f];
    Ok(model
        .shapes
        .iter()
        .map(|phi| {
            (0..3)
                .map(|k| w[k] * (phi[2 * face[k]] * direction[0] + phi[2 * face[k] + 1] * direction[1]))
                .sum()
        })
        .collect())
}

/// Gains at a mesh vertex (exact DOF values, no interpolation).
pub fn vertex_gains(model: &ModalModel, vertex: usize, direction: [f64; 2]) -> Vec<f64> {
    model
        .shapes
        .iter()
        .map(|phi| phi[2 * vertex] * direction[0] + phi[2 * vertex + 1] * direction[1])
        .collect()
}
