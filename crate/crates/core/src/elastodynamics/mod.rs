//! Plane-stress finite elements and modal analysis.
//!
//! Linear constant-strain triangles with unit thickness; consistent mass by default.
//! Degrees of freedom are interleaved per vertex: `[u_x(v0), u_y(v0), u_x(v1), ...]`.

mod assemble;
mod eigen;
mod modal;

pub use assemble::{assemble, assemble_with, AssemblyOptions, Formulation, MassKind, SystemMatrices};
pub use eigen::{dense_generalized_eigen, EigenStrategy, SolveOptions, DENSE_DOF_LIMIT};
pub use modal::{modal_gains, solve_modes, solve_modes_with, vertex_gains, ModalHeader, ModalModel, DOF_ORDER, RIGID_THRESHOLD};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Homogeneous isotropic material with Rayleigh damping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material {
    /// Mass density (kg/m^3).
    pub rho: f64,
    /// Young's modulus (Pa).
    pub youngs: f64,
    /// Poisson's ratio.
    pub poisson: f64,
    /// Rayleigh mass-proportional damping (1/s).
    pub alpha: f64,
    /// Rayleigh stiffness-proportional damping (s).
    pub beta: f64,
}

impl Material {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rho > 0.0
            && self.youngs > 0.0
            && self.poisson > 0.0
            && self.poisson < 0.5
            && self.alpha >= 0.0
            && self.beta >= 0.0
            && [self.rho, self.youngs, self.poisson, self.alpha, self.beta].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("material out of physical range: {self:?}")))
        }
    }

    /// Rayleigh decay rate for eigenvalue `lambda` (= omega^2).
    pub fn decay_rate(&self, lambda: f64) -> f64 {
        0.5 * (self.alpha + self.beta * lambda)
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.rho, self.youngs, self.poisson, self.alpha, self.beta]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Material { rho: a[0], youngs: a[1], poisson: a[2], alpha: a[3], beta: a[4] }
    }
}

/// Closed intervals from which materials are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaterialRanges {
    pub rho: [f64; 2],
    pub youngs: [f64; 2],
    pub poisson: [f64; 2],
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
}

impl Default for MaterialRanges {
    fn default() -> Self {
        MaterialRanges {
            rho: [500.0, 15000.0],
            youngs: [8e9, 5e10],
            poisson: [0.1, 0.4],
            alpha: [1.0, 10.0],
            beta: [3e-7, 2e-6],
        }
    }
}

impl MaterialRanges {
    pub fn as_arrays(&self) -> [[f64; 2]; 5] {
        [self.rho, self.youngs, self.poisson, self.alpha, self.beta]
    }

    pub fn contains(&self, m: &Material) -> bool {
        self.as_arrays().iter().zip(m.as_array()).all(|(r, v)| v >= r[0] && v <= r[1])
    }

    /// Affine map of each field into [0, 1], clamped.
    pub fn normalize(&self, m: &Material) -> [f64; 5] {
        let mut out = [0.0; 5];
        for (k, (r, v)) in self.as_arrays().iter().zip(m.as_array()).enumerate() {
            out[k] = ((v - r[0]) / (r[1] - r[0])).clamp(0.0, 1.0);
        }
        out
    }
}
