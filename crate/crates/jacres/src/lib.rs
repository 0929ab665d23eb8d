//! Direct and inverse resonance problems for periodic Jacobi operators on ℤ
//! with finitely supported perturbations.
//!
//! The direct side computes the band structure of the periodic background,
//! the Jost solutions of the perturbed operator, the regularized Wronskians
//! ŵ/ŝ, the full catalog of states (bound, antibound, resonance, virtual),
//! the scattering matrix, and norming constants. The inverse side solves the
//! finite Gel'fand–Levitan–Marchenko system to recover the perturbation from
//! scattering data, and rebuilds scattering data from a state catalog plus
//! auxiliary polynomials.

pub mod algebra;
pub mod background;
pub mod error;
pub mod glm;
pub mod io;
pub mod perturbed;
pub mod plot;
pub mod reconstruct;
pub mod scattering;
pub mod states;

pub use error::{JacError, Result};

use serde::{Deserialize, Serialize};

/// Numerical tolerances shared across the pipeline.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Root clustering radius (scaled by max(1, |root|)).
    pub cluster_radius: f64,
    /// Target for quadrature stabilization under node doubling.
    pub quadrature_tol: f64,
    /// |ŵ| threshold (scaled) for lifting a projected root to a sheet.
    pub lift_tol: f64,
    /// Threshold on |Im| for treating values as real.
    pub real_tol: f64,
    /// Relative trim threshold for trailing polynomial coefficients.
    pub trim_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            cluster_radius: 1e-7,
            quadrature_tol: 1e-10,
            lift_tol: 1e-6,
            real_tol: 1e-9,
            trim_rel: 1e-12,
        }
    }
}

impl Tolerances {
    /// Validates positivity of every knob.
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.cluster_radius,
            self.quadrature_tol,
            self.lift_tol,
            self.real_tol,
            self.trim_rel,
        ];
        if all.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
            return Err(JacError::Schema("tolerances must be positive".into()));
        }
        Ok(())
    }
}
