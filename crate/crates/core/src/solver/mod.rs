//! One-dimensional MFG system solver (β = 0) with a linear-quadratic oracle, particle
//! simulations and empirical checks of the a-priori bounds.

mod estimators;
mod grid;
mod mfg;
mod particles;
mod residual;
mod riccati;

pub use estimators::{
    estimate_xmu_lipschitz, hessian_bound_check, paired_xmu_field, quantize_density, uniqueness_probe,
    BumpKind, BumpRow, HessianCheck, LipschitzEstimate, LipschitzMode, ProbeOutcome, SolvedField,
    UniquenessProbe, BOUNDARY_WINDOW, PROBE_TOL,
};
pub use grid::{default_half_width, GridSpec};
pub use mfg::{solve_mfg, MfgSolution, PicardInit, SolveOptions};
pub use particles::{
    simulate_fbsde, simulate_linearized_flow, FbsdeResult, FlowConfig, FlowTrace, NoiseMode,
};
pub use residual::{vector_master_residual, Perturbed, VectorField};
pub use riccati::{riccati_oracle, MeanPath, RiccatiAt, RiccatiSolution, DEFAULT_RICCATI_STEPS};

use crate::measures::MeasureError;
use crate::models::ModelError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("Picard iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("mass {mass:e} reached the grid boundary at t = {t}")]
    GridEscape { t: f64, mass: f64 },
    #[error("Riccati solution exceeded the blow-up threshold at t = {t}")]
    BlowUp { t: f64 },
    #[error("query ({t}, {x}) outside the grid")]
    OutOfGrid { t: f64, x: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Mass allowed in the outer boundary layer of the grid.
pub const ESCAPE_MASS: f64 = 1e-6;

/// Linear interpolation on a uniform grid starting at `x0`.
pub(crate) fn lerp_uniform(values: &[f64], x0: f64, dx: f64, x: f64) -> Option<f64> {
    let n = values.len();
    if n == 1 {
        return ((x - x0).abs() <= 1e-12).then_some(values[0]);
    }
    let s = (x - x0) / dx;
    let last = (n - 1) as f64;
    if !(s >= -1e-9 && s <= last + 1e-9) {
        return None;
    }
    let s = s.clamp(0.0, last);
    let i = (s.floor() as usize).min(n - 2);
    let f = s - i as f64;
    Some(values[i] * (1.0 - f) + values[i + 1] * f)
}
