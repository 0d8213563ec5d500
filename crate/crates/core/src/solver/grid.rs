use crate::measures::EmpiricalMeasure;
use crate::models::ModelSpec;

use super::SolverError;

/// Uniform spatial grid. Without overrides the grid is centred at the mean of μ₀ with the
/// default half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub dx: f64,
    pub half_width: Option<f64>,
    pub center: Option<f64>,
}

impl GridSpec {
    pub fn new(dx: f64) -> Self {
        Self { dx, half_width: None, center: None }
    }

    pub fn fixed(center: f64, half_width: f64, dx: f64) -> Self {
        Self { dx, half_width: Some(half_width), center: Some(center) }
    }

    /// Spec reproducing the nodes of an existing odd-length grid.
    pub fn matching(x: &[f64]) -> Self {
        let half = (x.len() - 1) / 2;
        let dx = x[1] - x[0];
        Self::fixed(x[half], (half as f64 - 0.5) * dx, dx)
    }

    /// Node locations for a solve of length `span` started from `mu0`.
    pub fn nodes(&self, model: &ModelSpec<f64>, mu0: &EmpiricalMeasure<f64>, span: f64) -> Result<Vec<f64>, SolverError> {
        if !(self.dx > 0.0 && self.dx.is_finite()) {
            return Err(SolverError::Invalid(format!("grid step must be positive, got {}", self.dx)));
        }
        let c = self.center.unwrap_or_else(|| mu0.mean());
        let r = match self.half_width {
            Some(r) => r,
            None => default_half_width(model, mu0, span),
        };
        if !(r > 0.0 && r.is_finite()) {
            return Err(SolverError::Invalid(format!("grid half-width must be positive, got {r}")));
        }
        let half = (r / self.dx).ceil() as usize;
        if half < 2 {
            return Err(SolverError::Invalid("grid needs at least five nodes".into()));
        }
        let nodes: Vec<f64> = (0..=2 * half).map(|i| c + (i as f64 - half as f64) * self.dx).collect();
        let (lo, hi) = (nodes[1], nodes[nodes.len() - 2]);
        if mu0.points().iter().any(|&x| x < lo || x > hi) {
            return Err(SolverError::Invalid("initial measure is not supported in the grid interior".into()));
        }
        Ok(nodes)
    }
}

/// 8 standard deviations of μ₀ diffused over `span`, plus the drift allowance |A₀|·span·radius.
pub fn default_half_width(model: &ModelSpec<f64>, mu0: &EmpiricalMeasure<f64>, span: f64) -> f64 {
    let m = mu0.mean();
    let radius = mu0.points().iter().fold(0.0f64, |r, &x| r.max((x - m).abs()));
    let a0 = model.a0[(0, 0)].abs();
    8.0 * (mu0.variance() + span).sqrt() + a0 * span * radius + radius
}
