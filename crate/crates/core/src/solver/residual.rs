use crate::measures::EmpiricalMeasure;
use crate::models::{eval_h_derivs, ModelSpec};

use super::mfg::MfgSolution;
use super::SolverError;

/// A candidate solution U⃗(t, ·, ·) of the vectorial master equation at a fixed time.
pub trait VectorField {
    fn value(&self, x: f64, mu: &EmpiricalMeasure<f64>) -> f64;
    fn dx(&self, x: f64, mu: &EmpiricalMeasure<f64>) -> f64;
    fn dxx(&self, x: f64, mu: &EmpiricalMeasure<f64>) -> f64;
    fn dt(&self, x: f64, mu: &EmpiricalMeasure<f64>) -> f64;
    /// ∂_μU⃗(x, μ, x̃).
    fn dmu(&self, x: f64, mu: &EmpiricalMeasure<f64>, x_tilde: f64) -> f64;
    /// ∂_x̃∂_μU⃗(x, μ, x̃).
    fn dxt_dmu(&self, x: f64, mu: &EmpiricalMeasure<f64>, x_tilde: f64) -> f64;
}

/// U⃗ + ∂ₓ(εx²) = U⃗ + 2εx.
pub struct Perturbed<'a, F: VectorField + ?Sized> {
    pub base: &'a F,
    pub eps: f64,
}

impl<F: VectorField + ?Sized> VectorField for Perturbed<'_, F> {
    fn value(&self, x: f64, mu: &EmpiricalMeasure<f64>) -> f64 {
        self.base.value(x, mu) + 2.0 * self.eps * x
    }
    fn dx(&self, x: f64, mu: &EmpiricalMeasure<f64>) -> f64 {
        self.base.dx(x, mu) + 2.0 * self.eps
    }
    fn dxx(&self, x: f64, mu: &EmpiricalMeasure<f64>) -> f64 {
        self.base.dxx(x, mu)
    }
    fn dt(&self, x: f64, mu: &EmpiricalMeasure<f64>) -> f64 {
        self.base.dt(x, mu)
    }
    fn dmu(&self, x: f64, mu: &EmpiricalMeasure<f64>, x_tilde: f64) -> f64 {
        self.base.dmu(x, mu, x_tilde)
    }
    fn dxt_dmu(&self, x: f64, mu: &EmpiricalMeasure<f64>, x_tilde: f64) -> f64 {
        self.base.dxt_dmu(x, mu, x_tilde)
    }
}

/// −∂ₜU⃗ − ½∂ₓₓU⃗ + ∂ₓH + ∂ₚH·∂ₓU⃗ − N⃗U⃗ at (x, μ), with
/// N⃗U⃗ = Ẽ[½∂_x̃∂_μU⃗ − ∂_μU⃗·∂ₚH(x̃, μ, U⃗(x̃))].
pub fn vector_master_residual<F: VectorField + ?Sized>(
    model: &ModelSpec<f64>,
    field: &F,
    x: f64,
    mu: &EmpiricalMeasure<f64>,
) -> Result<f64, SolverError> {
    if model.beta != 0.0 {
        return Err(SolverError::Invalid("master residual is implemented for beta = 0".into()));
    }
    let u = field.value(x, mu);
    let d = eval_h_derivs(model, x, mu, u)?;
    let mut nonlocal = 0.0;
    for (xt, w) in mu.atoms() {
        let hp = eval_h_derivs(model, xt, mu, field.value(xt, mu))?.hp;
        nonlocal += w * (0.5 * field.dxt_dmu(x, mu, xt) - field.dmu(x, mu, xt) * hp);
    }
    Ok(-field.dt(x, mu) - 0.5 * field.dxx(x, mu) + d.hx + d.hp * field.dx(x, mu) - nonlocal)
}

impl MfgSolution {
    /// Master residual along the solved flow at the grid node nearest (t, x).
    ///
    /// With U⃗(t, x, ρ_t) = ∂ₓu(t, x) the nonlocal term is absorbed in the total time
    /// derivative, leaving −∂ₜ∂ₓu − ½∂ₓ³u + ∂ₓH + ∂ₚH·∂ₓₓu.
    pub fn master_residual(&self, model: &ModelSpec<f64>, t: f64, x: f64) -> Result<f64, SolverError> {
        let k = self.nearest_time(t)?;
        let n = self.x_grid.len();
        let dx = self.dx();
        let s = (x - self.x_grid[0]) / dx;
        if !(s >= 1.0 - 1e-9 && s <= (n - 2) as f64 + 1e-9) {
            return Err(SolverError::OutOfGrid { t, x });
        }
        let i = (s.round() as usize).clamp(1, n - 2);
        let nt = self.t_grid.len();
        let ut = if nt == 1 {
            0.0
        } else if k == 0 {
            (self.ux[1][i] - self.ux[0][i]) / self.dt()
        } else if k == nt - 1 {
            (self.ux[k][i] - self.ux[k - 1][i]) / self.dt()
        } else {
            (self.ux[k + 1][i] - self.ux[k - 1][i]) / (2.0 * self.dt())
        };
        let uxxx = (self.uxx[k][i + 1] - self.uxx[k][i - 1]) / (2.0 * dx);
        let mu = self.rho_measure(k);
        let d = eval_h_derivs(model, self.x_grid[i], &mu, self.ux[k][i])?;
        Ok(-ut - 0.5 * uxxx + d.hx + d.hp * self.uxx[k][i])
    }
}
