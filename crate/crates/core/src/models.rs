//! Hamiltonian and terminal-cost families with analytic derivatives.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::measures::EmpiricalMeasure;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("A0 must be square, got {0}x{1}")]
    NonSquare(usize, usize),
    #[error("horizon must be positive, got {0}")]
    Horizon(f64),
    #[error("beta must be nonnegative, got {0}")]
    Beta(f64),
    #[error("pointwise evaluation requires dim = 1, model has dim = {0}")]
    Unsupported(usize),
    #[error("invalid regularity constant {name}: {reason}")]
    Regularity { name: &'static str, reason: String },
    #[error("finite-difference step must be positive")]
    ZeroStep,
    #[error("atom index {index} out of range for {len} atoms")]
    AtomIndex { index: usize, len: usize },
    #[error("non-finite parameter {0}")]
    NonFinite(&'static str),
}

/// Derivative in the extra measure argument, as a function of x̃.
#[derive(Clone)]
pub enum MeasureDeriv<S: Scalar> {
    Const(S),
    Func(Arc<dyn Fn(S) -> S + Send + Sync>),
}

impl<S: Scalar> MeasureDeriv<S> {
    pub fn at(&self, x_tilde: S) -> S {
        match self {
            MeasureDeriv::Const(c) => *c,
            MeasureDeriv::Func(f) => f(x_tilde),
        }
    }
}

impl<S: Scalar> fmt::Debug for MeasureDeriv<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureDeriv::Const(c) => write!(f, "Const({c})"),
            MeasureDeriv::Func(_) => f.write_str("Func(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HDerivs<S: Scalar> {
    pub h: S,
    pub hx: S,
    pub hp: S,
    pub hxx: S,
    pub hxp: S,
    pub hpp: S,
    pub hxmu: MeasureDeriv<S>,
    pub hpmu: MeasureDeriv<S>,
}

#[derive(Debug, Clone)]
pub struct GDerivs<S: Scalar> {
    pub g: S,
    pub gx: S,
    pub gxx: S,
    pub gxmu: MeasureDeriv<S>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticParams<S: Scalar> {
    pub g0: S,
    pub g1: S,
    pub h_quad: S,
    pub h_xmu: S,
    pub h_xx: S,
}

impl<S: Scalar> Default for QuadraticParams<S> {
    fn default() -> Self {
        Self { g0: S::zero(), g1: S::zero(), h_quad: S::one(), h_xmu: S::zero(), h_xx: S::zero() }
    }
}

pub type H0Fn<S> = Arc<dyn Fn(S, &EmpiricalMeasure<S>, S) -> HDerivs<S> + Send + Sync>;
pub type GFn<S> = Arc<dyn Fn(S, &EmpiricalMeasure<S>) -> GDerivs<S> + Send + Sync>;

/// H₀ part of the Hamiltonian; the A₀ drift term is added on evaluation.
#[derive(Clone)]
pub enum HFamily<S: Scalar> {
    Quadratic(QuadraticParams<S>),
    Custom(H0Fn<S>),
}

#[derive(Clone)]
pub enum GFamily<S: Scalar> {
    Quadratic(QuadraticParams<S>),
    Custom(GFn<S>),
}

impl<S: Scalar> fmt::Debug for HFamily<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HFamily::Quadratic(p) => f.debug_tuple("Quadratic").field(p).finish(),
            HFamily::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl<S: Scalar> fmt::Debug for GFamily<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GFamily::Quadratic(p) => f.debug_tuple("Quadratic").field(p).finish(),
            GFamily::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityConstants<S: Scalar> {
    pub l2_h0: S,
    pub lxx_h0_lo: S,
    pub lxx_h0_hi: S,
    pub l2_g: S,
    pub lxx_g_hi: S,
    pub gamma_lo: S,
    pub gamma_hi: S,
    pub la_bar: S,
}

impl<S: Scalar> RegularityConstants<S> {
    pub fn validate(&self) -> Result<(), ModelError> {
        let named = [
            ("l2_h0", self.l2_h0),
            ("lxx_h0_lo", self.lxx_h0_lo),
            ("lxx_h0_hi", self.lxx_h0_hi),
            ("l2_g", self.l2_g),
            ("lxx_g_hi", self.lxx_g_hi),
            ("gamma_lo", self.gamma_lo),
            ("gamma_hi", self.gamma_hi),
            ("la_bar", self.la_bar),
        ];
        for (name, v) in named {
            if !v.finite() {
                return Err(ModelError::NonFinite(name));
            }
            if v < S::zero() {
                return Err(ModelError::Regularity { name, reason: format!("{v} is negative") });
            }
        }
        let bad = |name, reason: &str| Err(ModelError::Regularity { name, reason: reason.to_string() });
        if self.l2_h0 <= S::zero() {
            return bad("l2_h0", "must be positive");
        }
        if self.gamma_lo <= S::zero() {
            return bad("gamma_lo", "must be positive");
        }
        if self.lxx_h0_lo > self.lxx_h0_hi {
            return bad("lxx_h0_lo", "exceeds lxx_h0_hi");
        }
        if self.gamma_lo >= self.gamma_hi {
            return bad("gamma_lo", "must be below gamma_hi");
        }
        if self.la_bar < S::one() {
            return bad("la_bar", "must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ModelSpec<S: Scalar> {
    pub dim: usize,
    pub a0: DMatrix<S>,
    pub h0_family: HFamily<S>,
    pub g_family: GFamily<S>,
    pub beta: S,
    pub horizon: S,
    pub reg: RegularityConstants<S>,
}

impl<S: Scalar> ModelSpec<S> {
    pub fn new(
        a0: DMatrix<S>,
        h0_family: HFamily<S>,
        g_family: GFamily<S>,
        beta: S,
        horizon: S,
        reg: RegularityConstants<S>,
    ) -> Result<Self, ModelError> {
        let spec = Self { dim: a0.nrows(), a0, h0_family, g_family, beta, horizon, reg };
        spec.validate()?;
        Ok(spec)
    }

    /// One-dimensional model with both families quadratic in the same parameter record.
    pub fn quadratic(
        a0: S,
        params: QuadraticParams<S>,
        horizon: S,
        reg: RegularityConstants<S>,
    ) -> Result<Self, ModelError> {
        Self::new(
            DMatrix::from_element(1, 1, a0),
            HFamily::Quadratic(params),
            GFamily::Quadratic(params),
            S::zero(),
            horizon,
            reg,
        )
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.dim == 0 {
            return Err(ModelError::ZeroDimension);
        }
        if self.a0.nrows() != self.a0.ncols() {
            return Err(ModelError::NonSquare(self.a0.nrows(), self.a0.ncols()));
        }
        if self.a0.iter().any(|v| !v.finite()) {
            return Err(ModelError::NonFinite("a0"));
        }
        if !(self.horizon.finite() && self.horizon > S::zero()) {
            return Err(ModelError::Horizon(self.horizon.as_f64()));
        }
        if !(self.beta.finite() && self.beta >= S::zero()) {
            return Err(ModelError::Beta(self.beta.as_f64()));
        }
        for fam in [self.quadratic_h(), self.quadratic_g()].into_iter().flatten() {
            for (name, v) in [("g0", fam.g0), ("g1", fam.g1), ("h_quad", fam.h_quad), ("h_xmu", fam.h_xmu), ("h_xx", fam.h_xx)] {
                if !v.finite() {
                    return Err(ModelError::NonFinite(name));
                }
            }
        }
        self.reg.validate()
    }

    /// Scalar A₀ for the one-dimensional model.
    pub fn a0_scalar(&self) -> Result<S, ModelError> {
        if self.dim != 1 {
            return Err(ModelError::Unsupported(self.dim));
        }
        Ok(self.a0[(0, 0)])
    }

    pub fn quadratic_h(&self) -> Option<QuadraticParams<S>> {
        match &self.h0_family {
            HFamily::Quadratic(p) => Some(*p),
            HFamily::Custom(_) => None,
        }
    }

    pub fn quadratic_g(&self) -> Option<QuadraticParams<S>> {
        match &self.g_family {
            GFamily::Quadratic(p) => Some(*p),
            GFamily::Custom(_) => None,
        }
    }

    /// Combined record when both families are quadratic: G coefficients from the G family,
    /// H₀ coefficients from the H₀ family.
    pub fn quadratic_params(&self) -> Option<QuadraticParams<S>> {
        let h = self.quadratic_h()?;
        let g = self.quadratic_g()?;
        Some(QuadraticParams { g0: g.g0, g1: g.g1, h_quad: h.h_quad, h_xmu: h.h_xmu, h_xx: h.h_xx })
    }

    pub fn with_a0(&self, a0: DMatrix<S>) -> Result<Self, ModelError> {
        Self::new(a0, self.h0_family.clone(), self.g_family.clone(), self.beta, self.horizon, self.reg)
    }

    pub fn with_horizon(&self, horizon: S) -> Result<Self, ModelError> {
        Self::new(self.a0.clone(), self.h0_family.clone(), self.g_family.clone(), self.beta, horizon, self.reg)
    }
}

pub fn eval_g_derivs<S: Scalar>(
    model: &ModelSpec<S>,
    x: S,
    mu: &EmpiricalMeasure<S>,
) -> Result<GDerivs<S>, ModelError> {
    if model.dim != 1 {
        return Err(ModelError::Unsupported(model.dim));
    }
    Ok(match &model.g_family {
        GFamily::Quadratic(q) => {
            let m = mu.mean();
            let half = S::lit(0.5);
            GDerivs {
                g: half * q.g0 * x * x + q.g1 * x * m,
                gx: q.g0 * x + q.g1 * m,
                gxx: q.g0,
                gxmu: MeasureDeriv::Const(q.g1),
            }
        }
        GFamily::Custom(f) => f(x, mu),
    })
}

pub fn eval_h_derivs<S: Scalar>(
    model: &ModelSpec<S>,
    x: S,
    mu: &EmpiricalMeasure<S>,
    p: S,
) -> Result<HDerivs<S>, ModelError> {
    if model.dim != 1 {
        return Err(ModelError::Unsupported(model.dim));
    }
    let a0 = model.a0[(0, 0)];
    let mut d = match &model.h0_family {
        HFamily::Quadratic(q) => {
            let m = mu.mean();
            let half = S::lit(0.5);
            HDerivs {
                h: half * q.h_quad * p * p + q.h_xmu * x * m + half * q.h_xx * x * x,
                hx: q.h_xmu * m + q.h_xx * x,
                hp: q.h_quad * p,
                hxx: q.h_xx,
                hxp: S::zero(),
                hpp: q.h_quad,
                hxmu: MeasureDeriv::Const(q.h_xmu),
                hpmu: MeasureDeriv::Const(S::zero()),
            }
        }
        HFamily::Custom(f) => f(x, mu, p),
    };
    d.h += a0 * x * p;
    d.hx += a0 * p;
    d.hp += a0 * x;
    d.hxp += a0;
    Ok(d)
}

/// Central difference of `f` when a single atom moves, scaled by the atom weight.
pub fn lions_derivative_fd<S: Scalar>(
    f: impl Fn(&EmpiricalMeasure<S>) -> S,
    mu: &EmpiricalMeasure<S>,
    atom_index: usize,
    step: S,
) -> Result<S, ModelError> {
    if !(step > S::zero()) {
        return Err(ModelError::ZeroStep);
    }
    if atom_index >= mu.len() {
        return Err(ModelError::AtomIndex { index: atom_index, len: mu.len() });
    }
    let w = mu.weights()[atom_index];
    let plus = f(&mu.with_atom_moved(atom_index, step));
    let minus = f(&mu.with_atom_moved(atom_index, -step));
    Ok((plus - minus) / (S::lit(2.0) * step * w))
}

pub const DEFAULT_LIONS_STEP: f64 = 1e-5;
