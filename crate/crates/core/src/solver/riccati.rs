use crate::measures::EmpiricalMeasure;
use crate::models::{ModelSpec, QuadraticParams};

use super::residual::VectorField;
use super::SolverError;

pub const DEFAULT_RICCATI_STEPS: usize = 4096;

const BLOW_UP: f64 = 1e8;

/// Coefficients of the ansatz U⃗(t, x, μ) = P_t x + Q_t m(μ) for the quadratic family.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub a0: f64,
    pub params: QuadraticParams<f64>,
    pub horizon: f64,
    t: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
}

impl RiccatiSolution {
    fn rhs(&self, p: f64, q: f64) -> (f64, f64) {
        rhs(self.a0, &self.params, p, q)
    }

    fn locate(&self, t: f64) -> (usize, f64, f64) {
        let n = self.t.len() - 1;
        let h = self.horizon / n as f64;
        let s = (t / h).clamp(0.0, n as f64);
        let i = (s.floor() as usize).min(n - 1);
        (i, s - i as f64, h)
    }

    fn hermite(&self, vals: &[f64], which: usize, t: f64) -> f64 {
        let (i, s, h) = self.locate(t);
        let d0 = self.rhs(self.p[i], self.q[i]);
        let d1 = self.rhs(self.p[i + 1], self.q[i + 1]);
        let (m0, m1) = if which == 0 { (d0.0, d1.0) } else { (d0.1, d1.1) };
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * vals[i]
            + (s3 - 2.0 * s2 + s) * h * m0
            + (-2.0 * s3 + 3.0 * s2) * vals[i + 1]
            + (s3 - s2) * h * m1
    }

    pub fn p_at(&self, t: f64) -> f64 {
        self.hermite(&self.p, 0, t)
    }

    pub fn q_at(&self, t: f64) -> f64 {
        self.hermite(&self.q, 1, t)
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn p_nodes(&self) -> &[f64] {
        &self.p
    }

    pub fn q_nodes(&self) -> &[f64] {
        &self.q
    }

    /// Oracle decoupling field P_t x + Q_t m.
    pub fn ux(&self, t: f64, x: f64, m: f64) -> f64 {
        self.p_at(t) * x + self.q_at(t) * m
    }

    pub fn max_abs_p(&self) -> f64 {
        self.p.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Mean of the equilibrium flow started from mean `m0` at time `t0`.
    pub fn mean_path(&self, t0: f64, m0: f64) -> MeanPath {
        let n = self.t.len() - 1;
        let h = self.horizon / n as f64;
        let start = ((t0 / h).round() as usize).min(n);
        let hq = self.params.h_quad;
        let f = |t: f64, m: f64| -(self.a0 + hq * (self.p_at(t) + self.q_at(t))) * m;
        let mut m = vec![0.0; n + 1];
        m[start] = m0;
        for k in start..n {
            let t = self.t[k];
            let k1 = f(t, m[k]);
            let k2 = f(t + 0.5 * h, m[k] + 0.5 * h * k1);
            let k3 = f(t + 0.5 * h, m[k] + 0.5 * h * k2);
            let k4 = f(t + h, m[k] + h * k3);
            m[k + 1] = m[k] + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let rate: Vec<f64> = (0..=n).map(|k| -(self.a0 + hq * (self.p[k] + self.q[k]))).collect();
        MeanPath { h, start, m, rate }
    }
}

fn rhs(a0: f64, c: &QuadraticParams<f64>, p: f64, q: f64) -> (f64, f64) {
    let h = c.h_quad;
    (
        2.0 * a0 * p + h * p * p + c.h_xx,
        2.0 * (a0 + h * p) * q + h * q * q + c.h_xmu,
    )
}

/// Mean curve t ↦ m_t of the oracle flow.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanPath {
    h: f64,
    start: usize,
    m: Vec<f64>,
    rate: Vec<f64>,
}

impl MeanPath {
    pub fn at(&self, t: f64) -> f64 {
        let n = self.m.len() - 1;
        let s = (t / self.h).clamp(self.start as f64, n as f64);
        if self.start == n {
            return self.m[n];
        }
        let i = (s.floor() as usize).clamp(self.start, n - 1);
        let s = s - i as f64;
        let (y0, y1) = (self.m[i], self.m[i + 1]);
        let (d0, d1) = (self.rate[i] * y0 * self.h, self.rate[i + 1] * y1 * self.h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * d1
    }
}

/// Integrates the coefficient ODEs backward from P_T = g0, Q_T = g1 with classical RK4.
pub fn riccati_oracle(model: &ModelSpec<f64>, t_steps: usize) -> Result<RiccatiSolution, SolverError> {
    let params = model
        .quadratic_params()
        .ok_or_else(|| SolverError::Invalid("Riccati oracle needs quadratic H0 and G".into()))?;
    let a0 = model.a0_scalar()?;
    if model.beta != 0.0 {
        return Err(SolverError::Invalid("Riccati oracle needs beta = 0".into()));
    }
    let n = t_steps.max(1);
    let horizon = model.horizon;
    let h = horizon / n as f64;
    let mut p = vec![0.0; n + 1];
    let mut q = vec![0.0; n + 1];
    p[n] = params.g0;
    q[n] = params.g1;
    let f = |p: f64, q: f64| rhs(a0, &params, p, q);
    for k in (0..n).rev() {
        let (y0, z0) = (p[k + 1], q[k + 1]);
        let k1 = f(y0, z0);
        let k2 = f(y0 - 0.5 * h * k1.0, z0 - 0.5 * h * k1.1);
        let k3 = f(y0 - 0.5 * h * k2.0, z0 - 0.5 * h * k2.1);
        let k4 = f(y0 - h * k3.0, z0 - h * k3.1);
        p[k] = y0 - h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        q[k] = z0 - h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        if !(p[k].abs() <= BLOW_UP && q[k].abs() <= BLOW_UP) {
            return Err(SolverError::BlowUp { t: k as f64 * h });
        }
    }
    let t = (0..=n).map(|k| k as f64 * h).collect();
    Ok(RiccatiSolution { a0, params, horizon, t, p, q })
}

/// The oracle ansatz frozen at time `t`, viewed as a vector field in (x, μ).
pub struct RiccatiAt<'a> {
    pub sol: &'a RiccatiSolution,
    pub t: f64,
}

impl RiccatiAt<'_> {
    /// Richardson-extrapolated difference quotient of the interpolated coefficients.
    fn time_derivative(&self, f: impl Fn(f64) -> f64) -> f64 {
        let big = self.sol.horizon / 2048.0;
        let t = self.t;
        if t - big >= 0.0 && t + big <= self.sol.horizon {
            let d = |h: f64| (f(t + h) - f(t - h)) / (2.0 * h);
            (4.0 * d(0.5 * big) - d(big)) / 3.0
        } else {
            let dir = if t - big < 0.0 { 1.0 } else { -1.0 };
            let d = |h: f64| dir * (-3.0 * f(t) + 4.0 * f(t + dir * h) - f(t + 2.0 * dir * h)) / (2.0 * h);
            (8.0 * d(0.25 * big) - d(0.5 * big)) / 7.0
        }
    }
}

impl VectorField for RiccatiAt<'_> {
    fn value(&self, x: f64, mu: &EmpiricalMeasure<f64>) -> f64 {
        self.sol.ux(self.t, x, mu.mean())
    }
    fn dx(&self, _x: f64, _mu: &EmpiricalMeasure<f64>) -> f64 {
        self.sol.p_at(self.t)
    }
    fn dxx(&self, _x: f64, _mu: &EmpiricalMeasure<f64>) -> f64 {
        0.0
    }
    fn dt(&self, x: f64, mu: &EmpiricalMeasure<f64>) -> f64 {
        let m = mu.mean();
        self.time_derivative(|s| self.sol.p_at(s) * x + self.sol.q_at(s) * m)
    }
    fn dmu(&self, _x: f64, _mu: &EmpiricalMeasure<f64>, _x_tilde: f64) -> f64 {
        self.sol.q_at(self.t)
    }
    fn dxt_dmu(&self, _x: f64, _mu: &EmpiricalMeasure<f64>, _x_tilde: f64) -> f64 {
        0.0
    }
}
