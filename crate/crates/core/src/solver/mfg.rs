use std::io::{self, Write};
use std::sync::Arc;

use crate::measures::EmpiricalMeasure;
use crate::models::{eval_g_derivs, eval_h_derivs, ModelSpec};

use super::{lerp_uniform, GridSpec, SolverError, ESCAPE_MASS};

/// Starting guess for ∂ₓu in the Picard iteration.
#[derive(Debug, Clone)]
pub enum PicardInit {
    Zero,
    /// ∂ₓG(x, μ₀) at every time.
    Terminal,
    /// A previously solved ∂ₓu on the same time and space grid.
    Field(Arc<Vec<Vec<f64>>>),
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Initial time; the solve runs on [t0, T].
    pub t0: f64,
    pub t_steps: usize,
    pub grid: GridSpec,
    pub tol: f64,
    pub max_picard: usize,
    pub init: PicardInit,
    /// Weight of the new iterate in the gradient used by the next Fokker–Planck pass.
    pub relax: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            t0: 0.0,
            t_steps: 200,
            grid: GridSpec::new(0.02),
            tol: 1e-8,
            max_picard: 100,
            init: PicardInit::Terminal,
            relax: 1.0,
        }
    }
}

/// Converged solution of the coupled HJB / Fokker–Planck system on a space-time grid.
#[derive(Debug, Clone)]
pub struct MfgSolution {
    pub t_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    /// Node masses per time step; each row sums to one.
    pub rho: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub ux: Vec<Vec<f64>>,
    pub uxx: Vec<Vec<f64>>,
    pub picard_residuals: Vec<f64>,
    pub mu0: EmpiricalMeasure<f64>,
    pub options: SolveOptions,
}

impl MfgSolution {
    pub fn dx(&self) -> f64 {
        if self.x_grid.len() > 1 {
            self.x_grid[1] - self.x_grid[0]
        } else {
            1.0
        }
    }

    pub fn dt(&self) -> f64 {
        if self.t_grid.len() > 1 {
            self.t_grid[1] - self.t_grid[0]
        } else {
            0.0
        }
    }

    pub fn horizon(&self) -> f64 {
        *self.t_grid.last().expect("non-empty time grid")
    }

    pub fn mass(&self, k: usize) -> f64 {
        self.rho[k].iter().sum()
    }

    /// Density samples ρ(t_k, x_i).
    pub fn density(&self, k: usize) -> Vec<f64> {
        let dx = self.dx();
        self.rho[k].iter().map(|m| m / dx).collect()
    }

    pub fn rho_measure(&self, k: usize) -> EmpiricalMeasure<f64> {
        grid_measure(&self.x_grid, &self.rho[k])
    }

    /// Index of the time node closest to `t`.
    pub fn nearest_time(&self, t: f64) -> Result<usize, SolverError> {
        let t0 = self.t_grid[0];
        let tn = self.horizon();
        if !(t >= t0 - 1e-9 && t <= tn + 1e-9) {
            return Err(SolverError::OutOfGrid { t, x: f64::NAN });
        }
        if self.t_grid.len() == 1 {
            return Ok(0);
        }
        let k = ((t - t0) / self.dt()).round() as usize;
        Ok(k.min(self.t_grid.len() - 1))
    }

    /// Bilinear interpolation of a space-time field.
    pub fn interp(&self, field: &[Vec<f64>], t: f64, x: f64) -> Result<f64, SolverError> {
        let out = SolverError::OutOfGrid { t, x };
        let x0 = self.x_grid[0];
        let dx = self.dx();
        if self.t_grid.len() == 1 {
            if (t - self.t_grid[0]).abs() > 1e-9 {
                return Err(out);
            }
            return lerp_uniform(&field[0], x0, dx, x).ok_or(out);
        }
        let s = (t - self.t_grid[0]) / self.dt();
        let last = (self.t_grid.len() - 1) as f64;
        if !(s >= -1e-9 && s <= last + 1e-9) {
            return Err(out);
        }
        let s = s.clamp(0.0, last);
        let k = (s.floor() as usize).min(self.t_grid.len() - 2);
        let f = s - k as f64;
        let a = lerp_uniform(&field[k], x0, dx, x).ok_or(out.clone())?;
        let b = lerp_uniform(&field[k + 1], x0, dx, x).ok_or(out)?;
        Ok(a * (1.0 - f) + b * f)
    }

    pub fn ux_at(&self, t: f64, x: f64) -> Result<f64, SolverError> {
        self.interp(&self.ux, t, x)
    }

    pub fn u_at(&self, t: f64, x: f64) -> Result<f64, SolverError> {
        self.interp(&self.u, t, x)
    }

    pub fn uxx_at(&self, t: f64, x: f64) -> Result<f64, SolverError> {
        self.interp(&self.uxx, t, x)
    }

    /// Writes `t,x,rho,u,ux,uxx` rows, every `t_stride`-th time and `x_stride`-th node.
    pub fn write_csv<W: Write>(&self, mut w: W, t_stride: usize, x_stride: usize) -> io::Result<()> {
        let (ts, xs) = (t_stride.max(1), x_stride.max(1));
        writeln!(w, "t,x,rho,u,ux,uxx")?;
        let nt = self.t_grid.len();
        let times = (0..nt).step_by(ts).chain(((nt - 1) % ts != 0).then_some(nt - 1));
        for k in times {
            let dens = self.density(k);
            let nx = self.x_grid.len();
            for i in (0..nx).step_by(xs) {
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    self.t_grid[k], self.x_grid[i], dens[i], self.u[k][i], self.ux[k][i], self.uxx[k][i]
                )?;
            }
        }
        Ok(())
    }
}

pub(crate) fn grid_measure(x: &[f64], masses: &[f64]) -> EmpiricalMeasure<f64> {
    EmpiricalMeasure::from_sorted(x.to_vec(), masses.to_vec())
}

/// B(w) = w/(eʷ − 1).
fn bernoulli(w: f64) -> f64 {
    if w.abs() < 1e-10 {
        1.0 - 0.5 * w
    } else {
        w / w.exp_m1()
    }
}

/// Cloud-in-cell deposit of the atoms of μ₀.
fn deposit(x: &[f64], mu: &EmpiricalMeasure<f64>) -> Vec<f64> {
    let dx = x[1] - x[0];
    let mut m = vec![0.0; x.len()];
    for (p, w) in mu.atoms() {
        let s = ((p - x[0]) / dx).clamp(0.0, (x.len() - 1) as f64);
        let i = (s.floor() as usize).min(x.len() - 2);
        let f = s - i as f64;
        m[i] += w * (1.0 - f);
        m[i + 1] += w * f;
    }
    m
}

/// Solves a tridiagonal system in place (`a` sub-, `b` main, `c` super-diagonal).
fn thomas(a: &[f64], b: &mut [f64], c: &[f64], d: &mut [f64]) {
    let n = b.len();
    for i in 1..n {
        let f = a[i] / b[i - 1];
        b[i] -= f * c[i - 1];
        d[i] -= f * d[i - 1];
    }
    d[n - 1] /= b[n - 1];
    for i in (0..n - 1).rev() {
        d[i] = (d[i] - c[i] * d[i + 1]) / b[i];
    }
}

fn boundary_layer(n: usize) -> usize {
    (n / 100).max(2)
}

fn escaped_mass(m: &[f64]) -> f64 {
    let nb = boundary_layer(m.len());
    m[..nb].iter().sum::<f64>() + m[m.len() - nb..].iter().sum::<f64>()
}

struct Problem<'a> {
    model: &'a ModelSpec<f64>,
    x: &'a [f64],
    dx: f64,
    dt: f64,
    t: Vec<f64>,
}

impl Problem<'_> {
    /// One backward Euler step of the Fokker–Planck equation with Scharfetter–Gummel fluxes.
    fn fp_step(&self, m: &[f64], mu: &EmpiricalMeasure<f64>, face_grad: &[f64]) -> Result<Vec<f64>, SolverError> {
        let n = m.len();
        let dcoef = 0.5;
        let c = dcoef / (self.dx * self.dx);
        let mut bp = vec![0.0; n - 1];
        let mut bm = vec![0.0; n - 1];
        for f in 0..n - 1 {
            let xf = 0.5 * (self.x[f] + self.x[f + 1]);
            let v = -eval_h_derivs(self.model, xf, mu, face_grad[f])?.hp;
            let w = v * self.dx / dcoef;
            bp[f] = bernoulli(w);
            bm[f] = bernoulli(-w);
        }
        let mut lo = vec![0.0; n];
        let mut di = vec![1.0; n];
        let mut up = vec![0.0; n];
        for f in 0..n - 1 {
            // J_f = c [B(−w) m_f − B(w) m_{f+1}] leaves cell f and enters cell f+1.
            di[f] += self.dt * c * bm[f];
            up[f] -= self.dt * c * bp[f];
            di[f + 1] += self.dt * c * bp[f];
            lo[f + 1] -= self.dt * c * bm[f];
        }
        let mut rhs = m.to_vec();
        thomas(&lo, &mut di, &up, &mut rhs);
        for v in rhs.iter_mut() {
            *v = v.max(0.0);
        }
        let total: f64 = rhs.iter().sum();
        rhs.iter_mut().for_each(|v| *v /= total);
        Ok(rhs)
    }

    fn forward(&self, m0: &[f64], grads: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SolverError> {
        let mut out = Vec::with_capacity(self.t.len());
        out.push(m0.to_vec());
        for k in 0..self.t.len() - 1 {
            let mu = grid_measure(self.x, &out[k]);
            let next = self.fp_step(&out[k], &mu, &grads[k + 1])?;
            let esc = escaped_mass(&next);
            if esc > ESCAPE_MASS {
                return Err(SolverError::GridEscape { t: self.t[k + 1], mass: esc });
            }
            out.push(next);
        }
        Ok(out)
    }

    /// Solves α·u − β − ½Δu + H(x, μ, Du) = 0 for one time level by Newton's method.
    fn hjb_step(&self, mu: &EmpiricalMeasure<f64>, alpha: f64, beta: &[f64], guess: &[f64]) -> Result<Vec<f64>, SolverError> {
        let n = guess.len();
        let dx = self.dx;
        let idx2 = 1.0 / (dx * dx);
        // Stencil per interior node: 0 central, 1 backward, 2 forward.
        let mut stencil = vec![0u8; n];
        for i in 1..n - 1 {
            let p = (guess[i + 1] - guess[i - 1]) / (2.0 * dx);
            let b = eval_h_derivs(self.model, self.x[i], mu, p)?.hp;
            let limit = if i == 1 || i == n - 2 { 0.5 } else { 1.0 };
            stencil[i] = if b.abs() * dx <= limit {
                0
            } else if b > 0.0 {
                1
            } else {
                2
            };
        }
        let mut u = guess.to_vec();
        let mut lo = vec![0.0; n];
        let mut di = vec![0.0; n];
        let mut up = vec![0.0; n];
        let mut res = vec![0.0; n];
        for _ in 0..12 {
            // Boundary rows carry a third coefficient, eliminated below.
            let mut e0 = 0.0;
            let mut en = 0.0;
            for i in 0..n {
                let (lap, p, dp) = if i == 0 {
                    let lap = (u[0] - 2.0 * u[1] + u[2]) * idx2;
                    let p = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * dx);
                    (lap, p, [-1.5 / dx, 2.0 / dx, -0.5 / dx])
                } else if i == n - 1 {
                    let lap = (u[n - 1] - 2.0 * u[n - 2] + u[n - 3]) * idx2;
                    let p = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * dx);
                    (lap, p, [0.5 / dx, -2.0 / dx, 1.5 / dx])
                } else {
                    let lap = (u[i + 1] - 2.0 * u[i] + u[i - 1]) * idx2;
                    match stencil[i] {
                        0 => (lap, (u[i + 1] - u[i - 1]) / (2.0 * dx), [-0.5 / dx, 0.0, 0.5 / dx]),
                        1 => (lap, (u[i] - u[i - 1]) / dx, [-1.0 / dx, 1.0 / dx, 0.0]),
                        _ => (lap, (u[i + 1] - u[i]) / dx, [0.0, -1.0 / dx, 1.0 / dx]),
                    }
                };
                let d = eval_h_derivs(self.model, self.x[i], mu, p)?;
                res[i] = alpha * u[i] - beta[i] - 0.5 * lap + d.h;
                if i == 0 {
                    di[0] = alpha - 0.5 * idx2 + d.hp * dp[0];
                    up[0] = idx2 + d.hp * dp[1];
                    e0 = -0.5 * idx2 + d.hp * dp[2];
                } else if i == n - 1 {
                    en = -0.5 * idx2 + d.hp * dp[0];
                    lo[i] = idx2 + d.hp * dp[1];
                    di[i] = alpha - 0.5 * idx2 + d.hp * dp[2];
                } else {
                    lo[i] = -0.5 * idx2 + d.hp * dp[0];
                    di[i] = alpha + idx2 + d.hp * dp[1];
                    up[i] = -0.5 * idx2 + d.hp * dp[2];
                }
            }
            let f0 = e0 / up[1];
            di[0] -= f0 * lo[1];
            up[0] -= f0 * di[1];
            res[0] -= f0 * res[1];
            let fnn = en / lo[n - 2];
            lo[n - 1] -= fnn * di[n - 2];
            di[n - 1] -= fnn * up[n - 2];
            res[n - 1] -= fnn * res[n - 2];
            thomas(&lo, &mut di, &up, &mut res);
            let mut step = 0.0f64;
            let mut size = 0.0f64;
            for i in 0..n {
                u[i] -= res[i];
                step = step.max(res[i].abs());
                size = size.max(u[i].abs());
            }
            if !step.is_finite() {
                return Err(SolverError::NoConvergence { iterations: 0, residual: f64::INFINITY });
            }
            if step <= 1e-13 * (1.0 + size) {
                break;
            }
        }
        Ok(u)
    }

    fn backward(&self, rho: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SolverError> {
        let nt = self.t.len();
        let mut u = vec![Vec::new(); nt];
        let mu_t = grid_measure(self.x, &rho[nt - 1]);
        u[nt - 1] = self
            .x
            .iter()
            .map(|&x| eval_g_derivs(self.model, x, &mu_t).map(|g| g.g))
            .collect::<Result<_, _>>()?;
        for k in (0..nt - 1).rev() {
            let mu = grid_measure(self.x, &rho[k]);
            let (alpha, beta, guess): (f64, Vec<f64>, Vec<f64>) = if k == nt - 2 {
                (1.0 / self.dt, u[k + 1].iter().map(|v| v / self.dt).collect(), u[k + 1].clone())
            } else {
                let (a, b) = (&u[k + 1], &u[k + 2]);
                (
                    1.5 / self.dt,
                    a.iter().zip(b).map(|(p, q)| (4.0 * p - q) / (2.0 * self.dt)).collect(),
                    a.iter().zip(b).map(|(p, q)| 2.0 * p - q).collect(),
                )
            };
            u[k] = self.hjb_step(&mu, alpha, &beta, &guess)?;
        }
        Ok(u)
    }
}

fn derivatives(u: &[f64], dx: f64) -> (Vec<f64>, Vec<f64>) {
    let n = u.len();
    let mut ux = vec![0.0; n];
    let mut uxx = vec![0.0; n];
    for i in 1..n - 1 {
        ux[i] = (u[i + 1] - u[i - 1]) / (2.0 * dx);
        uxx[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (dx * dx);
    }
    ux[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * dx);
    ux[n - 1] = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * dx);
    if n >= 4 {
        uxx[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / (dx * dx);
        uxx[n - 1] = (2.0 * u[n - 1] - 5.0 * u[n - 2] + 4.0 * u[n - 3] - u[n - 4]) / (dx * dx);
    } else {
        uxx[0] = uxx[1];
        uxx[n - 1] = uxx[n - 2];
    }
    (ux, uxx)
}

fn face_gradients(u: &[f64], dx: f64) -> Vec<f64> {
    u.windows(2).map(|w| (w[1] - w[0]) / dx).collect()
}

/// Solves the MFG system on [t0, T] by Picard iteration between the forward Fokker–Planck
/// equation and the backward HJB equation.
pub fn solve_mfg(model: &ModelSpec<f64>, mu0: &EmpiricalMeasure<f64>, opts: &SolveOptions) -> Result<MfgSolution, SolverError> {
    model.validate()?;
    if model.dim != 1 {
        return Err(SolverError::Invalid(format!("dynamic solver needs dim = 1, got {}", model.dim)));
    }
    if model.beta != 0.0 {
        return Err(SolverError::Invalid("dynamic solver needs beta = 0".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(SolverError::Invalid("tolerance must be positive".into()));
    }
    if !(opts.relax > 0.0 && opts.relax <= 1.0) {
        return Err(SolverError::Invalid("relaxation must lie in (0, 1]".into()));
    }
    let horizon = model.horizon;
    let span = horizon - opts.t0;
    if !(span >= 0.0) {
        return Err(SolverError::Invalid(format!("t0 = {} lies beyond the horizon {horizon}", opts.t0)));
    }
    let x = opts.grid.nodes(model, mu0, span)?;
    let dx = x[1] - x[0];
    let m0 = deposit(&x, mu0);

    if span == 0.0 {
        let mu = grid_measure(&x, &m0);
        let u: Vec<f64> = x.iter().map(|&p| eval_g_derivs(model, p, &mu).map(|g| g.g)).collect::<Result<_, _>>()?;
        let (ux, uxx) = derivatives(&u, dx);
        return Ok(MfgSolution {
            t_grid: vec![horizon],
            x_grid: x,
            rho: vec![m0],
            u: vec![u],
            ux: vec![ux],
            uxx: vec![uxx],
            picard_residuals: Vec::new(),
            mu0: mu0.clone(),
            options: opts.clone(),
        });
    }
    if opts.t_steps < 2 {
        return Err(SolverError::Invalid("need at least two time steps".into()));
    }
    let nt = opts.t_steps + 1;
    let dt = span / opts.t_steps as f64;
    let t: Vec<f64> = (0..nt).map(|k| if k + 1 == nt { horizon } else { opts.t0 + k as f64 * dt }).collect();
    let problem = Problem { model, x: &x, dx, dt, t: t.clone() };

    let mut prev_ux: Vec<Vec<f64>> = match &opts.init {
        PicardInit::Zero => vec![vec![0.0; x.len()]; nt],
        PicardInit::Terminal => {
            let row: Vec<f64> = x.iter().map(|&p| eval_g_derivs(model, p, mu0).map(|g| g.gx)).collect::<Result<_, _>>()?;
            vec![row; nt]
        }
        PicardInit::Field(f) => {
            if f.len() != nt || f.iter().any(|r| r.len() != x.len()) {
                return Err(SolverError::Invalid("warm-start field does not match the grid".into()));
            }
            f.as_ref().clone()
        }
    };
    let mut grads: Vec<Vec<f64>> = prev_ux.iter().map(|r| r.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()).collect();
    let mut residuals = Vec::new();
    for it in 0..opts.max_picard.max(1) {
        let rho = problem.forward(&m0, &grads)?;
        let u = problem.backward(&rho)?;
        let (ux, uxx): (Vec<_>, Vec<_>) = u.iter().map(|r| derivatives(r, dx)).unzip();
        let r = ux
            .iter()
            .zip(&prev_ux)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()))
            .fold(0.0f64, f64::max);
        residuals.push(r);
        if !r.is_finite() {
            return Err(SolverError::NoConvergence { iterations: it + 1, residual: r });
        }
        if r < opts.tol {
            return Ok(MfgSolution {
                t_grid: t,
                x_grid: x,
                rho,
                u,
                ux,
                uxx,
                picard_residuals: residuals,
                mu0: mu0.clone(),
                options: opts.clone(),
            });
        }
        for (g, row) in grads.iter_mut().zip(&u) {
            let new = face_gradients(row, dx);
            for (a, b) in g.iter_mut().zip(new) {
                *a = opts.relax * b + (1.0 - opts.relax) * *a;
            }
        }
        prev_ux = ux;
    }
    Err(SolverError::NoConvergence {
        iterations: opts.max_picard.max(1),
        residual: *residuals.last().unwrap_or(&f64::INFINITY),
    })
}
