use std::io::{self, Write};
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::measures::EmpiricalMeasure;
use crate::models::{eval_h_derivs, MeasureDeriv, ModelSpec};
use crate::monotonicity::VecLambda;

use super::mfg::{solve_mfg, MfgSolution, PicardInit};
use super::SolverError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    Brownian,
    /// All Brownian increments frozen at zero.
    Frozen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FbsdeResult {
    pub t_grid: Vec<f64>,
    /// One trajectory per initial sample.
    pub x_paths: Vec<Vec<f64>>,
    pub y_paths: Vec<Vec<f64>>,
    /// Mean |Y_t − u(t, X_t)| per time step.
    pub y_error: Vec<f64>,
    pub y_check: f64,
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

fn time_grid(sol: &MfgSolution, n_steps: usize) -> Result<(Vec<f64>, f64), SolverError> {
    let t0 = sol.t_grid[0];
    let tn = sol.horizon();
    if tn == t0 {
        return Ok((vec![t0], 0.0));
    }
    if n_steps == 0 {
        return Err(SolverError::Invalid("need at least one time step".into()));
    }
    let dt = (tn - t0) / n_steps as f64;
    Ok(((0..=n_steps).map(|k| if k == n_steps { tn } else { t0 + k as f64 * dt }).collect(), dt))
}

fn increments(seed: u64, path: usize, n: usize, dt: f64, noise: NoiseMode) -> Vec<f64> {
    match noise {
        NoiseMode::Frozen => vec![0.0; n],
        NoiseMode::Brownian => {
            let mut rng = path_rng(seed, path);
            let s = dt.sqrt();
            (0..n).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()
        }
    }
}

/// Euler–Maruyama for the forward equation driven by the solved decoupling field, and a
/// backward reconstruction of Y compared against u(t, X_t).
pub fn simulate_fbsde(
    model: &ModelSpec<f64>,
    sol: &MfgSolution,
    xi_samples: &[f64],
    n_steps: usize,
    seed: u64,
    noise: NoiseMode,
) -> Result<FbsdeResult, SolverError> {
    if xi_samples.is_empty() {
        return Err(SolverError::Invalid("no initial samples".into()));
    }
    let (t, dt) = time_grid(sol, n_steps)?;
    let n = t.len() - 1;
    let measures: Vec<EmpiricalMeasure<f64>> = (0..sol.t_grid.len()).map(|k| sol.rho_measure(k)).collect();
    let mut x_paths = Vec::with_capacity(xi_samples.len());
    let mut y_paths = Vec::with_capacity(xi_samples.len());
    let mut err = vec![0.0; t.len()];
    for (j, &xi) in xi_samples.iter().enumerate() {
        let db = increments(seed, j, n, dt, noise);
        let mut x = vec![xi; t.len()];
        let mut z = vec![0.0; n];
        let mut zz = vec![0.0; n];
        let mut lhat = vec![0.0; n];
        for k in 0..n {
            let mu = &measures[sol.nearest_time(t[k])?];
            let p = sol.ux_at(t[k], x[k])?;
            let d = eval_h_derivs(model, x[k], mu, p)?;
            z[k] = p;
            zz[k] = sol.uxx_at(t[k], x[k])?;
            lhat[k] = p * d.hp - d.h;
            x[k + 1] = x[k] - d.hp * dt + db[k];
        }
        let mut y = vec![0.0; t.len()];
        y[n] = sol.u_at(t[n], x[n])?;
        for k in (0..n).rev() {
            y[k] = y[k + 1] + lhat[k] * dt - z[k] * db[k] - 0.5 * zz[k] * (db[k] * db[k] - dt);
        }
        for k in 0..t.len() {
            err[k] += (y[k] - sol.u_at(t[k], x[k])?).abs();
        }
        x_paths.push(x);
        y_paths.push(y);
    }
    let m = xi_samples.len() as f64;
    err.iter_mut().for_each(|e| *e /= m);
    let y_check = err.iter().fold(0.0f64, |a, &e| a.max(e));
    Ok(FbsdeResult { t_grid: t, x_paths, y_paths, y_error: err, y_check })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub n_steps: usize,
    pub seed: u64,
    pub paths_per_atom: usize,
    /// Size h of the paired solves with μ₀ displaced by ±hη.
    pub bump: f64,
    pub noise: NoiseMode,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { n_steps: 100, seed: 0, paths_per_atom: 4, bump: 0.05, noise: NoiseMode::Brownian }
    }
}

/// Particle realization of the linearized system and the Γ_t monitor.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrace {
    pub t_grid: Vec<f64>,
    pub weights: Vec<f64>,
    pub x_particles: Vec<Vec<f64>>,
    pub dx_particles: Vec<Vec<f64>>,
    pub upsilon: Vec<Vec<f64>>,
    pub upsilon_bar: Vec<Vec<f64>>,
    pub i_series: Vec<f64>,
    pub ibar_series: Vec<f64>,
    pub gamma_series: Vec<f64>,
    pub mean_dx2: Vec<f64>,
    /// Standard error of Γ_{k+1} − Γ_k from the particle spread.
    pub increment_std_error: Vec<f64>,
}

impl FlowTrace {
    /// Γ_k assembled again from the stored particle arrays.
    pub fn recompute_gamma(&self, k: usize, lam: &VecLambda<f64>) -> f64 {
        let w = &self.weights;
        let (ups, bar, dx) = (&self.upsilon[k], &self.upsilon_bar[k], &self.dx_particles[k]);
        let mut out = 0.0;
        for j in 0..w.len() {
            out += w[j] * particle_gamma(lam, ups[j], bar[j], dx[j]);
        }
        out
    }

    /// Smallest increment Γ_{k+1} − Γ_k.
    pub fn min_increment(&self) -> f64 {
        self.gamma_series.windows(2).map(|g| g[1] - g[0]).fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,I,Ibar,Gamma,mean_dX2")?;
        for k in 0..self.t_grid.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.t_grid[k], self.i_series[k], self.ibar_series[k], self.gamma_series[k], self.mean_dx2[k]
            )?;
        }
        Ok(())
    }
}

fn particle_gamma(lam: &VecLambda<f64>, ups: f64, bar: f64, dx: f64) -> f64 {
    lam.l0() * bar * dx + lam.l1() * ups * dx + bar * bar + lam.l2() * ups * ups - lam.l3() * dx * dx
}

/// ∂ₓV along the displacement ξ + hη, differenced over ±h.
fn upsilon_field(model: &ModelSpec<f64>, sol: &MfgSolution, eta: &[f64], h: f64) -> Result<Vec<Vec<f64>>, SolverError> {
    if eta.iter().all(|&e| e == 0.0) {
        return Ok(vec![vec![0.0; sol.x_grid.len()]; sol.t_grid.len()]);
    }
    let mut opts = sol.options.clone();
    opts.grid = super::GridSpec::matching(&sol.x_grid);
    opts.init = PicardInit::Field(Arc::new(sol.ux.clone()));
    let scaled: Vec<f64> = eta.iter().map(|e| e * h).collect();
    let minus_eta: Vec<f64> = scaled.iter().map(|e| -e).collect();
    let plus = solve_mfg(model, &sol.mu0.displaced(&scaled)?, &opts)?;
    let minus = solve_mfg(model, &sol.mu0.displaced(&minus_eta)?, &opts)?;
    Ok(plus
        .ux
        .iter()
        .zip(&minus.ux)
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q) / (2.0 * h)).collect())
        .collect())
}

/// Co-evolves (X, δX) started from (ξ, η) and records I_t, Ī_t and Γ_t.
///
/// `xi` must be the initial measure of `sol`; `eta` is aligned with its sorted atoms.
pub fn simulate_linearized_flow(
    model: &ModelSpec<f64>,
    sol: &MfgSolution,
    lam: &VecLambda<f64>,
    xi: &EmpiricalMeasure<f64>,
    eta: &[f64],
    cfg: &FlowConfig,
) -> Result<FlowTrace, SolverError> {
    if xi != &sol.mu0 {
        return Err(SolverError::Invalid("xi must be the initial measure of the solution".into()));
    }
    if eta.len() != xi.len() {
        return Err(SolverError::Invalid(format!("eta has {} entries for {} atoms", eta.len(), xi.len())));
    }
    if !(cfg.bump > 0.0) || cfg.paths_per_atom == 0 {
        return Err(SolverError::Invalid("bump must be positive and paths_per_atom at least one".into()));
    }
    let (t, dt) = time_grid(sol, cfg.n_steps)?;
    let n = t.len() - 1;
    let ups_grid = upsilon_field(model, sol, eta, cfg.bump)?;
    let measures: Vec<EmpiricalMeasure<f64>> = (0..sol.t_grid.len()).map(|k| sol.rho_measure(k)).collect();

    let ppa = cfg.paths_per_atom;
    let np = xi.len() * ppa;
    let weights: Vec<f64> = (0..np).map(|j| xi.weights()[j / ppa] / ppa as f64).collect();
    let noise: Vec<Vec<f64>> = (0..np).map(|j| increments(cfg.seed, j, n, dt, cfg.noise)).collect();
    let mut x: Vec<f64> = (0..np).map(|j| xi.points()[j / ppa]).collect();
    let mut dxp: Vec<f64> = (0..np).map(|j| eta[j / ppa]).collect();

    let mut trace = FlowTrace {
        t_grid: t.clone(),
        weights: weights.clone(),
        x_particles: Vec::with_capacity(n + 1),
        dx_particles: Vec::with_capacity(n + 1),
        upsilon: Vec::with_capacity(n + 1),
        upsilon_bar: Vec::with_capacity(n + 1),
        i_series: Vec::with_capacity(n + 1),
        ibar_series: Vec::with_capacity(n + 1),
        gamma_series: Vec::with_capacity(n + 1),
        mean_dx2: Vec::with_capacity(n + 1),
        increment_std_error: Vec::with_capacity(n),
    };
    let mut prev_parts: Option<Vec<f64>> = None;
    for k in 0..=n {
        let mu = &measures[sol.nearest_time(t[k])?];
        let mut ups = vec![0.0; np];
        let mut bar = vec![0.0; np];
        let mut derivs = Vec::with_capacity(np);
        for j in 0..np {
            let p = sol.ux_at(t[k], x[j])?;
            ups[j] = sol.interp(&ups_grid, t[k], x[j])?;
            bar[j] = sol.uxx_at(t[k], x[j])? * dxp[j];
            derivs.push(eval_h_derivs(model, x[j], mu, p)?);
        }
        let parts: Vec<f64> = (0..np).map(|j| particle_gamma(lam, ups[j], bar[j], dxp[j])).collect();
        let sum = |f: &dyn Fn(usize) -> f64| (0..np).fold(0.0, |a, j| a + weights[j] * f(j));
        trace.i_series.push(sum(&|j| ups[j] * dxp[j]));
        trace.ibar_series.push(sum(&|j| bar[j] * dxp[j]));
        trace.mean_dx2.push(sum(&|j| dxp[j] * dxp[j]));
        trace.gamma_series.push(sum(&|j| parts[j]));
        if let Some(prev) = &prev_parts {
            let d: Vec<f64> = (0..np).map(|j| parts[j] - prev[j]).collect();
            let mean = sum(&|j| d[j]);
            let var = (0..np).fold(0.0, |a, j| a + weights[j] * weights[j] * (d[j] - mean) * (d[j] - mean));
            trace.increment_std_error.push(var.sqrt());
        }
        trace.x_particles.push(x.clone());
        trace.dx_particles.push(dxp.clone());
        if k == n {
            trace.upsilon.push(ups);
            trace.upsilon_bar.push(bar);
            break;
        }
        let mean_dx = sum(&|j| dxp[j]);
        let drift: Vec<f64> = (0..np)
            .map(|j| {
                let d = &derivs[j];
                let pmu = match &d.hpmu {
                    MeasureDeriv::Const(c) => c * mean_dx,
                    f => sum(&|i| f.at(x[i]) * dxp[i]),
                };
                d.hxp * dxp[j] + pmu + d.hpp * (ups[j] + bar[j])
            })
            .collect();
        for j in 0..np {
            dxp[j] -= drift[j] * dt;
            x[j] += -derivs[j].hp * dt + noise[j][k];
        }
        trace.upsilon.push(ups);
        trace.upsilon_bar.push(bar);
        prev_parts = Some(parts);
    }
    Ok(trace)
}
