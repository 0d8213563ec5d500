use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::certify::ConstantLedger;
use crate::measures::{make_empirical, wq_distance, EmpiricalMeasure};
use crate::models::ModelSpec;
use crate::monotonicity::FieldDerivs;

use super::mfg::{grid_measure, solve_mfg, MfgSolution, PicardInit, SolveOptions};
use super::{lerp_uniform, GridSpec, SolverError};

/// Equal-weight quantization of grid masses at the midpoint quantiles (k + ½)/n.
pub fn quantize_density(x: &[f64], masses: &[f64], atoms: usize) -> Result<EmpiricalMeasure<f64>, SolverError> {
    if atoms == 0 || x.len() != masses.len() || x.len() < 2 {
        return Err(SolverError::Invalid("quantization needs atoms and matching grid arrays".into()));
    }
    let dx = x[1] - x[0];
    let total: f64 = masses.iter().sum();
    let mut pts = Vec::with_capacity(atoms);
    let mut cum = 0.0;
    let mut i = 0;
    for k in 0..atoms {
        let target = (k as f64 + 0.5) / atoms as f64 * total;
        while i + 1 < masses.len() && cum + masses[i] < target {
            cum += masses[i];
            i += 1;
        }
        // Each node mass is spread uniformly over its cell.
        let frac = if masses[i] > 0.0 { ((target - cum) / masses[i]).clamp(0.0, 1.0) } else { 0.5 };
        pts.push(x[i] - 0.5 * dx + frac * dx);
    }
    Ok(make_empirical(&pts, None)?)
}

/// ∂ₓₓu and paired-solve estimates of ∂ₓμu at the initial time of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolvedField {
    pub x0: f64,
    pub dx: f64,
    pub uxx: Vec<f64>,
    /// Column j holds ∂ₓμu(·, μ, x̃ⱼ) on the grid.
    pub columns: Vec<Vec<f64>>,
    pub atoms: Vec<f64>,
}

impl SolvedField {
    fn column(&self, x_tilde: f64) -> &[f64] {
        let j = self
            .atoms
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - x_tilde).abs().total_cmp(&(b.1 - x_tilde).abs()))
            .map(|(j, _)| j)
            .expect("at least one atom");
        &self.columns[j]
    }
}

impl FieldDerivs<f64> for SolvedField {
    fn dxx(&self, x: f64, _mu: &EmpiricalMeasure<f64>) -> f64 {
        lerp_uniform(&self.uxx, self.x0, self.dx, x).unwrap_or(f64::NAN)
    }
    fn dxmu(&self, x: f64, _mu: &EmpiricalMeasure<f64>, x_tilde: f64) -> f64 {
        lerp_uniform(self.column(x_tilde), self.x0, self.dx, x).unwrap_or(f64::NAN)
    }
}

fn warm(opts: &SolveOptions, base: &MfgSolution) -> SolveOptions {
    let mut o = opts.clone();
    o.grid = GridSpec::matching(&base.x_grid);
    o.init = PicardInit::Field(Arc::new(base.ux.clone()));
    o
}

/// Solves from `mu` and from each atom moved by ±h; column j is the central difference of
/// ∂ₓu at the initial time divided by 2h·wⱼ.
pub fn paired_xmu_field(
    model: &ModelSpec<f64>,
    mu: &EmpiricalMeasure<f64>,
    opts: &SolveOptions,
    h: f64,
) -> Result<SolvedField, SolverError> {
    if !(h > 0.0) {
        return Err(SolverError::Invalid("bump size must be positive".into()));
    }
    let base = solve_mfg(model, mu, opts)?;
    let o = warm(opts, &base);
    let columns = (0..mu.len())
        .into_par_iter()
        .map(|j| {
            let plus = solve_mfg(model, &mu.with_atom_moved(j, h), &o)?;
            let minus = solve_mfg(model, &mu.with_atom_moved(j, -h), &o)?;
            let scale = 2.0 * h * mu.weights()[j];
            Ok(plus.ux[0].iter().zip(&minus.ux[0]).map(|(a, b)| (a - b) / scale).collect())
        })
        .collect::<Result<Vec<Vec<f64>>, SolverError>>()?;
    Ok(SolvedField {
        x0: base.x_grid[0],
        dx: base.dx(),
        uxx: base.uxx[0].clone(),
        columns,
        atoms: mu.points().to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LipschitzMode {
    W1,
    W2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BumpKind {
    Uniform,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpRow {
    pub scale: f64,
    pub kind: BumpKind,
    pub distance: f64,
    pub max_diff: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzEstimate {
    pub lipschitz_estimate: f64,
    pub per_bump: Vec<BumpRow>,
}

impl LipschitzEstimate {
    /// Largest ratio observed at each bump scale, in input order.
    pub fn per_scale(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for r in &self.per_bump {
            match out.iter_mut().find(|(s, _)| *s == r.scale) {
                Some(e) => e.1 = e.1.max(r.ratio),
                None => out.push((r.scale, r.ratio)),
            }
        }
        out
    }

    /// (max − min)/max of the per-scale estimates.
    pub fn scale_variation(&self) -> f64 {
        let v: Vec<f64> = self.per_scale().iter().map(|p| p.1).collect();
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        if hi > 0.0 {
            (hi - lo) / hi
        } else {
            0.0
        }
    }
}

/// Ratio of the change of ∂ₓV(t₀, x, ·) at the probes to the W_q size of each bump.
///
/// Every scale uses a uniform shift and one seeded random displacement normalised to
/// 𝔼η² = scale².
pub fn estimate_xmu_lipschitz(
    model: &ModelSpec<f64>,
    mu0: &EmpiricalMeasure<f64>,
    x_probes: &[f64],
    bump_scales: &[f64],
    mode: LipschitzMode,
    opts: &SolveOptions,
    seed: u64,
) -> Result<LipschitzEstimate, SolverError> {
    if x_probes.is_empty() || bump_scales.iter().any(|&s| !(s > 0.0)) {
        return Err(SolverError::Invalid("need probes and positive bump scales".into()));
    }
    let base = solve_mfg(model, mu0, opts)?;
    let o = warm(opts, &base);
    let q = match mode {
        LipschitzMode::W1 => 1,
        LipschitzMode::W2 => 2,
    };
    let base_vals: Vec<f64> = x_probes.iter().map(|&x| base.ux_at(base.t_grid[0], x)).collect::<Result<_, _>>()?;
    let mut jobs = Vec::new();
    for (si, &s) in bump_scales.iter().enumerate() {
        jobs.push((s, BumpKind::Uniform, vec![s; mu0.len()]));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(si as u64);
        let z: Vec<f64> = (0..mu0.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = mu0.weights().iter().zip(&z).fold(0.0, |a, (w, v)| a + w * v * v).sqrt();
        jobs.push((s, BumpKind::Random, z.iter().map(|v| s * v / norm).collect()));
    }
    let per_bump = jobs
        .into_par_iter()
        .map(|(scale, kind, eta)| {
            let nu = mu0.displaced(&eta)?;
            let sol = solve_mfg(model, &nu, &o)?;
            let mut max_diff = 0.0f64;
            for (x, b) in x_probes.iter().zip(&base_vals) {
                max_diff = max_diff.max((sol.ux_at(sol.t_grid[0], *x)? - b).abs());
            }
            let distance = wq_distance(mu0, &nu, q)?;
            Ok(BumpRow { scale, kind, distance, max_diff, ratio: max_diff / distance })
        })
        .collect::<Result<Vec<_>, SolverError>>()?;
    let lipschitz_estimate = per_bump.iter().fold(0.0f64, |a, r| a.max(r.ratio));
    Ok(LipschitzEstimate { lipschitz_estimate, per_bump })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessianCheck {
    pub sup_uxx: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Fraction of nodes excluded on each side of the grid by the sup checks.
pub const BOUNDARY_WINDOW: f64 = 0.05;

/// Compares sup |∂ₓₓu| over the grid interior with L^u_xx(θ₃) from the ledger.
pub fn hessian_bound_check(sol: &MfgSolution, ledger: &ConstantLedger<f64>) -> HessianCheck {
    let n = sol.x_grid.len();
    let skip = ((n as f64 * BOUNDARY_WINDOW).floor() as usize).min((n - 1) / 2);
    let sup_uxx = sol
        .uxx
        .iter()
        .flat_map(|row| row[skip..n - skip].iter())
        .fold(0.0f64, |a, v| a.max(v.abs()));
    let bound = ledger.lxx_u_theta3;
    HessianCheck { sup_uxx, bound, pass: sup_uxx <= bound * 1.05 }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProbeOutcome {
    /// Both initializations converged to the same flow.
    Same,
    /// Both converged, to flows further apart than the threshold.
    Distinct,
    /// At least one initialization failed to converge.
    NoConvergence { init: &'static str, residual: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessProbe {
    pub sup_w1: f64,
    pub outcome: ProbeOutcome,
}

/// Threshold on sup_t W₁ below which two flows count as the same.
pub const PROBE_TOL: f64 = 1e-4;

/// Runs the Picard iteration from the zero and the terminal gradient and compares the flows.
pub fn uniqueness_probe(
    model: &ModelSpec<f64>,
    mu0: &EmpiricalMeasure<f64>,
    opts: &SolveOptions,
) -> Result<UniquenessProbe, SolverError> {
    let run = |init: PicardInit, name: &'static str| {
        let mut o = opts.clone();
        o.init = init;
        match solve_mfg(model, mu0, &o) {
            Ok(s) => Ok(Ok(s)),
            Err(SolverError::NoConvergence { residual, .. }) => Ok(Err(ProbeOutcome::NoConvergence { init: name, residual })),
            Err(e) => Err(e),
        }
    };
    let a = match run(PicardInit::Zero, "zero")? {
        Ok(s) => s,
        Err(o) => return Ok(UniquenessProbe { sup_w1: f64::NAN, outcome: o }),
    };
    let b = match run(PicardInit::Terminal, "terminal")? {
        Ok(s) => s,
        Err(o) => return Ok(UniquenessProbe { sup_w1: f64::NAN, outcome: o }),
    };
    let mut sup_w1 = 0.0f64;
    for k in 0..a.t_grid.len() {
        let d = wq_distance(&grid_measure(&a.x_grid, &a.rho[k]), &grid_measure(&b.x_grid, &b.rho[k]), 1)?;
        sup_w1 = sup_w1.max(d);
    }
    let outcome = if sup_w1 <= PROBE_TOL { ProbeOutcome::Same } else { ProbeOutcome::Distinct };
    Ok(UniquenessProbe { sup_w1, outcome })
}
