//! Monotonicity functionals on empirical lifts and a randomized certifier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::measures::{make_empirical, EmpiricalMeasure};
use crate::models::{eval_g_derivs, eval_h_derivs, ModelError, ModelSpec};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MonotonicityError {
    #[error("lambda{index} = {value}: {reason} (D4 requires lambda0 > 0, lambda2 > 0, lambda3 >= 0)")]
    NotInD4 { index: u8, value: f64, reason: &'static str },
    #[error("eta has {eta} entries but the measure has {atoms} atoms")]
    LengthMismatch { eta: usize, atoms: usize },
    #[error("d_pp H = {value} at atom {atom} is not positive")]
    StrictConvexityViolation { atom: usize, value: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Weights (λ₀, λ₁, λ₂, λ₃) restricted to D₄.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VecLambda<S: Scalar> {
    l0: S,
    l1: S,
    l2: S,
    l3: S,
}

impl<S: Scalar> VecLambda<S> {
    pub fn new(l0: S, l1: S, l2: S, l3: S) -> Result<Self, MonotonicityError> {
        let err = |index, value: S, reason| MonotonicityError::NotInD4 { index, value: value.as_f64(), reason };
        for (i, v) in [l0, l1, l2, l3].into_iter().enumerate() {
            if !v.finite() {
                return Err(err(i as u8, v, "not finite"));
            }
        }
        if !(l0 > S::zero()) {
            return Err(err(0, l0, "must be positive"));
        }
        if !(l2 > S::zero()) {
            return Err(err(2, l2, "must be positive"));
        }
        if l3 < S::zero() {
            return Err(err(3, l3, "must be nonnegative"));
        }
        Ok(Self { l0, l1, l2, l3 })
    }

    pub fn l0(&self) -> S {
        self.l0
    }
    pub fn l1(&self) -> S {
        self.l1
    }
    pub fn l2(&self) -> S {
        self.l2
    }
    pub fn l3(&self) -> S {
        self.l3
    }

    pub fn with_l0(&self, l0: S) -> Result<Self, MonotonicityError> {
        Self::new(l0, self.l1, self.l2, self.l3)
    }
}

/// Second derivatives of a field U(x, μ): ∂ₓₓU and ∂ₓμU.
pub trait FieldDerivs<S: Scalar>: Sync {
    fn dxx(&self, x: S, mu: &EmpiricalMeasure<S>) -> S;
    fn dxmu(&self, x: S, mu: &EmpiricalMeasure<S>, x_tilde: S) -> S;
}

/// Field given by two closures.
pub struct FnField<A, B> {
    pub dxx: A,
    pub dxmu: B,
}

impl<S, A, B> FieldDerivs<S> for FnField<A, B>
where
    S: Scalar,
    A: Fn(S, &EmpiricalMeasure<S>) -> S + Sync,
    B: Fn(S, &EmpiricalMeasure<S>, S) -> S + Sync,
{
    fn dxx(&self, x: S, mu: &EmpiricalMeasure<S>) -> S {
        (self.dxx)(x, mu)
    }
    fn dxmu(&self, x: S, mu: &EmpiricalMeasure<S>, x_tilde: S) -> S {
        (self.dxmu)(x, mu, x_tilde)
    }
}

/// U(x, μ) = ½a₀x² + a₁x·m(μ), with ∂ₓₓU = a₀ and ∂ₓμU = a₁.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticField<S: Scalar> {
    pub a0: S,
    pub a1: S,
}

impl<S: Scalar> FieldDerivs<S> for QuadraticField<S> {
    fn dxx(&self, _x: S, _mu: &EmpiricalMeasure<S>) -> S {
        self.a0
    }
    fn dxmu(&self, _x: S, _mu: &EmpiricalMeasure<S>, _x_tilde: S) -> S {
        self.a1
    }
}

/// The terminal cost G of a model viewed as a field.
pub struct TerminalField<'a, S: Scalar>(pub &'a ModelSpec<S>);

impl<S: Scalar> FieldDerivs<S> for TerminalField<'_, S> {
    fn dxx(&self, x: S, mu: &EmpiricalMeasure<S>) -> S {
        eval_g_derivs(self.0, x, mu).map(|d| d.gxx).unwrap_or_else(|_| S::lit(f64::NAN))
    }
    fn dxmu(&self, x: S, mu: &EmpiricalMeasure<S>, x_tilde: S) -> S {
        eval_g_derivs(self.0, x, mu).map(|d| d.gxmu.at(x_tilde)).unwrap_or_else(|_| S::lit(f64::NAN))
    }
}

/// Per-atom pieces shared by all functionals: ∂ₓₓU(ξᵢ) and Σⱼ wⱼ ∂ₓμU(ξᵢ, ξⱼ) ηⱼ.
fn lift_terms<S: Scalar, F: FieldDerivs<S> + ?Sized>(
    field: &F,
    xi: &EmpiricalMeasure<S>,
    eta: &[S],
) -> Result<(Vec<S>, Vec<S>), MonotonicityError> {
    if eta.len() != xi.len() {
        return Err(MonotonicityError::LengthMismatch { eta: eta.len(), atoms: xi.len() });
    }
    let pts = xi.points();
    let w = xi.weights();
    let dxx = pts.iter().map(|&x| field.dxx(x, xi)).collect();
    let inner = pts
        .iter()
        .map(|&x| {
            pts.iter()
                .zip(w)
                .zip(eta)
                .fold(S::zero(), |acc, ((&xt, &wj), &ej)| acc + wj * field.dxmu(x, xi, xt) * ej)
        })
        .collect();
    Ok((dxx, inner))
}

fn mean_sq<S: Scalar>(xi: &EmpiricalMeasure<S>, eta: &[S]) -> S {
    xi.weights().iter().zip(eta).fold(S::zero(), |a, (&w, &e)| a + w * e * e)
}

pub fn antimono_functional<S: Scalar, F: FieldDerivs<S> + ?Sized>(
    field: &F,
    lam: &VecLambda<S>,
    xi: &EmpiricalMeasure<S>,
    eta: &[S],
) -> Result<S, MonotonicityError> {
    let (dxx, inner) = lift_terms(field, xi, eta)?;
    let mut acc = S::zero();
    for i in 0..eta.len() {
        let e = eta[i];
        let term = lam.l0 * dxx[i] * e * e
            + lam.l1 * inner[i] * e
            + (dxx[i] * e) * (dxx[i] * e)
            + lam.l2 * inner[i] * inner[i]
            - lam.l3 * e * e;
        acc += xi.weights()[i] * term;
    }
    Ok(acc)
}

pub fn lasry_lions_functional<S: Scalar, F: FieldDerivs<S> + ?Sized>(
    field: &F,
    xi: &EmpiricalMeasure<S>,
    eta: &[S],
) -> Result<S, MonotonicityError> {
    let (_, inner) = lift_terms(field, xi, eta)?;
    Ok((0..eta.len()).fold(S::zero(), |a, i| a + xi.weights()[i] * inner[i] * eta[i]))
}

pub fn displacement_functional<S: Scalar, F: FieldDerivs<S> + ?Sized>(
    field: &F,
    xi: &EmpiricalMeasure<S>,
    eta: &[S],
    semi_lambda: S,
) -> Result<S, MonotonicityError> {
    let (dxx, inner) = lift_terms(field, xi, eta)?;
    let bilinear = (0..eta.len()).fold(S::zero(), |a, i| {
        a + xi.weights()[i] * (inner[i] * eta[i] + dxx[i] * eta[i] * eta[i])
    });
    Ok(bilinear - semi_lambda * mean_sq(xi, eta))
}

/// Displacement functional of the Hamiltonian along p = φ(x).
pub fn hamiltonian_displacement_functional<S: Scalar>(
    model: &ModelSpec<S>,
    phi: impl Fn(S) -> S,
    xi: &EmpiricalMeasure<S>,
    eta: &[S],
) -> Result<S, MonotonicityError> {
    if eta.len() != xi.len() {
        return Err(MonotonicityError::LengthMismatch { eta: eta.len(), atoms: xi.len() });
    }
    let pts = xi.points();
    let w = xi.weights();
    let quarter = S::lit(0.25);
    let mut acc = S::zero();
    for (i, &x) in pts.iter().enumerate() {
        let d = eval_h_derivs(model, x, xi, phi(x))?;
        if !(d.hpp > S::zero()) {
            return Err(MonotonicityError::StrictConvexityViolation { atom: i, value: d.hpp.as_f64() });
        }
        let mut xmu = S::zero();
        let mut pmu = S::zero();
        for j in 0..pts.len() {
            xmu += w[j] * d.hxmu.at(pts[j]) * eta[j];
            pmu += w[j] * d.hpmu.at(pts[j]) * eta[j];
        }
        acc += w[i] * ((xmu + d.hxx * eta[i]) * eta[i] + quarter * pmu * pmu / d.hpp);
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classification {
    pub lasry_lions: bool,
    pub displacement: bool,
    pub anti: bool,
}

/// Closed-form classification of U = ½a₀x² + a₁x·m(μ).
pub fn classify_quadratic<S: Scalar>(a0: S, a1: S, lam: &VecLambda<S>) -> Classification {
    let c0 = lam.l0 * a0 + a0 * a0;
    let c1 = lam.l1 * a1 + lam.l2 * a1 * a1;
    let worst = if c1 > S::zero() { c0 + c1 } else { c0 };
    Classification {
        lasry_lions: a1 >= S::zero(),
        displacement: a0 >= S::zero() && a1 >= -a0,
        anti: lam.l3 >= worst,
    }
}

/// Worst value of the anti-monotonicity functional for U = ½a₀x² + a₁x·m(μ), per unit 𝔼|η|².
pub fn quadratic_anti_worst<S: Scalar>(a0: S, a1: S, lam: &VecLambda<S>) -> S {
    let c0 = lam.l0 * a0 + a0 * a0 - lam.l3;
    let c1 = lam.l1 * a1 + lam.l2 * a1 * a1;
    if c1 > S::zero() {
        c0 + c1
    } else {
        c0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Notion<S: Scalar> {
    LasryLions,
    Displacement { semi_lambda: S },
    AntiMonotone(VecLambda<S>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum XiSource<S: Scalar> {
    /// Fresh standard normal atoms scaled by `radius` in every trial.
    Gaussian { atoms: usize, radius: S },
    /// One fixed measure; only η is randomized.
    Fixed(EmpiricalMeasure<S>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig<S: Scalar> {
    pub seed: u64,
    pub trials: usize,
    pub xi: XiSource<S>,
}

impl<S: Scalar> McConfig<S> {
    pub fn gaussian(seed: u64, trials: usize, atoms: usize) -> Self {
        Self { seed, trials, xi: XiSource::Gaussian { atoms, radius: S::one() } }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Violated,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness<S: Scalar> {
    pub trial: usize,
    pub xi: EmpiricalMeasure<S>,
    pub eta: Vec<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityEstimate<S: Scalar> {
    /// Worst functional value per unit 𝔼|η|², in the sign convention of the notion.
    pub value: S,
    /// Violation score of the worst trial: positive means the defining inequality fails.
    pub violation: S,
    pub std_error: S,
    pub samples: usize,
    pub verdict: Verdict,
    pub witness: Option<Witness<S>>,
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn draw_trial<S: Scalar>(cfg: &McConfig<S>, trial: usize) -> (EmpiricalMeasure<S>, Vec<S>) {
    let mut rng = trial_rng(cfg.seed, trial);
    let xi = match &cfg.xi {
        XiSource::Fixed(m) => m.clone(),
        XiSource::Gaussian { atoms, radius } => {
            let pts: Vec<S> = (0..(*atoms).max(1))
                .map(|_| S::lit(rng.sample::<f64, _>(StandardNormal)) * *radius)
                .collect();
            make_empirical(&pts, None).expect("gaussian atoms are finite")
        }
    };
    let n = xi.len();
    let eta: Vec<S> = if trial == 0 {
        vec![S::one(); n]
    } else {
        let mut e: Vec<S> = (0..n).map(|_| S::lit(rng.sample::<f64, _>(StandardNormal))).collect();
        if trial % 2 == 0 {
            let m = xi.weights().iter().zip(&e).fold(S::zero(), |a, (&w, &v)| a + w * v);
            e.iter_mut().for_each(|v| *v -= m);
        }
        e
    };
    (xi, eta)
}

fn score<S: Scalar, F: FieldDerivs<S> + ?Sized>(
    field: &F,
    notion: &Notion<S>,
    xi: &EmpiricalMeasure<S>,
    eta: &[S],
) -> Result<(S, S), MonotonicityError> {
    let norm = mean_sq(xi, eta);
    if !(norm > S::zero()) {
        return Ok((S::zero(), S::zero()));
    }
    let (value, violation) = match notion {
        Notion::LasryLions => {
            let v = lasry_lions_functional(field, xi, eta)? / norm;
            (v, -v)
        }
        Notion::Displacement { semi_lambda } => {
            let v = displacement_functional(field, xi, eta, *semi_lambda)? / norm;
            (v, -v)
        }
        Notion::AntiMonotone(lam) => {
            let v = antimono_functional(field, lam, xi, eta)? / norm;
            (v, v)
        }
    };
    Ok((value, violation))
}

/// Randomized search for violations of a monotonicity notion.
///
/// Trial 0 always uses η ≡ 1; even trials use a centred η. Each trial draws from its own
/// stream derived from (seed, trial), so results do not depend on scheduling.
pub fn mc_certify<S: Scalar, F: FieldDerivs<S> + ?Sized>(
    field: &F,
    notion: &Notion<S>,
    cfg: &McConfig<S>,
) -> Result<MonotonicityEstimate<S>, MonotonicityError> {
    let trials = cfg.trials.max(1);
    let scored: Vec<(S, S)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let (xi, eta) = draw_trial(cfg, t);
            score(field, notion, &xi, &eta)
        })
        .collect::<Result<_, _>>()?;
    let n = S::from_usize_lossy(trials);
    let mean = scored.iter().fold(S::zero(), |a, s| a + s.1) / n;
    let std_error = if trials > 1 {
        let var = scored.iter().fold(S::zero(), |a, s| a + (s.1 - mean) * (s.1 - mean))
            / S::from_usize_lossy(trials - 1);
        (var / n).sqrt()
    } else {
        S::zero()
    };
    let (worst_idx, &(value, violation)) = scored
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, &(S, S))>, (i, s)| match best {
            Some((_, b)) if b.1 >= s.1 => best,
            _ => Some((i, s)),
        })
        .expect("at least one trial");
    let slack = S::lit(3.0) * std_error + S::default_epsilon() * S::lit(1e4);
    let (verdict, witness) = if violation <= slack {
        (Verdict::Holds, None)
    } else {
        let (xi, eta) = draw_trial(cfg, worst_idx);
        let (_, replay) = score(field, notion, &xi, &eta)?;
        let verdict = if replay > slack { Verdict::Violated } else { Verdict::Inconclusive };
        (verdict, Some(Witness { trial: worst_idx, xi, eta }))
    };
    Ok(MonotonicityEstimate { value, violation, std_error, samples: trials, verdict, witness })
}
