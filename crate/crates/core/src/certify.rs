//! Constant ledger for the anti-monotone well-posedness regime.

use nalgebra::{Complex, ComplexField, DMatrix, Matrix3};

use crate::models::{
    GFamily, HFamily, ModelError, ModelSpec, QuadraticParams, RegularityConstants,
};
use crate::monotonicity::{
    mc_certify, quadratic_anti_worst, McConfig, MonotonicityError, Notion, TerminalField,
    VecLambda, Verdict,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CertifyError {
    #[error("matrix must be square, got {0}x{1}")]
    NonSquare(usize, usize),
    #[error("theta1 = {0} is not below 1")]
    Theta1NotLessThanOne(f64),
    #[error("A1 is singular")]
    SingularA1,
    #[error("L^u_xx is only defined for theta >= theta3 = {theta3}, got {theta}")]
    DomainError { theta: f64, theta3: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("no passing ledger after {doublings} doublings (last M0 = {m0})")]
    ConstructionFailed { m0: f64, doublings: usize, last: Box<ConstantLedger<f64>> },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lambda(#[from] MonotonicityError),
}

/// Absolute tolerance on non-strict ledger inequalities.
pub const MARGIN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralReport<S: Scalar> {
    pub kappa_lo: S,
    pub kappa_hi: S,
    pub kappa_prime: S,
    pub opnorm: S,
}

fn check_square<S: Scalar>(a: &DMatrix<S>) -> Result<(), CertifyError> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(CertifyError::NonSquare(a.nrows(), a.ncols()));
    }
    Ok(())
}

fn min_max<S: Scalar>(it: impl Iterator<Item = S>) -> (S, S) {
    it.fold((S::max_value().unwrap(), S::min_value().unwrap()), |(lo, hi), v| {
        (if v < lo { v } else { lo }, if v > hi { v } else { hi })
    })
}

/// Largest singular value. The SVD iteration is capped; on stall the Gram eigenvalues are used.
pub fn op_norm<S: Scalar>(a: &DMatrix<S>) -> S {
    match a.clone().try_svd(false, false, S::default_epsilon(), 10_000) {
        Some(svd) => svd.singular_values.max(),
        None => (a.transpose() * a).symmetric_eigenvalues().max().max(S::zero()).sqrt(),
    }
}

/// Eigenvalues read off the real Schur form, 2×2 blocks solved directly.
pub fn eigenvalues<S: Scalar>(a: &DMatrix<S>) -> Vec<Complex<S>> {
    let d = a.nrows();
    let t = a.clone().schur().unpack().1;
    let tol = S::default_epsilon() * (S::one() + op_norm(a));
    let half = S::lit(0.5);
    let mut out = Vec::with_capacity(d);
    let mut i = 0;
    while i < d {
        if i + 1 < d && t[(i + 1, i)].abs() > tol {
            let (p, q, r, u) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            let mid = (p + u) * half;
            let disc = (p - u) * (p - u) * half * half + q * r;
            if disc >= S::zero() {
                let w = disc.sqrt();
                out.push(Complex::new(mid + w, S::zero()));
                out.push(Complex::new(mid - w, S::zero()));
            } else {
                let w = (-disc).sqrt();
                out.push(Complex::new(mid, w));
                out.push(Complex::new(mid, -w));
            }
            i += 2;
        } else {
            out.push(Complex::new(t[(i, i)], S::zero()));
            i += 1;
        }
    }
    out
}

fn sym_part<S: Scalar>(a: &DMatrix<S>) -> DMatrix<S> {
    (a + a.transpose()) * S::lit(0.5)
}

pub fn spectral<S: Scalar>(a: &DMatrix<S>) -> Result<SpectralReport<S>, CertifyError> {
    check_square(a)?;
    let (kappa_lo, kappa_hi) = min_max(sym_part(a).symmetric_eigenvalues().iter().copied());
    let (kappa_prime, _) = min_max(eigenvalues(a).iter().map(|z| z.re));
    let opnorm = op_norm(a);
    Ok(SpectralReport { kappa_lo, kappa_hi, kappa_prime, opnorm })
}

fn is_symmetric<S: Scalar>(a: &DMatrix<S>) -> bool {
    let scale = a.iter().fold(S::zero(), |m, v| if v.abs() > m { v.abs() } else { m });
    let skew = (a - a.transpose()).iter().fold(S::zero(), |m, v| if v.abs() > m { v.abs() } else { m });
    skew <= S::default_epsilon() * S::lit(16.0) * (S::one() + scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpBoundMethod {
    Symmetric,
    Jordan,
    ScaledSchur,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpDecayBound<S: Scalar> {
    pub la0_upper: S,
    pub violations: usize,
    /// Violations of |e^{−A₀t}| ≤ e^{−κ′t}; only tested for symmetric A₀.
    pub sharp_violations: Option<usize>,
    pub method: ExpBoundMethod,
    pub warning: Option<String>,
    /// Largest observed |e^{−A₀t}| divided by the bound.
    pub worst_ratio: S,
}

type CMat<S> = DMatrix<Complex<S>>;

fn cond_sq<S: Scalar>(q: &CMat<S>) -> Option<S> {
    let sv = q.clone().singular_values();
    let (lo, hi) = min_max(sv.iter().copied());
    if lo > S::zero() && hi.finite() {
        let c = hi / lo;
        Some(c * c)
    } else {
        None
    }
}

/// Columns forming a Jordan basis, one chain per eigenvalue cluster.
fn jordan_basis<S: Scalar>(a: &DMatrix<S>) -> Option<CMat<S>> {
    let d = a.nrows();
    let ac: CMat<S> = a.map(|v| Complex::new(v, S::zero()));
    let scale = S::one() + op_norm(a);
    let eig = eigenvalues(a);
    let cluster_tol = S::lit(1e-4) * scale;
    let null_tol = S::lit(1e-6) * scale;
    let mut used = vec![false; d];
    let mut cols: Vec<nalgebra::DVector<Complex<S>>> = Vec::with_capacity(d);
    let mut jdiag: Vec<(Complex<S>, bool)> = Vec::with_capacity(d);
    for i in 0..d {
        if used[i] {
            continue;
        }
        let members: Vec<usize> =
            (i..d).filter(|&j| !used[j] && (eig[j] - eig[i]).modulus() <= cluster_tol).collect();
        members.iter().for_each(|&j| used[j] = true);
        let k = members.len();
        let lam = members.iter().fold(Complex::new(S::zero(), S::zero()), |s, &j| s + eig[j])
            / Complex::new(S::from_usize_lossy(k), S::zero());
        let n = &ac - CMat::<S>::identity(d, d) * lam;
        let svd = n.clone().svd(false, true);
        let v_t = svd.v_t?;
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&x, &y| svd.singular_values[x].partial_cmp(&svd.singular_values[y]).unwrap());
        let geo = order.iter().filter(|&&x| svd.singular_values[x] <= null_tol).count();
        if k == 1 || geo == k {
            for &idx in order.iter().take(k) {
                cols.push(v_t.row(idx).adjoint());
                jdiag.push((lam, false));
            }
        } else if geo == 1 {
            // Single chain of length k inside ker N^k.
            let mut nk = CMat::<S>::identity(d, d);
            for _ in 0..k {
                nk = &nk * &n;
            }
            let svk = nk.clone().svd(false, true);
            let vk = svk.v_t?;
            let mut ok: Vec<usize> = (0..d).collect();
            ok.sort_by(|&x, &y| svk.singular_values[x].partial_cmp(&svk.singular_values[y]).unwrap());
            let w = CMat::<S>::from_columns(
                &ok.iter().take(k).map(|&idx| vk.row(idx).adjoint()).collect::<Vec<_>>(),
            );
            let mut nk1 = CMat::<S>::identity(d, d);
            for _ in 0..k - 1 {
                nk1 = &nk1 * &n;
            }
            let proj = &nk1 * &w;
            let sv = proj.svd(false, true);
            let vt = sv.v_t?;
            let top = (0..sv.singular_values.len())
                .max_by(|&x, &y| sv.singular_values[x].partial_cmp(&sv.singular_values[y]).unwrap())?;
            let mut q = &w * vt.row(top).adjoint();
            let mut chain = vec![q.clone()];
            for _ in 1..k {
                q = &n * &q;
                chain.push(q.clone());
            }
            chain.reverse();
            for (m, c) in chain.into_iter().enumerate() {
                cols.push(c);
                jdiag.push((lam, m > 0));
            }
        } else {
            return None;
        }
    }
    let q = CMat::<S>::from_columns(&cols);
    let mut j = CMat::<S>::zeros(d, d);
    for (c, &(lam, sup)) in jdiag.iter().enumerate() {
        j[(c, c)] = lam;
        if sup {
            j[(c - 1, c)] = Complex::new(S::one(), S::zero());
        }
    }
    let resid = (&ac * &q - &q * &j).map(|z| z.modulus()).max();
    let qn = q.map(|z| z.modulus()).max();
    if resid <= S::lit(1e-8) * scale * qn {
        Some(q)
    } else {
        None
    }
}

/// Bound δ^{−2(d−1)} from the Schur form A = U T U*, rescaled so the nilpotent part has norm ≤ 1.
fn scaled_schur_bound<S: Scalar>(a: &DMatrix<S>) -> S {
    let d = a.nrows();
    let ac: CMat<S> = a.map(|v| Complex::new(v, S::zero()));
    let (_, t) = nalgebra::Schur::new(ac).unpack();
    let mut nf = S::zero();
    for i in 0..d {
        for j in (i + 1)..d {
            nf += t[(i, j)].norm_sqr();
        }
    }
    let nf = nf.sqrt();
    let delta = if nf > S::one() { S::one() / nf } else { S::one() };
    let mut b = S::one();
    for _ in 0..2 * (d - 1) {
        b /= delta;
    }
    b
}

pub fn exp_decay_bound<S: Scalar>(a0: &DMatrix<S>, t_grid: &[S]) -> Result<ExpDecayBound<S>, CertifyError> {
    check_square(a0)?;
    if t_grid.iter().any(|&t| !(t >= S::zero())) {
        return Err(CertifyError::Invalid("t grid must be nonnegative".into()));
    }
    let spec = spectral(a0)?;
    let symmetric = is_symmetric(a0);
    let (la0_upper, method, warning) = if symmetric {
        (S::one(), ExpBoundMethod::Symmetric, None)
    } else {
        let schur = scaled_schur_bound(a0);
        match jordan_basis(a0).and_then(|q| cond_sq(&q)) {
            Some(b) if b <= schur => (b, ExpBoundMethod::Jordan, None),
            Some(_) => (schur, ExpBoundMethod::ScaledSchur, None),
            None => (
                schur,
                ExpBoundMethod::ScaledSchur,
                Some("no Jordan chain at working precision; using the rescaled Schur basis".to_string()),
            ),
        }
    };
    let root = la0_upper.sqrt();
    let tol = S::lit(1e-9);
    let mut violations = 0;
    let mut sharp = 0;
    let mut worst_ratio = S::zero();
    for &t in t_grid {
        let e = (a0 * (-t)).exp();
        let norm = op_norm(&e);
        let rhs = root * ((S::one() - spec.kappa_prime) * t).exp();
        if norm > rhs * (S::one() + tol) + tol {
            violations += 1;
        }
        if rhs > S::zero() && norm / rhs > worst_ratio {
            worst_ratio = norm / rhs;
        }
        if symmetric && norm > (-spec.kappa_prime * t).exp() * (S::one() + tol) + tol {
            sharp += 1;
        }
    }
    Ok(ExpDecayBound {
        la0_upper,
        violations,
        sharp_violations: symmetric.then_some(sharp),
        method,
        warning,
        worst_ratio,
    })
}

/// θ₁ = γ̄(1+L^V_xx)/√(4(γλ₀+2λ₃)), which must be below 1.
pub fn theta1<S: Scalar>(lam: &VecLambda<S>, gamma_lo: S, gamma_hi: S, lvxx: S) -> Result<S, CertifyError> {
    if !(gamma_lo > S::zero() && gamma_lo < gamma_hi) {
        return Err(CertifyError::Invalid("need 0 < gamma_lo < gamma_hi".into()));
    }
    let one = S::one();
    let num = gamma_hi * (one + lvxx);
    let den = (S::lit(4.0) * (gamma_lo * lam.l0() + S::lit(2.0) * lam.l3())).sqrt();
    let th = num / den;
    // Equivalent to λ₀ > (γ̄²(1+L)² − 8λ₃)/(4γ).
    let companion = lam.l0() > (num * num - S::lit(8.0) * lam.l3()) / (S::lit(4.0) * gamma_lo);
    if th >= one || !companion {
        return Err(CertifyError::Theta1NotLessThanOne(th.as_f64()));
    }
    Ok(th)
}

/// λ₀ = (γ̄²(1+L^V_xx)² − 8λ₃)/(4γ) + 1.
pub fn lambda0_choice<S: Scalar>(gamma_lo: S, gamma_hi: S, lvxx: S, l3: S) -> S {
    let g = gamma_hi * (S::one() + lvxx);
    (g * g - S::lit(8.0) * l3) / (S::lit(4.0) * gamma_lo) + S::one()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionMatrices<S: Scalar> {
    pub a1: Matrix3<S>,
    pub a2: Matrix3<S>,
    pub theta1: S,
}

pub fn condition_matrices<S: Scalar>(
    lam: &VecLambda<S>,
    theta1: S,
    gamma_lo: S,
    lvxx: S,
) -> Result<ConditionMatrices<S>, CertifyError> {
    if !(theta1 < S::one()) {
        return Err(CertifyError::Theta1NotLessThanOne(theta1.as_f64()));
    }
    let (l0, l1, l2, l3) = (lam.l0(), lam.l1(), lam.l2(), lam.l3());
    let one = S::one();
    let two = S::lit(2.0);
    let half = S::lit(0.5);
    let gap = one - theta1;
    let a1 = Matrix3::from_diagonal(&nalgebra::Vector3::new(
        S::lit(4.0) * gap,
        two * l2,
        gap * (l0 * gamma_lo + two * l3),
    ));
    let e13 = (l0 - half * l1).abs() + l3;
    let e23 = half * l1.abs() + l2 + l3;
    let base = Matrix3::new(l0, l0, e13, l0, l1.abs(), e23, e13, e23, l1.abs() + two * l3);
    let z = S::zero();
    let extra = Matrix3::new(z, one, one, one, l2, l2, one, l2, z);
    Ok(ConditionMatrices { a1, a2: base + extra * lvxx, theta1 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XpThreshold<S: Scalar> {
    /// Smallest eigenvalue of the symmetric part of A₁⁻¹A₂.
    pub kappa_ratio: S,
    pub stated_condition: bool,
    pub psd_condition: bool,
    /// Smallest L^H_xp for which A₁·L^H_xp − A₂·L^H₂ ⪰ 0 (A₁ positive definite).
    pub psd_threshold: S,
    /// Smallest eigenvalue of A₁·lxp_lo − A₂·l2h.
    pub psd_min_eig: S,
}

pub fn xp_threshold<S: Scalar>(cond: &ConditionMatrices<S>, l2h: S, lxp_lo: S) -> Result<XpThreshold<S>, CertifyError> {
    let a1 = cond.a1;
    let inv = a1.try_inverse().ok_or(CertifyError::SingularA1)?;
    if !inv.iter().all(|v| v.finite()) {
        return Err(CertifyError::SingularA1);
    }
    let r = inv * cond.a2;
    let rs = (r + r.transpose()) * S::lit(0.5);
    let kappa_ratio = rs.symmetric_eigenvalues().min();
    let tol = S::lit(MARGIN_TOL);
    let stated_condition = lxp_lo >= kappa_ratio * l2h - tol;
    let m = a1 * lxp_lo - cond.a2 * l2h;
    let psd_min_eig = ((m + m.transpose()) * S::lit(0.5)).symmetric_eigenvalues().min();
    let psd_condition = psd_min_eig >= -tol;
    let psd_threshold = match a1.cholesky() {
        Some(ch) => {
            let l_inv = ch.l().try_inverse().ok_or(CertifyError::SingularA1)?;
            let c = l_inv * cond.a2 * l_inv.transpose();
            let c = (c + c.transpose()) * S::lit(0.5);
            l2h * c.symmetric_eigenvalues().max()
        }
        None => S::lit(f64::NAN),
    };
    Ok(XpThreshold { kappa_ratio, stated_condition, psd_condition, psd_threshold, psd_min_eig })
}

/// θ₃ and the curve θ ↦ L^u_xx(θ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theta3<S: Scalar> {
    pub theta3: S,
    pub lvxx: S,
    l2a: S,
    lga: S,
}

pub fn theta3_lxx<S: Scalar>(l2h0: S, la_bar: S, lxxg_hi: S) -> Result<Theta3<S>, CertifyError> {
    if !(l2h0 > S::zero() && lxxg_hi >= S::zero() && la_bar >= S::one()) {
        return Err(CertifyError::Invalid("need l2h0 > 0, lxxg_hi >= 0, la_bar >= 1".into()));
    }
    let l2a = l2h0 * la_bar;
    let lga = lxxg_hi * la_bar;
    let one = S::one();
    let root = ((one + lga) * (one + lga) - one).sqrt();
    let theta3 = one + l2a * (one + lga + root);
    let mut out = Theta3 { theta3, lvxx: S::zero(), l2a, lga };
    out.lvxx = out.lxx_u(theta3)?;
    Ok(out)
}

impl<S: Scalar> Theta3<S> {
    /// (θ−1−L₂L^A)² − 2L₂L^G_xx(L^A)²(θ−1).
    pub fn discriminant(&self, theta: S) -> S {
        let c = theta - S::one();
        (c - self.l2a) * (c - self.l2a) - S::lit(2.0) * self.l2a * self.lga * c
    }

    pub fn lxx_u(&self, theta: S) -> Result<S, CertifyError> {
        let slack = S::default_epsilon() * S::lit(64.0) * self.theta3;
        if !(theta >= self.theta3 - slack) {
            return Err(CertifyError::DomainError { theta: theta.as_f64(), theta3: self.theta3.as_f64() });
        }
        if self.lga == S::zero() {
            return Ok(S::zero());
        }
        let c = theta - S::one();
        // Factored as (c − c₊)(c − c₋) with c₊c₋ = (L₂L^A)², exact at θ₃.
        let c_minus = self.l2a * self.l2a / (self.theta3 - S::one());
        let disc = (theta - self.theta3) * (c - c_minus);
        let root = if disc > S::zero() { disc.sqrt() } else { S::zero() };
        // Rationalized form of (c − a − √D)/a, free of cancellation.
        Ok(S::lit(2.0) * self.lga * c / (c - self.l2a + root))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedH<S: Scalar> {
    pub lxp_lo: S,
    pub lxp_hi: S,
    pub lxx_lo: S,
    pub lxx_hi: S,
    pub l2: S,
}

/// L^H_xp bounds and L^H₂ induced by A₀ and L₂^{H₀}.
pub fn derived_h_bounds<S: Scalar>(a0: &DMatrix<S>, l2h0: S) -> Result<(S, S, S), CertifyError> {
    let s = spectral(a0)?;
    Ok((s.kappa_lo - l2h0, s.opnorm + l2h0, l2h0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XpPolicy {
    /// Bind on A₁·L^H_xp − A₂·L^H₂ ⪰ 0.
    ProofPsd,
    /// Bind on L^H_xp ≥ κ(A₁⁻¹A₂)·L^H₂.
    Stated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check<S: Scalar> {
    pub name: String,
    pub pass: bool,
    pub margin: S,
    pub lhs: S,
    pub rhs: S,
    pub binding: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantLedger<S: Scalar> {
    pub spectral: SpectralReport<S>,
    pub exp_bound: ExpDecayBound<S>,
    pub la0_bound: S,
    pub theta3: S,
    pub lxx_u_theta3: S,
    pub lambda0: S,
    pub lambda: VecLambda<S>,
    pub theta1: S,
    pub cond: Option<ConditionMatrices<S>>,
    pub kappa_ratio: S,
    pub xp: Option<XpThreshold<S>>,
    pub derived_h: DerivedH<S>,
    pub policy: XpPolicy,
    pub checks: Vec<Check<S>>,
}

impl<S: Scalar> ConstantLedger<S> {
    pub fn check(&self, name: &str) -> Option<&Check<S>> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// True when every binding check passes.
    pub fn passed(&self) -> bool {
        self.checks.iter().filter(|c| c.binding).all(|c| c.pass)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| c.binding && !c.pass).map(|c| c.name.as_str()).collect()
    }

    /// Named scalar constants for reporting.
    pub fn constants(&self) -> Vec<(&'static str, S)> {
        let mut v = vec![
            ("kappa_lo", self.spectral.kappa_lo),
            ("kappa_hi", self.spectral.kappa_hi),
            ("kappa_prime", self.spectral.kappa_prime),
            ("opnorm", self.spectral.opnorm),
            ("la0_bound", self.la0_bound),
            ("theta3", self.theta3),
            ("lxx_u_theta3", self.lxx_u_theta3),
            ("lambda0", self.lambda0),
            ("lambda1", self.lambda.l1()),
            ("lambda2", self.lambda.l2()),
            ("lambda3", self.lambda.l3()),
            ("theta1", self.theta1),
            ("kappa_ratio", self.kappa_ratio),
            ("lxp_lo", self.derived_h.lxp_lo),
            ("lxp_hi", self.derived_h.lxp_hi),
            ("lxx_lo", self.derived_h.lxx_lo),
            ("lxx_hi", self.derived_h.lxx_hi),
            ("l2", self.derived_h.l2),
        ];
        if let Some(xp) = &self.xp {
            v.push(("psd_threshold", xp.psd_threshold));
            v.push(("psd_min_eig", xp.psd_min_eig));
        }
        v
    }
}

struct Checks<S: Scalar>(Vec<Check<S>>);

impl<S: Scalar> Checks<S> {
    fn push(&mut self, name: &str, lhs: S, rhs: S, strict: bool, binding: bool) {
        let margin = lhs - rhs;
        let pass = if strict { margin > S::zero() } else { margin >= -S::lit(MARGIN_TOL) };
        self.0.push(Check { name: name.to_string(), pass, margin, lhs, rhs, binding });
    }

    fn push_failed(&mut self, name: &str, lhs: S, binding: bool) {
        let nan = S::lit(f64::NAN);
        self.0.push(Check { name: name.to_string(), pass: false, margin: nan, lhs, rhs: nan, binding });
    }
}

fn exp_grid<S: Scalar>() -> Vec<S> {
    (0..=2000).map(|i| S::lit(i as f64 * 0.01)).collect()
}

/// Runs every check of the well-posedness theorem for `model` with weights `lam`.
pub fn certify_wellposedness<S: Scalar>(
    model: &ModelSpec<S>,
    lam: &VecLambda<S>,
    policy: XpPolicy,
) -> Result<ConstantLedger<S>, CertifyError> {
    model.validate()?;
    let reg: RegularityConstants<S> = model.reg;
    let one = S::one();
    let two = S::lit(2.0);
    let spec = spectral(&model.a0)?;
    let exp_bound = exp_decay_bound(&model.a0, &exp_grid())?;
    let th3 = theta3_lxx(reg.l2_h0, reg.la_bar, reg.lxx_g_hi)?;
    let lvxx = th3.lvxx;
    let (lxp_lo, lxp_hi, l2) = derived_h_bounds(&model.a0, reg.l2_h0)?;
    let derived_h = DerivedH { lxp_lo, lxp_hi, lxx_lo: reg.lxx_h0_lo, lxx_hi: reg.lxx_h0_hi, l2 };

    let mut c = Checks(Vec::new());
    c.push("i.gamma_lo_le_lxx_g", reg.lxx_g_hi, reg.gamma_lo, false, true);
    c.push("i.gamma_hi_gt_one", reg.gamma_hi, one, true, true);
    let th1_raw = reg.gamma_hi * (one + lvxx)
        / (S::lit(4.0) * (reg.gamma_lo * lam.l0() + two * lam.l3())).sqrt();
    c.push("i.theta1_lt_one", one, th1_raw, true, true);

    c.push("kA0.la0_bound", reg.la_bar, exp_bound.la0_upper, false, true);
    let th1 = theta1(lam, reg.gamma_lo, reg.gamma_hi, lvxx).ok();
    let cond = th1.and_then(|t| condition_matrices(lam, t, reg.gamma_lo, lvxx).ok());
    let xp = cond.as_ref().and_then(|cm| xp_threshold(cm, l2, lxp_lo).ok());
    let (stated_name, psd_name) = match policy {
        XpPolicy::ProofPsd => ("kA0.xp_stated", "kA0.xp_threshold"),
        XpPolicy::Stated => ("kA0.xp_threshold", "kA0.xp_psd"),
    };
    let mut xp_checks = Checks(Vec::new());
    match &xp {
        Some(x) => {
            xp_checks.push(stated_name, spec.kappa_lo, (one + x.kappa_ratio) * l2, false, policy == XpPolicy::Stated);
            xp_checks.push(psd_name, lxp_lo, x.psd_threshold, false, policy == XpPolicy::ProofPsd);
            // The PSD verdict comes from the smallest eigenvalue, not the derived threshold.
            let psd = xp_checks.0.iter_mut().find(|k| k.name == psd_name).expect("just pushed");
            psd.pass = x.psd_condition;
        }
        None => {
            xp_checks.push_failed(stated_name, spec.kappa_lo, policy == XpPolicy::Stated);
            xp_checks.push_failed(psd_name, lxp_lo, policy == XpPolicy::ProofPsd);
        }
    }
    xp_checks.0.sort_by_key(|k| !k.binding);
    c.0.extend(xp_checks.0);
    c.push("kA0.kappa_prime_ge_theta3", spec.kappa_prime, th3.theta3, false, true);
    c.push("kA0.opnorm_vs_gamma_hi", reg.gamma_hi * (spec.kappa_lo - l2), spec.opnorm + l2, false, true);

    let band = spec.kappa_lo - reg.l2_h0;
    c.push("LH0.lo_positive", reg.lxx_h0_lo, S::zero(), true, true);
    c.push("LH0.lower", reg.lxx_h0_lo, reg.gamma_lo * band, false, true);
    c.push("LH0.order", reg.lxx_h0_hi, reg.lxx_h0_lo, false, true);
    c.push("LH0.upper_gamma", reg.gamma_hi * band, reg.lxx_h0_hi, false, true);
    c.push("LH0.upper_kappa_prime", two * reg.lxx_g_hi * (spec.kappa_prime - one), reg.lxx_h0_hi, false, true);

    match &model.g_family {
        GFamily::Quadratic(q) => {
            let worst = quadratic_anti_worst(q.g0, q.g1, lam);
            c.push("G.anti_monotone", S::zero(), worst, false, true);
        }
        GFamily::Custom(_) => {
            let est = mc_certify(&TerminalField(model), &Notion::AntiMonotone(*lam), &McConfig::gaussian(0, 256, 16))?;
            c.push("G.anti_monotone", S::zero(), est.violation, false, true);
            let g = c.0.last_mut().expect("just pushed");
            g.pass = est.verdict == Verdict::Holds;
        }
    }

    if let HFamily::Quadratic(h) = &model.h0_family {
        c.push("data.h_quad_le_l2h0", reg.l2_h0, h.h_quad.abs(), false, true);
        c.push("data.h_xmu_le_l2h0", reg.l2_h0, h.h_xmu.abs(), false, true);
        c.push("data.h_xx_ge_lo", h.h_xx, reg.lxx_h0_lo, false, true);
        c.push("data.h_xx_le_hi", reg.lxx_h0_hi, h.h_xx, false, true);
    }
    if let GFamily::Quadratic(g) = &model.g_family {
        c.push("data.g0_le_lxx_g", reg.lxx_g_hi, g.g0.abs(), false, true);
        c.push("data.g1_le_l2g", reg.l2_g, g.g1.abs(), false, true);
    }

    let nan = S::lit(f64::NAN);
    Ok(ConstantLedger {
        spectral: spec,
        la0_bound: exp_bound.la0_upper,
        exp_bound,
        theta3: th3.theta3,
        lxx_u_theta3: lvxx,
        lambda0: lam.l0(),
        lambda: *lam,
        theta1: th1_raw,
        kappa_ratio: xp.map(|x| x.kappa_ratio).unwrap_or(nan),
        cond,
        xp,
        derived_h,
        policy,
        checks: c.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example72Params {
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l2g: f64,
    pub l2h0: f64,
    pub m0_start: f64,
    pub max_doublings: usize,
    pub horizon: f64,
    pub policy: XpPolicy,
}

impl Default for Example72Params {
    fn default() -> Self {
        Self {
            alpha_lo: 1.0,
            alpha_hi: 1.0,
            gamma_lo: 0.5,
            gamma_hi: 2.0,
            l1: 1.0,
            l2: 1.0,
            l3: 0.0,
            l2g: 1.0,
            l2h0: 1.0,
            m0_start: 2.0,
            max_doublings: 60,
            horizon: 0.5,
            policy: XpPolicy::ProofPsd,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Example72 {
    pub m0: f64,
    pub lambda0: f64,
    pub lambda: VecLambda<f64>,
    pub model: ModelSpec<f64>,
    pub ledger: ConstantLedger<f64>,
}

/// Model and weights of the concave-terminal, strongly-drifting family at scale M₀.
pub fn example72_instance(p: &Example72Params, m0: f64) -> Result<(ModelSpec<f64>, VecLambda<f64>), CertifyError> {
    if !(p.gamma_hi > 1.0 && p.gamma_lo > 0.0 && p.gamma_lo < p.gamma_hi) {
        return Err(CertifyError::Invalid("need 0 < gamma_lo < gamma_hi and gamma_hi > 1".into()));
    }
    if !(p.alpha_lo > 0.0 && p.alpha_lo <= p.alpha_hi && p.l2g > 0.0 && p.l2h0 > 0.0) {
        return Err(CertifyError::Invalid("need 0 < alpha_lo <= alpha_hi and positive L2 constants".into()));
    }
    // Validates (λ₁, λ₂, λ₃) before λ₀ is known.
    VecLambda::new(1.0, p.l1, p.l2, p.l3)?;
    let a0 = m0 * m0 * m0;
    let lxx_g_hi = p.alpha_hi * m0;
    let band = a0 - p.l2h0;
    let reg = RegularityConstants {
        l2_h0: p.l2h0,
        lxx_h0_lo: p.gamma_lo * band,
        lxx_h0_hi: p.gamma_hi * band,
        l2_g: p.l2g,
        lxx_g_hi,
        gamma_lo: p.gamma_lo,
        gamma_hi: p.gamma_hi,
        la_bar: 1.0,
    };
    let params = QuadraticParams {
        g0: -p.alpha_lo * m0,
        g1: -p.l2g.min(p.alpha_lo * m0),
        h_quad: p.l2h0,
        h_xmu: 0.0,
        h_xx: p.gamma_lo * band,
    };
    let model = ModelSpec::quadratic(a0, params, p.horizon, reg)?;
    let th3 = theta3_lxx(reg.l2_h0, reg.la_bar, reg.lxx_g_hi)?;
    let lambda0 = lambda0_choice(p.gamma_lo, p.gamma_hi, th3.lvxx, p.l3);
    let lam = VecLambda::new(lambda0, p.l1, p.l2, p.l3)?;
    Ok((model, lam))
}

/// Doubling search for the smallest M₀ whose ledger passes.
pub fn construct_example72(p: &Example72Params) -> Result<Example72, CertifyError> {
    let mut m0 = p.m0_start;
    let mut last = None;
    for _ in 0..=p.max_doublings {
        let (model, lam) = example72_instance(p, m0)?;
        let ledger = certify_wellposedness(&model, &lam, p.policy)?;
        if ledger.passed() {
            return Ok(Example72 { m0, lambda0: lam.l0(), lambda: lam, model, ledger });
        }
        last = Some(ledger);
        m0 *= 2.0;
    }
    Err(CertifyError::ConstructionFailed {
        m0: m0 / 2.0,
        doublings: p.max_doublings,
        last: Box::new(last.expect("at least one attempt")),
    })
}
