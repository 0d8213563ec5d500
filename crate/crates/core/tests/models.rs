mod common;

use std::sync::Arc;

use common::loose_reg;
use mfg_antimono::measures::make_empirical;
use mfg_antimono::models::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn params() -> QuadraticParams<f64> {
    QuadraticParams { g0: -0.7, g1: 0.4, h_quad: 0.9, h_xmu: 0.3, h_xx: 0.6 }
}

fn model(a0: f64) -> ModelSpec<f64> {
    ModelSpec::quadratic(a0, params(), 1.0, loose_reg()).unwrap()
}

#[test]
fn quadratic_derivatives_match_finite_differences() {
    let m = model(1.7);
    let mu = make_empirical(&[-0.4, 0.1, 0.9], None).unwrap();
    let (x, p, h) = (0.35, -0.8, 1e-5);
    let d = eval_h_derivs(&m, x, &mu, p).unwrap();
    let hv = |x: f64, p: f64| eval_h_derivs(&m, x, &mu, p).unwrap().h;
    assert!((d.hx - (hv(x + h, p) - hv(x - h, p)) / (2.0 * h)).abs() < 1e-8);
    assert!((d.hp - (hv(x, p + h) - hv(x, p - h)) / (2.0 * h)).abs() < 1e-8);
    assert!((d.hxx - (hv(x + h, p) - 2.0 * hv(x, p) + hv(x - h, p)) / (h * h)).abs() < 1e-4);
    assert!((d.hpp - 0.9).abs() < 1e-15);
    assert!((d.hxp - 1.7).abs() < 1e-15);
    let g = eval_g_derivs(&m, x, &mu).unwrap();
    let gv = |x: f64| eval_g_derivs(&m, x, &mu).unwrap().g;
    assert!((g.gx - (gv(x + h) - gv(x - h)) / (2.0 * h)).abs() < 1e-8);
    assert_eq!(g.gxx, -0.7);
}

#[test]
fn lions_derivative_of_the_gradient_is_the_coupling() {
    let m = model(1.0);
    let mu = make_empirical(&[-1.0, 0.2, 0.5, 2.0], Some(&[0.1, 0.2, 0.3, 0.4])).unwrap();
    for j in 0..4 {
        let fd = lions_derivative_fd(|nu| eval_g_derivs(&m, 0.3, nu).unwrap().gx, &mu, j, DEFAULT_LIONS_STEP).unwrap();
        assert!((fd - 0.4).abs() < 1e-8, "atom {j}: {fd}");
        let fh = lions_derivative_fd(|nu| eval_h_derivs(&m, 0.3, nu, 0.0).unwrap().hx, &mu, j, 1e-4).unwrap();
        assert!((fh - 0.3).abs() < 1e-8);
    }
    assert_eq!(lions_derivative_fd(|nu| nu.mean(), &mu, 0, 0.0), Err(ModelError::ZeroStep));
    assert!(matches!(lions_derivative_fd(|nu| nu.mean(), &mu, 9, 1e-3), Err(ModelError::AtomIndex { .. })));
}

#[test]
fn custom_hamiltonian_receives_the_drift_terms() {
    let h0: H0Fn<f64> = Arc::new(|x, _mu, p| HDerivs {
        h: p.powi(4) / 4.0 + x.sin(),
        hx: x.cos(),
        hp: p.powi(3),
        hxx: -x.sin(),
        hxp: 0.0,
        hpp: 3.0 * p * p,
        hxmu: MeasureDeriv::Const(0.0),
        hpmu: MeasureDeriv::Func(Arc::new(|xt: f64| xt * 2.0)),
    });
    let g: GFn<f64> = Arc::new(|x, _mu| GDerivs { g: x, gx: 1.0, gxx: 0.0, gxmu: MeasureDeriv::Const(0.0) });
    let m = ModelSpec::new(
        DMatrix::from_element(1, 1, 2.0),
        HFamily::Custom(h0),
        GFamily::Custom(g),
        0.0,
        1.0,
        loose_reg(),
    )
    .unwrap();
    let mu = make_empirical(&[0.0], None).unwrap();
    let d = eval_h_derivs(&m, 0.5, &mu, 1.5).unwrap();
    assert!((d.h - (1.5f64.powi(4) / 4.0 + 0.5f64.sin() + 2.0 * 0.5 * 1.5)).abs() < 1e-14);
    assert!((d.hp - (3.375 + 1.0)).abs() < 1e-14);
    assert!((d.hx - (0.5f64.cos() + 3.0)).abs() < 1e-14);
    assert_eq!(d.hxp, 2.0);
    assert_eq!(d.hpmu.at(3.0), 6.0);
    assert!(m.quadratic_params().is_none());
    assert!(m.a0_scalar().is_ok());
}

#[test]
fn validation_rejects_bad_models() {
    let p = params();
    assert!(matches!(ModelSpec::quadratic(1.0, p, 0.0, loose_reg()), Err(ModelError::Horizon(_))));
    let mut r = loose_reg();
    r.gamma_hi = 0.4;
    assert!(matches!(ModelSpec::quadratic(1.0, p, 1.0, r), Err(ModelError::Regularity { name: "gamma_lo", .. })));
    let mut r = loose_reg();
    r.l2_g = -1.0;
    assert!(matches!(ModelSpec::quadratic(1.0, p, 1.0, r), Err(ModelError::Regularity { name: "l2_g", .. })));
    let mut r = loose_reg();
    r.la_bar = 0.5;
    assert!(ModelSpec::quadratic(1.0, p, 1.0, r).is_err());
    let mut bad = model(1.0);
    bad.beta = -0.1;
    assert!(matches!(bad.validate(), Err(ModelError::Beta(_))));
    let a = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
    assert!(matches!(model(1.0).with_a0(a), Err(ModelError::NonSquare(1, 2))));
    let two = model(1.0).with_a0(DMatrix::identity(2, 2)).unwrap();
    let mu = make_empirical(&[0.0], None).unwrap();
    assert_eq!(eval_h_derivs(&two, 0.0, &mu, 0.0).unwrap_err(), ModelError::Unsupported(2));
    let mut nan = params();
    nan.g1 = f64::NAN;
    assert_eq!(ModelSpec::quadratic(1.0, nan, 1.0, loose_reg()).unwrap_err(), ModelError::NonFinite("g1"));
}

proptest! {
    #[test]
    fn hamiltonian_is_convex_in_p(a0 in -3.0..3.0f64, x in -2.0..2.0f64, p in -2.0..2.0f64, q in -2.0..2.0f64) {
        let m = model(a0);
        let mu = make_empirical(&[x], None).unwrap();
        let h = |p| eval_h_derivs(&m, x, &mu, p).unwrap().h;
        let mid = h(0.5 * (p + q));
        prop_assert!(mid <= 0.5 * (h(p) + h(q)) + 1e-12);
    }

    #[test]
    fn gradient_shifts_with_the_mean(x in -2.0..2.0f64, c in -1.0..1.0f64) {
        let m = model(1.0);
        let mu = make_empirical(&[-0.5, 0.5], None).unwrap();
        let a = eval_g_derivs(&m, x, &mu).unwrap().gx;
        let b = eval_g_derivs(&m, x, &mu.shifted(c)).unwrap().gx;
        prop_assert!((b - a - 0.4 * c).abs() < 1e-12);
    }
}
