#![allow(dead_code)]

use mfg_antimono::certify::{example72_instance, Example72Params, XpPolicy};
use mfg_antimono::measures::{make_empirical, EmpiricalMeasure};
use mfg_antimono::models::{ModelSpec, QuadraticParams, RegularityConstants};
use mfg_antimono::monotonicity::VecLambda;

pub fn loose_reg() -> RegularityConstants<f64> {
    RegularityConstants {
        l2_h0: 1.0,
        lxx_h0_lo: 0.0,
        lxx_h0_hi: 1.0,
        l2_g: 1.0,
        lxx_g_hi: 1.0,
        gamma_lo: 0.5,
        gamma_hi: 2.0,
        la_bar: 1.0,
    }
}

/// Strongly coupled linear-quadratic model with a sizeable Q₀.
pub fn lq_model() -> ModelSpec<f64> {
    let p = QuadraticParams { g0: -0.5, g1: -0.5, h_quad: 1.0, h_xmu: 0.25, h_xx: 0.0 };
    ModelSpec::quadratic(0.5, p, 0.5, loose_reg()).unwrap()
}

/// The M₀ = 2 member of the concave family, certified under the stated threshold.
pub fn certified_model() -> (ModelSpec<f64>, VecLambda<f64>) {
    let p = Example72Params { policy: XpPolicy::Stated, ..Default::default() };
    example72_instance(&p, 2.0).unwrap()
}

pub fn spread_measure(center: f64, width: f64, n: usize) -> EmpiricalMeasure<f64> {
    let pts: Vec<f64> = (0..n).map(|k| center + width * ((k as f64 + 0.5) / n as f64 - 0.5)).collect();
    make_empirical(&pts, None).unwrap()
}
