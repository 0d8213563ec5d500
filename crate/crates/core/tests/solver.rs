mod common;

use std::sync::Arc;

use common::{certified_model, loose_reg, lq_model, spread_measure};
use mfg_antimono::certify::{certify_wellposedness, XpPolicy};
use mfg_antimono::measures::make_empirical;
use mfg_antimono::models::*;
use mfg_antimono::monotonicity::VecLambda;
use mfg_antimono::solver::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn opts(t_steps: usize, dx: f64) -> SolveOptions {
    SolveOptions { t_steps, grid: GridSpec::new(dx), tol: 1e-10, ..Default::default() }
}

fn quad(a0: f64, p: QuadraticParams<f64>, horizon: f64) -> ModelSpec<f64> {
    ModelSpec::quadratic(a0, p, horizon, loose_reg()).unwrap()
}

fn max_oracle_error(sol: &MfgSolution, ric: &RiccatiSolution) -> f64 {
    let mp = ric.mean_path(sol.t_grid[0], sol.mu0.mean());
    let mut err = 0.0f64;
    for (k, &t) in sol.t_grid.iter().enumerate() {
        for (i, &x) in sol.x_grid.iter().enumerate() {
            err = err.max((sol.ux[k][i] - ric.ux(t, x, mp.at(t))).abs());
        }
    }
    err
}

#[test]
fn riccati_matches_the_separable_closed_form() {
    let p = QuadraticParams { g0: -0.5, g1: 0.0, h_quad: 1.0, h_xmu: 0.0, h_xx: 0.0 };
    let ric = riccati_oracle(&quad(1.0, p, 1.0), DEFAULT_RICCATI_STEPS).unwrap();
    let k = -0.5 / 1.5;
    for i in 0..=20 {
        let t = i as f64 / 20.0;
        let e = k * (2.0 * (t - 1.0)).exp();
        let exact = 2.0 * e / (1.0 - e);
        assert!((ric.p_at(t) - exact).abs() < 1e-10, "t = {t}");
        assert!(ric.q_at(t).abs() < 1e-15);
    }
}

#[test]
fn riccati_zero_fixed_points() {
    let p = QuadraticParams { g0: 0.0, g1: 0.7, h_quad: 1.0, h_xmu: 0.0, h_xx: 0.0 };
    let ric = riccati_oracle(&quad(0.8, p, 1.0), 256).unwrap();
    assert!(ric.p_nodes().iter().all(|&v| v == 0.0));
    let p = QuadraticParams { g1: 0.0, ..p };
    let ric = riccati_oracle(&quad(0.8, p, 1.0), 256).unwrap();
    assert!(ric.q_nodes().iter().all(|&v| v == 0.0));
}

#[test]
fn riccati_detects_blow_up() {
    let p = QuadraticParams { g0: -5.0, g1: 0.0, h_quad: 1.0, h_xmu: 0.0, h_xx: 0.0 };
    let err = riccati_oracle(&quad(1.0, p, 1.0), DEFAULT_RICCATI_STEPS).unwrap_err();
    let t_star = 1.0 - (5.0f64 / 3.0).ln() / 2.0;
    match err {
        SolverError::BlowUp { t } => assert!((t - t_star).abs() < 0.01, "{t} vs {t_star}"),
        e => panic!("{e}"),
    }
}

#[test]
fn oracle_ansatz_solves_the_master_equation() {
    for model in [lq_model(), certified_model().0] {
        let ric = riccati_oracle(&model, DEFAULT_RICCATI_STEPS).unwrap();
        let mu = spread_measure(0.4, 1.0, 9);
        for &t in &[0.05, 0.2, 0.31, 0.45] {
            for &x in &[-1.0, 0.0, 0.7, 2.0] {
                let r = vector_master_residual(&model, &RiccatiAt { sol: &ric, t }, x, &mu).unwrap();
                assert!(r.abs() < 1e-6, "t = {t}, x = {x}: {r:e}");
            }
        }
        let at = RiccatiAt { sol: &ric, t: 0.25 };
        let base = vector_master_residual(&model, &at, 0.5, &mu).unwrap();
        let d1 = vector_master_residual(&model, &Perturbed { base: &at, eps: 1e-3 }, 0.5, &mu).unwrap() - base;
        let d2 = vector_master_residual(&model, &Perturbed { base: &at, eps: 2e-3 }, 0.5, &mu).unwrap() - base;
        assert!(d1.abs() > 1e-5);
        assert!((d2 / d1 - 2.0).abs() < 0.01, "{d1} {d2}");
    }
}

#[test]
fn linear_terminal_cost_gives_an_exponential() {
    let h0: H0Fn<f64> = Arc::new(|_, _, _| HDerivs {
        h: 0.0,
        hx: 0.0,
        hp: 0.0,
        hxx: 0.0,
        hxp: 0.0,
        hpp: 0.0,
        hxmu: MeasureDeriv::Const(0.0),
        hpmu: MeasureDeriv::Const(0.0),
    });
    let c = 1.3;
    let g: GFn<f64> = Arc::new(move |x, _| GDerivs { g: c * x, gx: c, gxx: 0.0, gxmu: MeasureDeriv::Const(0.0) });
    let a0 = 0.6;
    let model = ModelSpec::new(DMatrix::from_element(1, 1, a0), HFamily::Custom(h0), GFamily::Custom(g), 0.0, 1.0, loose_reg()).unwrap();
    let sol = solve_mfg(&model, &spread_measure(0.0, 1.0, 8), &opts(200, 0.02)).unwrap();
    let n = sol.x_grid.len();
    for (k, &t) in sol.t_grid.iter().enumerate() {
        let exact = c * (-a0 * (1.0 - t)).exp();
        for i in n / 4..3 * n / 4 {
            assert!((sol.ux[k][i] - exact).abs() < 1e-4, "t = {t}: {} vs {exact}", sol.ux[k][i]);
        }
    }
}

#[test]
fn zero_length_horizon_returns_terminal_data() {
    let model = lq_model();
    let mu = spread_measure(0.2, 1.0, 5);
    let o = SolveOptions { t0: model.horizon, ..opts(50, 0.05) };
    let sol = solve_mfg(&model, &mu, &o).unwrap();
    assert_eq!(sol.t_grid, vec![model.horizon]);
    let rho = sol.rho_measure(0);
    for (i, &x) in sol.x_grid.iter().enumerate() {
        assert_eq!(sol.u[0][i], eval_g_derivs(&model, x, &rho).unwrap().g);
    }
    assert!((sol.mean_ux_error(&model)).abs() < 1e-12);
    let r = simulate_fbsde(&model, &sol, &[0.1, 0.3], 10, 1, NoiseMode::Brownian).unwrap();
    assert_eq!(r.y_check, 0.0);
    let (_, lam) = certified_model();
    let ledger = certify_wellposedness(&certified_model().0, &lam, XpPolicy::Stated).unwrap();
    let (cm, _) = certified_model();
    let term = solve_mfg(&cm, &mu, &SolveOptions { t0: cm.horizon, ..opts(10, 0.05) }).unwrap();
    let h = hessian_bound_check(&term, &ledger);
    assert!((h.sup_uxx - 2.0).abs() < 1e-9);
    assert!(h.pass);
}

trait TerminalError {
    fn mean_ux_error(&self, model: &ModelSpec<f64>) -> f64;
}

impl TerminalError for MfgSolution {
    fn mean_ux_error(&self, model: &ModelSpec<f64>) -> f64 {
        let k = self.t_grid.len() - 1;
        let rho = self.rho_measure(k);
        let n = self.x_grid.len();
        (1..n - 1).map(|i| (self.ux[k][i] - eval_g_derivs(model, self.x_grid[i], &rho).unwrap().gx).abs()).fold(0.0, f64::max)
    }
}

#[test]
fn solution_invariants() {
    let model = lq_model();
    let sol = solve_mfg(&model, &spread_measure(0.3, 1.2, 16), &opts(100, 0.02)).unwrap();
    for k in 0..sol.t_grid.len() {
        assert!((sol.mass(k) - 1.0).abs() < 1e-8);
        assert!(sol.rho[k].iter().all(|&m| m >= 0.0));
    }
    let k = sol.t_grid.len() - 1;
    let rho = sol.rho_measure(k);
    for (i, &x) in sol.x_grid.iter().enumerate() {
        assert_eq!(sol.u[k][i], eval_g_derivs(&model, x, &rho).unwrap().g);
    }
    assert!(sol.mean_ux_error(&model) < 1e-10);
    let r = &sol.picard_residuals;
    assert!(r.windows(2).all(|w| w[1] < w[0]), "{r:?}");
    assert!(*r.last().unwrap() < 1e-10);
    assert!(sol.master_residual(&model, 0.2, 0.3).unwrap().abs() < 1e-3);
    assert!(sol.master_residual(&model, 0.2, 1e3).is_err());
}

#[test]
fn oracle_error_shrinks_with_the_grid() {
    let model = lq_model();
    let ric = riccati_oracle(&model, DEFAULT_RICCATI_STEPS).unwrap();
    let mu = spread_measure(0.5, 1.0, 16);
    let coarse = max_oracle_error(&solve_mfg(&model, &mu, &opts(100, 0.04)).unwrap(), &ric);
    let fine = max_oracle_error(&solve_mfg(&model, &mu, &opts(200, 0.02)).unwrap(), &ric);
    assert!(coarse < 2e-2, "{coarse}");
    assert!(fine <= 0.6 * coarse, "{fine} vs {coarse}");
}

#[test]
fn solver_errors() {
    let model = lq_model();
    let mu = spread_measure(0.0, 1.0, 4);
    let one = SolveOptions { max_picard: 1, ..opts(20, 0.05) };
    assert!(matches!(solve_mfg(&model, &mu, &one), Err(SolverError::NoConvergence { iterations: 1, .. })));
    let mut noisy = model.clone();
    noisy.beta = 0.5;
    assert!(matches!(solve_mfg(&noisy, &mu, &opts(20, 0.05)), Err(SolverError::Invalid(_))));
    let narrow = SolveOptions { grid: GridSpec::fixed(0.0, 0.3, 0.05), ..opts(20, 0.05) };
    assert!(matches!(solve_mfg(&model, &mu, &narrow), Err(SolverError::Invalid(_))));
    let repel = quad(-4.0, QuadraticParams::default(), 1.0);
    let small = SolveOptions { grid: GridSpec::fixed(0.0, 2.0, 0.05), ..opts(50, 0.05) };
    assert!(matches!(solve_mfg(&repel, &spread_measure(0.0, 0.5, 4), &small), Err(SolverError::GridEscape { .. })));
    let bad_tol = SolveOptions { tol: 0.0, ..opts(20, 0.05) };
    assert!(solve_mfg(&model, &mu, &bad_tol).is_err());
}

#[test]
fn characteristics_in_the_noiseless_limit() {
    let model = lq_model();
    let mu = make_empirical(&[0.4], None).unwrap();
    let sol = solve_mfg(&model, &mu, &opts(400, 0.01)).unwrap();
    let r = simulate_fbsde(&model, &sol, &[0.4], 400, 0, NoiseMode::Frozen).unwrap();
    assert!(r.y_check < 1e-3, "{}", r.y_check);
    let ric = riccati_oracle(&model, DEFAULT_RICCATI_STEPS).unwrap();
    // Deterministic path: ẋ = −(a₀x + P x + Q m) with m following the mean ODE.
    let mp = ric.mean_path(0.0, 0.4);
    let mut x = 0.4;
    let n = 4000;
    let h = 0.5 / n as f64;
    for k in 0..n {
        let t = k as f64 * h;
        x -= h * (0.5 * x + ric.ux(t, x, mp.at(t)));
    }
    assert!((r.x_paths[0].last().unwrap() - x).abs() < 5e-3);
}

#[test]
fn backward_reconstruction_converges() {
    let model = lq_model();
    let mu = spread_measure(0.0, 1.0, 8);
    let sol = solve_mfg(&model, &mu, &opts(400, 0.01)).unwrap();
    let xi: Vec<f64> = (0..400).map(|k| mu.points()[k % 8]).collect();
    let a = simulate_fbsde(&model, &sol, &xi, 25, 9, NoiseMode::Brownian).unwrap();
    let b = simulate_fbsde(&model, &sol, &xi, 50, 9, NoiseMode::Brownian).unwrap();
    let c = simulate_fbsde(&model, &sol, &xi, 100, 9, NoiseMode::Brownian).unwrap();
    assert!(b.y_check < a.y_check && c.y_check < b.y_check, "{} {} {}", a.y_check, b.y_check, c.y_check);
    assert!(c.y_check < 0.75 * a.y_check);
}

#[test]
fn zero_perturbation_gives_zero_monitor() {
    let (model, lam) = certified_model();
    let mu = spread_measure(0.3, 0.6, 8);
    let sol = solve_mfg(&model, &mu, &opts(100, 0.04)).unwrap();
    let cfg = FlowConfig { n_steps: 50, ..Default::default() };
    let tr = simulate_linearized_flow(&model, &sol, &lam, &mu, &[0.0; 8], &cfg).unwrap();
    assert!(tr.gamma_series.iter().all(|&g| g == 0.0));
    assert!(tr.dx_particles.iter().flatten().all(|&d| d == 0.0));
}

#[test]
fn decoupled_flow_follows_the_scalar_ode() {
    let p = QuadraticParams { g0: -0.8, g1: 0.0, h_quad: 1.0, h_xmu: 0.0, h_xx: 0.2 };
    let model = quad(1.0, p, 0.5);
    let lam = VecLambda::new(3.0, 1.0, 1.0, 0.5).unwrap();
    let mu = spread_measure(0.0, 1.0, 6);
    let sol = solve_mfg(&model, &mu, &opts(200, 0.02)).unwrap();
    let eta = [1.0, -0.5, 0.3, 0.8, -1.2, 0.4];
    let cfg = FlowConfig { n_steps: 200, seed: 4, paths_per_atom: 3, bump: 0.05, noise: NoiseMode::Brownian };
    let tr = simulate_linearized_flow(&model, &sol, &lam, &mu, &eta, &cfg).unwrap();
    assert!(tr.upsilon.iter().flatten().all(|u| u.abs() < 1e-6));
    let ric = riccati_oracle(&model, DEFAULT_RICCATI_STEPS).unwrap();
    let n = 20000;
    let h = 0.5 / n as f64;
    let mut decay = 1.0;
    for k in 0..n {
        let t = (k as f64 + 0.5) * h;
        decay *= (-(1.0 + ric.p_at(t)) * h).exp();
    }
    let last = tr.t_grid.len() - 1;
    for (j, &d) in tr.dx_particles[last].iter().enumerate() {
        let expected = eta[j / 3] * decay;
        assert!((d - expected).abs() < 2e-3 * eta[j / 3].abs().max(0.1), "{d} vs {expected}");
    }
    for k in [0, 50, last] {
        assert!((tr.gamma_series[k] - tr.recompute_gamma(k, &lam)).abs() < 1e-12);
        let g = lam.l0() * tr.ibar_series[k] + lam.l1() * tr.i_series[k] - lam.l3() * tr.mean_dx2[k];
        let bar2: f64 = tr.upsilon_bar[k].iter().zip(&tr.weights).map(|(b, w)| w * b * b).sum();
        let ups2: f64 = tr.upsilon[k].iter().zip(&tr.weights).map(|(b, w)| w * b * b).sum();
        assert!((tr.gamma_series[k] - (g + bar2 + lam.l2() * ups2)).abs() < 1e-10);
    }
}

#[test]
fn monitor_rises_on_the_certified_model() {
    let (model, lam) = certified_model();
    let mu = spread_measure(0.3, 0.6, 16);
    let sol = solve_mfg(&model, &mu, &opts(100, 0.04)).unwrap();
    let eta: Vec<f64> = (0..16).map(|k| (k as f64 * 0.9).cos()).collect();
    let cfg = FlowConfig { n_steps: 100, seed: 2, paths_per_atom: 2, bump: 0.05, noise: NoiseMode::Brownian };
    let tr = simulate_linearized_flow(&model, &sol, &lam, &mu, &eta, &cfg).unwrap();
    assert!(tr.gamma_series[0] < 0.0);
    assert!(*tr.gamma_series.last().unwrap() <= 0.0);
    assert!(tr.gamma_series[0] <= *tr.gamma_series.last().unwrap());
    assert!(tr.min_increment() > -1e-3);
    let other = simulate_linearized_flow(&model, &sol, &lam, &spread_measure(0.3, 0.5, 16), &eta, &cfg);
    assert!(other.is_err());
}

#[test]
fn lipschitz_estimates() {
    let model = lq_model();
    let ric = riccati_oracle(&model, DEFAULT_RICCATI_STEPS).unwrap();
    let mu = spread_measure(0.2, 1.0, 16);
    let probes = [-0.5, 0.0, 0.5, 1.0];
    let est = estimate_xmu_lipschitz(&model, &mu, &probes, &[0.1, 0.05], LipschitzMode::W2, &opts(200, 0.02), 3).unwrap();
    let q0 = ric.q_at(0.0).abs();
    assert!((est.lipschitz_estimate - q0).abs() < 0.05 * q0, "{} vs {q0}", est.lipschitz_estimate);
    assert!(est.scale_variation() < 0.2);
    assert_eq!(est.per_bump.len(), 4);
    let free = quad(0.5, QuadraticParams { g0: -0.5, g1: 0.0, h_quad: 1.0, h_xmu: 0.0, h_xx: 0.0 }, 0.5);
    let zero = estimate_xmu_lipschitz(&free, &mu, &probes, &[0.1], LipschitzMode::W1, &opts(100, 0.04), 3).unwrap();
    assert!(zero.lipschitz_estimate < 1e-6, "{}", zero.lipschitz_estimate);
}

#[test]
fn hessian_matches_the_riccati_curve() {
    let model = lq_model();
    let ric = riccati_oracle(&model, DEFAULT_RICCATI_STEPS).unwrap();
    let (cm, lam) = certified_model();
    let ledger = certify_wellposedness(&cm, &lam, XpPolicy::Stated).unwrap();
    let sol = solve_mfg(&model, &spread_measure(0.0, 1.0, 16), &opts(200, 0.02)).unwrap();
    let h = hessian_bound_check(&sol, &ledger);
    assert!((h.sup_uxx - ric.max_abs_p()).abs() < 0.02 * ric.max_abs_p(), "{} vs {}", h.sup_uxx, ric.max_abs_p());
    let sol = solve_mfg(&cm, &spread_measure(0.3, 0.6, 16), &opts(100, 0.04)).unwrap();
    assert!(hessian_bound_check(&sol, &ledger).pass);
}

#[test]
fn picard_initializations_agree() {
    let (model, _) = certified_model();
    let probe = uniqueness_probe(&model, &spread_measure(0.3, 0.6, 16), &opts(100, 0.04)).unwrap();
    assert_eq!(probe.outcome, ProbeOutcome::Same);
    assert!(probe.sup_w1 <= 1e-4);
}

#[test]
fn paired_field_recovers_the_coupling() {
    let model = lq_model();
    let ric = riccati_oracle(&model, DEFAULT_RICCATI_STEPS).unwrap();
    let mu = spread_measure(0.0, 1.0, 4);
    let f = paired_xmu_field(&model, &mu, &opts(100, 0.02), 0.05).unwrap();
    use mfg_antimono::monotonicity::FieldDerivs;
    for &xt in mu.points() {
        let v = f.dxmu(0.2, &mu, xt);
        assert!((v - ric.q_at(0.0)).abs() < 0.03 * ric.q_at(0.0).abs(), "{v}");
    }
    assert!((f.dxx(0.2, &mu) - ric.p_at(0.0)).abs() < 1e-2);
    let q = quantize_density(&[0.0, 1.0, 2.0], &[0.25, 0.5, 0.25], 4).unwrap();
    assert!((q.mean() - 1.0).abs() < 1e-12);
}

#[test]
fn csv_output_is_deterministic() {
    let (model, lam) = certified_model();
    let mu = spread_measure(0.3, 0.6, 8);
    let run = || {
        let sol = solve_mfg(&model, &mu, &opts(50, 0.05)).unwrap();
        let mut a = Vec::new();
        sol.write_csv(&mut a, 5, 3).unwrap();
        let eta = [1.0, 0.5, -0.5, 0.2, 0.1, -1.0, 0.7, 0.3];
        let cfg = FlowConfig { n_steps: 20, seed: 8, paths_per_atom: 2, bump: 0.05, noise: NoiseMode::Brownian };
        let tr = simulate_linearized_flow(&model, &sol, &lam, &mu, &eta, &cfg).unwrap();
        let mut b = Vec::new();
        tr.write_csv(&mut b).unwrap();
        (a, b)
    };
    let (a1, b1) = run();
    let (a2, b2) = run();
    assert_eq!(a1, a2);
    assert_eq!(b1, b2);
    let text = String::from_utf8(b1).unwrap();
    assert!(text.starts_with("t,I,Ibar,Gamma,mean_dX2\n"));
    assert!(!text.contains('\r'));
    assert!(String::from_utf8(a1).unwrap().starts_with("t,x,rho,u,ux,uxx\n"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mass_is_conserved(c in -0.5..0.5f64, w in 0.2..1.5f64, n in 1usize..6, a0 in 0.2..2.0f64) {
        let model = quad(a0, QuadraticParams { g0: -0.3, g1: 0.2, h_quad: 1.0, h_xmu: 0.1, h_xx: 0.1 }, 0.3);
        let sol = solve_mfg(&model, &spread_measure(c, w, n), &opts(30, 0.05)).unwrap();
        for k in 0..sol.t_grid.len() {
            prop_assert!((sol.mass(k) - 1.0).abs() < 1e-8);
        }
        prop_assert!(sol.mean_ux_error(&model) < 1e-10);
    }
}
