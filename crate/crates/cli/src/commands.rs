//! Experiment pipelines behind each subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use mfg_antimono::certify::{
    certify_wellposedness, construct_example72, example72_instance, lambda0_choice, CertifyError, ConstantLedger,
};
use mfg_antimono::monotonicity::{mc_certify, McConfig, Notion, Verdict, XiSource};
use mfg_antimono::solver::{
    estimate_xmu_lipschitz, hessian_bound_check, paired_xmu_field, quantize_density, riccati_oracle,
    simulate_linearized_flow, solve_mfg, uniqueness_probe, vector_master_residual, BumpKind, FlowConfig,
    GridSpec, MfgSolution, ProbeOutcome, RiccatiAt, RiccatiSolution, SolveOptions, SolverError,
    DEFAULT_RICCATI_STEPS, PROBE_TOL,
};

use crate::config::{ConfigError, EtaPattern, RunConfig};
use crate::report::{Cell, CheckRow, RunReport, Table};
use crate::{derive_seed, CliError, Command};

/// Mass conservation tolerance of a solve.
pub const MASS_TOL: f64 = 1e-8;
/// Slack on Γ_T ≤ 0.
pub const GAMMA_TERMINAL_TOL: f64 = 1e-10;
/// Tolerance on the λ₀ closed form.
pub const LAMBDA0_TOL: f64 = 1e-12;

pub fn execute(cmd: Command, cfg: &RunConfig, rep: &mut RunReport) -> Result<(), CliError> {
    match cmd {
        Command::Certify => certify(cfg, rep),
        Command::ConstructExample => construct_example(cfg, rep),
        Command::Solve => solve(cfg, rep),
        Command::CheckAntimono => check_antimono(cfg, rep),
        Command::GammaFlow => gamma_flow(cfg, rep),
        Command::Lipschitz => lipschitz(cfg, rep),
        Command::Hessian => hessian(cfg, rep),
        Command::LqValidate => lq_validate(cfg, rep),
        Command::Sweep => sweep(cfg, rep),
    }
}

fn ledger_table(ledger: &ConstantLedger<f64>) -> Table {
    let mut t = Table::new("ledger_checks", &["name", "binding", "pass", "margin", "lhs", "rhs"]);
    for c in &ledger.checks {
        t.push(vec![
            Cell::Text(c.name.clone()),
            Cell::Int(c.binding as i64),
            Cell::Int(c.pass as i64),
            Cell::Num(c.margin),
            Cell::Num(c.lhs),
            Cell::Num(c.rhs),
        ]);
    }
    t
}

fn certify(cfg: &RunConfig, rep: &mut RunReport) -> Result<(), CliError> {
    let ledger = certify_wellposedness(&cfg.model, &cfg.lambda, cfg.policy)?;
    rep.add_ledger(&ledger, "");
    rep.tables.push(ledger_table(&ledger));
    Ok(())
}

fn min_binding_margin(ledger: &ConstantLedger<f64>) -> f64 {
    ledger
        .checks
        .iter()
        .filter(|c| c.binding)
        .map(|c| if c.margin.is_nan() { f64::NEG_INFINITY } else { c.margin })
        .fold(f64::INFINITY, f64::min)
}

fn construct_example(cfg: &RunConfig, rep: &mut RunReport) -> Result<(), CliError> {
    match construct_example72(&cfg.example) {
        Ok(ex) => {
            rep.add_ledger(&ex.ledger, "");
            rep.tables.push(ledger_table(&ex.ledger));
            rep.constant("m0", ex.m0);
            let formula = lambda0_choice(cfg.example.gamma_lo, cfg.example.gamma_hi, ex.ledger.lxx_u_theta3, cfg.example.l3);
            rep.checks.push(CheckRow::at_most("example.lambda0_formula", (ex.lambda0 - formula).abs(), LAMBDA0_TOL));
            let (model, lam) = example72_instance(&cfg.example, 2.0 * ex.m0)?;
            let doubled = certify_wellposedness(&model, &lam, cfg.example.policy)?;
            let margin = min_binding_margin(&doubled);
            rep.checks.push(CheckRow {
                name: "example.doubled_m0_passes".into(),
                pass: doubled.passed(),
                margin,
                lhs: 2.0 * ex.m0,
                rhs: margin,
            });
            Ok(())
        }
        Err(CertifyError::ConstructionFailed { m0, last, .. }) => {
            rep.add_ledger(&last, "");
            rep.tables.push(ledger_table(&last));
            rep.constant("m0", m0);
            rep.checks.push(CheckRow {
                name: "example.construction".into(),
                pass: false,
                margin: min_binding_margin(&last),
                lhs: m0,
                rhs: f64::NAN,
            });
            Ok(())
        }
        Err(e) => Err(e.into()),
    }
}

fn oracle(cfg: &RunConfig) -> Result<Option<RiccatiSolution>, CliError> {
    if cfg.model.quadratic_params().is_none() {
        return Ok(None);
    }
    Ok(Some(riccati_oracle(&cfg.model, DEFAULT_RICCATI_STEPS)?))
}

/// Largest |∂ₓu − (P_t x + Q_t m_t)| over the whole space-time grid.
pub fn oracle_grid_error(sol: &MfgSolution, ric: &RiccatiSolution) -> f64 {
    let mp = ric.mean_path(sol.t_grid[0], sol.mu0.mean());
    let mut err = 0.0f64;
    for (k, &t) in sol.t_grid.iter().enumerate() {
        let m = mp.at(t);
        for (i, &x) in sol.x_grid.iter().enumerate() {
            err = err.max((sol.ux[k][i] - ric.ux(t, x, m)).abs());
        }
    }
    err
}

fn solution_checks(sol: &MfgSolution, rep: &mut RunReport) {
    let mass_err = (0..sol.t_grid.len()).map(|k| (sol.mass(k) - 1.0).abs()).fold(0.0, f64::max);
    rep.checks.push(CheckRow::at_most("solve.mass_conservation", mass_err, MASS_TOL));
    let last = sol.picard_residuals.last().copied().unwrap_or(0.0);
    rep.checks.push(CheckRow::at_most("solve.picard_residual", last, sol.options.tol));
    rep.constant("picard_iterations", sol.picard_residuals.len() as f64);
    rep.constant("grid_nodes", sol.x_grid.len() as f64);
    rep.constant("dx", sol.dx());
    rep.constant("dt", sol.dt());
}

fn solve(cfg: &RunConfig, rep: &mut RunReport) -> Result<(), CliError> {
    let sol = solve_mfg(&cfg.model, &cfg.mu0, &cfg.solve)?;
    solution_checks(&sol, rep);
    if let Some(ric) = oracle(cfg)? {
        rep.constant("oracle_max_error", oracle_grid_error(&sol, &ric));
    }
    let mut buf = Vec::new();
    sol.write_csv(&mut buf, cfg.output.t_stride, cfg.output.x_stride)?;
    rep.files.push(("solution.csv".into(), buf));
    if cfg.experiment.probe {
        let probe = uniqueness_probe(&cfg.model, &cfg.mu0, &cfg.solve)?;
        rep.constant("probe_sup_w1", probe.sup_w1);
        match probe.outcome {
            ProbeOutcome::NoConvergence { init, residual } => {
                eprintln!("uniqueness probe: the {init} initialization did not converge");
                rep.checks.push(CheckRow::at_most("probe.same_flow", f64::NAN, PROBE_TOL));
                return Err(SolverError::NoConvergence { iterations: cfg.solve.max_picard, residual }.into());
            }
            _ => rep.checks.push(CheckRow::at_most("probe.same_flow", probe.sup_w1, PROBE_TOL)),
        }
    }
    Ok(())
}

fn check_times(cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    let (t0, t1) = (cfg.solve.t0, cfg.model.horizon);
    let times = match &cfg.experiment.times {
        Some(ts) => ts.clone(),
        None => (0..=5).map(|k| t0 + (t1 - t0) * k as f64 / 5.0).collect(),
    };
    if times.iter().any(|&t| t < t0 - 1e-12 || t > t1 + 1e-12) {
        return Err(ConfigError { line: None, msg: format!("experiment times must lie in [{t0}, {t1}]") }.into());
    }
    Ok(times)
}

/// Options for a solve restarted at node `k` of `sol` with the same time step.
fn restart_options(cfg: &RunConfig, sol: &MfgSolution, k: usize) -> SolveOptions {
    let remaining = sol.t_grid.len() - 1 - k;
    SolveOptions { t0: sol.t_grid[k], t_steps: remaining.max(2), grid: GridSpec { center: None, ..cfg.solve.grid }, ..cfg.solve.clone() }
}

fn check_antimono(cfg: &RunConfig, rep: &mut RunReport) -> Result<(), CliError> {
    let sol = solve_mfg(&cfg.model, &cfg.mu0, &cfg.solve)?;
    let exp = &cfg.experiment;
    let seed = derive_seed(exp.seed, "check-antimono");
    let mut table = Table::new("antimono", &["t", "value", "violation", "std_error", "slack", "verdict"]);
    for t in check_times(cfg)? {
        let k = sol.nearest_time(t)?;
        let tk = sol.t_grid[k];
        let mu_t = quantize_density(&sol.x_grid, &sol.rho[k], exp.mc_atoms)?;
        let field = paired_xmu_field(&cfg.model, &mu_t, &restart_options(cfg, &sol, k), exp.paired_bump)?;
        let mc = McConfig { seed, trials: exp.mc_trials, xi: XiSource::Fixed(mu_t) };
        let est = mc_certify(&field, &Notion::AntiMonotone(cfg.lambda), &mc)?;
        let slack = 3.0 * est.std_error;
        let verdict = match est.verdict {
            Verdict::Holds => "holds",
            Verdict::Violated => "violated",
            Verdict::Inconclusive => "inconclusive",
        };
        table.push(vec![
            Cell::Num(tk),
            Cell::Num(est.value),
            Cell::Num(est.violation),
            Cell::Num(est.std_error),
            Cell::Num(slack),
            Cell::Text(verdict.into()),
        ]);
        rep.checks.push(CheckRow {
            name: format!("antimono.t={tk:.4}"),
            pass: est.verdict == Verdict::Holds,
            margin: slack - est.violation,
            lhs: est.violation,
            rhs: slack,
        });
    }
    rep.tables.push(table);
    Ok(())
}

/// Initial displacement aligned with the sorted atoms of μ₀.
pub fn eta_for(cfg: &RunConfig) -> Vec<f64> {
    let n = cfg.mu0.len();
    match cfg.experiment.eta {
        EtaPattern::Uniform => vec![1.0; n],
        EtaPattern::Alternating => (0..n).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect(),
        EtaPattern::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.experiment.seed, "gamma-flow.eta"));
            (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
        }
    }
}

fn gamma_flow(cfg: &RunConfig, rep: &mut RunReport) -> Result<(), CliError> {
    let sol = solve_mfg(&cfg.model, &cfg.mu0, &cfg.solve)?;
    let exp = &cfg.experiment;
    let flow = FlowConfig {
        n_steps: exp.flow_steps,
        seed: derive_seed(exp.seed, "gamma-flow.noise"),
        paths_per_atom: exp.paths_per_atom,
        bump: exp.flow_bump,
        noise: exp.noise,
    };
    let tr = simulate_linearized_flow(&cfg.model, &sol, &cfg.lambda, &cfg.mu0, &eta_for(cfg), &flow)?;
    let mut buf = Vec::new();
    tr.write_csv(&mut buf)?;
    rep.files.push(("gamma_trace.csv".into(), buf));
    let dt = (cfg.model.horizon - cfg.solve.t0) / exp.flow_steps as f64;
    let worst = tr
        .gamma_series
        .windows(2)
        .zip(&tr.increment_std_error)
        .map(|(g, s)| g[1] - g[0] + 3.0 * s)
        .fold(f64::INFINITY, f64::min);
    let g0 = tr.gamma_series[0];
    let gt = *tr.gamma_series.last().expect("non-empty trace");
    rep.checks.push(CheckRow::at_least("gamma.increments", worst, -exp.gamma_slack * dt));
    rep.checks.push(CheckRow::at_most("gamma.start_le_end", g0, gt));
    rep.checks.push(CheckRow::at_most("gamma.terminal_nonpositive", gt, GAMMA_TERMINAL_TOL));
    rep.constant("gamma_start", g0);
    rep.constant("gamma_end", gt);
    rep.constant("gamma_min_increment", tr.min_increment());
    Ok(())
}

fn lipschitz(cfg: &RunConfig, rep: &mut RunReport) -> Result<(), CliError> {
    let exp = &cfg.experiment;
    if exp.probes.is_empty() {
        return Err(ConfigError { line: None, msg: "lipschitz needs at least one probe point".into() }.into());
    }
    let est = estimate_xmu_lipschitz(
        &cfg.model,
        &cfg.mu0,
        &exp.probes,
        &exp.bump_scales,
        exp.lipschitz_mode,
        &cfg.solve,
        derive_seed(exp.seed, "lipschitz"),
    )?;
    let mut t = Table::new("lipschitz", &["scale", "kind", "distance", "max_diff", "ratio"]);
    for r in &est.per_bump {
        let kind = match r.kind {
            BumpKind::Uniform => "uniform",
            BumpKind::Random => "random",
        };
        t.push(vec![Cell::Num(r.scale), Cell::Text(kind.into()), Cell::Num(r.distance), Cell::Num(r.max_diff), Cell::Num(r.ratio)]);
    }
    rep.tables.push(t);
    rep.constant("lipschitz_estimate", est.lipschitz_estimate);
    rep.checks.push(CheckRow::at_most("lipschitz.scale_variation", est.scale_variation(), exp.lipschitz_variation_tol));
    if let Some(tol) = exp.lipschitz_oracle_tol {
        let ric = oracle(cfg)?.ok_or_else(|| oracle_needed("lipschitz_oracle_tol"))?;
        let q = ric.q_at(cfg.solve.t0).abs();
        rep.constant("oracle_abs_q", q);
        rep.checks.push(CheckRow::at_most("lipschitz.oracle_rel_error", (est.lipschitz_estimate - q).abs() / q, tol));
    }
    Ok(())
}

fn oracle_needed(key: &str) -> CliError {
    ConfigError { line: None, msg: format!("`{key}` requires family = quadratic or example72") }.into()
}

fn hessian(cfg: &RunConfig, rep: &mut RunReport) -> Result<(), CliError> {
    let sol = solve_mfg(&cfg.model, &cfg.mu0, &cfg.solve)?;
    let ledger = certify_wellposedness(&cfg.model, &cfg.lambda, cfg.policy)?;
    let h = hessian_bound_check(&sol, &ledger);
    rep.constant("sup_uxx", h.sup_uxx);
    rep.constant("lxx_u_theta3", h.bound);
    rep.checks.push(CheckRow { name: "hessian.bound".into(), pass: h.pass, margin: 1.05 * h.bound - h.sup_uxx, lhs: h.sup_uxx, rhs: 1.05 * h.bound });
    if let Some(tol) = cfg.experiment.hessian_oracle_tol {
        let ric = oracle(cfg)?.ok_or_else(|| oracle_needed("hessian_oracle_tol"))?;
        let p = ric.max_abs_p();
        rep.constant("oracle_max_abs_p", p);
        rep.checks.push(CheckRow::at_most("hessian.oracle_rel_error", (h.sup_uxx - p).abs() / p, tol));
    }
    Ok(())
}

fn lq_validate(cfg: &RunConfig, rep: &mut RunReport) -> Result<(), CliError> {
    let ric = oracle(cfg)?.ok_or_else(|| oracle_needed("lq-validate"))?;
    let exp = &cfg.experiment;
    let coarse_opts = cfg.solve.clone();
    let fine_opts = SolveOptions {
        t_steps: 2 * coarse_opts.t_steps,
        grid: GridSpec { dx: coarse_opts.grid.dx / 2.0, ..coarse_opts.grid },
        ..coarse_opts.clone()
    };
    let runs: Vec<Result<MfgSolution, SolverError>> =
        [&coarse_opts, &fine_opts].par_iter().map(|o| solve_mfg(&cfg.model, &cfg.mu0, o)).collect();
    let mut errors = Vec::new();
    let mut t = Table::new("lq_errors", &["dt", "dx", "max_error"]);
    for r in runs {
        let sol = r?;
        let e = oracle_grid_error(&sol, &ric);
        t.push(vec![Cell::Num(sol.dt()), Cell::Num(sol.dx()), Cell::Num(e)]);
        errors.push(e);
    }
    rep.tables.push(t);
    rep.checks.push(CheckRow::at_most("lq.coarse_error", errors[0], exp.lq_tol));
    rep.checks.push(CheckRow::at_most("lq.refinement_ratio", errors[1] / errors[0], exp.lq_ratio));
    let (t0, t1) = (cfg.solve.t0, cfg.model.horizon);
    let mut worst = 0.0f64;
    for k in 1..5 {
        let at = RiccatiAt { sol: &ric, t: t0 + (t1 - t0) * k as f64 / 5.0 };
        for &x in &exp.probes {
            worst = worst.max(vector_master_residual(&cfg.model, &at, x, &cfg.mu0)?.abs());
        }
    }
    rep.checks.push(CheckRow::at_most("lq.oracle_master_residual", worst, exp.residual_tol));
    rep.constant("oracle_p0", ric.p_at(t0));
    rep.constant("oracle_q0", ric.q_at(t0));
    Ok(())
}

fn sweep(cfg: &RunConfig, rep: &mut RunReport) -> Result<(), CliError> {
    let exp = &cfg.experiment;
    let values = exp
        .sweep_values
        .clone()
        .ok_or_else(|| CliError::from(ConfigError { line: None, msg: "sweep needs `sweep_values`".into() }))?;
    let (section, key) = exp.sweep_key.split_once('.').expect("validated sweep key");
    let rows: Vec<Vec<Cell>> = values
        .par_iter()
        .map(|&v| {
            let outcome = cfg
                .with_value(section, key, &v.to_string())
                .map_err(|e| e.to_string())
                .and_then(|c| certify_wellposedness(&c.model, &c.lambda, c.policy).map_err(|e| e.to_string()));
            match outcome {
                Ok(l) => vec![
                    Cell::Num(v),
                    Cell::Int(l.passed() as i64),
                    Cell::Num(min_binding_margin(&l)),
                    Cell::Num(l.theta3),
                    Cell::Num(l.lxx_u_theta3),
                    Cell::Num(l.lambda0),
                    Cell::Text(l.failing().join(";")),
                ],
                Err(msg) => {
                    let nan = Cell::Num(f64::NAN);
                    vec![Cell::Num(v), Cell::Int(0), nan.clone(), nan.clone(), nan.clone(), nan, Cell::Text(msg.replace([',', '\n'], ";"))]
                }
            }
        })
        .collect();
    let mut t = Table::new("sweep", &["value", "passed", "min_margin", "theta3", "lxx_u_theta3", "lambda0", "failing"]);
    rows.into_iter().for_each(|r| t.push(r));
    rep.tables.push(t);
    rep.constant("sweep_points", values.len() as f64);
    Ok(())
}
