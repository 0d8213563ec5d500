//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use mfg_antimono::certify::{
    certify_wellposedness, construct_example72, example72_instance, exp_decay_bound, lambda0_choice, spectral,
    theta3_lxx, CertifyError, Example72Params, ExpBoundMethod, XpPolicy,
};
use mfg_antimono::monotonicity::{classify_quadratic, mc_certify, McConfig, Notion, QuadraticField, VecLambda, Verdict};
use mfg_antimono::solver::{riccati_oracle, vector_master_residual, RiccatiAt, DEFAULT_RICCATI_STEPS};
use mfg_antimono_cli::commands::execute;
use mfg_antimono_cli::{parse_config, run_with_env, Command, RunReport, EXIT_FAILED_CHECKS, EXIT_OK};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

const CERTIFIED: &str = "[model]
family = example72
policy = stated
m0 = 2
horizon = 0.5
[measure]
center = 0.3
width = 0.6
atoms = 32
[solver]
t_steps = 100
dx = 0.04
tol = 1e-11
[experiment]
seed = 11
mc_trials = 64
mc_atoms = 32
flow_steps = 100
paths_per_atom = 4
bump_scales = 0.2, 0.1, 0.05
";

const PURE_LQ: &str = "[model]
family = quadratic
a0 = 0.5
g0 = -0.5
g1 = -0.5
h_quad = 1
h_xmu = 0.25
h_xx = 0
horizon = 0.5
[measure]
center = 0.2
width = 1
atoms = 16
[solver]
t_steps = 200
dx = 0.02
tol = 1e-10
[experiment]
bump_scales = 0.2, 0.1, 0.05
lipschitz_oracle_tol = 0.05
hessian_oracle_tol = 0.02
";

fn pipeline(config: &str, cmd: Command) -> Result<RunReport, String> {
    let cfg = parse_config(config).map_err(|e| e.to_string())?;
    let mut rep = RunReport::default();
    execute(cmd, &cfg, &mut rep).map_err(|e| e.to_string())?;
    Ok(rep)
}

fn check<'a>(rep: &'a RunReport, name: &str) -> &'a mfg_antimono_cli::CheckRow {
    rep.checks.iter().find(|c| c.name == name).unwrap_or_else(|| panic!("missing check {name}"))
}

/// Closed form against Monte Carlo on a 41×41 grid for three notions.
fn criterion1() -> Outcome {
    let lam = VecLambda::new(1.0, 1.0, 1.0, 1.0).unwrap();
    let cfg = McConfig::gaussian(2024, 500, 8);
    let mut disagreements = 0;
    let mut points = 0;
    for i in 0..41 {
        for j in 0..41 {
            let (a0, a1) = (-2.0 + 0.1 * i as f64, -2.0 + 0.1 * j as f64);
            let f = QuadraticField { a0, a1 };
            let c = classify_quadratic(a0, a1, &lam);
            // Exact violation scores in the orientation reported by the sampler.
            let exact = [
                (Notion::LasryLions, c.lasry_lions, (-a1).max(0.0)),
                (Notion::Displacement { semi_lambda: 0.0 }, c.displacement, -(a0 + a1.min(0.0)).min(a0)),
                (Notion::AntiMonotone(lam), c.anti, {
                    let c0 = a0 + a0 * a0 - 1.0;
                    let c1 = a1 + a1 * a1;
                    if c1 > 0.0 { c0 + c1 } else { c0 }
                }),
            ];
            for (notion, holds, exact_violation) in exact {
                let est = mc_certify(&f, &notion, &cfg).unwrap();
                let mc_holds = est.verdict == Verdict::Holds;
                if mc_holds != holds && exact_violation.abs() > 3.0 * est.std_error + 1e-12 {
                    disagreements += 1;
                }
                points += 1;
            }
        }
    }
    outcome(disagreements == 0, format!("{disagreements} disagreements in {points} classifications"))
}

fn criterion2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = [0.0f64; 3];
    let mut monotone = true;
    for _ in 0..100 {
        let (l2, la, lg): (f64, f64, f64) = (rng.gen_range(0.05..2.0), rng.gen_range(1.0..2.0), rng.gen_range(0.0..2.0));
        let th = theta3_lxx(l2, la, lg).unwrap();
        worst[0] = worst[0].max(th.discriminant(th.theta3).abs());
        let lga = lg * la;
        let closed = lga + ((1.0 + lga).powi(2) - 1.0).sqrt();
        worst[1] = worst[1].max((th.lvxx - closed).abs());
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let theta = th.theta3 + 0.25 * k as f64;
            let l0 = th.lxx_u(theta).unwrap();
            let lhs = l0 * (2.0 * (theta - 1.0) - l2 * la * (2.0 + l0));
            worst[2] = worst[2].max((lhs - 2.0 * lga * (theta - 1.0)).abs());
            if lga > 0.0 && k > 0 && !(l0 < prev) {
                monotone = false;
            }
            prev = l0;
        }
    }
    let pass = worst[0] <= 1e-10 && worst[1] <= 1e-10 && worst[2] <= 1e-9 && monotone;
    outcome(
        pass,
        format!("discriminant {:.1e}, closed form {:.1e}, fixed point {:.1e}, strictly decreasing {monotone}", worst[0], worst[1], worst[2]),
    )
}

/// Independent e^{M} by scaled Taylor series and repeated squaring.
fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm: f64 = a.iter().map(|v| v.abs()).sum();
    let s = (norm / 0.25).log2().ceil().max(0.0) as i32;
    let b = a / 2f64.powi(s);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &b / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

fn random_matrix(rng: &mut ChaCha8Rng, symmetric: bool) -> DMatrix<f64> {
    let d = rng.gen_range(1..=4);
    if symmetric {
        let b = DMatrix::<f64>::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
        return (&b + b.transpose()) * 0.5;
    }
    let mut j = DMatrix::<f64>::zeros(d, d);
    let mut i = 0;
    while i < d {
        let len = rng.gen_range(1..=(d - i).min(3));
        let lam: f64 = rng.gen_range(-0.5..2.0);
        for k in 0..len {
            j[(i + k, i + k)] = lam;
            if k > 0 {
                j[(i + k - 1, i + k)] = 1.0;
            }
        }
        i += len;
    }
    let q = DMatrix::<f64>::from_fn(d, d, |r, c| if r == c { 1.0 } else { 0.0 } + rng.gen_range(-0.4..0.4));
    let qi = q.clone().try_inverse().expect("diagonally dominant");
    &q * j * qi
}

fn criterion3() -> Outcome {
    let t_grid: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.01).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut loose, mut sharp, mut reported) = (0usize, 0usize, 0usize);
    for m in 0..1000 {
        let symmetric = m < 500;
        let a = random_matrix(&mut rng, symmetric);
        let b = exp_decay_bound(&a, &t_grid).unwrap();
        reported += b.violations;
        let kp = spectral(&a).unwrap().kappa_prime;
        let sqrt_bound = b.la0_upper.sqrt();
        // e^{-A(t+dt)} = e^{-A t} e^{-A dt} keeps the oracle cheap on the fine grid.
        let step = expm(&(&a * -0.01));
        let mut e = DMatrix::<f64>::identity(a.nrows(), a.nrows());
        for (k, &t) in t_grid.iter().enumerate() {
            if k > 0 {
                e = &e * &step;
            }
            let n = (e.transpose() * &e).symmetric_eigenvalues().max().max(0.0).sqrt();
            if n > sqrt_bound * ((1.0 - kp) * t).exp() * (1.0 + 1e-9) + 1e-9 {
                loose += 1;
            }
            if symmetric && b.method == ExpBoundMethod::Symmetric && n > (-kp * t).exp() * (1.0 + 1e-9) + 1e-9 {
                sharp += 1;
            }
        }
    }
    outcome(
        loose == 0 && sharp == 0 && reported == 0,
        format!("{loose} bound violations, {sharp} symmetric-bound violations, {reported} self-reported"),
    )
}

fn criterion4() -> Outcome {
    let p = Example72Params::default();
    match construct_example72(&p) {
        Ok(ex) => {
            let formula = lambda0_choice(p.gamma_lo, p.gamma_hi, ex.ledger.lxx_u_theta3, p.l3);
            let (m2, l2) = example72_instance(&p, 2.0 * ex.m0).unwrap();
            let doubled = certify_wellposedness(&m2, &l2, p.policy).unwrap().passed();
            let ok = ex.ledger.passed() && (ex.lambda0 - formula).abs() <= 1e-12 && doubled;
            outcome(ok, format!("M0 = {}, lambda0 error {:.1e}, doubled passes {doubled}", ex.m0, (ex.lambda0 - formula).abs()))
        }
        Err(CertifyError::ConstructionFailed { m0, last, .. }) => {
            let stated = construct_example72(&Example72Params { policy: XpPolicy::Stated, ..p }).map(|e| e.m0);
            outcome(
                false,
                format!(
                    "no passing ledger up to M0 = {m0:e}; failing {:?}; stated-threshold variant finds M0 = {:?}",
                    last.failing(),
                    stated.ok()
                ),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn criterion5() -> Outcome {
    let cfg = "[model]
family = example72
policy = stated
m0 = 2
horizon = 0.5
[measure]
center = 0.3
width = 0.6
atoms = 16
[solver]
t_steps = 500
dx = 0.01
tol = 1e-10
[experiment]
probes = -1, -0.5, 0, 0.5, 1, 2
";
    let rep = match pipeline(cfg, Command::LqValidate) {
        Ok(r) => r,
        Err(e) => return outcome(false, e),
    };
    let coarse = check(&rep, "lq.coarse_error");
    let ratio = check(&rep, "lq.refinement_ratio");
    let res = check(&rep, "lq.oracle_master_residual");
    // The lq model exercises the Q-coupling that the family member lacks.
    let parsed = parse_config(PURE_LQ).unwrap();
    let ric = riccati_oracle(&parsed.model, DEFAULT_RICCATI_STEPS).unwrap();
    let mut lq_res = 0.0f64;
    for &t in &[0.1, 0.25, 0.4] {
        for &x in &[-1.0, 0.0, 1.5] {
            lq_res = lq_res.max(vector_master_residual(&parsed.model, &RiccatiAt { sol: &ric, t }, x, &parsed.mu0).unwrap().abs());
        }
    }
    let pass = coarse.pass && ratio.pass && res.pass && lq_res < 1e-6;
    outcome(
        pass,
        format!(
            "coarse error {:.2e} (<= 5e-3), refinement ratio {:.3} (<= 0.6), oracle residual {:.1e} / {:.1e} (< 1e-6)",
            coarse.lhs, ratio.lhs, res.lhs, lq_res
        ),
    )
}

fn criterion6() -> Outcome {
    let anti = match pipeline(CERTIFIED, Command::CheckAntimono) {
        Ok(r) => r,
        Err(e) => return outcome(false, e),
    };
    let flow = match pipeline(CERTIFIED, Command::GammaFlow) {
        Ok(r) => r,
        Err(e) => return outcome(false, e),
    };
    let holds = anti.checks.iter().filter(|c| c.pass).count();
    let worst = anti.checks.iter().map(|c| c.lhs).fold(f64::NEG_INFINITY, f64::max);
    let inc = check(&flow, "gamma.increments");
    let order = check(&flow, "gamma.start_le_end");
    let term = check(&flow, "gamma.terminal_nonpositive");
    let pass = anti.passed() && anti.checks.len() == 6 && inc.pass && order.pass && term.pass;
    outcome(
        pass,
        format!(
            "antimono holds at {holds}/{} times (worst violation {worst:.2e}); Gamma {:.3e} -> {:.3e}, worst slack-adjusted increment {:.2e} >= {:.2e}",
            anti.checks.len(),
            order.lhs,
            term.lhs,
            inc.lhs,
            inc.rhs
        ),
    )
}

fn criterion7() -> Outcome {
    let cert = match pipeline(CERTIFIED, Command::Lipschitz) {
        Ok(r) => r,
        Err(e) => return outcome(false, e),
    };
    let lq = match pipeline(PURE_LQ, Command::Lipschitz) {
        Ok(r) => r,
        Err(e) => return outcome(false, e),
    };
    let var = check(&cert, "lipschitz.scale_variation");
    let oracle = check(&lq, "lipschitz.oracle_rel_error");
    outcome(
        var.pass && oracle.pass,
        format!(
            "scale variation {:.2e} (< 0.2); LQ estimate {:.4e} vs |Q0| {:.4e}, relative error {:.2e} (<= 0.05)",
            var.lhs, lq.constants["lipschitz_estimate"], lq.constants["oracle_abs_q"], oracle.lhs
        ),
    )
}

fn criterion8() -> Outcome {
    let cert = match pipeline(CERTIFIED, Command::Hessian) {
        Ok(r) => r,
        Err(e) => return outcome(false, e),
    };
    let lq = match pipeline(PURE_LQ, Command::Hessian) {
        Ok(r) => r,
        Err(e) => return outcome(false, e),
    };
    let bound = check(&cert, "hessian.bound");
    let oracle = check(&lq, "hessian.oracle_rel_error");
    outcome(
        bound.pass && oracle.pass,
        format!(
            "certified sup |uxx| {:.3} <= {:.3}; LQ sup {:.4} vs max|P| {:.4}, relative error {:.2e} (<= 0.02)",
            bound.lhs, bound.rhs, lq.constants["sup_uxx"], lq.constants["oracle_max_abs_p"], oracle.lhs
        ),
    )
}

fn criterion9() -> Outcome {
    let probe = format!("{CERTIFIED}probe = true\n");
    let cert = match pipeline(&probe, Command::Solve) {
        Ok(r) => r,
        Err(e) => return outcome(false, e),
    };
    let same = check(&cert, "probe.same_flow");
    let flipped = "[model]
policy = stated
a0 = 8
g0 = 2
g1 = -1
h_quad = 1
h_xmu = 0
h_xx = 3.5
horizon = 0.5
[measure]
center = 0.3
width = 0.6
atoms = 32
[solver]
t_steps = 100
dx = 0.04
tol = 1e-11
[experiment]
probe = true
";
    let flipped_detail = match pipeline(flipped, Command::Solve) {
        Ok(r) => {
            let c = check(&r, "probe.same_flow");
            (c.pass, format!("flipped model: same flow {} (sup W1 {:.1e})", c.pass, c.lhs))
        }
        Err(e) if e.contains("did not converge") => (true, format!("flipped model: flagged non-convergence ({e})")),
        Err(e) => (false, e),
    };
    outcome(same.pass && flipped_detail.0, format!("certified sup W1 {:.2e} (<= 1e-4); {}", same.lhs, flipped_detail.1))
}

fn criterion10() -> Outcome {
    let dir = tempfile::TempDir::new().unwrap();
    let cfg_path = dir.path().join("flow.ini");
    let small = CERTIFIED.replace("atoms = 32", "atoms = 8").replace("flow_steps = 100", "flow_steps = 40");
    fs::write(&cfg_path, small).unwrap();
    let mut identical = true;
    let mut files = 0;
    for cmd in ["solve", "gamma-flow", "lipschitz"] {
        let outs: Vec<_> = ["a", "b"].iter().map(|n| dir.path().join(format!("{cmd}-{n}"))).collect();
        for o in &outs {
            let code = run_with_env(
                ["mfg-antimono", cmd, "--config", cfg_path.to_str().unwrap(), "--seed", "42", "--out", o.to_str().unwrap()],
                None,
            );
            if code != EXIT_OK && code != EXIT_FAILED_CHECKS {
                return outcome(false, format!("{cmd} exited with {code}"));
            }
        }
        for entry in fs::read_dir(&outs[0]).unwrap() {
            let name = entry.unwrap().file_name();
            if Path::new(&name).extension().is_some_and(|e| e == "csv") {
                files += 1;
                identical &= fs::read(outs[0].join(&name)).unwrap() == fs::read(outs[1].join(&name)).unwrap();
            }
        }
    }
    outcome(identical && files >= 3, format!("{files} CSV files compared, byte-identical {identical}"))
}

fn main() {
    let criteria: [(u32, &str, f64, fn() -> Outcome); 10] = [
        (1, "quadratic classification", 120.0, criterion1),
        (2, "Hessian-bound identities", 1.0, criterion2),
        (3, "matrix exponential bound", 30.0, criterion3),
        (4, "concave family construction", 5.0, criterion4),
        (5, "LQ oracle equivalence", 120.0, criterion5),
        (6, "propagation of anti-monotonicity", 600.0, criterion6),
        (7, "Lipschitz continuity in the measure", 300.0, criterion7),
        (8, "Hessian bound", 60.0, criterion8),
        (9, "uniqueness probe", f64::INFINITY, criterion9),
        (10, "determinism", f64::INFINITY, criterion10),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (n, title, budget, f) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        let in_time = secs <= budget;
        let pass = o.pass && in_time;
        let budget_text = if budget.is_finite() { format!("{budget:.0}s budget") } else { "no budget".into() };
        println!(
            "criterion {n:>2} {}: {title}: {}; {secs:.1}s, {budget_text}{}",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            if in_time { "" } else { " exceeded" }
        );
        if !pass {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
