//! Self-checks runnable against any instance (the CLI `check` command).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::delay_sim::{simulate, DelayModel, SimConfig};
use crate::error::Result;
use crate::kaczmarz::{rk_solve, rk_step, RkConfig, Sampling, Step};
use crate::parallel::{solve_parallel, RowSelection, RunConfig};
use crate::rng::seeded;
use crate::sparsemat::{read_matrix_market, write_matrix_market, CsrMatrix, SystemStats};
use crate::stepsize::{corollary_params, TheoryInputs};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub checks: Vec<CheckResult>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(CheckResult {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

/// Runs the structural, theory and solver checks on a normalized system.
pub fn run_checks(a: &CsrMatrix, b: &[f64], stats: &SystemStats, tau: u32, seed: u64) -> Result<CheckReport> {
    let mut rep = CheckReport { checks: Vec::new() };
    let (m, n) = (a.nrows(), a.ncols());
    let (mu, nu) = (stats.mu as f64, stats.nu as f64);
    let slack = 1e-9;

    rep.push("rows_normalized", a.is_normalized(), format!("{m} rows"));
    rep.push(
        "frobenius_equals_m",
        (stats.frob_sq - m as f64).abs() <= slack * m as f64,
        format!("||A||_F^2 = {}", stats.frob_sq),
    );
    rep.push(
        "alpha_le_sqrt_nu_mu",
        stats.alpha <= nu.sqrt() * mu * (1.0 + slack),
        format!("alpha = {}, sqrt(nu) mu = {}", stats.alpha, nu.sqrt() * mu),
    );
    rep.push(
        "alpha_le_sqrt_lambda_max_mu",
        stats.alpha <= stats.lambda_max.sqrt() * mu * (1.0 + slack),
        format!("alpha = {}, sqrt(lambda_max) mu = {}", stats.alpha, stats.lambda_max.sqrt() * mu),
    );
    rep.push(
        "lambda_max_le_mu_nu",
        stats.lambda_max <= mu * nu * (1.0 + slack),
        format!("lambda_max = {}, mu nu = {}", stats.lambda_max, mu * nu),
    );

    let p = corollary_params(&TheoryInputs::from(stats), tau);
    match (p.feasible, p.gamma_bounds) {
        (true, Some(g)) => rep.push(
            "corollary_first_bound_dominates",
            g.b1 <= g.b2 && g.b1 <= g.b3,
            format!("b1 = {}, b2 = {}, b3 = {}", g.b1, g.b2, g.b3),
        ),
        _ => rep.push(
            "corollary_first_bound_dominates",
            true,
            format!("skipped: tau = {tau} is infeasible (lhs = {})", p.feasibility_lhs),
        ),
    }

    let x0 = vec![0.0; n];
    let mut cfg = SimConfig::new(
        Step::Gamma(p.gamma.min(1.0 / mu)),
        DelayModel::UniformRandom { tau },
        1000,
    );
    cfg.seed = seed;
    cfg.event_cap = 1000;
    let run = simulate(a, b, &x0, &cfg, None)?;
    let bad = run
        .events
        .iter()
        .filter(|e| e.k > e.j || e.k < e.j.saturating_sub(tau as u64))
        .count();
    rep.push("delay_contract", bad == 0, format!("{bad} of {} events out of range", run.events.len()));

    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..20.min(m) {
        let i = rng.random_range(0..m);
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = rk_step(a, b, &z, i)?;
        worst = worst.max((a.row_dot(i, &p) - b[i]).abs() / (1.0 + b[i].abs()));
    }
    rep.push("projection_hits_hyperplane", worst <= 1e-12, format!("worst relative residual {worst:e}"));

    let mut buf = Vec::new();
    write_matrix_market(a, &mut buf)?;
    let same = read_matrix_market(&buf[..])? == *a;
    rep.push("matrix_market_round_trip", same, format!("{} nonzeros", a.nnz()));

    let epochs = 3;
    let ser = rk_solve(
        a,
        b,
        &x0,
        &RkConfig { max_epochs: epochs, target_r_sq: 0.0, seed, sampling: Sampling::Shuffle },
    )?;
    let par = solve_parallel(
        a,
        b,
        &x0,
        &RunConfig {
            threads: 1,
            step: Step::Projection,
            epochs,
            seed,
            sampling: RowSelection::SliceShuffle,
            ..Default::default()
        },
    )?;
    rep.push(
        "single_thread_equivalence",
        par.same_numerics(&ser),
        format!("{epochs} epochs compared bitwise"),
    );
    Ok(rep)
}
