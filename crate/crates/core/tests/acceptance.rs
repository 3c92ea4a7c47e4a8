//! Acceptance criteria. Each test writes one `PASS`/`FAIL` line straight to
//! stderr (visible without `--nocapture`) and then asserts.

use std::io::Write;
use std::time::Instant;

use asyrk::datagen::{gen_sparse_gaussian, stacked_orthogonal, GenSpec, Instance};
use asyrk::delay_sim::{
    final_dist_sq, monte_carlo_ratios, rate_fit_points, DelayModel, McConfig, SimConfig,
};
use asyrk::kaczmarz::{rk_solve, rk_solve_with, Hooks, RkConfig};
use asyrk::lsq::{critical_ratio, lsq_solve, optimal_params, LsqConfig};
use asyrk::parallel::{
    solve_instrumented, solve_parallel, sweep_threads, RowSelection, RunConfig,
};
use asyrk::sparsemat::{compute_stats, to_dense, StatsOptions, DEFAULT_DENSE_CAP};
use asyrk::stepsize::{corollary_params, iteration_bound, rate_iteration, StepParams, TheoryInputs};
use asyrk::{Execution, Sampling, SolutionSet, Step, Variant};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, DiscreteCDF};

fn report(id: u32, name: &str, pass: bool, detail: &str, start: Instant) -> bool {
    let line = format!(
        "criterion {id:>2} [{name}]: {} ({detail}; {:.1}s)\n",
        if pass { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    std::io::stderr().lock().write_all(line.as_bytes()).unwrap();
    pass
}

/// The 100 x 50 system used for the staleness criteria: a tight frame with
/// `A^T A = 2 I` and five nonzeros per row.
fn desk_frame() -> Instance {
    stacked_orthogonal(2, 50, 5, 2024).unwrap()
}

fn desk_corollary(inst: &Instance, tau: u32) -> (TheoryInputs, StepParams) {
    let stats = compute_stats(&inst.a, &StatsOptions::exact()).unwrap();
    let th = TheoryInputs::from(&stats);
    let p = corollary_params(&th, tau);
    assert!(p.feasible, "desk instance must be corollary-feasible at tau = {tau}");
    (th, p)
}

/// The x0.1-scaled sparse experiment instance.
fn scaled_instance() -> Instance {
    gen_sparse_gaussian(&GenSpec::new(8000, 10000, 0.001, 6)).unwrap()
}

#[test]
fn c01_serial_rk_rate() {
    let start = Instant::now();
    let inst = gen_sparse_gaussian(&GenSpec::new(500, 200, 1.0, 1)).unwrap();
    let (a, b) = (&inst.a, &inst.b);
    let stats = compute_stats(a, &StatsOptions::exact()).unwrap();
    let lmin = stats.lambda_min.unwrap();
    let oracle = SolutionSet::new(a, b, DEFAULT_DENSE_CAP).unwrap();
    let epochs = 40;
    let seeds = 50;
    let mut mean = vec![0.0; epochs + 1];
    for s in 0..seeds {
        let cfg = RkConfig { max_epochs: epochs, target_r_sq: 0.0, seed: 100 + s, sampling: Sampling::Uniform };
        let hooks = Hooks { oracle: Some(&oracle), stop: None };
        let t = rk_solve_with(a, b, &vec![0.0; 200], &cfg, hooks).unwrap();
        for (k, e) in t.epochs.iter().enumerate() {
            mean[k] += e.dist_sq.unwrap() / seeds as f64;
        }
    }
    let pts: Vec<(f64, f64)> = mean.iter().enumerate().map(|(k, &d)| ((k * 500) as f64, d)).collect();
    let fit = rate_fit_points(&pts).unwrap();
    let fitted = fit.slope.exp();
    let bound = 1.0 - lmin / 500.0;
    // the fitted log-slope must reach at least 90% of the bound's log-slope
    let pass = fit.slope <= bound.ln() * 0.90 && fitted <= bound * 1.10;
    let detail = format!(
        "fitted factor {fitted:.7}, bound 1 - lambda_min/m = {bound:.7}, log-slope ratio {:.3}",
        fit.slope / bound.ln()
    );
    assert!(report(1, "serial RK rate", pass, &detail, start), "{detail}");
}

fn stale_mc(inst: &Instance, p: &StepParams, iterations: u64, stride: u64) -> asyrk::delay_sim::McResult {
    let oracle = SolutionSet::new(&inst.a, &inst.b, DEFAULT_DENSE_CAP).unwrap();
    let cfg = McConfig {
        sim: SimConfig {
            seed: 7,
            ..SimConfig::new(Step::Gamma(p.gamma), DelayModel::MaxStaleness { tau: p.tau }, iterations)
        },
        runs: 1000,
        stride,
        exec: Execution::Parallel,
    };
    monte_carlo_ratios(&inst.a, &inst.b, &vec![0.0; inst.a.ncols()], &cfg, Some(&oracle)).unwrap()
}

#[test]
fn c02_ratio_bounds() {
    let start = Instant::now();
    let inst = desk_frame();
    let (_, p) = desk_corollary(&inst, 5);
    let r = stale_mc(&inst, &p, 2000, 1);
    let (lo, hi) = (0.9 / p.rho, 1.1 * p.rho);
    let min = r.ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max = r.ratios.iter().copied().fold(0.0, f64::max);
    let pass = min >= lo && max <= hi;
    let detail = format!(
        "{} ratios in [{min:.5}, {max:.5}], allowed [{lo:.5}, {hi:.5}], rho = {:.5}",
        r.ratios.len(),
        p.rho
    );
    assert!(report(2, "ratio bounds", pass, &detail, start), "{detail}");
}

#[test]
fn c03_linear_rate_under_staleness() {
    let start = Instant::now();
    let inst = desk_frame();
    let (th, p) = desk_corollary(&inst, 5);
    let r = stale_mc(&inst, &p, 20_000, 100);
    let d = r.mean_dist_sq.unwrap();
    let pts: Vec<(f64, f64)> = r.iterations.iter().map(|&j| j as f64).zip(d.iter().copied()).collect();
    let fit = rate_fit_points(&pts).unwrap();
    let predicted = rate_iteration(&th, p.gamma, p.psi).unwrap().per_iteration;
    let ratio = fit.slope / predicted.ln();
    let pass = ratio >= 0.85;
    let detail = format!(
        "fitted log-slope {:.4e}, theorem log-slope {:.4e}, ratio {ratio:.3}, r2 {:.4}, final mean dist {:.3e}",
        fit.slope,
        predicted.ln(),
        fit.r2,
        d.last().unwrap()
    );
    assert!(report(3, "linear rate under staleness", pass, &detail, start), "{detail}");
}

#[test]
fn c04_thread_count_insensitivity() {
    let start = Instant::now();
    let inst = scaled_instance();
    let stats = compute_stats(&inst.a, &StatsOptions::default()).unwrap();
    let th = TheoryInputs::from(&stats);
    let x0 = vec![0.0; inst.a.ncols()];
    let mut epochs = Vec::new();
    for threads in [1usize, 2, 4] {
        let p = corollary_params(&th, threads as u32 - 1);
        assert!(p.feasible);
        let cfg = RunConfig {
            threads,
            step: Step::Gamma(p.gamma),
            epochs: 20_000,
            target_r_sq: 1e-5,
            seed: 31,
            ..Default::default()
        };
        let t = solve_parallel(&inst.a, &inst.b, &x0, &cfg).unwrap();
        assert!(t.converged, "{threads} threads did not reach the target");
        epochs.push(t.epochs_to(1e-5).unwrap());
    }
    let lo = *epochs.iter().min().unwrap() as f64;
    let hi = *epochs.iter().max().unwrap() as f64;
    let spread = (hi - lo) / lo;
    let pass = spread < 0.25;
    let detail = format!("epochs to 1e-5 for threads 1/2/4: {epochs:?}, spread {:.1}%", spread * 100.0);
    assert!(report(4, "thread-count insensitivity", pass, &detail, start), "{detail}");
}

#[test]
fn c05_single_thread_equivalence() {
    let start = Instant::now();
    let mut all = true;
    let mut compared = 0;
    for inst in [scaled_instance(), desk_frame()] {
        let x0 = vec![0.0; inst.a.ncols()];
        for seed in [0, 17] {
            let par = solve_parallel(
                &inst.a,
                &inst.b,
                &x0,
                &RunConfig {
                    threads: 1,
                    step: Step::Projection,
                    epochs: 15,
                    variant: Variant::FullRow,
                    sampling: RowSelection::SliceShuffle,
                    seed,
                    ..Default::default()
                },
            )
            .unwrap();
            let ser = rk_solve(
                &inst.a,
                &inst.b,
                &x0,
                &RkConfig { max_epochs: 15, target_r_sq: 0.0, seed, sampling: Sampling::Shuffle },
            )
            .unwrap();
            all &= par.same_numerics(&ser);
            compared += par.epochs.len();
        }
    }
    let detail = format!("{compared} epoch records compared bitwise");
    assert!(report(5, "single-thread equivalence", all, &detail, start), "{detail}");
}

#[test]
fn c06_high_probability_bound() {
    let start = Instant::now();
    let inst = desk_frame();
    let (th, p) = desk_corollary(&inst, 5);
    let oracle = SolutionSet::new(&inst.a, &inst.b, DEFAULT_DENSE_CAP).unwrap();
    let x0 = vec![0.0; inst.a.ncols()];
    let (eps, eta) = (1e-4, 0.1);
    let bound = iteration_bound(&th, oracle.dist_sq(&x0), eps, eta).unwrap();
    let cfg = SimConfig {
        seed: 1234,
        ..SimConfig::new(Step::Gamma(p.gamma), DelayModel::MaxStaleness { tau: 5 }, bound.j_min)
    };
    let runs = 200;
    let d = final_dist_sq(&inst.a, &inst.b, &x0, &cfg, runs, &oracle, Execution::Parallel).unwrap();
    let hits = d.iter().filter(|&&v| v <= eps).count() as u64;
    // one-sided test of H0: p >= 1 - eta; reject when P(X <= hits) < 5%
    let p_value = Binomial::new(1.0 - eta, runs as u64).unwrap().cdf(hits);
    let pass = p_value >= 0.05;
    let detail = format!("j_min = {}, {hits}/{runs} runs within eps, p-value {p_value:.3}", bound.j_min);
    assert!(report(6, "high-probability bound", pass, &detail, start), "{detail}");
}

#[test]
fn c07_least_squares_extension() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut grid_ok = true;
    for seed in 0..3 {
        let mut spec = GenSpec::new(200, 100, 0.1, 40 + seed);
        spec.consistent = false;
        spec.noise_level = 2.0;
        let inst = gen_sparse_gaussian(&spec).unwrap();
        let r = lsq_solve(&inst.a, &inst.b, &LsqConfig::default()).unwrap();
        let d = to_dense(&inst.a);
        let oracle = (d.transpose() * &d)
            .cholesky()
            .unwrap()
            .solve(&(d.transpose() * DVector::from_column_slice(&inst.b)));
        worst = worst.max((DVector::from_vec(r.x_ls) - oracle).norm());

        // 50 x 50 log grid over [ζ*/10, 10ζ*] x [0.1, 10]
        let (phi_s, zeta_s) = optimal_params(r.sigma_r).unwrap();
        let frob = inst.a.frob_sq();
        let best = critical_ratio(r.sigma_r, frob, 200, zeta_s, phi_s).unwrap();
        let step = 2.0 / 49.0;
        let mut arg = (0, 0);
        let mut top = f64::NEG_INFINITY;
        for i in 0..50 {
            for k in 0..50 {
                let zeta = zeta_s * 10f64.powf(-1.0 + step * i as f64);
                let phi = 10f64.powf(-1.0 + step * k as f64);
                let v = critical_ratio(r.sigma_r, frob, 200, zeta, phi).unwrap();
                if v > top {
                    top = v;
                    arg = (i, k);
                }
            }
        }
        let zi = ((arg.0 as f64 * step - 1.0) - 0.0).abs();
        let pk = ((arg.1 as f64 * step - 1.0) - phi_s.log10()).abs();
        grid_ok &= best >= top * (1.0 - 1e-12) && zi <= step && pk <= step;
    }
    let pass = worst < 1e-6 && grid_ok;
    let detail = format!("max distance to normal-equations oracle {worst:.2e}; grid optimum check {grid_ok}");
    assert!(report(7, "least-squares extension", pass, &detail, start), "{detail}");
}

#[test]
fn c08_structural_bounds() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = Vec::new();
    for k in 0..100 {
        let m = rng.random_range(10..100);
        let n = rng.random_range(5..80);
        let min_delta = (m as f64 / (m * n) as f64).max(0.02);
        let delta = rng.random_range(min_delta..=1.0);
        let inst = gen_sparse_gaussian(&GenSpec::new(m, n, delta, k)).unwrap();
        let s = compute_stats(&inst.a, &StatsOptions::exact()).unwrap();
        let (mu, nu) = (s.mu as f64, s.nu as f64);
        let tol = 1e-9;
        let ok = s.alpha <= nu.sqrt() * mu * (1.0 + tol)
            && s.alpha <= s.lambda_max.sqrt() * mu * (1.0 + tol)
            && s.lambda_max <= mu * nu * (1.0 + tol)
            && (s.frob_sq - m as f64).abs() <= tol * m as f64;
        if !ok {
            failures.push(k);
        }
    }
    let pass = failures.is_empty();
    let detail = format!("100 instances, failures {failures:?}");
    assert!(report(8, "structural bounds", pass, &detail, start), "{detail}");
}

#[test]
fn c09_no_lost_updates() {
    let start = Instant::now();
    let mut ok = true;
    let mut notes = Vec::new();
    // small n: workers collide on the same elements constantly
    let inst = gen_sparse_gaussian(&GenSpec::new(400, 20, 0.5, 9)).unwrap();
    for variant in [Variant::SingleComponent, Variant::FullRow] {
        let cfg = RunConfig {
            threads: 8,
            step: Step::Gamma(0.02),
            epochs: 50,
            variant,
            sampling: RowSelection::WithReplacement,
            seed: 5,
            snapshot_interval: 10,
            ..Default::default()
        };
        let x0 = vec![0.25; inst.a.ncols()];
        let (t, audit) = solve_instrumented(&inst.a, &inst.b, &x0, &cfg).unwrap();
        let n_inc = audit.increments as f64;
        let err = t
            .final_x
            .iter()
            .zip(x0.iter().zip(&audit.sums))
            .map(|(f, (x, s))| (f - (x + s)).abs())
            .fold(0.0, f64::max);
        let count_ok = variant != Variant::SingleComponent || audit.increments == 50 * 400;
        ok &= err <= 1e-9 * n_inc && count_ok;
        notes.push(format!("{variant:?}: N = {}, max deviation {err:.2e}", audit.increments));
    }
    let detail = notes.join("; ");
    assert!(report(9, "no lost updates", ok, &detail, start), "{detail}");
}

#[test]
fn c10_speedup_smoke() {
    let start = Instant::now();
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let inst = scaled_instance();
    let stats = compute_stats(&inst.a, &StatsOptions::default()).unwrap();
    let p = corollary_params(&TheoryInputs::from(&stats), 3);
    let cfg = RunConfig {
        step: Step::Gamma(p.gamma),
        epochs: 20_000,
        target_r_sq: 1e-5,
        seed: 3,
        ..Default::default()
    };
    let rep = sweep_threads(&inst.a, &inst.b, &vec![0.0; inst.a.ncols()], &cfg, &[1, 4]).unwrap();
    let s4 = rep.entries[1].speedup;
    let detail = format!("speedup at 4 threads {s4:.2}x on {cores} available cores");
    if cores >= 4 {
        assert!(report(10, "speedup smoke test", s4 >= 2.0, &detail, start), "{detail}");
    } else {
        let line = format!(
            "criterion 10 [speedup smoke test]: WARN (fewer than 4 cores; {detail}; {:.1}s)\n",
            start.elapsed().as_secs_f64()
        );
        std::io::stderr().lock().write_all(line.as_bytes()).unwrap();
    }
}
