//! `asyrk` command-line front end.
//!
//! Exit status: 0 on success, 1 on a domain error, 2 on a usage error.
//! Errors are reported on stderr as a single JSON object.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use asyrk::datagen::{gen_sparse_gaussian, read_instance, stacked_orthogonal, write_instance, GenSpec, Instance};
use asyrk::delay_sim::{monte_carlo_ratios, simulate, DelayModel, McConfig, SimConfig};
use asyrk::invariants::run_checks;
use asyrk::kaczmarz::{rk_solve_with, Hooks, RkConfig};
use asyrk::lsq::{lsq_solve, LsqConfig};
use asyrk::parallel::{solve_parallel_with, sweep_threads, RowSelection, RunConfig};
use asyrk::sparsemat::{compute_stats, write_vector, StatsOptions, DEFAULT_DENSE_CAP};
use asyrk::stepsize::{corollary_params, rate_table, TheoryInputs};
use asyrk::{Error, Execution, Sampling, SolutionSet, Step, SystemStats, Trace, Variant};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(name = "asyrk", version, about = "Asynchronous randomized Kaczmarz solvers and tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance directory.
    Gen(GenArgs),
    /// Print the system statistics of an instance as JSON.
    Stats(StatsArgs),
    /// Serial randomized Kaczmarz.
    SolveRk(RkArgs),
    /// Multithreaded asynchronous solver.
    SolveAsyrk(AsyrkArgs),
    /// Bounded-delay simulation (single run, or Monte Carlo with --runs).
    Simulate(SimArgs),
    /// Least-squares solve through the augmented system.
    Lsq(LsqArgs),
    /// Time the asynchronous solver over several thread counts.
    Sweep(SweepArgs),
    /// Print the step-size and rate comparison table.
    Rates(RatesArgs),
    /// Run the structural, theory and solver self-checks.
    Check(CheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    /// Sparse Gaussian entries at random positions.
    Gaussian,
    /// Stacked permuted block-orthogonal rows (a tight frame).
    Frame,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Kind::Gaussian)]
    kind: Kind,
    /// Block width for `--kind frame` (m must be a multiple of n).
    #[arg(long, default_value_t = 5)]
    width: usize,
    /// Add a component outside range(A) to b.
    #[arg(long)]
    inconsistent: bool,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    instance: PathBuf,
    /// Compute both spectral ends with a dense SVD.
    #[arg(long)]
    exact: bool,
}

#[derive(Args)]
struct OutputArgs {
    /// JSON-lines trace (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV copy of the trace.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Final iterate, one value per line.
    #[arg(long)]
    x_out: Option<PathBuf>,
    /// Record the distance to the solution set (dense projection).
    #[arg(long)]
    track_dist: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum RkSampling {
    Uniform,
    Norm,
    Shuffle,
}

#[derive(Args)]
struct RkArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-10)]
    target: f64,
    #[arg(long, value_enum, default_value_t = RkSampling::Uniform)]
    sampling: RkSampling,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum GammaArg {
    Corollary,
    Projection,
    Value(f64),
}

impl FromStr for GammaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "corollary" => return Ok(GammaArg::Corollary),
            "projection" => return Ok(GammaArg::Projection),
            _ => {}
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(GammaArg::Value(v)),
            _ => Err(format!("expected `corollary`, `projection` or a positive number, got `{s}`")),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Single,
    Fullrow,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Single => Variant::SingleComponent,
            VariantArg::Fullrow => Variant::FullRow,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectionArg {
    Replace,
    Shuffle,
}

#[derive(Args)]
struct AsyncArgs {
    #[arg(long, env = "ASYRK_THREADS", default_value_t = 1)]
    threads: usize,
    /// `corollary` (1/psi for the delay bound), `projection` (plain row
    /// projections), or a fixed value scaled per component by the row count.
    #[arg(long, default_value = "corollary")]
    gamma: GammaArg,
    /// Delay bound for `--gamma corollary`; defaults to threads - 1.
    #[arg(long)]
    tau: Option<u32>,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-10)]
    target: f64,
    #[arg(long, value_enum, default_value_t = VariantArg::Fullrow)]
    variant: VariantArg,
    #[arg(long, value_enum, default_value_t = SelectionArg::Shuffle)]
    sampling: SelectionArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Epochs between residual snapshots.
    #[arg(long, default_value_t = 1)]
    snapshot_interval: usize,
}

#[derive(Args)]
struct AsyrkArgs {
    instance: PathBuf,
    #[command(flatten)]
    run: AsyncArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum DelayArg {
    Fixed,
    Uniform,
    Max,
}

#[derive(Args)]
struct SimArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = 0)]
    tau: u32,
    #[arg(long, value_enum, default_value_t = DelayArg::Max)]
    delay: DelayArg,
    #[arg(long, default_value = "corollary")]
    gamma: GammaArg,
    #[arg(long, default_value_t = 10_000)]
    iterations: u64,
    #[arg(long, value_enum, default_value_t = VariantArg::Single)]
    variant: VariantArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Iterations between trace records (default m).
    #[arg(long)]
    record_every: Option<u64>,
    /// Monte Carlo replicates; prints averaged curves as JSON.
    #[arg(long)]
    runs: Option<usize>,
    /// Sampling stride of the Monte Carlo curves.
    #[arg(long, default_value_t = 1)]
    stride: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct LsqArgs {
    instance: PathBuf,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    phi: Option<f64>,
    /// Smallest nonzero singular value of A (computed densely when absent).
    #[arg(long)]
    sigma_r: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-26)]
    target: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SweepArgs {
    instance: PathBuf,
    /// Comma-separated thread counts; must include 1.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    thread_list: Vec<usize>,
    #[command(flatten)]
    run: AsyncArgs,
    /// JSON report (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct RatesArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = 0)]
    tau: u32,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CheckArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = 3)]
    tau: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            report_error("Usage", msg.trim_end());
            return ExitCode::from(2);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            ExitCode::from(1)
        }
    }
}

fn report_error(kind: &str, message: &str) {
    let line = json!({ "error": kind, "message": message });
    let _ = writeln!(io::stderr().lock(), "{line}");
}

type Res<T> = asyrk::Result<T>;

fn dispatch(cmd: Command) -> Res<ExitCode> {
    match cmd {
        Command::Gen(a) => gen(a),
        Command::Stats(a) => stats(a),
        Command::SolveRk(a) => solve_rk(a),
        Command::SolveAsyrk(a) => solve_asyrk(a),
        Command::Simulate(a) => sim(a),
        Command::Lsq(a) => lsq(a),
        Command::Sweep(a) => sweep(a),
        Command::Rates(a) => rates(a),
        Command::Check(a) => return check(a),
    }?;
    Ok(ExitCode::SUCCESS)
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

fn load(dir: &Path) -> Res<Instance> {
    read_instance(dir).map_err(|e| match e {
        Error::Io(io) => Error::Io(io::Error::new(io.kind(), format!("{}: {io}", dir.display()))),
        other => other,
    })
}

/// Exact spectra when the dense SVD fits, power iteration otherwise.
fn stats_for(inst: &Instance, exact: bool) -> Res<SystemStats> {
    let small = inst.a.nrows() * inst.a.ncols() <= DEFAULT_DENSE_CAP;
    let opts = if exact || small { StatsOptions::exact() } else { StatsOptions::default() };
    compute_stats(&inst.a, &opts)
}

fn oracle(inst: &Instance, out: &OutputArgs) -> Res<Option<SolutionSet>> {
    if out.track_dist {
        Ok(Some(SolutionSet::new(&inst.a, &inst.b, DEFAULT_DENSE_CAP)?))
    } else {
        Ok(None)
    }
}

fn create(path: &Path) -> Res<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json(value: &serde_json::Value, path: Option<&Path>) -> Res<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
            w.flush()?;
        }
        None => to_stdout(format!("{}\n", serde_json::to_string_pretty(value)?))?,
    }
    Ok(())
}

/// A closed pipe on stdout (e.g. `| head`) is not an error.
fn to_stdout(text: String) -> Res<()> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn emit_trace(trace: &Trace, out: &OutputArgs) -> Res<()> {
    match &out.out {
        Some(p) => {
            let mut w = create(p)?;
            trace.write_jsonl(&mut w)?;
            w.flush()?;
        }
        None => {
            let mut buf = Vec::new();
            trace.write_jsonl(&mut buf)?;
            to_stdout(String::from_utf8_lossy(&buf).into_owned())?;
        }
    }
    if let Some(p) = &out.csv {
        trace.write_csv(create(p)?)?;
    }
    if let Some(p) = &out.x_out {
        let mut w = create(p)?;
        write_vector(&trace.final_x, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn gen(args: GenArgs) -> Res<()> {
    let inst = match args.kind {
        Kind::Gaussian => {
            let mut spec = GenSpec::new(args.m, args.n, args.delta, args.seed);
            spec.consistent = !args.inconsistent;
            spec.noise_level = args.noise;
            gen_sparse_gaussian(&spec)?
        }
        Kind::Frame => {
            if args.inconsistent {
                return Err(usage("--inconsistent applies to --kind gaussian only"));
            }
            if args.n == 0 || !args.m.is_multiple_of(args.n) {
                return Err(usage("--kind frame needs m to be a multiple of n"));
            }
            stacked_orthogonal(args.m / args.n, args.n, args.width, args.seed)?
        }
    };
    write_instance(&inst, &args.out)?;
    write_json(&inst.meta, None)
}

fn stats(args: StatsArgs) -> Res<()> {
    let inst = load(&args.instance)?;
    let s = stats_for(&inst, args.exact)?;
    let mut v = serde_json::to_value(&s)?;
    // per-row counts are summarised rather than listed
    if let Some(obj) = v.as_object_mut() {
        obj.remove("theta");
        let min = s.theta.iter().min().copied().unwrap_or(0);
        obj.insert("theta_min".into(), json!(min));
        obj.insert("nnz".into(), json!(inst.a.nnz()));
    }
    write_json(&v, None)
}

fn solve_rk(args: RkArgs) -> Res<()> {
    let inst = load(&args.instance)?;
    let sampling = match args.sampling {
        RkSampling::Uniform => Sampling::Uniform,
        RkSampling::Norm => Sampling::NormProportional,
        RkSampling::Shuffle => Sampling::Shuffle,
    };
    let cfg = RkConfig { max_epochs: args.epochs, target_r_sq: args.target, seed: args.seed, sampling };
    let oracle = oracle(&inst, &args.output)?;
    let hooks = Hooks { oracle: oracle.as_ref(), stop: None };
    let x0 = vec![0.0; inst.a.ncols()];
    let trace = rk_solve_with(&inst.a, &inst.b, &x0, &cfg, hooks)?;
    emit_trace(&trace, &args.output)
}

/// Resolves `--gamma` against the instance statistics.
fn resolve_step(gamma: GammaArg, tau: u32, inst: &Instance) -> Res<Step> {
    match gamma {
        GammaArg::Projection => Ok(Step::Projection),
        GammaArg::Value(v) => Ok(Step::Gamma(v)),
        GammaArg::Corollary => {
            let s = stats_for(inst, false)?;
            let p = corollary_params(&TheoryInputs::from(&s), tau);
            if !p.feasible {
                eprintln!(
                    "warning: tau = {tau} is outside the corollary regime (lhs {:.3} > 1); using gamma = {:.6}",
                    p.feasibility_lhs, p.gamma
                );
            }
            Ok(Step::Gamma(p.gamma))
        }
    }
}

fn run_config(args: &AsyncArgs, inst: &Instance) -> Res<RunConfig> {
    let threads = args.threads.max(1);
    let tau = args.tau.unwrap_or(threads as u32 - 1);
    Ok(RunConfig {
        threads,
        step: resolve_step(args.gamma, tau, inst)?,
        epochs: args.epochs,
        target_r_sq: args.target,
        variant: args.variant.into(),
        sampling: match args.sampling {
            SelectionArg::Replace => RowSelection::WithReplacement,
            SelectionArg::Shuffle => RowSelection::SliceShuffle,
        },
        seed: args.seed,
        snapshot_interval: args.snapshot_interval,
    })
}

fn solve_asyrk(args: AsyrkArgs) -> Res<()> {
    if args.run.threads == 0 {
        return Err(usage("--threads must be at least 1"));
    }
    let inst = load(&args.instance)?;
    let cfg = run_config(&args.run, &inst)?;
    let oracle = oracle(&inst, &args.output)?;
    let hooks = Hooks { oracle: oracle.as_ref(), stop: None };
    let x0 = vec![0.0; inst.a.ncols()];
    let trace = solve_parallel_with(&inst.a, &inst.b, &x0, &cfg, hooks)?;
    emit_trace(&trace, &args.output)
}

fn sim(args: SimArgs) -> Res<()> {
    let inst = load(&args.instance)?;
    let delay = match args.delay {
        DelayArg::Fixed => DelayModel::Fixed { d: args.tau },
        DelayArg::Uniform => DelayModel::UniformRandom { tau: args.tau },
        DelayArg::Max => DelayModel::MaxStaleness { tau: args.tau },
    };
    let step = resolve_step(args.gamma, args.tau, &inst)?;
    let mut cfg = SimConfig::new(step, delay, args.iterations);
    cfg.seed = args.seed;
    cfg.variant = args.variant.into();
    cfg.record_every = args.record_every;
    let oracle = oracle(&inst, &args.output)?;
    let x0 = vec![0.0; inst.a.ncols()];
    match args.runs {
        Some(runs) => {
            let mc = McConfig { sim: cfg, runs, stride: args.stride, exec: Execution::Parallel };
            let res = monte_carlo_ratios(&inst.a, &inst.b, &x0, &mc, oracle.as_ref())?;
            write_json(&serde_json::to_value(&res)?, args.output.out.as_deref())
        }
        None => {
            let run = simulate(&inst.a, &inst.b, &x0, &cfg, oracle.as_ref())?;
            emit_trace(&run.trace, &args.output)
        }
    }
}

fn lsq(args: LsqArgs) -> Res<()> {
    let inst = load(&args.instance)?;
    let cfg = LsqConfig {
        sigma_r: args.sigma_r,
        zeta: args.zeta,
        phi: args.phi,
        max_epochs: args.epochs,
        target_r_sq: args.target,
        seed: args.seed,
        ..Default::default()
    };
    let res = lsq_solve(&inst.a, &inst.b, &cfg)?;
    let mut trace = res.trace;
    trace.final_x = res.x_ls;
    if let Some(obj) = trace.config_echo.as_object_mut() {
        obj.insert(
            "lsq".into(),
            json!({
                "sigma_r": res.sigma_r,
                "zeta": res.zeta,
                "phi": res.phi,
                "normal_residual": res.normal_residual,
            }),
        );
    }
    let out = OutputArgs { track_dist: false, ..args.output };
    emit_trace(&trace, &out)
}

fn sweep(args: SweepArgs) -> Res<()> {
    let inst = load(&args.instance)?;
    let mut run = args.run;
    // the step is fixed by the largest thread count so every run shares it
    run.threads = args.thread_list.iter().copied().max().unwrap_or(1);
    let cfg = run_config(&run, &inst)?;
    let x0 = vec![0.0; inst.a.ncols()];
    let rep = sweep_threads(&inst.a, &inst.b, &x0, &cfg, &args.thread_list)?;
    if let Some(p) = &args.csv {
        let mut w = csv::Writer::from_writer(create(p)?);
        for e in &rep.entries {
            w.serialize(e).map_err(|e| Error::Io(io::Error::other(e)))?;
        }
        w.flush()?;
    }
    write_json(&serde_json::to_value(&rep)?, args.out.as_deref())
}

fn rates(args: RatesArgs) -> Res<()> {
    let inst = load(&args.instance)?;
    let s = stats_for(&inst, false)?;
    let rep = rate_table(&TheoryInputs::from(&s), args.tau)?;
    if args.json {
        write_json(&serde_json::to_value(&rep)?, None)
    } else {
        to_stdout(format!("{rep}\n"))
    }
}

fn check(args: CheckArgs) -> Res<ExitCode> {
    let inst = load(&args.instance)?;
    let s = stats_for(&inst, false)?;
    let rep = run_checks(&inst.a, &inst.b, &s, args.tau, args.seed)?;
    write_json(&serde_json::to_value(&rep)?, None)?;
    Ok(if rep.all_passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
