//! Command-line front end for the `wfdual` library.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use wfdual::diffusion::{simulate_path, Scheme, SdeConfig};
use wfdual::dual::{gillespie_simulate, write_path_csv, GillespieConfig};
use wfdual::exec::{init_thread_pool, Execution};
use wfdual::harness::{generator_sweep, mc_duality_check, recursion_table, McCheckConfig, SweepConfig};
use wfdual::io::write_atomic;
use wfdual::kfun::{build_oracle, IRoute, KOracle, MonteCarloOracle, OracleKind, TwoLocusOracle};
use wfdual::specfun::SeriesControl;
use wfdual::stationary::{density_grid, mcmc_chains, write_samples_csv, McmcConfig};
use wfdual::{DualState, Error, FrequencyState, ModelParams};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "wfdual", version, about = "Coupled Wright-Fisher diffusions and their moment duals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the diffusion and write a trajectory CSV.
    SimulateDiffusion(SimDiffusionArgs),
    /// Simulate the dual jump process and write an event CSV.
    SimulateDual(SimDualArgs),
    /// Evaluate the normalized moment k(n).
    KEval(KEvalArgs),
    /// Check the duality and write a JSON report.
    Verify(VerifyArgs),
    /// Write the stationary density of a two-locus, two-allele model on a grid.
    DensityGrid(GridArgs),
    /// Draw MCMC samples from the stationary density.
    SampleStationary(SampleArgs),
}

#[derive(clap::Args)]
struct SimDiffusionArgs {
    /// Parameter file (JSON).
    #[arg(long)]
    params: PathBuf,
    /// Initial frequencies, all loci concatenated, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    x0: Vec<f64>,
    /// Time horizon.
    #[arg(long)]
    t: f64,
    /// Step size.
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Euler)]
    scheme: SchemeArg,
    /// Record every THIN-th step (the final state is always recorded).
    #[arg(long, default_value_t = 1)]
    thin: usize,
    /// Random seed; drawn from entropy and printed when omitted.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    /// Euler-Maruyama with projection onto the simplex.
    Euler,
    /// Multinomial resampling with selection-weighted means.
    JumpChain,
}

#[derive(clap::Args)]
struct SimDualArgs {
    #[arg(long)]
    params: PathBuf,
    /// Initial counts, all loci concatenated, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    n0: Vec<u32>,
    #[arg(long)]
    t: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Stop once the total count exceeds CAP.
    #[arg(long, default_value_t = 500)]
    cap: u32,
    #[arg(long = "k-oracle", value_enum, default_value_t = OracleArg::Auto)]
    k_oracle: OracleArg,
    /// Draws for the Monte Carlo oracle.
    #[arg(long, default_value_t = 200_000)]
    samples: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum OracleArg {
    Auto,
    Dirichlet,
    Single,
    TwoLocus,
    Quadrature,
    Mc,
}

#[derive(clap::Args)]
struct KEvalArgs {
    #[arg(long)]
    params: PathBuf,
    /// Counts, all loci concatenated, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    n: Vec<u32>,
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    method: MethodArg,
    /// Largest relative disagreement allowed between methods.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Draws for the Monte Carlo method.
    #[arg(long, default_value_t = 200_000)]
    samples: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum MethodArg {
    Auto,
    Dirichlet,
    Single,
    /// Two-locus series, cross-checked against quadrature.
    TwoLocus,
    Quadrature,
    Mc,
    /// Every deterministic method that applies, compared pairwise.
    All,
}

#[derive(clap::Args)]
struct VerifyArgs {
    #[arg(long)]
    params: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Generator)]
    mode: ModeArg,
    /// Random states (generator mode) or replicates per side (mc mode).
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Largest total count (generator and recursion modes).
    #[arg(long, default_value_t = 6)]
    max_total: u32,
    /// Residual tolerance (generator and recursion modes).
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Multiply the largest rate at each state by this factor (generator mode).
    #[arg(long)]
    perturb_rate: Option<f64>,
    /// Starting frequencies for mc mode; defaults to uniform.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    x: Option<Vec<f64>>,
    /// Counts for mc mode; defaults to one copy of the first allele per locus.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    n: Option<Vec<u32>>,
    /// Horizon for mc mode.
    #[arg(long, default_value_t = 0.5)]
    t: f64,
    /// Diffusion step for mc mode.
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 500)]
    cap: u32,
    #[arg(long = "k-oracle", value_enum, default_value_t = OracleArg::Auto)]
    k_oracle: OracleArg,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ModeArg {
    Generator,
    Mc,
    Recursion,
}

#[derive(clap::Args)]
struct GridArgs {
    #[arg(long)]
    params: PathBuf,
    #[arg(long, default_value_t = 100)]
    resolution: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct SampleArgs {
    #[arg(long)]
    params: PathBuf,
    /// Retained samples per chain.
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    #[arg(long, default_value_t = 5_000)]
    burn_in: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long, default_value_t = 1)]
    chains: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

/// Failure of a command, mapped to an exit code.
enum Failure {
    Lib(Error),
    Io(String),
    Verify(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("cannot write {}: {e}", path.display()))
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    if let Ok(v) = std::env::var("WFDUAL_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                init_thread_pool(n);
            }
            _ => {
                eprintln!("error: WFDUAL_THREADS must be a positive integer, got {v:?}");
                return ExitCode::from(EXIT_VALIDATION);
            }
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SimulateDiffusion(a) => simulate_diffusion(a),
        Command::SimulateDual(a) => simulate_dual(a),
        Command::KEval(a) => k_eval(a),
        Command::Verify(a) => verify(a),
        Command::DensityGrid(a) => grid(a),
        Command::SampleStationary(a) => sample(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { EXIT_VALIDATION } else { EXIT_NUMERIC })
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Verify(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(EXIT_VERIFY)
        }
    }
}

fn seed_or_entropy(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn load_params(path: &Path) -> Result<ModelParams, Failure> {
    if !path.is_file() {
        return Err(Error::Param(format!("parameter file {} does not exist", path.display())).into());
    }
    Ok(ModelParams::from_json_file(path)?)
}

fn oracle_kind(arg: OracleArg, samples: usize, seed: u64) -> OracleKind {
    match arg {
        OracleArg::Auto => OracleKind::Auto,
        OracleArg::Dirichlet => OracleKind::Dirichlet,
        OracleArg::Single => OracleKind::SingleLocus,
        OracleArg::TwoLocus => OracleKind::TwoLocus(IRoute::Series),
        OracleArg::Quadrature => OracleKind::Quadrature,
        OracleArg::Mc => OracleKind::MonteCarlo { samples, seed },
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> CmdResult {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
        writeln!(w)
    })
    .map_err(io_err(path))
}

fn simulate_diffusion(a: SimDiffusionArgs) -> CmdResult {
    let params = load_params(&a.params)?;
    let x0 = FrequencyState::new(params.layout(), a.x0)?;
    let scheme = match a.scheme {
        SchemeArg::Euler => Scheme::EulerProjected,
        SchemeArg::JumpChain => Scheme::JumpChain,
    };
    let cfg = SdeConfig::new(a.dt, seed_or_entropy(a.seed)).with_scheme(scheme);
    let rec = simulate_path(&params, &x0, a.t, &cfg, a.thin)?;
    rec.write_csv(&a.out, &params).map_err(io_err(&a.out))
}

fn simulate_dual(a: SimDualArgs) -> CmdResult {
    let params = load_params(&a.params)?;
    let n0 = DualState::new(params.layout(), a.n0)?;
    if !(a.t >= 0.0 && a.t.is_finite()) {
        return Err(Error::Param(format!("--t must be nonnegative, got {}", a.t)).into());
    }
    let seed = seed_or_entropy(a.seed);
    let oracle = build_oracle(&params, oracle_kind(a.k_oracle, a.samples, seed))?;
    let cfg = GillespieConfig { horizon: a.t, cap: a.cap, seed };
    let path = gillespie_simulate(&params, &n0, &cfg, oracle.as_ref())?;
    if path.truncated() {
        eprintln!("note: stopped at the lineage cap {} at t = {}", a.cap, path.end_time);
    }
    write_path_csv(&a.out, &params, &path).map_err(io_err(&a.out))
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn print_row(method: &str, k: f64, ln_k: f64, se: impl Display) {
    println!("{method:<22}{k:<26.16e}{ln_k:<26.16e}{se}");
}

fn k_eval(a: KEvalArgs) -> CmdResult {
    let params = load_params(&a.params)?;
    let n = DualState::new(params.layout(), a.n)?;
    println!("{:<22}{:<26}{:<26}se", "method", "k", "ln_k");

    let deterministic = |kind: OracleKind| -> Result<f64, Failure> {
        let o = build_oracle(&params, kind)?;
        let ln_k = o.ln_k(&n)?;
        print_row(kind.label(), ln_k.exp(), ln_k, "-");
        Ok(ln_k.exp())
    };
    let compare = |values: &[(&str, f64)]| -> CmdResult {
        for (i, (ma, va)) in values.iter().enumerate() {
            for (mb, vb) in &values[i + 1..] {
                let d = rel_diff(*va, *vb);
                if d > a.tol {
                    return Err(Failure::Verify(format!(
                        "{ma} and {mb} differ by {d:.3e} (tolerance {:e})",
                        a.tol
                    )));
                }
            }
        }
        Ok(())
    };

    match a.method {
        MethodArg::Mc => {
            let o = MonteCarloOracle::new(&params, a.samples, seed_or_entropy(a.seed))?;
            let est = o.estimate(&n)?;
            print_row("mc", est.mean, est.mean.ln(), format!("{:.6e}", est.std_error));
            for w in o.warnings() {
                eprintln!("warning: {w}");
            }
            Ok(())
        }
        MethodArg::TwoLocus => {
            let o = TwoLocusOracle::new(&params, IRoute::Series, SeriesControl::default())?;
            let (series, quad) = o.both_routes(&n)?;
            print_row("two-locus", series, series.ln(), "-");
            print_row("two-locus-quadrature", quad, quad.ln(), "-");
            compare(&[("series", series), ("quadrature", quad)])
        }
        MethodArg::All => {
            let mut values = Vec::new();
            for kind in [
                OracleKind::Dirichlet,
                OracleKind::SingleLocus,
                OracleKind::TwoLocus(IRoute::Series),
                OracleKind::TwoLocus(IRoute::Quadrature),
                OracleKind::Quadrature,
            ] {
                match deterministic(kind) {
                    Ok(v) => values.push((kind.label(), v)),
                    Err(Failure::Lib(Error::Misuse(_) | Error::Unsupported(_))) => {}
                    Err(e) => return Err(e),
                }
            }
            if values.is_empty() {
                return Err(Error::Unsupported("no deterministic method applies".into()).into());
            }
            compare(&values)
        }
        m => {
            let kind = match m {
                MethodArg::Auto => OracleKind::Auto,
                MethodArg::Dirichlet => OracleKind::Dirichlet,
                MethodArg::Single => OracleKind::SingleLocus,
                _ => OracleKind::Quadrature,
            };
            deterministic(kind).map(|_| ())
        }
    }
}

fn verify(a: VerifyArgs) -> CmdResult {
    let params = load_params(&a.params)?;
    let seed = seed_or_entropy(a.seed);
    let oracle: Arc<dyn KOracle> = build_oracle(&params, oracle_kind(a.k_oracle, 200_000, seed))?;
    let exec = Execution::Parallel;
    let (pass, detail) = match a.mode {
        ModeArg::Generator => {
            let cfg = SweepConfig {
                trials: a.trials,
                max_total: a.max_total,
                tol: a.tol,
                seed,
                perturb_rate: a.perturb_rate,
            };
            let rep = generator_sweep(&params, oracle.as_ref(), &cfg, exec)?;
            write_json(&a.out, &rep)?;
            println!("trials {}  max residual {:.3e}  tolerance {:e}", rep.residuals.len(), rep.max_residual, rep.tol);
            (rep.pass, format!("max generator residual {:.3e}", rep.max_residual))
        }
        ModeArg::Recursion => {
            let rep = recursion_table(&params, oracle.as_ref(), a.max_total, a.tol, exec)?;
            write_json(&a.out, &rep)?;
            println!("{:<30}residual", "n");
            for row in &rep.rows {
                println!("{:<30}{:.3e}", format!("{:?}", row.n.as_slice()), row.residual);
            }
            (rep.pass, format!("max recursion residual {:.3e}", rep.max_residual))
        }
        ModeArg::Mc => {
            let layout = params.layout();
            let x = match a.x {
                Some(v) => FrequencyState::new(layout, v)?,
                None => FrequencyState::uniform(layout),
            };
            let n = match a.n {
                Some(v) => DualState::new(layout, v)?,
                None => {
                    let mut v = vec![0; layout.total()];
                    (0..layout.num_loci()).for_each(|l| v[layout.index(l, 0)] = 1);
                    DualState::new(layout, v)?
                }
            };
            let mut cfg = McCheckConfig::new(a.t, a.trials, seed);
            cfg.cap = a.cap;
            let rep = mc_duality_check(&params, &x, &n, oracle.as_ref(), &SdeConfig::new(a.dt, seed), &cfg, exec)?;
            write_json(&a.out, &rep)?;
            print!("{}", rep.summary());
            (rep.verdict.pass, format!("z = {:.3}, dt/2 shift = {:.3} SE", rep.z_score, rep.halving_shift_se))
        }
    };
    if pass {
        Ok(())
    } else {
        Err(Failure::Verify(detail))
    }
}

fn grid(a: GridArgs) -> CmdResult {
    let params = load_params(&a.params)?;
    let g = density_grid(&params, a.resolution, Execution::Parallel)?;
    g.write_csv(&a.out).map_err(io_err(&a.out))?;
    println!("resolution {}  midpoint mass {:.10}", g.resolution, g.mass());
    Ok(())
}

fn sample(a: SampleArgs) -> CmdResult {
    let params = load_params(&a.params)?;
    if a.chains == 0 {
        return Err(Error::Param("--chains must be at least 1".into()).into());
    }
    let mut cfg = McmcConfig::new(a.count, a.burn_in, seed_or_entropy(a.seed));
    cfg.thin = a.thin;
    let runs = mcmc_chains(&params, &cfg, a.chains, Execution::Parallel)?;
    for (c, run) in runs.iter().enumerate() {
        println!(
            "chain {}  acceptance {:.3}  min ESS {:.0}",
            c + 1,
            run.acceptance,
            run.min_ess
        );
        for w in &run.warnings {
            eprintln!("warning: chain {}: {w}", c + 1);
        }
    }
    write_samples_csv(&a.out, params.layout(), &runs).map_err(io_err(&a.out))
}
