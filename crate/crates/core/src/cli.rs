//! Command-line front end.
//!
//! Exit codes: 0 success, 1 error, 2 partial coverage (`synth`),
//! 3 non-convergence (`simulate`, `certify`, `rank`, `steer`).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::artifacts;
use crate::dynamics::{load_system, registry, SystemModel};
use crate::error::{Error, Result};
use crate::grid::{Grid, InputSet};
use crate::par::{with_threads, Execution};
use crate::rank::{self, RankCheck, RankReport, SteeringProblem};
use crate::reach::{compute_layers, ReachOptions};
use crate::simulate::{self, Semantics};
use crate::synth::{self, TableMeta};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "deadbeat", version, about = "Reachability-based feedback synthesis for discrete-time systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List built-in systems.
    List,
    /// Print a system's dimensions, boxes and equations.
    Inspect(SystemArgs),
    /// Compute reachable layers and a feedback table.
    Synth(SynthArgs),
    /// Run the closed loop from one initial state.
    Simulate(SimulateArgs),
    /// Run the closed loop from every cell center and check the step bound.
    Certify(CertifyArgs),
    /// Check the rank condition on the N-step input Jacobian.
    Rank(RankArgs),
    /// Solve for an N-step input sequence driving x0 to the origin.
    Steer(SteerArgs),
}

#[derive(Debug, Args)]
pub struct SystemArgs {
    /// Built-in system name or path to a definition file (.json or text).
    #[arg(long)]
    pub system: String,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Cells per state dimension; one value applies to all dimensions.
    #[arg(long, default_value = "41", value_delimiter = ',')]
    pub cells: Vec<usize>,
    /// Input grid points per input dimension (odd).
    #[arg(long, default_value = "21", value_delimiter = ',')]
    pub inputs: Vec<usize>,
    /// Radius of the target ball around the origin.
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    /// Worker threads; defaults to available parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Layer cap; defaults to 10 × the largest cell count.
    #[arg(long)]
    pub max_layers: Option<usize>,
    /// Memory budget for the precomputed transition table.
    #[arg(long, default_value_t = 256)]
    pub table_budget_mb: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SemanticsArg {
    Continuous,
    Quantized,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub table: PathBuf,
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Vec<f64>,
    /// Defaults to (number of layers in the table) + 5.
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long, value_enum, default_value = "continuous")]
    pub semantics: SemanticsArg,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub table: PathBuf,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long)]
    pub horizon: usize,
    /// Half-width of the sampled box around (x, u) = 0.
    #[arg(long, default_value_t = 0.1)]
    pub radius: f64,
    #[arg(long, default_value_t = 64)]
    pub samples: usize,
    #[arg(long, default_value_t = rank::DEFAULT_TAU)]
    pub tau: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Record that the user asserts asymptotic controllability (not checked).
    #[arg(long)]
    pub assume_asymptotic_controllability: bool,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SteerArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Vec<f64>,
    #[arg(long)]
    pub horizon: usize,
    /// Initial stacked input guess (N·m values); zeros by default.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub guess: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 50)]
    pub max_iters: usize,
    #[arg(long, default_value_t = rank::DEFAULT_TAU)]
    pub tau: f64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

pub fn execute(command: Command) -> Result<i32> {
    match command {
        Command::List => {
            for name in registry::names() {
                println!("{name}");
            }
            Ok(EXIT_OK)
        }
        Command::Inspect(a) => {
            print!("{}", describe(&load_system(&a.system)?));
            Ok(EXIT_OK)
        }
        Command::Synth(a) => cmd_synth(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Certify(a) => cmd_certify(&a),
        Command::Rank(a) => cmd_rank(&a),
        Command::Steer(a) => cmd_steer(&a),
    }
}

fn describe(model: &SystemModel) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "name: {}", model.name());
    let _ = writeln!(s, "n: {}", model.n());
    let _ = writeln!(s, "m: {}", model.m());
    let fmt_box = |b: &[crate::dynamics::Interval]| {
        b.iter().map(|i| format!("[{}, {}]", i.lo, i.hi)).collect::<Vec<_>>().join(", ")
    };
    let _ = writeln!(s, "state_box: {}", fmt_box(model.state_box()));
    let _ = writeln!(s, "input_box: {}", fmt_box(model.input_box()));
    if let Some(exprs) = model.expressions() {
        for (i, e) in exprs.iter().enumerate() {
            let _ = writeln!(s, "f{} = {e}", i + 1);
        }
    } else if let Some(src) = registry::source(model.name()) {
        for line in src.lines().filter(|l| l.starts_with('f')) {
            let _ = writeln!(s, "{line}");
        }
    }
    let _ = writeln!(s, "closed-form jacobian: {}", model.has_jacobian());
    s
}

struct Setup {
    model: SystemModel,
    grid: Grid,
    inputs: InputSet,
    epsilon: f64,
}

fn broadcast(values: &[usize], dim: usize, what: &str) -> Result<Vec<usize>> {
    match values.len() {
        1 => Ok(vec![values[0]; dim]),
        l if l == dim => Ok(values.to_vec()),
        l => Err(Error::InvalidArgument(format!("--{what} has {l} values, expected 1 or {dim}"))),
    }
}

fn setup(a: &GridArgs) -> Result<Setup> {
    let model = load_system(&a.system.system)?;
    let cells = broadcast(&a.cells, model.n(), "cells")?;
    if cells.iter().any(|&c| c < 2) {
        return Err(Error::InvalidArgument("--cells must be at least 2 per dimension".into()));
    }
    let points = broadcast(&a.inputs, model.m(), "inputs")?;
    if !(a.epsilon > 0.0 && a.epsilon.is_finite()) {
        return Err(Error::InvalidArgument("--epsilon must be positive".into()));
    }
    let grid = Grid::new(model.state_box().to_vec(), cells)?;
    let inputs = InputSet::uniform(model.input_box().to_vec(), points)?;
    Ok(Setup {
        model,
        grid,
        inputs,
        epsilon: a.epsilon,
    })
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let io = |source| Error::Io {
        path: dir.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn threaded<R: Send>(threads: Option<usize>, f: impl FnOnce(Execution) -> Result<R> + Send) -> Result<R> {
    with_threads(threads, f).map_err(Error::InvalidArgument)?
}

#[derive(Serialize)]
struct SynthSummary<'a> {
    system: &'a str,
    cells: &'a [usize],
    inputs: &'a [usize],
    epsilon: f64,
    max_layers: usize,
    layer_count: usize,
    growth_log: &'a [usize],
    fixed_point: bool,
    reachable_cells: usize,
    total_cells: usize,
    coverage: f64,
    certified_n: Option<u32>,
    verdict: &'static str,
}

pub fn cmd_synth(a: &SynthArgs) -> Result<i32> {
    let s = setup(&a.grid)?;
    let mut opts = ReachOptions::for_grid(&s.grid);
    if let Some(k) = a.max_layers {
        opts.max_layers = k;
    }
    opts.table_budget = a.table_budget_mb.saturating_mul(1 << 20);
    let (layers, table) = threaded(a.grid.threads, |exec| {
        let opts = ReachOptions { execution: exec, ..opts };
        let layers = compute_layers(&s.model, &s.grid, &s.inputs, s.epsilon, &opts)?;
        let table = synth::synthesize(&layers, &s.model, &s.grid, &s.inputs, exec)?;
        Ok((layers, table))
    })?;
    let certified = layers.certify_n_step();
    let summary = SynthSummary {
        system: s.model.name(),
        cells: s.grid.cells_per_dim(),
        inputs: s.inputs.points_per_dim(),
        epsilon: s.epsilon,
        max_layers: opts.max_layers,
        layer_count: layers.layer_count,
        growth_log: &layers.growth_log,
        fixed_point: layers.fixed_point,
        reachable_cells: layers.reachable_count(),
        total_cells: layers.cell_count(),
        coverage: layers.coverage(),
        certified_n: certified,
        verdict: if certified.is_some() { "Certified" } else { "NotCertified" },
    };
    let out = &a.grid.out;
    write(out, "layers.csv", &artifacts::layers_csv(&layers, &s.grid)?)?;
    write(out, "feedback.csv", &artifacts::table_csv(&table))?;
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write(out, "summary.json", &json)?;
    println!("coverage: {}", artifacts::fmt_f64(summary.coverage));
    println!("layers: {}", layers.layer_count);
    match certified {
        Some(n) => println!("N: {n}"),
        None => println!("N: NotCertified"),
    }
    Ok(if certified.is_some() { EXIT_OK } else { EXIT_PARTIAL })
}

fn load_table(path: &Path, s: &Setup) -> Result<synth::FeedbackTable> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let table = artifacts::parse_table_csv(&text, &path.display().to_string())?;
    table
        .meta
        .ensure_matches(&TableMeta::new(&s.model, &s.grid, &s.inputs, s.epsilon))?;
    Ok(table)
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<i32> {
    let s = setup(&a.grid)?;
    let table = load_table(&a.table, &s)?;
    let layer_count = table.max_layer().map_or(0, |k| k as usize + 1);
    let max_steps = a.max_steps.unwrap_or_else(|| simulate::default_max_steps(layer_count));
    let semantics = match a.semantics {
        SemanticsArg::Continuous => Semantics::Continuous,
        SemanticsArg::Quantized => Semantics::Quantized,
    };
    let run = simulate::run_closed_loop(&s.model, &table, &s.grid, &a.x0, s.epsilon, max_steps, semantics)?;
    write(&a.grid.out, "trajectory.csv", &artifacts::trajectory_csv(&run, s.model.m()))?;
    println!("outcome: {}", run.outcome);
    Ok(if run.outcome.is_converged() {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

pub fn cmd_certify(a: &CertifyArgs) -> Result<i32> {
    let s = setup(&a.grid)?;
    let table = load_table(&a.table, &s)?;
    let layer_count = table.max_layer().map_or(0, |k| k as usize + 1);
    let max_steps = simulate::default_max_steps(layer_count);
    let report = threaded(a.grid.threads, |exec| {
        simulate::certify_basin(&s.model, &table, &s.grid, s.epsilon, max_steps, exec)
    })?;
    write(&a.grid.out, "basin.csv", &artifacts::basin_csv(&report))?;
    let violations = report.violations().count();
    println!("converged fraction: {}", artifacts::fmt_f64(report.converged_fraction()));
    println!(
        "max steps: {}",
        report.max_steps().map_or_else(|| "-".to_string(), |s| s.to_string())
    );
    println!("unreachable cells: {}", report.unreachable_cells().count());
    println!("violations: {violations}");
    Ok(if report.certified() {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

#[derive(Serialize)]
struct RankOutput<'a> {
    #[serde(flatten)]
    report: &'a RankReport,
    asymptotic_controllability: &'static str,
    verdict: &'static str,
}

pub fn cmd_rank(a: &RankArgs) -> Result<i32> {
    let model = load_system(&a.system.system)?;
    let check = RankCheck {
        horizon: a.horizon,
        radius: a.radius,
        samples: a.samples,
        tau: a.tau,
        seed: a.seed,
    };
    let report = threaded(a.threads, |exec| rank::check_rank_condition(&model, &check, exec))?;
    let out = RankOutput {
        report: &report,
        asymptotic_controllability: if a.assume_asymptotic_controllability {
            "user-asserted"
        } else {
            "not asserted"
        },
        verdict: if report.holds_on_neighborhood { "holds" } else { "fails" },
    };
    let json = serde_json::to_string_pretty(&out).expect("report serializes") + "\n";
    write(&a.out, "rank.json", &json)?;
    println!("rank at origin: {} (n = {})", report.rank, report.n);
    println!("holds on sampled neighborhood: {}", report.holds_on_neighborhood);
    Ok(if report.holds_on_neighborhood {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

pub fn cmd_steer(a: &SteerArgs) -> Result<i32> {
    let model = load_system(&a.system.system)?;
    let problem = SteeringProblem::new(&model, a.x0.clone(), a.horizon, a.guess.clone())?;
    let steering = match rank::steer_to_origin(&model, &problem, a.tol, a.max_iters, a.tau) {
        Ok(s) => s,
        Err(e @ (Error::NoConvergence { .. } | Error::SingularStep { .. })) => {
            eprintln!("steer: {e}");
            return Ok(EXIT_NOT_CONVERGED);
        }
        Err(e) => return Err(e),
    };
    // independent check: replay the inputs through the open loop
    let replay = model.flow(&problem.x0, steering.inputs.chunks(model.m()))?;
    let residual = replay.final_state().iter().map(|v| v * v).sum::<f64>().sqrt();
    write(&a.out, "steer.csv", &artifacts::steering_csv(&steering, model.m()))?;
    println!("iterations: {}", steering.iterations);
    println!("replayed residual: {}", artifacts::fmt_f64(residual));
    if residual <= a.tol {
        Ok(EXIT_OK)
    } else {
        eprintln!("steer: replayed residual exceeds tolerance");
        Ok(EXIT_NOT_CONVERGED)
    }
}
