use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use il7ctl::error::Error;
use il7ctl::model::Model;
use il7ctl::run::{
    default_protocols, load_table_for, policy_for, pretty_comparison, run_compare, run_solve,
    solve_report, write_comparison, RunConfig,
};
use il7ctl::sim::{monte_carlo, replicate_rng, simulate_trajectory, write_trajectory};
use il7ctl::solver::{save_table, Precision, SweepMode, ValueTable};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_HASH_MISMATCH: u8 = 4;
const EXIT_TABLE: u8 = 5;

#[derive(Parser)]
#[command(name = "il7ctl", version, about = "Optimal IL-7 injection schedules: solve, simulate, compare")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "IL7CTL_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run value iteration and write the value table and a report.
    Solve(SolveArgs),
    /// Monte Carlo evaluation of one policy.
    Simulate(SimulateArgs),
    /// Monte Carlo comparison of the optimal policy and fixed protocols.
    Compare(CompareArgs),
    /// Write one simulated trajectory as delimited text.
    ExportTrajectory(ExportArgs),
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    config: PathBuf,
    /// Value-table file (defaults to outputs.table of the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report file (defaults to outputs.report, else `<out>.report.txt`).
    #[arg(long)]
    report: Option<PathBuf>,
    /// One-day backward accumulation along flow lines.
    #[arg(long, conflicts_with = "reference")]
    fast: bool,
    /// Quadrature along the whole flow line of every grid point.
    #[arg(long)]
    reference: bool,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Store the table in single precision.
    #[arg(long)]
    f32: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Value table; required for the optimal policy.
    #[arg(long)]
    value: Option<PathBuf>,
    #[arg(long, default_value = "optimal")]
    protocol: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Summary file (JSON); printed to stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory receiving one trajectory file per replicate.
    #[arg(long)]
    trajectories: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    value: Option<PathBuf>,
    /// Protocols to compare (repeatable); defaults to optimal and the four fixed protocols.
    #[arg(long)]
    protocol: Vec<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated output (defaults to outputs.comparison).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    value: Option<PathBuf>,
    #[arg(long, default_value = "optimal")]
    protocol: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Replicate index (stream of the seed).
    #[arg(long, default_value_t = 0)]
    replicate: u64,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::NoEquilibrium { .. } | Error::GridTooLarge { .. } => {
            EXIT_CONFIG
        }
        Error::HashMismatch { .. } => EXIT_HASH_MISMATCH,
        Error::CorruptTable { .. } | Error::Io { .. } => EXIT_TABLE,
        Error::ProtocolViolation(_) => EXIT_FAILURE,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn load(config: &Path) -> Result<(RunConfig, Model), Error> {
    let cfg = RunConfig::load(config)?;
    let model = cfg.build_model()?;
    Ok((cfg, model))
}

fn load_optional_table(model: &Model, value: Option<&Path>) -> Result<Option<ValueTable>, Error> {
    value.map(|p| load_table_for(model, p)).transpose()
}

fn solve_cmd(args: SolveArgs) -> Result<u8, Error> {
    let (cfg, model) = load(&args.config)?;
    let mut options = cfg.solver;
    if args.fast {
        options.mode = SweepMode::FlowLine;
    }
    if args.reference {
        options.mode = SweepMode::Direct;
    }
    if let Some(tol) = args.tol {
        options.tol = tol;
    }
    if let Some(m) = args.max_iter {
        options.max_iter = m;
    }
    let out = args
        .out
        .or_else(|| cfg.outputs.table.as_ref().map(|p| cfg.resolve(p)))
        .ok_or_else(|| Error::Config("no output table: pass --out or set outputs.table".into()))?;
    let report_path = args
        .report
        .or_else(|| cfg.outputs.report.as_ref().map(|p| cfg.resolve(p)))
        .unwrap_or_else(|| {
            let mut p = out.clone().into_os_string();
            p.push(".report.txt");
            p.into()
        });
    let grid = il7ctl::solver::Grid::build(model.config())?;
    eprintln!(
        "grid: {} rows x {} columns, about {:.0} MiB for two tables",
        grid.n_sum,
        grid.n_pr,
        il7ctl::solver::memory_estimate_mb(grid.n_sum, grid.n_pr, 8)
    );
    drop(grid);
    let outcome = run_solve(&model, &options, |q, res| eprintln!("iteration {q:4}  residual {res:.3e}"))?;
    let precision = if args.f32 { Precision::F32 } else { Precision::F64 };
    save_table(&outcome.table, &out, precision)?;
    let report = solve_report(&model, &outcome);
    write_text(&report_path, &report)?;
    println!("W(x0) = {}", outcome.w_x0);
    println!("table written to {}", out.display());
    if outcome.report.converged {
        Ok(0)
    } else {
        eprintln!(
            "not converged after {} iterations (residual {:e} > {:e})",
            outcome.report.iterations,
            outcome.report.residuals.last().copied().unwrap_or(f64::NAN),
            options.tol
        );
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn simulate_cmd(args: SimulateArgs) -> Result<u8, Error> {
    let (cfg, model) = load(&args.config)?;
    let table = load_optional_table(&model, args.value.as_deref())?;
    let policy = policy_for(&args.protocol, &model, table.as_ref())?;
    let n = args.n.unwrap_or(cfg.mc.n_runs);
    let seed = args.seed.unwrap_or(cfg.mc.seed);
    let summary = monte_carlo(&model, &policy, n, seed)?;
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    match &args.out {
        Some(path) => write_text(path, &(json + "\n"))?,
        None => println!("{json}"),
    }
    if let Some(dir) = &args.trajectories {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
        for i in 0..n as u64 {
            let traj = simulate_trajectory(&model, &policy, &mut replicate_rng(seed, i))?;
            let path = dir.join(format!("trajectory_{i}.csv"));
            write_trajectory(&traj, create(&path)?)?;
        }
    }
    Ok(0)
}

fn compare_cmd(args: CompareArgs) -> Result<u8, Error> {
    let (cfg, model) = load(&args.config)?;
    let table = load_optional_table(&model, args.value.as_deref())?;
    let protocols = if args.protocol.is_empty() {
        let mut all = default_protocols();
        if table.is_none() {
            all.retain(|p| p != "optimal");
        }
        all
    } else {
        args.protocol
    };
    let n = args.n.unwrap_or(cfg.mc.n_runs);
    let seed = args.seed.unwrap_or(cfg.mc.seed);
    let rows = run_compare(&model, table.as_ref(), &protocols, n, seed)?;
    print!("{}", pretty_comparison(&rows));
    if let Some(out) = args.out.or_else(|| cfg.outputs.comparison.as_ref().map(|p| cfg.resolve(p))) {
        let mut w = create(&out)?;
        write_comparison(&rows, &mut w)?;
        w.flush().map_err(|e| Error::Io { path: out.clone(), source: e })?;
    }
    Ok(0)
}

fn export_cmd(args: ExportArgs) -> Result<u8, Error> {
    let (cfg, model) = load(&args.config)?;
    let table = load_optional_table(&model, args.value.as_deref())?;
    let policy = policy_for(&args.protocol, &model, table.as_ref())?;
    let seed = args.seed.unwrap_or(cfg.mc.seed);
    let traj = simulate_trajectory(&model, &policy, &mut replicate_rng(seed, args.replicate))?;
    write_trajectory(&traj, create(&args.out)?)?;
    println!(
        "cost {:.6}, {} injections, {:.1} days under threshold",
        traj.discounted_cost, traj.injections, traj.days_under_threshold
    );
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    }
    let result = match cli.command {
        Command::Solve(a) => solve_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Compare(a) => compare_cmd(a),
        Command::ExportTrajectory(a) => export_cmd(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
