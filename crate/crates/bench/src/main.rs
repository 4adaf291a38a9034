use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chunked_ode::models::Problem;
use chunked_ode_bench::{
    dump_trajectory, parse_grid, run_study, run_trial, verify, write_records, BenchError, Gradient,
    Integration, Jacobian, Solver, Suite, TrialConfig,
};
use clap::{Args, Parser, Subcommand};

/// Benchmarks for chunked implicit ODE integration and adjoint gradients.
#[derive(Parser, Debug)]
#[command(name = "odebench", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one trial and write its rows as CSV.
    Run {
        #[command(flatten)]
        trial: TrialArgs,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the Cartesian product of a grid file.
    Study {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run trials concurrently. Wall times become unreliable.
        #[arg(long)]
        parallel: bool,
    },
    /// Write one trajectory as time,batch,component,value rows.
    Traj {
        #[command(flatten)]
        trial: TrialArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a property suite.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
    },
}

#[derive(Args, Debug)]
struct TrialArgs {
    #[arg(long)]
    problem: Problem,
    #[arg(long, default_value_t = 2)]
    n_unit: usize,
    #[arg(long, default_value_t = 3)]
    n_batch: usize,
    #[arg(long, default_value_t = 32)]
    n_time: usize,
    #[arg(long, default_value_t = 8)]
    n_chunk: usize,
    #[arg(long, value_enum, default_value_t = Jacobian::Analytic)]
    jacobian: Jacobian,
    #[arg(long, value_enum, default_value_t = Gradient::Adjoint)]
    gradient: Gradient,
    #[arg(long, value_enum, default_value_t = Solver::Thomas)]
    solver: Solver,
    /// Reduction sweeps of the hybrid solver.
    #[arg(long, default_value_t = 2)]
    n_switch: usize,
    #[arg(long, value_enum, default_value_t = Integration::Backward)]
    integration: Integration,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// End time; the problem's default when omitted.
    #[arg(long)]
    t_max: Option<f64>,
}

impl From<TrialArgs> for TrialConfig {
    fn from(a: TrialArgs) -> Self {
        TrialConfig {
            problem: a.problem,
            n_unit: a.n_unit,
            n_batch: a.n_batch,
            n_time: a.n_time,
            n_chunk: a.n_chunk,
            jacobian: a.jacobian,
            gradient: a.gradient,
            solver: a.solver,
            n_switch: a.n_switch,
            integration: a.integration,
            repeats: a.repeats,
            seed: a.seed,
            t_max: a.t_max,
        }
    }
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<bool, BenchError> {
    match cli.command {
        Command::Run { trial, out } => {
            let config = TrialConfig::from(trial);
            let rows = run_trial(&config)?;
            write_records(output(out.as_deref())?, &rows)?;
            for r in rows.iter().filter(|r| !r.is_ok()) {
                eprintln!("repeat {}: {}", r.repeat, r.status);
            }
            Ok(rows.iter().all(|r| r.is_ok()))
        }
        Command::Study {
            grid,
            out,
            parallel,
        } => {
            let text = std::fs::read_to_string(&grid)
                .map_err(|e| BenchError::Usage(format!("{}: {e}", grid.display())))?;
            let configs = parse_grid(&text)?.configs()?;
            if parallel {
                eprintln!("warning: trials run in parallel; wall times are not reliable");
            }
            let summary = run_study(&configs, output(out.as_deref())?, parallel)?;
            eprintln!("{} trials, {} failed", summary.trials, summary.failed);
            Ok(summary.failed == 0)
        }
        Command::Traj { trial, out } => {
            dump_trajectory(&TrialConfig::from(trial), output(out.as_deref())?)?;
            Ok(true)
        }
        Command::Verify { suite } => {
            let report = verify(suite);
            print!("{report}");
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
