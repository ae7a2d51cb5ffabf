use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dimfac::exact::LARGE_MODEL_ROWS;
use dimfac_cli::{cmd_evaluate, cmd_export_milp, cmd_render, cmd_solve, CliError, Method};

#[derive(Parser)]
#[command(name = "dimfac", version, about = "Location of dimensional facilities on a grid")]
struct Cli {
    /// Worker threads; 0 uses every available core.
    #[arg(long, global = true, env = "DIMFAC_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Grasp,
    Exact,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance and write a solution record.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "grasp")]
        method: MethodArg,
        /// Overrides the seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate an explicit placement `k1,l1;k2,l2;...`.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        placement: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the mixed-integer model in CPLEX-LP format.
    ExportMilp {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Solution record used as a warm start.
        #[arg(long)]
        warm_start: Option<PathBuf>,
        /// Constraint count above which a size warning is printed.
        #[arg(long, default_value_t = LARGE_MODEL_ROWS)]
        warn_rows: usize,
    },
    /// Draw a solution as SVG.
    Render {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        show_grid: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve { config, method, seed, out } => {
            let method = match method {
                MethodArg::Grasp => Method::Grasp,
                MethodArg::Exact => Method::Exact,
            };
            let rec = cmd_solve(&config, method, seed, &out)?;
            println!("total {} at {} ({})", rec.objective.total, rec.placement, out.display());
        }
        Command::Evaluate { config, placement, out } => {
            let rec = cmd_evaluate(&config, &placement, &out)?;
            println!("total {} at {} ({})", rec.objective.total, rec.placement, out.display());
        }
        Command::ExportMilp { config, out, warm_start, warn_rows } => {
            let s = cmd_export_milp(&config, &out, warm_start.as_deref(), warn_rows)?;
            println!(
                "{} variables ({} binary), {} constraints, big-M {} ({})",
                s.variables,
                s.binaries,
                s.constraints,
                s.big_m,
                out.display()
            );
        }
        Command::Render { config, solution, out, show_grid } => {
            cmd_render(&config, &solution, &out, show_grid)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
