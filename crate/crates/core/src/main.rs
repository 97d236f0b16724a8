use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use jump_bsde::experiment::{load_config, run_experiment, ExperimentPlan};

#[derive(Parser)]
#[command(version, about = "Penalized jump-constrained BSDE experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the selected solvers on a model config. Flags override config keys.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated: regression, lattice-dual, tree-dual, ipde, qvi, iterated-stopping
        #[arg(long)]
        solvers: Option<String>,
        /// Penalization levels, e.g. 1,2,4,8
        #[arg(long)]
        n: Option<String>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        dx: Option<f64>,
        /// Finite-difference box `lo,hi`
        #[arg(long = "box", allow_hyphen_values = true)]
        bounds: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let Command::Solve {
        config,
        out,
        solvers,
        n,
        paths,
        steps,
        dx,
        bounds,
        seed,
    } = Cli::parse().command;

    if let Some(threads) = std::env::var("JUMP_BSDE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t > 0)
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .expect("thread pool configured once");
    }

    let overrides: Vec<(&str, String)> = [
        ("solvers", solvers),
        ("n", n),
        ("paths", paths.map(|v| v.to_string())),
        ("steps", steps.map(|v| v.to_string())),
        ("dx", dx.map(|v| v.to_string())),
        ("box", bounds),
        ("seed", seed.map(|v| v.to_string())),
    ]
    .into_iter()
    .filter_map(|(k, v)| v.map(|v| (k, v)))
    .collect();

    let plan = match load_config(&config, &overrides)
        .and_then(|cfg| ExperimentPlan::from_config(&cfg, &out))
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match run_experiment(&plan) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
