use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use shishkin_cli::run::{resolve_out_dir, DEFAULT_SEED};
use shishkin_cli::{load_config, run, CliError, Command, RunConfig, RunContext};

/// Shishkin-mesh solver for singularly perturbed parabolic reaction-diffusion systems.
#[derive(Debug, Parser)]
#[command(name = "shishkin", version)]
struct Args {
    command: Command,
    /// JSON run configuration (optional for `selftest`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for the randomized suites [default: config seed, else 42].
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for studies and sweeps.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory [fallback: config output.dir, $SHISHKIN_OUT, ./out].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn execute(args: &Args) -> Result<bool, CliError> {
    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| CliError::new("threads", e.to_string()))?;
    }
    let cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError {
                path: Some(path.display().to_string()),
                ..CliError::new("io", e.to_string())
            })?;
            load_config(&text)?
        }
        None if args.command == Command::Selftest => load_config("{}")?,
        None => return Err(CliError::new("usage", format!("`{}` needs --config <path>", args.command))),
    };
    if let Some(declared) = cfg.command {
        if declared != args.command {
            return Err(CliError {
                path: Some("$.command".into()),
                ..CliError::new(
                    "usage",
                    format!("config declares `{declared}` but `{}` was requested", args.command),
                )
            });
        }
    }
    let ctx = context(args, &cfg);
    let outcome = run(args.command, &cfg, &ctx)?;
    let _ = writeln!(
        std::io::stdout(),
        "{}",
        serde_json::to_string_pretty(&outcome.summary).expect("summary serializes")
    );
    Ok(outcome.passed)
}

fn context(args: &Args, cfg: &RunConfig) -> RunContext {
    RunContext {
        seed: args.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED),
        out_dir: resolve_out_dir(args.out.as_deref(), cfg),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(2)
        }
    }
}
