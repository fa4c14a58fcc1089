use std::path::PathBuf;
use std::process::ExitCode;

use cavicool_cli::{execute, parse_config, CliError, Mode, OutputPolicy};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "cavicool",
    version,
    about = "Cavity cooling and trapping of a driven two-level particle"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single ensemble: time series and steady-state summary.
    Run(Common),
    /// Two-parameter sweep of steady-state observables.
    Scan(Common),
    /// Friction coefficient map over (delta_a, delta_c).
    Friction(Common),
    /// Position histogram at a snapshot time.
    Hist(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory (overrides [output] dir).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Ensemble seed (overrides [ensemble] seed).
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, value_name = "N", env = "CAVICOOL_THREADS")]
    threads: Option<usize>,
    /// Replace existing output files.
    #[arg(long)]
    overwrite: bool,
    /// Suppress progress output.
    #[arg(long, short)]
    quiet: bool,
}

fn run(mode: Mode, args: Common) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = args.seed {
        cfg.ensemble.seed = seed;
    }
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    }
    let dir = args
        .out
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| CliError::Usage("no output directory: pass --out or set [output] dir".into()))?;
    let policy = OutputPolicy {
        dir,
        overwrite: args.overwrite || cfg.overwrite,
        progress: !args.quiet,
    };
    for path in execute(mode, &cfg, &policy)? {
        if !args.quiet {
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (mode, args) = match cli.command {
        Command::Run(a) => (Mode::Run, a),
        Command::Scan(a) => (Mode::Scan, a),
        Command::Friction(a) => (Mode::Friction, a),
        Command::Hist(a) => (Mode::Hist, a),
    };
    match run(mode, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cavicool: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
