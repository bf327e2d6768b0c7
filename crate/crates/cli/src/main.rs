use clap::{Parser, Subcommand, ValueEnum};
use mhbound_cli::run::{run, Action, CliError, Suite};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mhbound", version, about = "Mixing bounds and Monte Carlo checks for RWM and pCN")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// JSON experiment config (an array of configs for batch `bound`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for report files; without it the main report goes to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for estimators and scans.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate the explicit bounds for a config.
    Bound,
    /// Run one chain and report its statistics.
    Sample,
    /// Run a named check suite; exits 1 if any check fails.
    Verify { suite: SuiteArg },
    /// Estimate a metric across dimensions and fit the log-log slope.
    Scan,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    AcceptanceFloor,
    GapSandwich,
    FlowSandwich,
    ScalingSlope,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let action = match cli.command {
        Cmd::Bound => Action::Bound,
        Cmd::Sample => Action::Sample,
        Cmd::Scan => Action::Scan,
        Cmd::Verify { suite } => Action::Verify(match suite {
            SuiteArg::AcceptanceFloor => Suite::AcceptanceFloor,
            SuiteArg::GapSandwich => Suite::GapSandwich,
            SuiteArg::FlowSandwich => Suite::FlowSandwich,
            SuiteArg::ScalingSlope => Suite::ScalingSlope,
        }),
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(2);
        }
        // Only fails if a global pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let result = (|| {
        let text = match &cli.config {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?),
            None => None,
        };
        let out = run(action, text.as_deref(), cli.seed)?;
        out.emit(cli.out.as_deref())?;
        Ok::<bool, CliError>(out.passed)
    })();
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
