use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vosopt::TraceFormat;
use vosopt_cli::{cmd_report, cmd_run, cmd_sweep, cmd_verify, Failure, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "vosopt", version, about = "Run, verify and compare splitting-based first-order schemes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scheme from a JSON config and write its trace.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        format: Option<TraceFormat>,
    },
    /// Run a property suite: bounds, lyapunov, schemes or all.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every override of a sweep config, possibly in parallel.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory receiving the traces and `manifest.json`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        format: Option<TraceFormat>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Compare traces against their theoretical rates.
    Report {
        #[arg(long)]
        config: PathBuf,
        /// Write the JSON table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    let mut stdout = std::io::stdout().lock();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            format,
        } => cmd_run(&config, seed, out.as_deref(), format, &mut stdout),
        Command::Verify {
            suite,
            config,
            seed,
            out,
        } => cmd_verify(&suite, config.as_deref(), seed, out.as_deref(), &mut stdout),
        Command::Sweep {
            config,
            seed,
            out,
            format,
            jobs,
        } => cmd_sweep(&config, seed, out.as_deref(), format, jobs, &mut stdout),
        Command::Report { config, out } => cmd_report(&config, out.as_deref(), &mut stdout),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure { code, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
