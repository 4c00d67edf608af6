use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use soslyap::run::{Command, Job};
use soslyap::ExitStatus;

/// Sum-of-squares Lyapunov certificates, controllers and observers for
/// scalar parabolic PDEs.
#[derive(Parser, Debug)]
#[command(name = "soslyap", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long)]
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(ExitStatus::ConfigError as u8);
        }
    };
    let status = Job::load(&cli.config, cli.out.as_deref(), cli.jobs).and_then(|job| job.run(cli.command));
    let code = match status {
        Ok(s) => s,
        Err(e) => {
            eprintln!("soslyap: {e}");
            e.exit_status()
        }
    };
    ExitCode::from(code as u8)
}
