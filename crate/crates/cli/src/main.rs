use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use mdimlab_cli::{run_file, Command, Format, Overrides, SEED_ENV};

#[derive(Parser)]
#[command(name = "mdimlab", version, about = "Mean dimension constructions and audits")]
struct Args {
    command: Command,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let overrides = Overrides {
        command: Some(args.command),
        seed: args.seed,
        env_seed: std::env::var(SEED_ENV).ok(),
        out: args.out,
        format: args.format,
    };
    let (code, outcome) = run_file(&args.config, &overrides);
    match outcome {
        Ok((path, report)) => {
            for f in &report.failures {
                eprintln!("audit failure: {f}");
            }
            println!("{} {} -> {}", report.command, if report.passed { "passed" } else { "failed" }, path.display());
        }
        Err(e) => eprintln!("{e}"),
    }
    ExitCode::from(code as u8)
}
