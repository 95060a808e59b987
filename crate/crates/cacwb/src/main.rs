use std::path::PathBuf;

use cacwb::{Format, Invocation, Mode};
use clap::Parser;

#[derive(Debug, Parser)]
#[command(name = "cacwb", version, about = "Call admission control workbench")]
struct Args {
    #[arg(value_enum)]
    mode: Mode,
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Simulation seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn main() {
    env_logger::Builder::new()
        .filter_level(log::LevelFilter::Warn)
        .init();
    let args = Args::parse();
    let code = cacwb::run::run(&Invocation {
        mode: args.mode,
        config: args.config,
        out: args.out,
        seed: args.seed,
        format: args.format,
    });
    std::process::exit(code);
}
