mod args;
mod commands;
mod error;
mod output;

use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use args::{Cli, Command};
use commands::Context;
use error::CliResult;

fn dispatch(cli: &Cli, ctx: &Context) -> CliResult<()> {
    match &cli.command {
        Command::Validate(a) => commands::validate(a, ctx),
        Command::Fit(a) => commands::fit(a, ctx),
        Command::Select(a) => commands::select_cmd(a, ctx),
        Command::Predict(a) => commands::predict(a, ctx),
        Command::Simulate(a) => commands::simulate(a, ctx),
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let ctx = Context {
        seed: cli.seed,
        threads: cli.threads,
        started: Instant::now(),
    };
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()?
            .install(|| dispatch(cli, &ctx)),
        None => dispatch(cli, &ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
