use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use mia_harness::args::{Cli, Command};
use mia_harness::config::RunConfig;
use mia_harness::{commands, configure_threads, e2e, exit_code};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    configure_threads()?;
    match command {
        Command::Gen(a) => commands::gen(&a),
        Command::Balance(a) => commands::balance(&a),
        Command::Train(a) => commands::train(&a),
        Command::Logprobs(a) => commands::logprobs(&a),
        Command::Paraphrase(a) => commands::paraphrase(&a).map(drop),
        Command::Attack(a) => commands::attack(&a).map(drop),
        Command::Evaluate(a) => {
            let (_, table) = commands::evaluate(&a)?;
            print!("{table}");
            Ok(())
        }
        Command::Similarity(a) => {
            let report = commands::similarity(&a)?;
            print!("{}", report.render_markdown());
            Ok(())
        }
        Command::E2e(a) => {
            let mut config = RunConfig::from_file(&a.config)?;
            if let Some(dir) = a.out_dir {
                config.out_dir = dir;
            }
            if let Some(seed) = a.seed {
                config.seed = seed;
            }
            if let Some(boost) = a.boost {
                config.target.boost = boost;
            }
            let summary = e2e::run(&config)?;
            print!("{}\n{}", summary.table, summary.similarity.render_markdown());
            println!("\nwrote {}", config.out_dir.join(e2e::MANIFEST_NAME).display());
            Ok(())
        }
    }
}
