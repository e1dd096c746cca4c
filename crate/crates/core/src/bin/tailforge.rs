use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tailforge::pipeline::{exit_code, run_command, Command, PipelineConfig};

/// Long-tail relationship augmentation pipeline.
#[derive(Parser, Debug)]
#[command(name = "tailforge", version)]
struct Cli {
    /// synth-bench, augment, encode-text, fit-hardness, train-diffusion,
    /// sample, train-baseline, finetune, evaluate, report, or `all`.
    command: String,

    #[arg(long)]
    config: PathBuf,

    /// Dotted `key=value` replacing a config entry; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let commands: Vec<Command> = if cli.command == "all" {
        Command::ALL.to_vec()
    } else {
        match cli.command.parse() {
            Ok(c) => vec![c],
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        }
    };
    let cfg = match PipelineConfig::load(&cli.config, &cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    for c in commands {
        if let Err(e) = run_command(c, &cfg) {
            eprintln!("error: {c}: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    }
    ExitCode::SUCCESS
}
