use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use typelabel_cli::{run, Command, PipelineConfig};

#[derive(Debug, Parser)]
#[command(
    name = "typelabel",
    version,
    about = "Weak type labels from masked language models, and typing models trained on them"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set k=5` or `--set backend.kind=http`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = PipelineConfig::load(cli.config.as_deref(), &cli.overrides).and_then(|cfg| run(cli.command, &cfg));
    match result {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("typelabel {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
