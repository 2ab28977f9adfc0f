use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kvqa::run::{self, parse_overrides, RunConfig};

/// Scene-text question answering with context-validated external knowledge.
#[derive(Parser)]
#[command(name = "kvqa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Overrides of any config field, e.g. `--train.lr 3e-4 --variant TVQA`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a variant and keep the best validation checkpoint.
    Train(Common),
    /// Decode a dataset with a checkpoint and write predictions and a report.
    Eval(Common),
    /// Write the synthetic knowledge task into the data root.
    GenSynthetic(Common),
    /// Convert a checkpoint between variants.
    TransferWeights(Common),
    /// Emit the per-token fact table for a dataset.
    KbFilter(Common),
    /// Tabulate all reports in the output directory.
    Report(Common),
}

fn execute(command: Command) -> kvqa::Result<String> {
    let (Command::Train(c)
    | Command::Eval(c)
    | Command::GenSynthetic(c)
    | Command::TransferWeights(c)
    | Command::KbFilter(c)
    | Command::Report(c)) = &command;
    let cfg = RunConfig::load(c.config.as_deref(), &parse_overrides(&c.overrides)?)?;
    Ok(match command {
        Command::Train(_) => {
            let s = run::run_train(&cfg)?;
            format!(
                "best epoch {} val {:.2}% -> {}",
                s.best_epoch,
                s.best_val,
                s.checkpoint.display()
            )
        }
        Command::Eval(_) => run::run_eval(&cfg)?.to_text(),
        Command::GenSynthetic(_) => format!("wrote {}", run::run_gen_synthetic(&cfg)?.display()),
        Command::TransferWeights(_) => format!("wrote {}", run::run_transfer(&cfg)?.display()),
        Command::KbFilter(_) => {
            let (path, rows) = run::run_kb_filter(&cfg)?;
            format!("{rows} fact rows -> {}", path.display())
        }
        Command::Report(_) => run::run_report(&cfg)?,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(text) => {
            println!("{}", text.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let msg = e.to_string().replace('\n', "; ");
            eprintln!("error[{}]: {msg}", e.code());
            ExitCode::FAILURE
        }
    }
}
