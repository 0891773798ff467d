use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use shapmon_cli::commands;
use shapmon_cli::{CliError, RawConfig};

#[derive(Parser)]
#[command(
    name = "shapmon",
    version,
    about = "Shapley explanations for predictive process monitoring"
)]
struct Cli {
    /// Plain `key = value` config file.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Shorthand for `--set input=PATH`.
    #[arg(long, global = true)]
    input: Option<String>,
    /// Shorthand for `--set output_dir=PATH`.
    #[arg(short, long, global = true)]
    output_dir: Option<String>,
    /// Shorthand for `--set threads=N`.
    #[arg(long, global = true)]
    threads: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Parse the input log and report malformed rows.
    IngestCheck,
    /// Generate a synthetic log with planted rules.
    Synth,
    /// Encode, train and evaluate; writes the model and dataset cache.
    Train,
    /// Re-evaluate a trained model on the cached test split.
    Evaluate,
    /// Explain every test prefix and render the heatmap.
    ExplainOffline,
    /// Explain running cases from `running_cases`.
    ExplainOnline,
}

fn load(cli: &Cli) -> Result<RawConfig, CliError> {
    let mut raw = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Input {
                location: path.display().to_string(),
                message: e.to_string(),
            })?;
            RawConfig::parse(&text)?
        }
        None => RawConfig::default(),
    };
    for pair in &cli.set {
        let (key, value) = pair.split_once('=').ok_or_else(|| CliError::Input {
            location: format!("--set {pair}"),
            message: "expected KEY=VALUE".into(),
        })?;
        raw.set(key.trim(), value.trim())?;
    }
    for (key, value) in [
        ("input", &cli.input),
        ("output_dir", &cli.output_dir),
        ("threads", &cli.threads),
    ] {
        if let Some(v) = value {
            raw.set(key, v.as_str())?;
        }
    }
    Ok(raw)
}

fn run(cli: &Cli) -> Result<String, CliError> {
    let raw = load(cli)?;
    match cli.command {
        Command::IngestCheck => commands::cmd_ingest_check(&raw),
        Command::Synth => commands::cmd_synth(&raw),
        Command::Train => commands::cmd_train(&raw),
        Command::Evaluate => commands::cmd_evaluate(&raw),
        Command::ExplainOffline => commands::cmd_explain_offline(&raw),
        Command::ExplainOnline => commands::cmd_explain_online(&raw),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(summary) => {
            print!("{summary}");
            if !summary.ends_with('\n') {
                println!();
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
