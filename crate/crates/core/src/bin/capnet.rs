//! Batch front end: `capnet <preprocess|trace|train|eval|report>`.

use std::path::PathBuf;
use std::process::ExitCode;

use capnet::commands::{cmd_eval, cmd_preprocess, cmd_report, cmd_train, cmd_trace, CommandError, Log};
use capnet::config::RunConfig;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "capnet", version, about = "Capacitor-diode analog network runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (key `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for the sensor noise, solver and baseline (key `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only errors on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    /// Any config key, e.g. `--set train_rows=100`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = key_value)]
    set: Vec<(String, String)>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// MNIST CSV to 5x5 SD-card text files.
    Preprocess,
    /// Single-cell and cascade transient traces with the single-cell fit.
    Trace,
    /// Train the ten class circuits.
    Train,
    /// Evaluate the circuits and the software baseline.
    Eval,
    /// Comparison table and timing chart.
    Report,
}

fn key_value(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))
}

fn json_string(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn run(cli: &Cli) -> Result<(), CommandError> {
    let mut overrides = cli.set.clone();
    if let Some(out) = &cli.out {
        overrides.push(("out".into(), out.display().to_string()));
    }
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    let cfg = RunConfig::resolve(cli.config.as_deref(), &overrides)?;
    let log = Log { quiet: cli.quiet };
    match cli.command {
        Command::Preprocess => cmd_preprocess(&cfg, &log),
        Command::Trace => cmd_trace(&cfg, &log),
        Command::Train => cmd_train(&cfg, &log),
        Command::Eval => cmd_eval(&cfg, &log),
        Command::Report => cmd_report(&cfg, &log),
    }
    .map(|_| ())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{{\"error\":{},\"message\":{}}}",
                json_string(e.kind()),
                json_string(&e.to_string())
            );
            ExitCode::from(if matches!(e, CommandError::Config(_)) { 2 } else { 1 })
        }
    }
}
