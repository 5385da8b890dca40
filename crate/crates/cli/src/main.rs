//! `dirlearn`: data synthesis, degradation, training and evaluation.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "dirlearn", version, about = "Degradation-independent representation learning")]
struct Cli {
    /// Seed for every random draw of the subcommand.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a labelled toy-shape corpus.
    SynthData(SynthArgs),
    /// Degrade clean images through the simulated camera.
    Degrade(DegradeArgs),
    /// Run training stage 1 or 2.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a test corpus.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = dirlearn::corpus::PATCH_SIZE)]
    pub size: usize,
    /// Write into a non-empty directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Default,
    Dark,
}

impl ProfileArg {
    pub fn name(self) -> &'static str {
        match self {
            ProfileArg::Default => "default",
            ProfileArg::Dark => "dark",
        }
    }
}

#[derive(Args, Debug)]
pub struct DegradeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ProfileArg::Default)]
    pub profile: ProfileArg,
    /// Emit two independent degradations per image.
    #[arg(long)]
    pub pairs: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub stage: u8,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    pub resume: bool,
    /// Override a config key, e.g. `--set stage1.max_epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportArg {
    Ablation,
    Metrics,
    Latents,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Test corpus directory (with manifest).
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, value_enum)]
    pub report: ReportArg,
    /// Output directory; defaults to `eval/` beside the checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ProfileArg::Default)]
    pub profile: ProfileArg,
}

fn quote(msg: &str) -> String {
    msg.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ")
}

fn fail(kind: &str, msg: &str, code: u8) -> ExitCode {
    eprintln!("error: kind={kind} msg=\"{}\"", quote(msg));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("invalid arguments");
            return fail("usage", line.trim_start_matches("error: "), 2);
        }
    };
    let seed = cli.seed.unwrap_or(0);
    let result = match cli.command {
        Command::SynthData(a) => commands::synth_data(&a, seed),
        Command::Degrade(a) => commands::degrade(&a, seed),
        Command::Train(a) => commands::train(&a, cli.seed),
        Command::Eval(a) => commands::eval(&a, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => fail("usage", &msg, 2),
        Err(commands::Failure::Run(e)) => fail(e.kind(), &e.to_string(), 1),
    }
}
