mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Wideband RIS positioning and communication: two-stage power minimization.
#[derive(Debug, Parser)]
#[command(name = "ipac", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the two-stage design for one configuration.
    Run(RunArgs),
    /// Sweep the rate or PEB requirement over phase modes and seeds.
    Sweep(SweepArgs),
    /// Check a configuration without running it and echo the normalized form.
    Validate(ValidateArgs),
    /// Compare the analytic FIM with finite differences.
    FimCheck(FimCheckArgs),
    /// Solve an SDP problem stored as JSON.
    SolveSdp(SolveSdpArgs),
    /// Write a scenario preset as a configuration file.
    Preset(PresetArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Configuration file (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set rate_req_bpshz=[2,2,2]`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Override the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Where to write the metrics report.
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Param {
    Rate,
    Peb,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Scenario preset, also recorded in the table.
    #[arg(long, default_value_t = 1)]
    pub scenario: u8,
    /// Use the full-size preset instead of the desk-scale one.
    #[arg(long)]
    pub full_scale: bool,
    #[arg(long, value_enum)]
    pub param: Param,
    /// Strictly ascending values of the swept requirement.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Value of the other requirement for every UE; `inf` drops the PEB limit.
    #[arg(long)]
    pub fixed: Option<f64>,
    /// Phase modes: continuous, random, identity, q<bits>.
    #[arg(long, value_delimiter = ',', default_value = "continuous,q2,q1")]
    pub modes: Vec<String>,
    /// Seeds; defaults to `--seed` or the config seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Worker threads; defaults to the number of processors.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output file; defaults to `s<id>_<param>_<modes>.<ext>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Record wall-clock time per point (makes output non-deterministic).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Write the normalized config here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FimCheckArgs {
    /// Configuration file; defaults to the Scenario 1 desk preset.
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    /// Factor applied to the subcarrier spacing of the analytic route.
    #[arg(long, default_value_t = 1.0, hide = true)]
    pub fault_delta_f: f64,
    /// Write the per-instance errors as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveSdpArgs {
    /// Problem file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Write the solution as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PresetArgs {
    #[arg(long, default_value_t = 1)]
    pub scenario: u8,
    #[arg(long)]
    pub full_scale: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(commands::EXIT_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    ExitCode::from(commands::dispatch(cli.command))
}
