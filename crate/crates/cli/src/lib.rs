//! `spf-lab`: runs period analysis, DTFT solves, bound checks, training and
//! state recovery from TOML configs, writing CSV/JSON/SVG artifacts and a
//! run manifest into an output directory.
//!
//! Exit codes: 0 success, 2 config error, 3 numerical non-convergence,
//! 4 I/O failure, 1 anything else.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod error;
pub mod out;
pub mod svg;

pub use error::{CliError, Result};
pub use out::RunManifest;

/// Caps rayon's worker count when set.
pub const THREADS_ENV: &str = "SPF_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "spf-lab", version, about = "State-sequence DTFT experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Recurrent classes, periods and distribution evolution of an MDP under a policy.
    AnalyzeMdp(Common),
    /// Exact DTFT field of an MDP under a policy.
    SolveDtft(Common),
    /// Performance-difference bound checks on seeded or explicit instances.
    VerifyBounds(Common),
    /// Training with the auxiliary prediction task.
    Train(TrainArgs),
    /// k-step state recovery from an exact or learned field.
    Recover(RecoverArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; defaults to `spf-out/<command>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub profile: Option<ProfileArg>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Checkpoint stem (without extension) to continue from.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RecoverArgs {
    #[command(flatten)]
    pub common: Common,
    /// Checkpoint stem; the exact field is used when absent.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub k_max: usize,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::AnalyzeMdp(_) => "analyze-mdp",
            Command::SolveDtft(_) => "solve-dtft",
            Command::VerifyBounds(_) => "verify-bounds",
            Command::Train(_) => "train",
            Command::Recover(_) => "recover",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::AnalyzeMdp(c) | Command::SolveDtft(c) | Command::VerifyBounds(c) => c,
            Command::Train(t) => &t.common,
            Command::Recover(r) => &r.common,
        }
    }
}

/// Config source read up front so that a bad file fails before any output.
pub struct Input {
    pub path: PathBuf,
    pub bytes: Vec<u8>,
    pub text: String,
}

impl Input {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::config("config is not valid UTF-8"))?;
        Ok(Input { path: path.to_path_buf(), bytes, text })
    }
}

pub fn run(cli: &Cli) -> Result<RunManifest> {
    let common = cli.command.common();
    let input = Input::read(&common.config)?;
    let out = common.out.clone().unwrap_or_else(|| Path::new("spf-out").join(cli.command.name()));
    match &cli.command {
        Command::AnalyzeMdp(c) => commands::analyze::run(c, &input, &out),
        Command::SolveDtft(c) => commands::solve::run(c, &input, &out),
        Command::VerifyBounds(c) => commands::bounds::run(c, &input, &out),
        Command::Train(t) => commands::train::run(t, &input, &out),
        Command::Recover(r) => commands::recover::run(r, &input, &out),
    }
}

fn configure_threads() -> Result<()> {
    let Some(v) = std::env::var_os(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .to_str()
        .and_then(|s| s.trim().parse().ok())
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config(format!("{THREADS_ENV} must be a positive integer")))?;
    // a pool may already exist when embedded; the first setting wins
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match configure_threads().and_then(|()| run(&cli)) {
        Ok(m) => {
            println!("{}: wrote {} files", m.command, m.files.len() + 1);
            0
        }
        Err(e) => {
            eprintln!("spf-lab {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
