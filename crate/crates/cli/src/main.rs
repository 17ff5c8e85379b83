//! `mtf`: compile arithmetic programs, synthesize manifold regressors,
//! evaluate and audit stored networks, and run the rate sweeps.
//!
//! Exit codes: 0 success, 2 usage, 3 infeasible configuration,
//! 4 verification failure, 1 anything else.

mod compile;
mod config;
mod flags;
mod sweep;
mod synth;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use config::Layers;

#[derive(Parser, Debug)]
#[command(name = "mtf", version, about = "Explicit transformer constructions and their checks")]
struct Cli {
    /// Seed of every random choice made by the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving the artifacts [default: .].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// JSON file supplying any of the options; flags win on conflict.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compile one arithmetic op and check it against direct arithmetic.
    Compile(compile::CompileArgs),
    /// Build a regressor for a target on a manifold tube.
    Synthesize(synth::SynthesizeArgs),
    /// Run a stored network on given inputs.
    Eval(synth::EvalArgs),
    /// Report the architecture counts of a stored network.
    Audit(synth::AuditArgs),
    /// Run a rate or dimension sweep.
    Sweep {
        #[command(subcommand)]
        kind: sweep::SweepKind,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(mtf_core::Error),
    Verification(String),
    Write(PathBuf, std::io::Error),
}

impl From<mtf_core::Error> for CliError {
    fn from(e: mtf_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
            CliError::Write(p, e) => write!(f, "cannot write {}: {e}", p.display()),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use mtf_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Verification(_) => 4,
            CliError::Write(..) => 1,
            CliError::Core(e) => match e.root() {
                E::Contract(_)
                | E::Infeasible(_)
                | E::TokenBudget { .. }
                | E::Domain(_)
                | E::OutsideSupport
                | E::NonUniqueProjection => 3,
                E::Dimension(_) => 2,
                _ => 1,
            },
        }
    }
}

/// Options shared by every subcommand.
pub struct Ctx {
    pub out: PathBuf,
    pub config_path: Option<PathBuf>,
    /// Config file contents with the global flags applied.
    pub layers: Layers,
}

/// Pretty JSON followed by a newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, v: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| CliError::Core(e.into()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Write(path.to_path_buf(), e))
}

fn context(cli: &Cli) -> Result<Ctx, CliError> {
    let mut layers = Layers::from_file(cli.config.as_deref())?;
    let from_config = match layers.take("out") {
        Some(serde_json::Value::String(s)) => Some(PathBuf::from(s)),
        Some(_) => return Err(CliError::Usage("config key `out` must be a string".into())),
        None => None,
    };
    let out = cli.out.clone().or(from_config).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).map_err(|e| CliError::Write(out.clone(), e))?;
    layers.put("seed", cli.seed);
    Ok(Ctx {
        out,
        config_path: cli.config.clone(),
        layers,
    })
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let mut ctx = context(cli)?;
    match &cli.command {
        Command::Compile(a) => compile::run(&mut ctx, a),
        Command::Synthesize(a) => synth::synthesize(&mut ctx, a),
        Command::Eval(a) => synth::eval(&mut ctx, a),
        Command::Audit(a) => synth::audit(&mut ctx, a),
        Command::Sweep { kind } => sweep::run(&mut ctx, kind),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
