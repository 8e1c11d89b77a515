use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

use dobkit::{bundled_case, emit, load_config, run_case, CliError, Command, RunOptions};
use dobkit_core::solver::Backend;
use dobkit_core::LogConvention;

#[derive(Parser)]
#[command(name = "dobkit", version, about = "Disturbance-observer bandwidth analysis and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Constraint check and loop curves at a single bandwidth.
    Analyze(Opts),
    /// Constraint checks at every listed bandwidth.
    Constraints(Opts),
    /// Admissible-bandwidth sweep with both backends.
    Sweep(Opts),
    /// Time-domain simulation.
    Simulate(Opts),
    /// Everything the config supports.
    All(Opts),
    /// Run a bundled case study (1-5) end to end.
    Case {
        number: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Opts {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Output directory; defaults to outputs.dir, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "exact")]
    backend: BackendArg,
    #[arg(long = "log-convention", value_enum, default_value = "nat")]
    log_convention: ConvArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Literal,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConvArg {
    Nat,
    #[value(name = "dB10")]
    DB10,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dobkit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, cfg, command, common) = match cli.command {
        Cmd::Case { number, common } => {
            let (name, cfg) = bundled_case(number)?;
            (name.to_string(), cfg, Command::All, common)
        }
        Cmd::Analyze(o) => from_file(o, Command::Analyze)?,
        Cmd::Constraints(o) => from_file(o, Command::Constraints)?,
        Cmd::Sweep(o) => from_file(o, Command::Sweep)?,
        Cmd::Simulate(o) => from_file(o, Command::Simulate)?,
        Cmd::All(o) => from_file(o, Command::All)?,
    };
    let opts = RunOptions {
        backend: match common.backend {
            BackendArg::Literal => Backend::Literal,
            BackendArg::Exact => Backend::Exact,
        },
        conv: match common.log_convention {
            ConvArg::Nat => LogConvention::Nat,
            ConvArg::DB10 => LogConvention::Log10,
        },
    };
    let out = common
        .out
        .or_else(|| cfg.output_dir().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let bundle = run_case(&name, &cfg, command, &opts)?;
    let manifest = emit(&bundle, &out, &cfg.formats())?;
    if let Some(iv) = bundle.admissible_interval {
        println!("admissible bandwidth: [{:.4}, {:.4}] rad/s", iv[0], iv[1]);
    } else if !bundle.sweeps.is_empty() {
        println!("no admissible bandwidth on the sweep grid");
    }
    for n in &bundle.notes {
        println!("note: {n}");
    }
    println!("wrote {} artifacts to {}", manifest.artifacts.len() + 1, out.display());
    Ok(())
}

fn from_file(o: Opts, command: Command) -> Result<(String, dobkit::CaseConfig, Command, Common), CliError> {
    let cfg = load_config(&o.config)?;
    let name = o
        .config
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "case".into());
    Ok((name, cfg, command, o.common))
}
