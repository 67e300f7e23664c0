//! Command-line front end: train, calibrate, quantize, sweep, search and
//! export, driven by a flat `key = value` config file.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::{CliError, Scheme};
use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "gruq", version, about = "Mixed-precision integer-only GRU quantization and bit-width search")]
pub struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// synthetic or mnist-rows.
    #[arg(long, global = true)]
    task: Option<String>,
    /// Directory holding every artifact of the run.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Parallel fitness evaluations (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Finetune {
    None,
    Qat,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct SchemeArgs {
    /// Homogeneous bit-width for all 17 blocks (2 to 16).
    #[arg(long)]
    bits: Option<u8>,
    /// 17 comma-separated genes in [2, 8].
    #[arg(long)]
    genome: Option<String>,
    /// Scheme JSON written by `search`.
    #[arg(long)]
    scheme: Option<PathBuf>,
}

impl SchemeArgs {
    fn scheme(&self) -> Scheme {
        match (&self.bits, &self.genome, &self.scheme) {
            (Some(b), _, _) => Scheme::Bits(*b),
            (_, Some(g), _) => Scheme::Genome(g.clone()),
            (_, _, Some(p)) => Scheme::File(p.clone()),
            _ => unreachable!("clap enforces one scheme source"),
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the float reference model.
    Train,
    /// Record activation ranges of the float model.
    Calibrate,
    /// Quantize with one scheme and report test accuracy and size.
    QuantizeEval {
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long, value_enum, default_value = "none")]
        finetune: Finetune,
    },
    /// Homogeneous baselines at 3 to 8 bits.
    BaselineSweep {
        #[arg(long, value_enum, default_value = "none")]
        finetune: Finetune,
    },
    /// NSGA-II bit-width search.
    Search,
    /// Write the integer model for one scheme.
    Export {
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long, value_enum, default_value = "none")]
        finetune: Finetune,
    },
}

fn resolve_config(c: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &c.config {
        if !p.is_file() {
            return Err(CliError::Usage(format!("config file not found: {}", p.display())));
        }
        cfg.load_file(p).map_err(CliError::Usage)?;
    }
    for kv in &c.set {
        cfg.assign(kv).map_err(CliError::Usage)?;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = &c.task {
        cfg.task = t.parse().map_err(CliError::Usage)?;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    if let Some(j) = c.jobs {
        cfg.jobs = j;
    }
    cfg.validate().map_err(CliError::Usage)?;
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli.common)?;
    match cli.command {
        Command::Train => commands::cmd_train(&cfg).map(drop),
        Command::Calibrate => commands::cmd_calibrate(&cfg).map(drop),
        Command::QuantizeEval { scheme, finetune } => {
            commands::cmd_quantize_eval(&cfg, &scheme.scheme(), finetune == Finetune::Qat).map(drop)
        }
        Command::BaselineSweep { finetune } => commands::cmd_baseline_sweep(&cfg, finetune == Finetune::Qat).map(drop),
        Command::Search => commands::cmd_search(&cfg).map(drop),
        Command::Export { scheme, finetune } => {
            commands::cmd_export(&cfg, &scheme.scheme(), finetune == Finetune::Qat).map(drop)
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
