//! Command-line front end: JSON problem configs in, JSON or CSV reports out.
//!
//! Exit codes: 0 success, 2 config or schema error, 3 dimension or kind
//! mismatch, 4 solver precondition failure, 5 size cap exceeded. Other I/O
//! failures exit with 1.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use config::{parse_config, DivergenceName, Kind, ProblemConfig, Solver};
use output::{round_all, Obj};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("schema: {0}")]
    Schema(String),
    #[error("dimension: {0}")]
    Dimension(String),
    #[error("{0}")]
    Precondition(String),
    #[error("{0}")]
    SizeCap(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Schema(_) => 2,
            CliError::Dimension(_) => 3,
            CliError::Precondition(_) => 4,
            CliError::SizeCap(_) => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

const CSV_HELP: &str = "\
CSV columns (--format csv):
  divergence   divergence,value
  channel-div  value,lower,upper
  exponent     instance,value,lower,upper
  simulate     n,alpha,beta,exponent_estimate,ci_low,ci_high
               then '# slope,<v>' and '# r_squared,<v>'
  adversary    n,alpha,beta,exponent
  example12    n,adaptive_alpha,adaptive_beta,adaptive_exponent,
               parallel_alpha,parallel_beta,parallel_exponent
               then adaptive_/parallel_ slope and r_squared lines
Numbers have nine significant digits; 'inf' marks an infinite value and an
empty cell a missing one. Logarithms are base two.";

#[derive(Debug, Parser)]
#[command(name = "chandisc", version, about = "Composite channel discrimination: divergences, Stein exponents and strategy evaluation", after_help = CSV_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Problem config (JSON). Optional for example12.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Type-I error budget.
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    /// Number of channel uses (also the level for `exponent level-n`).
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Comma-separated list of n values, e.g. 8,9,10.
    #[arg(long, global = true, value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
    /// Random restarts for nonconvex searches.
    #[arg(long, global = true)]
    pub restarts: Option<usize>,
    /// Finite stand-in for infinite divergences in the parallel LP.
    #[arg(long, global = true)]
    pub cap: Option<f64>,
    /// Fall back to Monte Carlo when exact evaluation exceeds a size cap.
    #[arg(long, global = true)]
    pub monte_carlo: bool,
    /// Monte Carlo samples per vertex.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// State divergence between `states[0]` and `states[1]`.
    Divergence {
        #[arg(long, value_enum)]
        divergence: Option<DivergenceName>,
    },
    /// Channel divergence between `channels[0]` and `channels[1]`.
    ChannelDiv,
    /// Stein exponent of `null` against `alternative`.
    Exponent {
        #[arg(value_enum)]
        solver: Option<Solver>,
    },
    /// Exact type-I/type-II errors of a strategy for each n.
    Simulate,
    /// Worst-case errors of a test against adaptive adversaries.
    Adversary,
    /// The built-in two-set example: exponents and simulated slopes.
    Example12,
}

impl Command {
    fn kind(&self) -> Kind {
        match self {
            Command::Divergence { .. } => Kind::Divergence,
            Command::ChannelDiv => Kind::ChannelDiv,
            Command::Exponent { .. } => Kind::Exponent,
            Command::Simulate => Kind::Simulate,
            Command::Adversary => Kind::Adversary,
            Command::Example12 => Kind::Example12,
        }
    }
}

fn load_config(command: &Command, common: &Common) -> Result<ProblemConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Schema(format!("cannot read config {}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None if command.kind() == Kind::Example12 => ProblemConfig::bare(Kind::Example12),
        None => return Err(CliError::Schema("--config is required for this command".into())),
    };
    if config.kind != command.kind() {
        return Err(CliError::Schema(format!(
            "config.kind: {} does not match the subcommand",
            serde_json::to_value(config.kind).unwrap()
        )));
    }
    let p = &mut config.params;
    p.eps = common.eps.or(p.eps);
    p.n = common.n.or(p.n);
    p.n_list = common.n_list.clone().or(p.n_list.take());
    p.restarts = common.restarts.or(p.restarts);
    p.seed = common.seed.or(p.seed);
    p.cap = common.cap.or(p.cap);
    p.samples = common.samples.or(p.samples);
    if common.monte_carlo {
        p.monte_carlo = Some(true);
    }
    Ok(config)
}

/// Runs one command and returns the rendered report.
pub fn execute(command: &Command, common: &Common) -> Result<String, CliError> {
    let config = load_config(command, common)?;
    let outcome = match command {
        Command::Divergence { divergence } => commands::divergence(&config, *divergence)?,
        Command::ChannelDiv => commands::channel_div(&config)?,
        Command::Exponent { solver } => commands::exponent(&config, *solver)?,
        Command::Simulate => commands::simulate(&config)?,
        Command::Adversary => commands::adversary(&config)?,
        Command::Example12 => commands::example12_report(&config)?,
    };
    let seed = config.params.seed.unwrap_or(0);
    Ok(match common.format {
        Format::Json => {
            let mut report = Obj::new()
                .set("tool_version", TOOL_VERSION)
                .set("config_hash", config.hash())
                .set("seed", seed)
                .set("kind", serde_json::to_value(config.kind).unwrap())
                .build();
            if let (Value::Object(head), Value::Object(body)) = (&mut report, outcome.body) {
                head.extend(body);
            }
            round_all(&mut report);
            serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
        }
        Format::Csv => outcome.csv.join("\n") + "\n",
    })
}

/// Parses arguments, runs the command and writes the report. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = execute(&cli.command, &cli.common).and_then(|text| match &cli.common.out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string()))
        }
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("chandisc: {e}");
            e.exit_code()
        }
    }
}
