mod commands;
mod config;
mod endpoints;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use config::{Overrides, RunConfig};

/// Invalid invocation or configuration; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "tasksynth", version, about = "Evidence-first synthesis of verifiable tool-use tasks")]
struct Cli {
    /// Run configuration (TOML). Flags override its values.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug). RUST_LOG takes precedence.
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the validation harness over every tool in the manifest.
    Validate {
        /// JSON object mapping tool names to validation cases.
        #[arg(long)]
        suite: Option<PathBuf>,
        /// Report path (default: <out-dir>/validation.json).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run synthesis cycles into <out-dir>, resuming from its cursor.
    Synthesize {
        #[arg(long)]
        cycles: u64,
    },
    /// Judge one answer against a reference.
    Verify {
        #[arg(long)]
        query: String,
        #[arg(long)]
        reference: String,
        #[arg(long)]
        answer: String,
    },
    /// Rejection-sample teacher trajectories into an SFT dataset.
    BuildSft {
        #[arg(long)]
        tasks: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate learnability and keep frontier tasks for RL.
    FilterRl {
        #[arg(long)]
        tasks: Option<PathBuf>,
        /// Precomputed estimates (JSONL); otherwise rollouts are run.
        #[arg(long)]
        estimates: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute structural-diversity statistics over trajectories.
    Analyze {
        /// Task store, SFT export or trajectory files.
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
        /// `heuristic` or an endpoint spec for an external edge judge.
        #[arg(long)]
        edges: Option<String>,
    },
    /// Print a stored analysis.
    Report {
        #[arg(long)]
        analysis: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: commands::ReportFormat,
    },
    /// Write an offline demo workspace (mock tools, pools, config).
    Demo {
        dir: PathBuf,
        #[arg(long, default_value_t = 24)]
        tools_per_domain: usize,
    },
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&cli.overrides);
    cfg.check()?;
    match cli.command {
        Command::Validate { suite, report } => commands::validate(&cfg, suite.as_deref(), report),
        Command::Synthesize { cycles } => commands::synthesize_cmd(&cfg, cycles),
        Command::Verify { query, reference, answer } => commands::verify(&cfg, &query, &reference, &answer),
        Command::BuildSft { tasks, out } => commands::build_sft_cmd(&cfg, tasks, out),
        Command::FilterRl { tasks, estimates, out } => commands::filter_rl_cmd(&cfg, tasks, estimates, out),
        Command::Analyze { inputs, edges } => commands::analyze(&cfg, &inputs, edges.as_deref()),
        Command::Report { analysis, format } => commands::report(&cfg, analysis, format),
        Command::Demo { dir, tools_per_domain } => commands::demo(&dir, tools_per_domain),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
