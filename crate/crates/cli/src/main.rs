//! `uplift`: plan, run, benchmark and report on LLM-driven code updates.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{BackendKind, CliConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "uplift",
    version,
    about = "Multi-agent legacy code updates and their evaluation"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

/// Flags that override the matching configuration keys.
#[derive(Debug, Clone, Args)]
struct GlobalArgs {
    /// JSON configuration file [default: uplift.json when present]
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// backend.kind
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendKind>,
    /// backend.script_path: a script file, or a directory of per-run scripts.
    /// Implies `--backend script` unless a backend is given.
    #[arg(long, global = true)]
    script: Option<PathBuf>,
    /// backend.model
    #[arg(long, global = true)]
    model: Option<String>,
    /// backend.endpoint
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// pipeline.mode
    #[arg(long, global = true)]
    mode: Option<String>,
    /// pipeline.max_loop_iterations
    #[arg(long = "max-loop", global = true)]
    max_loop: Option<u32>,
    /// pipeline.failed_error_threshold
    #[arg(long = "error-threshold", global = true)]
    error_threshold: Option<usize>,
    /// prompts.dir
    #[arg(long, global = true)]
    prompts: Option<PathBuf>,
    /// bench.repetitions
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// bench.parallelism
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Output root for runs and benches; report directory for `report`
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

impl GlobalArgs {
    fn resolve(&self) -> Result<CliConfig, CliError> {
        let mut c = CliConfig::load(self.config.as_deref())?;
        if let Some(path) = &self.script {
            c.backend.script_path = Some(path.clone());
            if self.backend.is_none() {
                c.backend.kind = BackendKind::Script;
            }
        }
        if let Some(kind) = self.backend {
            c.backend.kind = kind;
        }
        if let Some(v) = &self.model {
            c.backend.model = v.clone();
        }
        if let Some(v) = &self.endpoint {
            c.backend.endpoint = v.clone();
        }
        if let Some(v) = &self.mode {
            c.pipeline.mode = v.clone();
        }
        if let Some(v) = self.max_loop {
            c.pipeline.max_loop_iterations = v;
        }
        if let Some(v) = self.error_threshold {
            c.pipeline.failed_error_threshold = v;
        }
        if let Some(v) = &self.prompts {
            c.prompts.dir = Some(v.clone());
        }
        if let Some(v) = self.reps {
            c.bench.repetitions = v;
        }
        if let Some(v) = self.parallelism {
            c.bench.parallelism = v;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the task plan for a requirements file
    Plan { requirements: PathBuf },
    /// Update one file once
    Run {
        /// The file to update
        file: PathBuf,
        /// Requirements file (system modes) or prompt file (baseline modes)
        input: PathBuf,
        #[arg(long, default_value = "run-01")]
        run_id: String,
    },
    /// Repeat runs over a case directory and write its index
    Bench { case_dir: PathBuf },
    /// Aggregate a bench directory with its human annotations
    Report {
        /// Directory holding index.csv
        bench_dir: PathBuf,
        /// Error ledger CSV
        #[arg(long)]
        ledger: PathBuf,
        /// Requirement score CSV
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Replaced-functions CSV
        #[arg(long = "replaced-functions")]
        replaced_functions: Option<PathBuf>,
        /// Method label [default: the bench directory name]
        #[arg(long)]
        label: Option<String>,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let config = cli.global.resolve()?;
    let out = &cli.global.out;
    match cli.command {
        Command::Plan { requirements } => commands::plan(&config, &requirements),
        Command::Run {
            file,
            input,
            run_id,
        } => commands::run(&config, &file, &input, &run_id, out),
        Command::Bench { case_dir } => commands::bench(&config, &case_dir, out),
        Command::Report {
            bench_dir,
            ledger,
            scores,
            replaced_functions,
            label,
        } => commands::report(
            &config,
            &commands::ReportInputs {
                bench_dir,
                ledger,
                scores,
                replaced_functions,
                label,
            },
            out,
        ),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("uplift: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
