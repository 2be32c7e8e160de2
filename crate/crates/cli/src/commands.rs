use std::path::{Path, PathBuf};

use uplift_core::agents::{AgentError, Agents};
use uplift_core::eval::bench::{self, BenchCase, BenchOptions, RunInput, INDEX_FILE};
use uplift_core::eval::ledger::LedgerError;
use uplift_core::eval::report::render_row;
use uplift_core::eval::{
    emit_report, ingest_ledger, ingest_replaced_functions, ingest_scores, load_report,
    AggregateError, Aggregator, BenchError, RunObservation,
};
use uplift_core::pipeline::Mode;
use uplift_core::transcript::Session;
use uplift_core::{CodeArtifact, Metrics, RequirementSet, TaskPlan};

use crate::config::CliConfig;
use crate::error::{input, CliError};

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn read_requirements(path: &Path) -> Result<RequirementSet, CliError> {
    RequirementSet::parse(&read(path)?, path.display().to_string())
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn plan(config: &CliConfig, requirements: &Path) -> Result<(), CliError> {
    let reqs = read_requirements(requirements)?;
    let plan = match config.mode()? {
        Mode::SystemManager => {
            config.preflight()?;
            let backend = config
                .backend_for("plan")
                .map_err(|e| CliError::Config(e.to_string()))?;
            let prompts = config.prompt_set()?;
            let request = config.pipeline_config()?.request;
            let mut session = Session::new("plan", backend.as_ref(), request);
            let agents = Agents::new(&prompts);
            let draft = agents
                .manager_plan(&mut session, &reqs)
                .map_err(plan_error)?;
            agents
                .manager_confirm(&mut session, draft, &reqs)
                .map_err(plan_error)?
        }
        Mode::SystemPerRequirement => TaskPlan::per_requirement(&reqs),
        Mode::SystemSingleTask => TaskPlan::single_task(&reqs),
        mode @ (Mode::BaselineZsl | Mode::BaselineOsl) => {
            return Err(CliError::Config(format!("mode {mode} has no task plan")))
        }
    };
    print!("{}", plan.render());
    Ok(())
}

fn plan_error(e: AgentError) -> CliError {
    CliError::Plan(e.to_string())
}

/// Output directory for a single run: named after the input file's directory.
fn case_name(file: &Path) -> String {
    file.canonicalize()
        .ok()
        .and_then(|p| {
            p.parent()
                .and_then(|d| d.file_name())
                .map(|n| n.to_string_lossy().into_owned())
        })
        .unwrap_or_else(|| "case".into())
}

pub fn run(
    config: &CliConfig,
    file: &Path,
    input_path: &Path,
    run_id: &str,
    out_root: &Path,
) -> Result<(), CliError> {
    let pipeline_config = config.pipeline_config()?;
    let prompts = config.prompt_set()?;
    let code = CodeArtifact::user_input(read(file)?);
    let run_input = if pipeline_config.mode.is_baseline() {
        RunInput::Prompt(read(input_path)?)
    } else {
        RunInput::Requirements(read_requirements(input_path)?)
    };
    config.preflight()?;
    let backend = config
        .backend_for(run_id)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let record = bench::run_once(
        backend.as_ref(),
        &prompts,
        &pipeline_config,
        run_id,
        &code,
        &run_input,
    )
    .map_err(input)?;

    let extension = file
        .extension()
        .map(|e| e.to_string_lossy().into_owned())
        .unwrap_or_else(|| "txt".into());
    let out_dir = out_root.join(case_name(file));
    let updated = bench::persist_run(&record, &out_dir, &extension).map_err(input)?;
    let o = &record.outcome;
    println!(
        "{} status={} duration={:.3}s calls={} tasks={} finalizer={} loc={}",
        o.run_id,
        o.status,
        o.duration_seconds,
        record.transcript.len(),
        o.task_count,
        o.finalizer_invocations,
        o.loc().map(|n| n.to_string()).unwrap_or_else(|| "-".into()),
    );
    println!(
        "transcript: {}",
        out_dir.join(format!("{run_id}.jsonl")).display()
    );
    match updated {
        Some(path) => {
            println!("updated: {}", path.display());
            Ok(())
        }
        None => Err(CliError::FailedGeneration {
            run_id: o.run_id.clone(),
            reason: o
                .failure
                .clone()
                .unwrap_or_else(|| "no code produced".into()),
        }),
    }
}

pub fn bench(config: &CliConfig, case_dir: &Path, out_root: &Path) -> Result<(), CliError> {
    let pipeline_config = config.pipeline_config()?;
    let prompts = config.prompt_set()?;
    let case = BenchCase::open(case_dir).map_err(input)?;
    config.preflight()?;
    let options = BenchOptions {
        repetitions: config.bench.repetitions,
        parallelism: config.bench.parallelism,
        out_root: out_root.to_path_buf(),
    };
    let outcomes = bench::run_bench(&case, &pipeline_config, &prompts, &options, |id| {
        config.backend_for(id)
    })
    .map_err(bench_error)?;
    for o in &outcomes {
        println!(
            "{} status={} duration={:.3}s loc={}",
            o.run_id,
            o.status,
            o.duration_seconds,
            o.loc().map(|n| n.to_string()).unwrap_or_else(|| "-".into()),
        );
    }
    let failed = outcomes.iter().filter(|o| !o.is_completed()).count();
    println!(
        "{} runs, {} failed; index: {}",
        outcomes.len(),
        failed,
        options.case_out_dir(&case).join(INDEX_FILE).display()
    );
    Ok(())
}

fn bench_error(e: BenchError) -> CliError {
    match e {
        BenchError::NoRepetitions => CliError::Config(e.to_string()),
        other => CliError::Input(other.to_string()),
    }
}

pub struct ReportInputs {
    pub bench_dir: PathBuf,
    pub ledger: PathBuf,
    pub scores: Option<PathBuf>,
    pub replaced_functions: Option<PathBuf>,
    pub label: Option<String>,
}

fn ledger_error(e: LedgerError) -> CliError {
    match e {
        LedgerError::UnknownCategory { .. } => CliError::Integrity(e.to_string()),
        other => CliError::Input(other.to_string()),
    }
}

fn aggregate_error(e: AggregateError) -> CliError {
    match e {
        AggregateError::NoRuns => CliError::Input(e.to_string()),
        other => CliError::Integrity(other.to_string()),
    }
}

/// Aggregates one bench directory and merges its row into the report in
/// `out_dir`, replacing any earlier row with the same label.
pub fn report(config: &CliConfig, inputs: &ReportInputs, out_dir: &Path) -> Result<(), CliError> {
    let index = inputs.bench_dir.join(INDEX_FILE);
    let observations: Vec<RunObservation> = bench::read_index(&index).map_err(input)?;
    let errors = ingest_ledger(&inputs.ledger).map_err(ledger_error)?;
    let scores = match &inputs.scores {
        Some(p) => ingest_scores(p).map_err(ledger_error)?,
        None => Vec::new(),
    };
    let replaced = match &inputs.replaced_functions {
        Some(p) => ingest_replaced_functions(p).map_err(ledger_error)?,
        None => Vec::new(),
    };
    let label = match &inputs.label {
        Some(l) => l.clone(),
        None => inputs
            .bench_dir
            .canonicalize()
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "method".into()),
    };
    let metrics: Metrics = Aggregator::new(label, &observations)
        .errors(&errors)
        .scores(&scores)
        .replaced_functions(&replaced)
        .failed_error_threshold(config.pipeline.failed_error_threshold)
        .compute()
        .map_err(aggregate_error)?;

    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Input(format!("{}: {e}", out_dir.display())))?;
    let mut rows = if out_dir.join(uplift_core::eval::report::REPORT_CSV).exists() {
        load_report(out_dir).map_err(input)?
    } else {
        Vec::new()
    };
    match rows
        .iter_mut()
        .find(|r| r.method_label == metrics.method_label)
    {
        Some(existing) => *existing = metrics.clone(),
        None => rows.push(metrics.clone()),
    }
    let (csv, json) = emit_report(&rows, out_dir).map_err(input)?;
    print!("{}", render_row(&metrics));
    println!("report: {} ({})", csv.display(), json.display());
    Ok(())
}
