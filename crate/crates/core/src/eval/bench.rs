//! Repeated-run driver. A case directory holds `original.<ext>` plus
//! `requirements.txt` (system modes) or `prompt.txt` (baseline modes).
//! Each run writes `<run_id>.jsonl` and, when it completed,
//! `<run_id>.updated.<ext>`; the batch writes `index.csv`.

use super::aggregate::RunObservation;
use crate::backend::{BackendError, ChatBackend};
use crate::model::{CodeArtifact, ModelError, RequirementSet};
use crate::pipeline::{Pipeline, PipelineConfig, PipelineError, RunOutcome, RunRecord};
use crate::prompts::PromptSet;
use crate::transcript::{write_transcript, TranscriptError};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use thiserror::Error;
use tracing::info;

pub const DEFAULT_REPETITIONS: usize = 10;
pub const INDEX_FILE: &str = "index.csv";
pub const REQUIREMENTS_FILE: &str = "requirements.txt";
pub const PROMPT_FILE: &str = "prompt.txt";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("case directory {dir}: {message}")]
    BadCase { dir: String, message: String },
    #[error("{path}: {source}")]
    Requirements { path: String, source: ModelError },
    #[error("repetitions must be at least 1")]
    NoRepetitions,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error("{path}: {message}")]
    Index { path: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// What a run needs besides the code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunInput {
    Requirements(RequirementSet),
    Prompt(String),
}

#[derive(Debug, Clone)]
pub struct BenchCase {
    pub name: String,
    pub dir: PathBuf,
    pub original: PathBuf,
    pub extension: String,
}

impl BenchCase {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, BenchError> {
        let dir = dir.as_ref();
        let bad = |message: String| BenchError::BadCase {
            dir: dir.display().to_string(),
            message,
        };
        if !dir.is_dir() {
            return Err(bad("not a directory".into()));
        }
        let mut originals: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.file_stem().is_some_and(|s| s == "original"))
            .collect();
        originals.sort();
        let original = match originals.as_slice() {
            [one] => one.clone(),
            [] => return Err(bad("no original.<ext> file".into())),
            _ => return Err(bad("more than one original.<ext> file".into())),
        };
        let name = dir
            .canonicalize()
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "case".into());
        let extension = original
            .extension()
            .map(|e| e.to_string_lossy().into_owned())
            .unwrap_or_else(|| "txt".into());
        Ok(Self {
            name,
            dir: dir.to_path_buf(),
            original,
            extension,
        })
    }

    pub fn load_code(&self) -> Result<CodeArtifact, BenchError> {
        let text = std::fs::read_to_string(&self.original).map_err(io_err(&self.original))?;
        Ok(CodeArtifact::user_input(text))
    }

    /// Requirements for system modes, the prompt file for baselines.
    pub fn load_input(&self, config: &PipelineConfig) -> Result<RunInput, BenchError> {
        if config.mode.is_baseline() {
            let path = self.dir.join(PROMPT_FILE);
            let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
            Ok(RunInput::Prompt(text))
        } else {
            let path = self.dir.join(REQUIREMENTS_FILE);
            load_requirements(&path)
        }
    }
}

pub fn load_requirements(path: &Path) -> Result<RunInput, BenchError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    RequirementSet::parse(&text, path.display().to_string())
        .map(RunInput::Requirements)
        .map_err(|source| BenchError::Requirements {
            path: path.display().to_string(),
            source,
        })
}

/// Runs once, in whichever mode `config` selects.
pub fn run_once(
    backend: &dyn ChatBackend,
    prompts: &PromptSet,
    config: &PipelineConfig,
    run_id: &str,
    code: &CodeArtifact,
    input: &RunInput,
) -> Result<RunRecord, PipelineError> {
    let pipeline = Pipeline::new(backend, prompts, config);
    match input {
        RunInput::Requirements(reqs) => pipeline.run(run_id, code, reqs),
        RunInput::Prompt(text) => pipeline.run_baseline(run_id, code, text),
    }
}

/// Writes the transcript and, for completed runs, the updated file.
/// Returns the updated file's path when one was written.
pub fn persist_run(
    record: &RunRecord,
    out_dir: &Path,
    extension: &str,
) -> Result<Option<PathBuf>, BenchError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let run_id = &record.outcome.run_id;
    write_transcript(
        &record.outcome,
        &record.transcript,
        out_dir.join(format!("{run_id}.jsonl")),
    )?;
    match &record.outcome.final_code {
        Some(code) => {
            let path = out_dir.join(format!("{run_id}.updated.{extension}"));
            std::fs::write(&path, code.content()).map_err(io_err(&path))?;
            Ok(Some(path))
        }
        None => Ok(None),
    }
}

/// `run-01` .. `run-10`; width grows with the repetition count.
pub fn run_id_for(index: usize, repetitions: usize) -> String {
    let width = repetitions.to_string().len().max(2);
    format!("run-{:0width$}", index + 1)
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub repetitions: usize,
    pub parallelism: usize,
    /// Run artifacts go to `<out_root>/<case name>/`.
    pub out_root: PathBuf,
}

impl BenchOptions {
    pub fn case_out_dir(&self, case: &BenchCase) -> PathBuf {
        self.out_root.join(&case.name)
    }
}

/// Executes `options.repetitions` independent runs. Each run gets its own
/// backend from `backend_for`. Failures are recorded as failed outcomes.
pub fn run_bench<F>(
    case: &BenchCase,
    config: &PipelineConfig,
    prompts: &PromptSet,
    options: &BenchOptions,
    backend_for: F,
) -> Result<Vec<RunOutcome>, BenchError>
where
    F: Fn(&str) -> Result<Box<dyn ChatBackend>, BackendError> + Sync,
{
    if options.repetitions == 0 {
        return Err(BenchError::NoRepetitions);
    }
    let code = case.load_code()?;
    let input = case.load_input(config)?;
    let out_dir = options.case_out_dir(case);
    std::fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;

    let reps = options.repetitions;
    let slots: Mutex<Vec<Option<Result<RunOutcome, BenchError>>>> =
        Mutex::new((0..reps).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= reps {
            break;
        }
        let run_id = run_id_for(i, reps);
        let record = match backend_for(&run_id) {
            Ok(backend) => run_once(backend.as_ref(), prompts, config, &run_id, &code, &input)
                .map_err(BenchError::from),
            Err(e) => Ok(RunRecord {
                outcome: RunOutcome::failed(&run_id, format!("backend unavailable: {e}")),
                transcript: Vec::new(),
            }),
        };
        let result = record.and_then(|rec| {
            persist_run(&rec, &out_dir, &case.extension)?;
            info!(run_id = %rec.outcome.run_id, status = %rec.outcome.status, "bench run done");
            Ok(rec.outcome)
        });
        slots.lock().expect("bench slots poisoned")[i] = Some(result);
    };

    let workers = options.parallelism.clamp(1, reps);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(worker);
        }
    });

    let outcomes = slots
        .into_inner()
        .expect("bench slots poisoned")
        .into_iter()
        .map(|s| s.expect("every slot filled"))
        .collect::<Result<Vec<_>, _>>()?;
    write_index(&out_dir.join(INDEX_FILE), &outcomes)?;
    Ok(outcomes)
}

pub fn write_index(path: &Path, outcomes: &[RunOutcome]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for o in outcomes {
        w.serialize(RunObservation::from(o))
            .expect("in-memory csv write");
    }
    let bytes = w.into_inner().expect("flush in-memory csv");
    std::fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_index(path: &Path) -> Result<Vec<RunObservation>, BenchError> {
    let index_err = |message: String| BenchError::Index {
        path: path.display().to_string(),
        message,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| index_err(e.to_string()))?;
    rdr.deserialize()
        .collect::<Result<Vec<RunObservation>, _>>()
        .map_err(|e| index_err(e.to_string()))
}
