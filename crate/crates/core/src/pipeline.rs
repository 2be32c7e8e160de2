//! Run orchestration: plan, confirm, then for each task make a prompt,
//! execute it and loop verifier/finalizer up to the cap. Also the
//! single-call baseline modes.

use crate::agents::{AgentError, Agents};
use crate::backend::{ChatBackend, ChatMessage};
use crate::model::{self, CodeArtifact, RequirementSet, TaskPlan};
use crate::prompts::PromptSet;
use crate::transcript::{flags, AgentKind, CallSite, RequestSettings, Session, TranscriptEntry};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;
use tracing::{debug, info};

pub const DEFAULT_MAX_LOOP_ITERATIONS: u32 = 2;
pub const DEFAULT_FAILED_ERROR_THRESHOLD: usize = 7;

pub const BASELINE_SYSTEM_PROMPT: &str = "You are a software developer who updates existing code.";
pub const RETURN_ONLY_CODE: &str =
    "Return only the updated code, as the whole file inside a single fenced code block.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    SystemManager,
    SystemPerRequirement,
    SystemSingleTask,
    BaselineZsl,
    BaselineOsl,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::SystemManager,
        Mode::SystemPerRequirement,
        Mode::SystemSingleTask,
        Mode::BaselineZsl,
        Mode::BaselineOsl,
    ];

    pub fn is_baseline(self) -> bool {
        matches!(self, Mode::BaselineZsl | Mode::BaselineOsl)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::SystemManager => "system_manager",
            Mode::SystemPerRequirement => "system_per_requirement",
            Mode::SystemSingleTask => "system_single_task",
            Mode::BaselineZsl => "baseline_zsl",
            Mode::BaselineOsl => "baseline_osl",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Mode::ALL.iter().map(|m| m.as_str()).collect();
                format!("unknown mode {s:?}; expected one of {}", known.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mode: Mode,
    /// Finalizer invocations allowed per task before the code moves on.
    pub max_loop_iterations: u32,
    /// Runs with more distinct errors than this count as failed generations.
    pub failed_error_threshold: usize,
    pub request: RequestSettings,
    pub code_sentinels: Vec<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::SystemManager,
            max_loop_iterations: DEFAULT_MAX_LOOP_ITERATIONS,
            failed_error_threshold: DEFAULT_FAILED_ERROR_THRESHOLD,
            request: RequestSettings::default(),
            code_sentinels: model::DEFAULT_CODE_SENTINELS
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl PipelineConfig {
    pub fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    FailedGeneration,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::FailedGeneration => "failed_generation",
        }
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run_id: String,
    pub final_code: Option<CodeArtifact>,
    pub status: RunStatus,
    pub duration_seconds: f64,
    pub task_count: usize,
    pub finalizer_invocations: usize,
    /// Why the run failed, when it did.
    pub failure: Option<String>,
}

impl RunOutcome {
    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    pub fn loc(&self) -> Option<usize> {
        self.final_code.as_ref().map(CodeArtifact::loc)
    }

    /// A run that never produced code, e.g. because its backend could not be built.
    pub fn failed(run_id: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            run_id: run_id.into(),
            final_code: None,
            status: RunStatus::FailedGeneration,
            duration_seconds: 0.0,
            task_count: 0,
            finalizer_invocations: 0,
            failure: Some(reason.into()),
        }
    }
}

/// Outcome plus every exchange that produced it.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub outcome: RunOutcome,
    pub transcript: Vec<TranscriptEntry>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PipelineError {
    #[error("mode {mode} cannot be used for a {expected} run")]
    WrongMode { mode: Mode, expected: &'static str },
    #[error("baseline prompt text must not be empty")]
    EmptyPrompt,
    #[error("input code must not be empty")]
    EmptyCode,
}

pub struct Pipeline<'a> {
    backend: &'a dyn ChatBackend,
    prompts: &'a PromptSet,
    config: &'a PipelineConfig,
}

struct Progress {
    task_count: usize,
    finalizer_invocations: usize,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        backend: &'a dyn ChatBackend,
        prompts: &'a PromptSet,
        config: &'a PipelineConfig,
    ) -> Self {
        Self {
            backend,
            prompts,
            config,
        }
    }

    fn agents(&self) -> Agents<'a> {
        Agents::new(self.prompts).with_sentinels(self.config.code_sentinels.clone())
    }

    fn plan(
        &self,
        agents: &Agents<'_>,
        session: &mut Session<'_>,
        requirements: &RequirementSet,
    ) -> Result<TaskPlan, AgentError> {
        match self.config.mode {
            Mode::SystemManager => {
                let draft = agents.manager_plan(session, requirements)?;
                agents.manager_confirm(session, draft, requirements)
            }
            Mode::SystemPerRequirement => Ok(TaskPlan::per_requirement(requirements)),
            Mode::SystemSingleTask => Ok(TaskPlan::single_task(requirements)),
            Mode::BaselineZsl | Mode::BaselineOsl => unreachable!("checked by run()"),
        }
    }

    fn drive(
        &self,
        session: &mut Session<'_>,
        original: &CodeArtifact,
        requirements: &RequirementSet,
        progress: &mut Progress,
    ) -> Result<CodeArtifact, AgentError> {
        let agents = self.agents();
        let plan = self.plan(&agents, session, requirements)?;
        debug_assert!(plan.confirmed);
        progress.task_count = plan.tasks.len();

        let mut current = original.clone();
        for task in &plan.tasks {
            let spec = agents.make_prompt(session, task, &current)?;
            let mut candidate = agents.execute(session, &spec, &current)?;
            let mut verdict = agents.verify(session, task, original, &current, &candidate)?;
            let mut rounds = 0;
            while !verdict.is_accept() && rounds < self.config.max_loop_iterations {
                candidate = agents.finalize(session, task, &candidate, &verdict.feedback)?;
                progress.finalizer_invocations += 1;
                rounds += 1;
                verdict = agents.verify(session, task, original, &current, &candidate)?;
            }
            if !verdict.is_accept() {
                debug!(
                    task = task.ordinal,
                    "loop cap reached; advancing with unaccepted code"
                );
            }
            current = candidate;
        }
        Ok(current)
    }

    /// Runs one of the three multi-agent modes end to end.
    pub fn run(
        &self,
        run_id: &str,
        code: &CodeArtifact,
        requirements: &RequirementSet,
    ) -> Result<RunRecord, PipelineError> {
        if self.config.mode.is_baseline() {
            return Err(PipelineError::WrongMode {
                mode: self.config.mode,
                expected: "multi-agent",
            });
        }
        if code.content().trim().is_empty() {
            return Err(PipelineError::EmptyCode);
        }
        let started = Instant::now();
        let mut session = Session::new(run_id, self.backend, self.config.request.clone());
        let mut progress = Progress {
            task_count: 0,
            finalizer_invocations: 0,
        };
        let result = self.drive(&mut session, code, requirements, &mut progress);
        Ok(self.finish(session, started, result, progress))
    }

    /// One call: the user's prompt, the file, and the return-only-code directive.
    pub fn run_baseline(
        &self,
        run_id: &str,
        code: &CodeArtifact,
        prompt_text: &str,
    ) -> Result<RunRecord, PipelineError> {
        if !self.config.mode.is_baseline() {
            return Err(PipelineError::WrongMode {
                mode: self.config.mode,
                expected: "baseline",
            });
        }
        if prompt_text.trim().is_empty() {
            return Err(PipelineError::EmptyPrompt);
        }
        if code.content().trim().is_empty() {
            return Err(PipelineError::EmptyCode);
        }
        let started = Instant::now();
        let mut session = Session::new(run_id, self.backend, self.config.request.clone());
        let messages = vec![
            ChatMessage::system(BASELINE_SYSTEM_PROMPT),
            ChatMessage::user(baseline_message(prompt_text, code.content())),
        ];
        let sentinels: Vec<&str> = self
            .config
            .code_sentinels
            .iter()
            .map(String::as_str)
            .collect();
        let result = session
            .call(CallSite::task(AgentKind::Baseline, 1, 0), messages, &[])
            .map_err(AgentError::from)
            .and_then(|reply| {
                model::extract_code_with(&reply.content, &sentinels).map_err(|e| {
                    session.flag_last(flags::NO_CODE);
                    AgentError::FailedGeneration(e)
                })
            })
            .map(|content| CodeArtifact::from_executor(content, 1));
        let progress = Progress {
            task_count: 1,
            finalizer_invocations: 0,
        };
        Ok(self.finish(session, started, result, progress))
    }

    fn finish(
        &self,
        session: Session<'_>,
        started: Instant,
        result: Result<CodeArtifact, AgentError>,
        progress: Progress,
    ) -> RunRecord {
        let run_id = session.run_id().to_string();
        let (final_code, status, failure) = match result {
            Ok(code) => (Some(code), RunStatus::Completed, None),
            Err(e) => (None, RunStatus::FailedGeneration, Some(e.to_string())),
        };
        let outcome = RunOutcome {
            run_id,
            final_code,
            status,
            duration_seconds: started.elapsed().as_secs_f64(),
            task_count: progress.task_count,
            finalizer_invocations: progress.finalizer_invocations,
            failure,
        };
        info!(
            run_id = %outcome.run_id,
            status = %outcome.status,
            duration = outcome.duration_seconds,
            "run finished"
        );
        RunRecord {
            outcome,
            transcript: session.into_entries(),
        }
    }
}

/// The baseline user message: prompt text verbatim, then the file.
pub fn baseline_message(prompt_text: &str, code: &str) -> String {
    format!(
        "{}\n\n```\n{}\n```\n\n{}",
        prompt_text.trim_end(),
        code,
        RETURN_ONLY_CODE
    )
}
