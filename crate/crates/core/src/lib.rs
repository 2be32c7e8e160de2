//! Multi-agent pipeline for updating legacy source files.
//!
//! A manager splits user requirements into tasks; each task gets a one-shot
//! prompt, is executed, then checked by a verifier that can send it to a
//! finalizer a bounded number of times. The [`eval`] module runs repeated
//! benchmarks and aggregates human-scored results.

pub mod agents;
pub mod backend;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod prompts;
pub mod transcript;

pub use agents::{AgentError, Agents, PromptSpec};
pub use backend::{
    ChatBackend, ChatMessage, ChatRequest, ChatResponse, HttpBackend, ScriptEntry, ScriptedBackend,
};
pub use model::{
    count_loc, extract_code, parse_requirements, CodeArtifact, RequirementSet, Task, TaskPlan,
    Verdict,
};
pub use pipeline::{Mode, Pipeline, PipelineConfig, RunOutcome, RunRecord, RunStatus};
pub use prompts::PromptSet;
pub use transcript::{AgentKind, Session, TranscriptEntry};

/// Aggregate metrics in double precision, as written to reports.
pub type Metrics = eval::AggregateMetrics<f64>;
/// Single-precision aggregate, for callers that store metrics compactly.
pub type MetricsF32 = eval::AggregateMetrics<f32>;
