//! Per-run metrics and the cross-run aggregate for one method label.
//!
//! Error means, SD, LOC and duration are taken over completed runs only.
//! Requirement means are taken over every run, with failed runs scoring 0.

use super::ledger::{ErrorCategory, ErrorRecord, ReplacedFunctionsRecord, RequirementScoreRecord};
use super::stats;
use crate::pipeline::{RunOutcome, RunStatus};
use num_traits::Float;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AggregateError {
    #[error("{source_name} cites unknown run {run_id:?}")]
    DanglingReference {
        source_name: &'static str,
        run_id: String,
    },
    #[error("run {0:?} appears more than once")]
    DuplicateRun(String),
    #[error("no runs to aggregate")]
    NoRuns,
}

/// What the harness needs to know about a run; one row of a bench index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunObservation {
    pub run_id: String,
    pub status: RunStatus,
    pub duration_seconds: f64,
    pub loc: Option<usize>,
}

impl From<&RunOutcome> for RunObservation {
    fn from(o: &RunOutcome) -> Self {
        Self {
            run_id: o.run_id.clone(),
            status: o.status,
            duration_seconds: o.duration_seconds,
            loc: o.loc(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub run_id: String,
    /// Distinct mistakes; `None` for failed runs.
    pub different_errors: Option<usize>,
    pub loc: Option<usize>,
    pub duration_seconds: f64,
    /// After applying the distinct-error threshold.
    pub status: RunStatus,
    pub replaced_functions: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics<S> {
    pub method_label: String,
    pub mean_errors: Option<S>,
    pub sd_errors: Option<S>,
    pub mean_loc: Option<S>,
    pub mean_duration_seconds: Option<S>,
    pub runs_total: usize,
    pub runs_failed: usize,
    pub fully_correct_runs: usize,
    pub category_counts: BTreeMap<ErrorCategory, usize>,
    pub requirement_means: Option<Vec<S>>,
    pub requirement_total: Option<S>,
    pub mean_replaced_functions: Option<S>,
}

pub struct Aggregator<'a> {
    label: String,
    outcomes: &'a [RunObservation],
    errors: &'a [ErrorRecord],
    scores: &'a [RequirementScoreRecord],
    replaced: &'a [ReplacedFunctionsRecord],
    failed_error_threshold: Option<usize>,
}

fn to_s<S: Float>(v: f64) -> S {
    S::from(v).expect("value representable in the float type")
}

fn mean_of<S: Float>(values: &[f64]) -> Option<S> {
    let xs: Vec<S> = values.iter().map(|&v| to_s(v)).collect();
    stats::mean(&xs).ok()
}

impl<'a> Aggregator<'a> {
    pub fn new(label: impl Into<String>, outcomes: &'a [RunObservation]) -> Self {
        Self {
            label: label.into(),
            outcomes,
            errors: &[],
            scores: &[],
            replaced: &[],
            failed_error_threshold: None,
        }
    }

    pub fn errors(mut self, errors: &'a [ErrorRecord]) -> Self {
        self.errors = errors;
        self
    }

    pub fn scores(mut self, scores: &'a [RequirementScoreRecord]) -> Self {
        self.scores = scores;
        self
    }

    pub fn replaced_functions(mut self, replaced: &'a [ReplacedFunctionsRecord]) -> Self {
        self.replaced = replaced;
        self
    }

    /// Completed runs with more distinct errors than `threshold` are
    /// reclassified as failed generations.
    pub fn failed_error_threshold(mut self, threshold: usize) -> Self {
        self.failed_error_threshold = Some(threshold);
        self
    }

    fn check_refs(&self) -> Result<BTreeMap<&'a str, &'a RunObservation>, AggregateError> {
        let mut runs = BTreeMap::new();
        for o in self.outcomes {
            if runs.insert(o.run_id.as_str(), o).is_some() {
                return Err(AggregateError::DuplicateRun(o.run_id.clone()));
            }
        }
        let dangling = |source_name, run_id: &str| AggregateError::DanglingReference {
            source_name,
            run_id: run_id.to_string(),
        };
        if let Some(e) = self
            .errors
            .iter()
            .find(|e| !runs.contains_key(e.run_id.as_str()))
        {
            return Err(dangling("error ledger", &e.run_id));
        }
        if let Some(s) = self
            .scores
            .iter()
            .find(|s| !runs.contains_key(s.run_id.as_str()))
        {
            return Err(dangling("requirement scores", &s.run_id));
        }
        if let Some(r) = self
            .replaced
            .iter()
            .find(|r| !runs.contains_key(r.run_id.as_str()))
        {
            return Err(dangling("replaced functions", &r.run_id));
        }
        Ok(runs)
    }

    /// Collapses (run_id, mistake_id) duplicates. Among duplicates the
    /// smallest category wins so the result does not depend on row order.
    fn distinct_mistakes(&self) -> BTreeMap<(&'a str, &'a str), ErrorCategory> {
        let mut out: BTreeMap<(&str, &str), ErrorCategory> = BTreeMap::new();
        for e in self.errors {
            out.entry((e.run_id.as_str(), e.mistake_id.as_str()))
                .and_modify(|c| *c = (*c).min(e.category))
                .or_insert(e.category);
        }
        out
    }

    pub fn run_metrics(&self) -> Result<Vec<RunMetrics>, AggregateError> {
        let runs = self.check_refs()?;
        let mistakes = self.distinct_mistakes();
        let mut per_run: HashMap<&str, usize> = HashMap::new();
        for (run_id, _) in mistakes.keys() {
            *per_run.entry(run_id).or_default() += 1;
        }
        let replaced: HashMap<&str, u32> = self
            .replaced
            .iter()
            .map(|r| (r.run_id.as_str(), r.replaced_functions))
            .collect();

        Ok(runs
            .values()
            .map(|o| {
                let errors = per_run.get(o.run_id.as_str()).copied().unwrap_or(0);
                let over = self.failed_error_threshold.is_some_and(|t| errors > t);
                let status = if o.status == RunStatus::Completed && !over {
                    RunStatus::Completed
                } else {
                    RunStatus::FailedGeneration
                };
                let completed = status == RunStatus::Completed;
                RunMetrics {
                    run_id: o.run_id.clone(),
                    different_errors: completed.then_some(errors),
                    loc: if completed { o.loc } else { None },
                    duration_seconds: o.duration_seconds,
                    status,
                    replaced_functions: replaced.get(o.run_id.as_str()).copied(),
                }
            })
            .collect())
    }

    pub fn compute<S: Float>(&self) -> Result<AggregateMetrics<S>, AggregateError> {
        if self.outcomes.is_empty() {
            return Err(AggregateError::NoRuns);
        }
        let metrics = self.run_metrics()?;
        let completed: Vec<&RunMetrics> = metrics
            .iter()
            .filter(|m| m.status == RunStatus::Completed)
            .collect();

        let error_counts: Vec<S> = completed
            .iter()
            .map(|m| to_s(m.different_errors.unwrap_or(0) as f64))
            .collect();
        let locs: Vec<f64> = completed
            .iter()
            .filter_map(|m| m.loc)
            .map(|l| l as f64)
            .collect();
        let durations: Vec<f64> = completed.iter().map(|m| m.duration_seconds).collect();
        let rf: Vec<f64> = completed
            .iter()
            .filter_map(|m| m.replaced_functions)
            .map(f64::from)
            .collect();

        let mistakes = self.distinct_mistakes();
        let mut category_counts: BTreeMap<ErrorCategory, usize> =
            ErrorCategory::ALL.iter().map(|&c| (c, 0)).collect();
        for c in mistakes.values() {
            *category_counts.entry(*c).or_default() += 1;
        }

        let completed_ids: BTreeSet<&str> = completed.iter().map(|m| m.run_id.as_str()).collect();
        let max_index = self.scores.iter().map(|s| s.requirement_index).max();
        let passed: BTreeSet<(&str, usize)> = self
            .scores
            .iter()
            .filter(|s| s.value == 1 && completed_ids.contains(s.run_id.as_str()))
            .map(|s| (s.run_id.as_str(), s.requirement_index))
            .collect();

        let runs_total = metrics.len();
        let (requirement_means, requirement_total) = match max_index {
            Some(k) => {
                let means: Vec<S> = (1..=k)
                    .map(|i| {
                        let n = passed.iter().filter(|(_, idx)| *idx == i).count();
                        to_s::<S>(n as f64) / to_s::<S>(runs_total as f64)
                    })
                    .collect();
                let total = means.iter().fold(S::zero(), |acc, &m| acc + m);
                (Some(means), Some(total))
            }
            None => (None, None),
        };

        let fully_correct_runs = completed
            .iter()
            .filter(|m| m.different_errors == Some(0))
            .filter(|m| match max_index {
                Some(k) => (1..=k).all(|i| passed.contains(&(m.run_id.as_str(), i))),
                None => true,
            })
            .count();

        Ok(AggregateMetrics {
            method_label: self.label.clone(),
            mean_errors: stats::mean(&error_counts).ok(),
            sd_errors: stats::population_sd(&error_counts).ok(),
            mean_loc: mean_of(&locs),
            mean_duration_seconds: mean_of(&durations),
            runs_total,
            runs_failed: runs_total - completed.len(),
            fully_correct_runs,
            category_counts,
            requirement_means,
            requirement_total,
            mean_replaced_functions: mean_of(&rf),
        })
    }
}

/// Aggregates with no threshold and no replaced-functions sidecar.
pub fn aggregate<S: Float>(
    outcomes: &[RunObservation],
    errors: &[ErrorRecord],
    scores: &[RequirementScoreRecord],
    label: &str,
) -> Result<AggregateMetrics<S>, AggregateError> {
    Aggregator::new(label, outcomes)
        .errors(errors)
        .scores(scores)
        .compute()
}
