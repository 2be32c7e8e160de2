//! Evaluation harness: repeated runs, human error ledgers, requirement
//! scores and the aggregate report.

pub mod aggregate;
pub mod bench;
pub mod ledger;
pub mod report;
pub mod stats;

pub use aggregate::{
    aggregate, AggregateError, AggregateMetrics, Aggregator, RunMetrics, RunObservation,
};
pub use bench::{run_bench, BenchCase, BenchError, BenchOptions, RunInput};
pub use ledger::{
    ingest_ledger, ingest_replaced_functions, ingest_scores, ErrorCategory, ErrorRecord,
    LedgerError, ReplacedFunctionsRecord, RequirementScoreRecord,
};
pub use report::{emit_report, load_report, ReportError};
pub use stats::{mean, population_sd, StatsError};
