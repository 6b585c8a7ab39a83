//! The comparison protocol: populations, the three problems, the sweep over
//! training-population sizes and context sizes, and report files.

pub mod config;
pub mod metrics;
pub mod population;
pub mod report;
pub mod runner;

pub use config::{ExperimentConfig, Method, Preset, Problem, ProblemPlan};
pub use metrics::{nmse, nmse_multi};
pub use population::{generate_population, problem_data, Population, ProblemData};
pub use report::{emit_report, emit_summary, read_results, summarize, SummaryRow};
pub use runner::{run_experiment, CellResult, ExperimentReport, RunOptions, RunOutcome};
