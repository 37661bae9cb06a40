//! Scenario harness for the disruption-response engine: a seeded
//! case-study network, a runner that scores the centralized re-planner
//! against the agent protocol, and report renderings (CSV, aligned text,
//! Graphviz flow diffs).

pub mod network;
pub mod report;
pub mod runner;

pub use network::{build_case_study_network, reference_network, REFERENCE_SEED};
pub use report::{
    export_csv, export_flow_diff, export_text, method_flow_diff, metrics_records, parse_csv,
    MetricsRecord, ReportError,
};
pub use runner::{
    builtin_event, run_scenario, DiffKind, EdgeDiff, FlowDiff, MethodChoice, MetricsRow,
    NetworkSource, RunReport, ScenarioConfig, ScenarioError,
};
