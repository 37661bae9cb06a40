//! Runs a disruption scenario end to end: solve the baseline, inject the
//! event, let the centralized re-planner and/or the agent protocol respond,
//! and score both answers on the five comparison metrics.

use std::collections::BTreeMap;
use std::path::PathBuf;

use milp::SolverConfig;
use supply::model::plan::ModelError;
use supply::model::QUANTITY_TOL;
use supply::planner::{self, centralized_comm_effort, PlanError, ReplanPenalties};
use supply::protocol::{
    comm_effort, run_recovery, MessageLog, ProtocolConfig, ProtocolError, World,
};
use supply::{
    apply_disruption, plan_delta, total_cost, DisruptionEvent, EdgeKey, FlowPlan, PlanDelta,
    ProductId, SupplyNetwork, VertexId,
};

use crate::network::{build_case_study_network, C5_SURGE, REFERENCE_SEED};

/// Where the scenario's network comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum NetworkSource {
    /// The generated case-study network for the given seed.
    Builtin { seed: u64 },
    /// A network file in the structured JSON schema.
    File(PathBuf),
}

impl Default for NetworkSource {
    fn default() -> Self {
        NetworkSource::Builtin {
            seed: REFERENCE_SEED,
        }
    }
}

/// Which response method(s) to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    Centralized,
    Distributed,
    Both,
}

impl MethodChoice {
    fn runs_centralized(self) -> bool {
        matches!(self, MethodChoice::Centralized | MethodChoice::Both)
    }
    fn runs_distributed(self) -> bool {
        matches!(self, MethodChoice::Distributed | MethodChoice::Both)
    }
}

pub const CENTRALIZED: &str = "centralized";
pub const DISTRIBUTED: &str = "distributed";

/// Full description of one scenario run.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub network: NetworkSource,
    /// Label used in the report rows and file names.
    pub label: String,
    pub event: DisruptionEvent,
    pub method: MethodChoice,
    /// Status-change penalties for the re-planner; defaults to the ones
    /// recorded on the network.
    pub penalties: Option<ReplanPenalties>,
    /// Multiplier applied to every edge-change penalty.
    pub edge_penalty_scale: f64,
    /// Hard cap on how many new lanes the re-planner may open.
    pub added_edge_cap: Option<usize>,
    pub solver: SolverConfig,
}

impl ScenarioConfig {
    pub fn new(label: impl Into<String>, event: DisruptionEvent) -> Self {
        ScenarioConfig {
            network: NetworkSource::default(),
            label: label.into(),
            event,
            method: MethodChoice::Both,
            penalties: None,
            edge_penalty_scale: 1.0,
            added_edge_cap: None,
            solver: SolverConfig::default(),
        }
    }
}

/// The five comparison metrics for one method, plus its outcome status.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    /// Change in transport and holding cost against the baseline.
    pub c_f: f64,
    /// Change in production cost against the baseline.
    pub c_p: f64,
    /// Lanes newly taken into use.
    pub e_a: usize,
    /// Lanes whose product flows changed amount.
    pub f_c: usize,
    /// Messages exchanged to derive the response.
    pub c_e: usize,
    pub status: String,
}

/// One lane's before/after flows and its place in the diff rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDiff {
    pub before: BTreeMap<ProductId, f64>,
    pub after: BTreeMap<ProductId, f64>,
    pub kind: DiffKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffKind {
    Unchanged,
    Changed,
    Added,
    Removed,
}

impl DiffKind {
    pub fn label(self) -> &'static str {
        match self {
            DiffKind::Unchanged => "unchanged",
            DiffKind::Changed => "changed",
            DiffKind::Added => "added",
            DiffKind::Removed => "removed",
        }
    }
}

pub type FlowDiff = BTreeMap<EdgeKey, EdgeDiff>;

/// Roll-up of the pre-disruption plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanSummary {
    pub total_cost: f64,
    pub demand: f64,
    pub served: f64,
    pub open_lanes: usize,
}

/// Everything a scenario run produced, keyed per method where applicable.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub scenario: String,
    pub baseline_summary: PlanSummary,
    pub rows: BTreeMap<String, MetricsRow>,
    pub diffs: BTreeMap<String, FlowDiff>,
    pub logs: BTreeMap<String, MessageLog>,
    /// Total cost of each method's plan on the disrupted network,
    /// including status-change penalties against the baseline.
    pub totals: BTreeMap<String, f64>,
    /// Unserved demand per method.
    pub shortfalls: BTreeMap<String, f64>,
    pub plans: BTreeMap<String, FlowPlan>,
    pub baseline: FlowPlan,
    pub disrupted: SupplyNetwork,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario {scenario}: {message}")]
    Config { scenario: String, message: String },
    #[error("scenario {scenario}: planner failed: {source}")]
    Planner {
        scenario: String,
        #[source]
        source: PlanError,
    },
    #[error("scenario {scenario}: recovery failed: {source}")]
    Protocol {
        scenario: String,
        #[source]
        source: ProtocolError,
    },
    #[error("scenario {scenario}: {source}")]
    Model {
        scenario: String,
        #[source]
        source: ModelError,
    },
    #[error("cannot load network: {0}")]
    Network(#[from] supply::SchemaError),
}

/// The disruption behind a builtin scenario name, if the name is known.
pub fn builtin_event(name: &str) -> Option<DisruptionEvent> {
    match name {
        "c5" => Some(DisruptionEvent::NewDemand {
            vertex: VertexId::from("C5"),
            product: ProductId::from("beef_patty"),
            added: C5_SURGE,
        }),
        "t4" => Some(DisruptionEvent::VertexLoss {
            vertex: VertexId::from("T4"),
        }),
        "o1" => Some(DisruptionEvent::VertexLoss {
            vertex: VertexId::from("O1"),
        }),
        _ => None,
    }
}

fn load(source: &NetworkSource) -> Result<SupplyNetwork, ScenarioError> {
    match source {
        NetworkSource::Builtin { seed } => Ok(build_case_study_network(*seed)),
        NetworkSource::File(path) => Ok(supply::load_network(path)?),
    }
}

/// Classifies every lane of the disrupted network against the baseline.
/// Lanes the disruption disabled are `Removed` if they carried anything;
/// surviving lanes are `Added`, `Changed` or `Unchanged` in exact agreement
/// with the metric counts.
pub fn build_flow_diff(
    net: &SupplyNetwork,
    baseline: &FlowPlan,
    plan: &FlowPlan,
    delta: &PlanDelta,
) -> FlowDiff {
    let mut diff = FlowDiff::new();
    for key in net.edges.keys() {
        let before = baseline.edge_flows(&key.0, &key.1);
        let after = plan.edge_flows(&key.0, &key.1);
        let was_used = baseline.edge_used.contains(key);
        let is_used = plan.edge_used.contains(key);
        let kind = if !net.edge_usable(key) {
            if was_used {
                DiffKind::Removed
            } else {
                DiffKind::Unchanged
            }
        } else if !was_used && is_used {
            DiffKind::Added
        } else if was_used && delta.flow_changed_edges.contains(key) {
            DiffKind::Changed
        } else {
            DiffKind::Unchanged
        };
        diff.insert(
            key.clone(),
            EdgeDiff {
                before,
                after,
                kind,
            },
        );
    }
    diff
}

fn summarize(net: &SupplyNetwork, plan: &FlowPlan) -> Result<PlanSummary, ModelError> {
    let cost = total_cost(net, plan, None)?;
    let demand = net
        .vertices
        .values()
        .flat_map(|v| v.demand.values())
        .map(|d| d.quantity)
        .sum();
    Ok(PlanSummary {
        total_cost: cost.total,
        demand,
        served: plan.satisfied.values().sum(),
        open_lanes: plan.edge_used.len(),
    })
}

/// Runs the configured scenario and scores each requested method.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport, ScenarioError> {
    let scenario = cfg.label.clone();
    let fail_cfg = |message: String| ScenarioError::Config {
        scenario: scenario.clone(),
        message,
    };
    if !(cfg.edge_penalty_scale.is_finite() && cfg.edge_penalty_scale > 0.0) {
        return Err(fail_cfg(format!(
            "edge penalty scale must be positive, got {}",
            cfg.edge_penalty_scale
        )));
    }

    let net = load(&cfg.network)?;
    let baseline = planner::plan(&net, &cfg.solver).map_err(|source| ScenarioError::Planner {
        scenario: scenario.clone(),
        source,
    })?;
    let disrupted = apply_disruption(&net, &cfg.event).map_err(|source| ScenarioError::Model {
        scenario: scenario.clone(),
        source,
    })?;

    let mut penalties = cfg
        .penalties
        .clone()
        .unwrap_or_else(|| ReplanPenalties::from_network(&disrupted))
        .with_edge_scale(cfg.edge_penalty_scale);
    if let Some(cap) = cfg.added_edge_cap {
        penalties = penalties.with_cap(cap);
    }

    let baseline_summary = summarize(&net, &baseline).map_err(|source| ScenarioError::Model {
        scenario: scenario.clone(),
        source,
    })?;
    let mut report = RunReport {
        scenario: scenario.clone(),
        baseline_summary,
        rows: BTreeMap::new(),
        diffs: BTreeMap::new(),
        logs: BTreeMap::new(),
        totals: BTreeMap::new(),
        shortfalls: BTreeMap::new(),
        plans: BTreeMap::new(),
        baseline: baseline.clone(),
        disrupted: disrupted.clone(),
    };

    let book = |report: &mut RunReport,
                method: &str,
                plan: FlowPlan,
                delta: PlanDelta,
                c_e: usize,
                status: String|
     -> Result<(), ScenarioError> {
        let cost = total_cost(&disrupted, &plan, Some(&baseline)).map_err(|source| {
            ScenarioError::Model {
                scenario: scenario.clone(),
                source,
            }
        })?;
        // negative dust in the shortfall entries would render as -0.0
        let shortfall: f64 = plan.shortfall.values().sum::<f64>().max(0.0);
        // cost deltas are differences of much larger totals; shave the
        // trailing f64 noise off before they reach a report
        let round_money = |x: f64| (x * 1e9).round() / 1e9;
        report.rows.insert(
            method.to_string(),
            MetricsRow {
                c_f: round_money(delta.flow_cost_change),
                c_p: round_money(delta.production_cost_change),
                e_a: delta.added_edges,
                f_c: delta.changed_flows,
                c_e,
                status,
            },
        );
        report.diffs.insert(
            method.to_string(),
            build_flow_diff(&disrupted, &baseline, &plan, &delta),
        );
        report.totals.insert(method.to_string(), cost.total);
        report.shortfalls.insert(method.to_string(), shortfall);
        report.plans.insert(method.to_string(), plan);
        Ok(())
    };

    if cfg.method.runs_centralized() {
        let (plan, delta) = planner::replan(&disrupted, &baseline, &penalties, &cfg.solver)
            .map_err(|source| ScenarioError::Planner {
                scenario: scenario.clone(),
                source,
            })?;
        let c_e = centralized_comm_effort(&disrupted, &delta);
        let shortfall: f64 = plan.shortfall.values().sum();
        let status = if shortfall > QUANTITY_TOL {
            format!("unmet_demand({shortfall:.1})")
        } else {
            "replanned".to_string()
        };
        book(&mut report, CENTRALIZED, plan, delta, c_e, status)?;
    }

    if cfg.method.runs_distributed() {
        let mut world = World::new(net.clone(), baseline.clone()).map_err(|source| {
            ScenarioError::Protocol {
                scenario: scenario.clone(),
                source: source.into(),
            }
        })?;
        let protocol_cfg = ProtocolConfig {
            solver: cfg.solver,
            replan_penalties: Some(penalties.clone()),
            ..Default::default()
        };
        let outcome = run_recovery(&mut world, &cfg.event, &protocol_cfg).map_err(|source| {
            ScenarioError::Protocol {
                scenario: scenario.clone(),
                source,
            }
        })?;
        let delta = plan_delta(&baseline, &world.plan, &world.net).map_err(|source| {
            ScenarioError::Model {
                scenario: scenario.clone(),
                source,
            }
        })?;
        let c_e = comm_effort(&outcome.log);
        let status = outcome.status.to_string();
        report.logs.insert(DISTRIBUTED.to_string(), outcome.log);
        book(&mut report, DISTRIBUTED, world.plan, delta, c_e, status)?;
    }

    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_run(label: &str) -> RunReport {
        let event = builtin_event(label).expect("builtin scenario");
        run_scenario(&ScenarioConfig::new(label, event)).expect("scenario runs")
    }

    #[test]
    fn baseline_serves_all_demand() {
        let report = reference_run("t4");
        let s = &report.baseline_summary;
        assert!(s.demand > 0.0);
        assert!((s.served - s.demand).abs() < 1e-6);
    }

    #[test]
    fn diff_annotations_match_the_metric_counts() {
        for label in ["c5", "t4", "o1"] {
            let report = reference_run(label);
            for (method, row) in &report.rows {
                let diff = &report.diffs[method];
                let count = |kind: DiffKind| diff.values().filter(|d| d.kind == kind).count();
                assert_eq!(count(DiffKind::Added), row.e_a, "{label}/{method} added");
                assert_eq!(
                    count(DiffKind::Changed),
                    row.f_c,
                    "{label}/{method} changed"
                );
            }
        }
    }

    #[test]
    fn a_scenario_without_changes_diffs_clean() {
        // re-planning after an idle-lane loss changes nothing
        let mut cfg = ScenarioConfig::new(
            "idle",
            DisruptionEvent::EdgeLoss {
                edges: vec![(VertexId::from("O3"), VertexId::from("D3"))],
            },
        );
        cfg.method = MethodChoice::Both;
        let report = run_scenario(&cfg).unwrap();
        for (method, diff) in &report.diffs {
            assert!(
                diff.values().all(|d| d.kind == DiffKind::Unchanged),
                "{method} not clean"
            );
            assert_eq!(report.rows[method].e_a, 0);
            assert_eq!(report.rows[method].f_c, 0);
        }
    }

    #[test]
    fn bad_scale_is_rejected() {
        let mut cfg = ScenarioConfig::new("bad", builtin_event("c5").unwrap());
        cfg.edge_penalty_scale = 0.0;
        assert!(matches!(
            run_scenario(&cfg),
            Err(ScenarioError::Config { .. })
        ));
    }
}
