//! Supply-chain disruption response: a shared network model, a centralized
//! planner/re-planner built on a small exact MILP solver, and a
//! model-based multi-agent recovery protocol that patches plans locally
//! through structured messaging.

pub mod agents;
pub mod model;
pub mod planner;
pub mod protocol;

pub use model::{
    apply_disruption, flow_balance_residual, load_network, load_scenario, max_balance_residual,
    network_to_json, plan_delta, save_network, total_cost, validate_network, CostBreakdown,
    DisruptionEvent, Edge, EdgeKey, EntityKind, FlowPlan, NetworkFile, NetworkViolation, PlanDelta,
    PlanFile, Product, ProductId, SchemaError, SupplyNetwork, Vertex, VertexId, QUANTITY_TOL,
};
