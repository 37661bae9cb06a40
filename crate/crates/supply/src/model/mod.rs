//! Core domain model: networks, flow plans, disruptions, plan deltas and
//! the JSON file formats.

pub mod delta;
pub mod disruption;
pub mod network;
pub mod plan;
pub mod schema;

pub use delta::{plan_delta, PlanDelta};
pub use disruption::{apply_disruption, DisruptionEvent};
pub use network::{
    validate_network, Demand, Edge, EdgeKey, EntityKind, Holding, NetworkViolation, Product,
    ProductId, SupplyNetwork, Vertex, VertexId,
};
pub use plan::{
    flow_balance_residual, max_balance_residual, total_cost, CostBreakdown, FlowPlan, ModelError,
    QUANTITY_TOL,
};
pub use schema::{
    load_network, load_scenario, network_to_json, save_network, NetworkFile, PlanFile, SchemaError,
};
