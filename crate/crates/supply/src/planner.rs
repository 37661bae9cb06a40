//! Centralized planner: translates a network into a mixed-integer program,
//! solves it exactly, and extracts a flow plan — both the baseline planning
//! model and the disruption re-planning model with change penalties.
//!
//! The objective minimizes transport (`c·y` variable, `f·β` fixed), holding
//! (`h·I`), production (`e·p` variable, `φ·ζ` line opening) and shortfall
//! (`ρ^d·Δ^d`) costs; the re-planner adds `ρ^E`/`ρ^V` penalties for flipping
//! an edge's or line's use status relative to the baseline.
//!
//! The shortfall and status-change magnitudes are affine in the decision
//! variables at any optimum (`Δ^d = d − x`, `Δ^E = |β − β⁰|` with `β⁰`
//! constant), so they are substituted away instead of being modeled as
//! explicit variables: each substitution contributes a linear term plus a
//! constant, and the constants are carried in
//! [`PlannerModel::objective_offset`]. This keeps the branchable binaries to
//! exactly the `β`/`ζ` status variables.

use std::collections::{BTreeMap, BTreeSet};

use milp::{LinExpr, MilpProblem, ProblemBuilder, Relation, SolveStatus, SolverConfig, VarId};
use thiserror::Error;

use crate::model::network::{EdgeKey, NetworkViolation, ProductId, SupplyNetwork, VertexId};
use crate::model::plan::{FlowPlan, ModelError, QUANTITY_TOL};
use crate::model::{plan_delta, validate_network, PlanDelta};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("network fails validation with {} violation(s)", .0.len())]
    Invalid(Vec<NetworkViolation>),
    #[error("model construction failed: {0}")]
    Build(#[from] milp::BuildError),
    #[error("solver failed: {0}")]
    Solver(#[from] milp::SolveError),
    #[error("the planning model is infeasible")]
    Infeasible,
    #[error("the planning model is unbounded (malformed cost data)")]
    Unbounded,
    #[error("{0}")]
    Model(#[from] ModelError),
    #[error("replan penalties are invalid: {0}")]
    BadPenalty(String),
}

/// Per-entity status-change penalties for the re-planner, plus an optional
/// hard cap on the number of newly opened edges.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplanPenalties {
    pub edge: BTreeMap<EdgeKey, f64>,
    pub vertex: BTreeMap<VertexId, f64>,
    /// Upper bound on how many previously unused edges the new plan may open.
    pub added_edge_cap: Option<usize>,
}

impl ReplanPenalties {
    /// Reads the per-entity change penalties stored on the network.
    pub fn from_network(net: &SupplyNetwork) -> Self {
        ReplanPenalties {
            edge: net
                .edges
                .iter()
                .map(|(k, e)| (k.clone(), e.change_penalty))
                .collect(),
            vertex: net
                .vertices
                .iter()
                .map(|(k, v)| (k.clone(), v.change_penalty))
                .collect(),
            added_edge_cap: None,
        }
    }

    /// Multiplies every edge penalty by `lambda`, leaving vertex penalties
    /// and the cap unchanged.
    pub fn with_edge_scale(mut self, lambda: f64) -> Self {
        for p in self.edge.values_mut() {
            *p *= lambda;
        }
        self
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.added_edge_cap = Some(cap);
        self
    }

    pub fn edge_penalty(&self, key: &EdgeKey) -> f64 {
        self.edge.get(key).copied().unwrap_or(0.0)
    }

    pub fn vertex_penalty(&self, id: &VertexId) -> f64 {
        self.vertex.get(id).copied().unwrap_or(0.0)
    }

    fn validate(&self) -> Result<(), PlanError> {
        for (key, &p) in &self.edge {
            if !p.is_finite() || p < 0.0 {
                return Err(PlanError::BadPenalty(format!(
                    "edge {}->{} has penalty {p}",
                    key.0, key.1
                )));
            }
        }
        for (id, &p) in &self.vertex {
            if !p.is_finite() || p < 0.0 {
                return Err(PlanError::BadPenalty(format!(
                    "vertex {id} has penalty {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Variable ids of the model, grouped by decision symbol.
#[derive(Debug, Clone, Default)]
struct VarMap {
    /// `y_ijk`: flow of product `k` on edge `(i, j)`.
    flow: BTreeMap<(VertexId, VertexId, ProductId), VarId>,
    /// `β_ij`: edge in use.
    edge_open: BTreeMap<EdgeKey, VarId>,
    /// `x_ik`: satisfied demand.
    satisfied: BTreeMap<(VertexId, ProductId), VarId>,
    /// `p_ik`: production quantity.
    produced: BTreeMap<(VertexId, ProductId), VarId>,
    /// `I_ik`: end-of-period inventory.
    inventory: BTreeMap<(VertexId, ProductId), VarId>,
    /// `ζ_i`: production line open.
    line_open: BTreeMap<VertexId, VarId>,
}

/// A built (but unsolved) planning model: the integer program, the mapping
/// from network entities to variables, and the constant part of the
/// objective that the substitutions folded out of the linear terms.
#[derive(Debug, Clone)]
pub struct PlannerModel {
    pub problem: MilpProblem,
    vars: VarMap,
    /// Constant to add to the solver's objective value to obtain the true
    /// plan cost (shortfall constants plus forced status-change penalties).
    pub objective_offset: f64,
    demands: BTreeMap<(VertexId, ProductId), f64>,
}

/// Baseline edge/line status, as seen by the re-planner.
struct BaselineStatus<'a> {
    penalties: &'a ReplanPenalties,
    edge_open: &'a BTreeSet<EdgeKey>,
    line_open: &'a BTreeSet<VertexId>,
}

/// Builds the baseline planning model for an intact or disrupted network.
pub fn build_base_model(net: &SupplyNetwork) -> Result<PlannerModel, PlanError> {
    build_model(net, None)
}

/// Builds the re-planning model: the baseline model on the disrupted network
/// plus status-change penalties relative to `baseline` and the optional
/// added-edge cap.
pub fn build_replan_model(
    net: &SupplyNetwork,
    baseline: &FlowPlan,
    penalties: &ReplanPenalties,
) -> Result<PlannerModel, PlanError> {
    penalties.validate()?;
    build_model(
        net,
        Some(BaselineStatus {
            penalties,
            edge_open: &baseline.edge_used,
            line_open: &baseline.line_open,
        }),
    )
}

fn build_model(
    net: &SupplyNetwork,
    baseline: Option<BaselineStatus<'_>>,
) -> Result<PlannerModel, PlanError> {
    let violations = validate_network(net);
    if !violations.is_empty() {
        return Err(PlanError::Invalid(violations));
    }

    let mut b = ProblemBuilder::new();
    let mut vars = VarMap::default();
    let mut objective = LinExpr::new();
    let mut offset = 0.0;
    let mut demands = BTreeMap::new();

    // Disabled vertices and edges get no variables at all: their flows,
    // production, stock and status are pinned to zero by omission.

    for (key, edge) in &net.edges {
        if !net.edge_usable(key) {
            continue;
        }
        for (product, &unit_cost) in &edge.unit_cost {
            let id = b.add_continuous(
                format!("y[{}->{}:{}]", edge.from, edge.to, product),
                Some(edge.capacity),
            );
            objective.add(id, unit_cost);
            vars.flow
                .insert((edge.from.clone(), edge.to.clone(), product.clone()), id);
        }
        let beta = b.add_binary(format!("beta[{}->{}]", edge.from, edge.to));
        objective.add(beta, edge.fixed_cost);
        vars.edge_open.insert(key.clone(), beta);
    }

    for (id, vertex) in &net.vertices {
        if vertex.disabled {
            continue;
        }
        for (product, &unit_cost) in &vertex.production_cost {
            let var = b.add_continuous(
                format!("p[{id}:{product}]"),
                Some(vertex.production_capacity),
            );
            objective.add(var, unit_cost);
            vars.produced.insert((id.clone(), product.clone()), var);
        }
        if !vertex.production_cost.is_empty() {
            let zeta = b.add_binary(format!("zeta[{id}]"));
            objective.add(zeta, vertex.line_opening_cost);
            vars.line_open.insert(id.clone(), zeta);
        }
        for (product, holding) in &vertex.holding {
            let var = b.add_continuous(format!("I[{id}:{product}]"), holding.capacity);
            objective.add(var, holding.unit_cost);
            vars.inventory.insert((id.clone(), product.clone()), var);
        }
        for (product, demand) in &vertex.demand {
            // Shortfall substitution: minimizing rho_d * (d - x) with
            // 0 <= x <= d is the linear term -rho_d*x plus the constant
            // rho_d*d.
            let var = b.add_continuous(format!("x[{id}:{product}]"), Some(demand.quantity));
            objective.add(var, -demand.shortfall_penalty);
            offset += demand.shortfall_penalty * demand.quantity;
            vars.satisfied.insert((id.clone(), product.clone()), var);
            demands.insert((id.clone(), product.clone()), demand.quantity);
        }
    }

    // Flow balance per vertex and product:
    //   inflow - outflow + production - bom consumption - satisfied demand
    //     - (I - I0) = 0.
    for (vid, vertex) in &net.vertices {
        if vertex.disabled {
            continue;
        }
        for product in net.products.keys() {
            let mut expr = LinExpr::new();
            for e in net.in_edges(vid) {
                if let Some(&var) = vars
                    .flow
                    .get(&(e.from.clone(), e.to.clone(), product.clone()))
                {
                    expr.add(var, 1.0);
                }
            }
            for e in net.out_edges(vid) {
                if let Some(&var) = vars
                    .flow
                    .get(&(e.from.clone(), e.to.clone(), product.clone()))
                {
                    expr.add(var, -1.0);
                }
            }
            if let Some(&var) = vars.produced.get(&(vid.clone(), product.clone())) {
                expr.add(var, 1.0);
            }
            for (made, rate) in net.products_using(product) {
                if let Some(&var) = vars.produced.get(&(vid.clone(), made.clone())) {
                    expr.add(var, -rate);
                }
            }
            if let Some(&var) = vars.satisfied.get(&(vid.clone(), product.clone())) {
                expr.add(var, -1.0);
            }
            if let Some(&var) = vars.inventory.get(&(vid.clone(), product.clone())) {
                expr.add(var, -1.0);
            }
            if expr.is_empty() {
                continue;
            }
            let initial = net.effective_initial_inventory(vid, product);
            b.add_constraint(
                format!("balance[{vid}:{product}]"),
                expr,
                Relation::Eq,
                -initial,
            );
        }
    }

    // Edge capacity gated by the edge-open binary: sum_k y_ijk <= q_ij*beta.
    for (key, &beta) in &vars.edge_open {
        let edge = &net.edges[key];
        let mut expr = LinExpr::new();
        for product in edge.unit_cost.keys() {
            if let Some(&var) = vars
                .flow
                .get(&(key.0.clone(), key.1.clone(), product.clone()))
            {
                expr.add(var, 1.0);
            }
        }
        expr.add(beta, -edge.capacity);
        b.add_constraint(
            format!("edge_cap[{}->{}]", key.0, key.1),
            expr,
            Relation::Le,
            0.0,
        );
    }

    // Production capacity gated by the line binary: sum_k p_ik <= pbar*zeta.
    for (vid, &zeta) in &vars.line_open {
        let vertex = &net.vertices[vid];
        let mut expr = LinExpr::new();
        for product in vertex.production_cost.keys() {
            if let Some(&var) = vars.produced.get(&(vid.clone(), product.clone())) {
                expr.add(var, 1.0);
            }
        }
        expr.add(zeta, -vertex.production_capacity);
        b.add_constraint(format!("line_cap[{vid}]"), expr, Relation::Le, 0.0);
    }

    if let Some(base) = baseline {
        // Status-change substitution: with beta0 constant, minimizing
        // rho * |beta - beta0| reduces to rho*beta (beta0 = 0) or
        // rho*(1 - beta) (beta0 = 1). Entities pinned off by the disruption
        // can only differ by beta0, a pure constant.
        let mut cap_expr = LinExpr::new();
        for key in net.edges.keys() {
            let rho = base.penalties.edge_penalty(key);
            let was_open = base.edge_open.contains(key);
            match vars.edge_open.get(key) {
                Some(&beta) if was_open => {
                    objective.add(beta, -rho);
                    offset += rho;
                }
                Some(&beta) => {
                    objective.add(beta, rho);
                    cap_expr.add(beta, 1.0);
                }
                None if was_open => offset += rho,
                None => {}
            }
        }
        for id in net.vertices.keys() {
            let rho = base.penalties.vertex_penalty(id);
            let was_open = base.line_open.contains(id);
            match vars.line_open.get(id) {
                Some(&zeta) if was_open => {
                    objective.add(zeta, -rho);
                    offset += rho;
                }
                Some(&zeta) => {
                    objective.add(zeta, rho);
                }
                None if was_open => offset += rho,
                None => {}
            }
        }
        if let Some(cap) = base.penalties.added_edge_cap {
            b.add_constraint("added_edge_cap", cap_expr, Relation::Le, cap as f64);
        }
    }

    b.set_objective(objective);
    Ok(PlannerModel {
        problem: b.build()?,
        vars,
        objective_offset: offset,
        demands,
    })
}

impl PlannerModel {
    /// Solves the model and extracts the optimal plan together with its full
    /// objective value (solver objective plus the constant offset).
    pub fn solve(&self, cfg: &SolverConfig) -> Result<(FlowPlan, f64), PlanError> {
        let solution = milp::solve(&self.problem, cfg)?;
        match solution.status {
            SolveStatus::Optimal => {
                let plan = self.extract_plan(&solution.values);
                Ok((plan, solution.objective + self.objective_offset))
            }
            SolveStatus::Infeasible => Err(PlanError::Infeasible),
            SolveStatus::Unbounded => Err(PlanError::Unbounded),
        }
    }

    /// Reads a variable assignment back into a [`FlowPlan`].
    pub fn extract_plan(&self, values: &[f64]) -> FlowPlan {
        let mut plan = FlowPlan::default();
        for (key, &var) in &self.vars.flow {
            plan.flows.insert(key.clone(), values[var]);
        }
        for (key, &var) in &self.vars.edge_open {
            if values[var] > 0.5 {
                plan.edge_used.insert(key.clone());
            }
        }
        for (key, &var) in &self.vars.satisfied {
            plan.satisfied.insert(key.clone(), values[var]);
        }
        for (key, &var) in &self.vars.produced {
            plan.produced.insert(key.clone(), values[var]);
        }
        for (key, &var) in &self.vars.inventory {
            plan.inventory.insert(key.clone(), values[var]);
        }
        for (id, &var) in &self.vars.line_open {
            if values[var] > 0.5 {
                plan.line_open.insert(id.clone());
            }
        }
        for (key, &d) in &self.demands {
            let served = self.vars.satisfied.get(key).map_or(0.0, |&v| values[v]);
            if d - served > QUANTITY_TOL {
                plan.shortfall.insert(key.clone(), d - served);
            }
        }
        plan.prune();
        plan
    }
}

/// Computes the cost-optimal baseline plan for the network.
pub fn plan(net: &SupplyNetwork, cfg: &SolverConfig) -> Result<FlowPlan, PlanError> {
    let model = build_base_model(net)?;
    let (plan, _) = model.solve(cfg)?;
    Ok(plan)
}

/// Re-plans after a disruption, minimizing operating cost plus
/// status-change penalties, and reports how the result differs from the
/// baseline.
pub fn replan(
    net: &SupplyNetwork,
    baseline: &FlowPlan,
    penalties: &ReplanPenalties,
    cfg: &SolverConfig,
) -> Result<(FlowPlan, PlanDelta), PlanError> {
    let model = build_replan_model(net, baseline, penalties)?;
    let (new_plan, _) = model.solve(cfg)?;
    let delta = plan_delta(baseline, &new_plan, net)?;
    Ok((new_plan, delta))
}

/// Communication effort of a centralized replan: one message to trigger the
/// re-run, a request and a response for every vertex, and one notification
/// per in-service vertex whose incident flows or production changed.
pub fn centralized_comm_effort(net: &SupplyNetwork, delta: &PlanDelta) -> usize {
    let mut changed: BTreeSet<&VertexId> = BTreeSet::new();
    for key in &delta.flow_changed_edges {
        changed.insert(&key.0);
        changed.insert(&key.1);
    }
    for (key, &flipped) in &delta.edge_status_changed {
        if flipped && net.edge_usable(key) {
            changed.insert(&key.0);
            changed.insert(&key.1);
        }
    }
    for id in &delta.production_changed {
        changed.insert(id);
    }
    changed.retain(|id| net.vertices.get(id).is_some_and(|v| !v.disabled));
    1 + 2 * net.vertices.len() + changed.len()
}
