//! Model-based agent layer: one agent per network entity (vertices and
//! transport edges alike), each holding a three-part knowledge base — a
//! capability model (what it can do), an environment model (whom it knows)
//! and a state model (its inventory dynamics). Agents never read the global
//! network after initialization; everything they act on lives in their own
//! knowledge base, which the recovery protocol keeps current through
//! explicit updates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::model::network::{Demand, EdgeKey, EntityKind, ProductId, SupplyNetwork, VertexId};
use crate::model::plan::{max_balance_residual, FlowPlan, QUANTITY_TOL};

/// Identity of an agent: a vertex entity or the transport agent bound to a
/// directed edge.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum AgentId {
    Vertex(VertexId),
    Transport(EdgeKey),
}

impl AgentId {
    pub fn vertex(id: impl Into<String>) -> Self {
        AgentId::Vertex(VertexId::new(id))
    }

    pub fn transport(from: impl Into<String>, to: impl Into<String>) -> Self {
        AgentId::Transport((VertexId::new(from), VertexId::new(to)))
    }

    pub fn as_vertex(&self) -> Option<&VertexId> {
        match self {
            AgentId::Vertex(v) => Some(v),
            AgentId::Transport(_) => None,
        }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentId::Vertex(v) => write!(f, "{v}"),
            AgentId::Transport((a, b)) => write!(f, "{a}->{b}"),
        }
    }
}

/// One capability an agent may hold: producing, stocking or transporting a
/// product.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Capability {
    Production(ProductId),
    Inventory(ProductId),
    Transport(ProductId),
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Capability::Production(k) => write!(f, "produce {k}"),
            Capability::Inventory(k) => write!(f, "hold {k}"),
            Capability::Transport(k) => write!(f, "transport {k}"),
        }
    }
}

/// What the agent can do, with the cost/capacity mappings attached to each
/// capability. The capability sets are the domains of the mappings, so they
/// can never drift apart.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CapabilityModel {
    /// Per-unit production cost, keyed by producible product.
    pub production_cost: BTreeMap<ProductId, f64>,
    /// Component requirements per unit of each producible product.
    pub bom: BTreeMap<ProductId, BTreeMap<ProductId, f64>>,
    /// Shared production capacity across products.
    pub production_capacity: f64,
    /// Per-unit holding cost, keyed by holdable product.
    pub holding_cost: BTreeMap<ProductId, f64>,
    /// Storage limit per holdable product (`None` = unlimited).
    pub inventory_capacity: BTreeMap<ProductId, Option<f64>>,
    /// Per-unit transport cost, keyed by carriable product (edge agents).
    pub transport_cost: BTreeMap<ProductId, f64>,
    /// Shared transport capacity across products (edge agents).
    pub transport_capacity: f64,
    /// Fixed cost of putting the lane into use (edge agents).
    pub transport_fixed_cost: f64,
}

impl CapabilityModel {
    pub fn produces(&self) -> impl Iterator<Item = &ProductId> {
        self.production_cost.keys()
    }

    pub fn holds(&self) -> impl Iterator<Item = &ProductId> {
        self.holding_cost.keys()
    }

    pub fn transports(&self) -> impl Iterator<Item = &ProductId> {
        self.transport_cost.keys()
    }

    pub fn has(&self, capability: &Capability) -> bool {
        match capability {
            Capability::Production(k) => self.production_cost.contains_key(k),
            Capability::Inventory(k) => self.holding_cost.contains_key(k),
            Capability::Transport(k) => self.transport_cost.contains_key(k),
        }
    }

    /// Every capability this agent holds, in deterministic order.
    pub fn all(&self) -> Vec<Capability> {
        self.produces()
            .cloned()
            .map(Capability::Production)
            .chain(self.holds().cloned().map(Capability::Inventory))
            .chain(self.transports().cloned().map(Capability::Transport))
            .collect()
    }

    pub fn bom_requirements(&self, product: &ProductId) -> Option<&BTreeMap<ProductId, f64>> {
        self.bom.get(product)
    }
}

/// Contract terms of one incident transport lane, as known to a vertex
/// agent: total capacity, the cost of putting the lane into use, and the
/// per-unit rates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LaneInfo {
    pub capacity: f64,
    pub fixed_cost: f64,
    pub unit_cost: BTreeMap<ProductId, f64>,
}

/// Whom the agent knows: upstream/downstream partners per product, the
/// transport agents serving it, same-capability peers, and the product
/// flows currently agreed with each partner.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnvironmentModel {
    /// `U_i`: vertices that can send each product here.
    pub upstream: BTreeMap<ProductId, BTreeSet<VertexId>>,
    /// `D_i`: vertices this agent can send each product to.
    pub downstream: BTreeMap<ProductId, BTreeSet<VertexId>>,
    /// `T_i`: transport agents on incident lanes, per carriable product.
    pub transporters: BTreeMap<ProductId, BTreeSet<EdgeKey>>,
    /// `S_i`: other agents sharing each of this agent's capabilities.
    pub peers: BTreeMap<Capability, BTreeSet<AgentId>>,
    /// Contract terms of incident lanes (vertex agents).
    pub lanes: BTreeMap<EdgeKey, LaneInfo>,
    /// Agreed inbound units per (upstream vertex, product).
    pub inbound: BTreeMap<(VertexId, ProductId), f64>,
    /// Agreed outbound units per (downstream vertex, product).
    pub outbound: BTreeMap<(VertexId, ProductId), f64>,
}

impl EnvironmentModel {
    /// Total agreed outbound units of a product across downstream partners.
    pub fn outbound_total(&self, product: &ProductId) -> f64 {
        self.outbound
            .iter()
            .filter(|((_, k), _)| k == product)
            .map(|(_, &q)| q)
            .sum()
    }

    /// Total agreed inbound units of a product across upstream partners.
    pub fn inbound_total(&self, product: &ProductId) -> f64 {
        self.inbound
            .iter()
            .filter(|((_, k), _)| k == product)
            .map(|(_, &q)| q)
            .sum()
    }

    /// All units currently agreed on one incident lane, in either direction.
    pub fn lane_load(&self, me: &VertexId, key: &EdgeKey) -> f64 {
        if &key.0 == me {
            self.outbound
                .iter()
                .filter(|((to, _), _)| to == &key.1)
                .map(|(_, &q)| q)
                .sum()
        } else {
            self.inbound
                .iter()
                .filter(|((from, _), _)| from == &key.0)
                .map(|(_, &q)| q)
                .sum()
        }
    }

    /// Capacity left on a known incident lane after current agreements.
    pub fn lane_residual(&self, me: &VertexId, key: &EdgeKey) -> f64 {
        let Some(info) = self.lanes.get(key) else {
            return 0.0;
        };
        (info.capacity - self.lane_load(me, key)).max(0.0)
    }
}

/// The agent's dynamic state: stock on hand, current per-product inflow and
/// outflow, and its production commitment for the period.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StateModel {
    /// `I_i`: units on hand per product.
    pub inventory: BTreeMap<ProductId, f64>,
    /// `u_i`: inbound units per product.
    pub inflow: BTreeMap<ProductId, f64>,
    /// `z_i`: outbound units per product.
    pub outflow: BTreeMap<ProductId, f64>,
    /// `g_i`: committed production per product; drives the production term
    /// of the inventory update.
    pub production: BTreeMap<ProductId, f64>,
    /// Demand this agent must satisfy (customer agents).
    pub demand: BTreeMap<ProductId, Demand>,
}

impl StateModel {
    pub fn inventory_of(&self, product: &ProductId) -> f64 {
        self.inventory.get(product).copied().unwrap_or(0.0)
    }

    pub fn production_total(&self) -> f64 {
        self.production.values().sum()
    }
}

/// What kind of physical entity the agent stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentKind {
    Vertex(EntityKind),
    Transport,
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentKind::Vertex(k) => write!(f, "{k}"),
            AgentKind::Transport => write!(f, "transport lane"),
        }
    }
}

/// A single agent: identity, kind, the three-part knowledge base and the
/// local communication view.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: AgentId,
    pub kind: AgentKind,
    pub capability: CapabilityModel,
    pub environment: EnvironmentModel,
    pub state: StateModel,
    /// `N_i`: every agent this one can address directly.
    pub local_view: BTreeSet<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("plan is not flow-balanced (max residual {residual})")]
    InfeasiblePlan { residual: f64 },
    #[error("agent {agent} does not have capability \"{capability}\"")]
    UnknownCapability {
        agent: AgentId,
        capability: Capability,
    },
    #[error("agent {0} does not exist")]
    UnknownAgent(AgentId),
    #[error("agent {agent}: {product} stock would reach {quantity}, above capacity {capacity}")]
    CapacityViolation {
        agent: AgentId,
        product: ProductId,
        quantity: f64,
        capacity: f64,
    },
    #[error("agent {agent}: {product} stock would fall to {quantity}")]
    NegativeInventory {
        agent: AgentId,
        product: ProductId,
        quantity: f64,
    },
    #[error("agent {agent}: inconsistent knowledge update: {reason}")]
    InconsistentChange { agent: AgentId, reason: String },
}

/// A single change to one agent's knowledge base. Network-level operations
/// on [`AgentNetwork`] apply matching changes to both sides of a relation.
#[derive(Debug, Clone, PartialEq)]
pub enum KnowledgeChange {
    /// Update the unit production cost of an already-producible product.
    SetProductionCost { product: ProductId, cost: f64 },
    /// Grant a capability with its cost mapping (and storage limit for
    /// inventory capabilities).
    AddCapability {
        capability: Capability,
        cost: f64,
        capacity: Option<f64>,
    },
    /// Revoke a capability and its mappings.
    RemoveCapability(Capability),
    /// Purge another agent from all environment sets and flow records
    /// (used when an entity leaves the network).
    ForgetAgent(AgentId),
    /// Record agreed inbound units from an upstream vertex; zero removes
    /// the record but keeps the relation.
    SetInboundFlow {
        from: VertexId,
        product: ProductId,
        qty: f64,
    },
    /// Record agreed outbound units to a downstream vertex.
    SetOutboundFlow {
        to: VertexId,
        product: ProductId,
        qty: f64,
    },
    /// Set the production commitment for a producible product.
    SetProduction { product: ProductId, qty: f64 },
    /// Update the demand this agent must satisfy (customer agents only).
    SetDemand { product: ProductId, demand: Demand },
    /// Learn of another agent sharing one of this agent's capabilities.
    AddPeer {
        capability: Capability,
        agent: AgentId,
    },
}

impl Agent {
    /// `S_i(capability)`: the other agents this one knows to share the
    /// capability. Errors if the agent does not hold it itself.
    pub fn same_capability_peers(
        &self,
        capability: &Capability,
    ) -> Result<BTreeSet<AgentId>, AgentError> {
        if !self.capability.has(capability) {
            return Err(AgentError::UnknownCapability {
                agent: self.id.clone(),
                capability: capability.clone(),
            });
        }
        Ok(self
            .environment
            .peers
            .get(capability)
            .cloned()
            .unwrap_or_default())
    }

    /// Production capacity not yet committed.
    pub fn residual_production_capacity(&self) -> f64 {
        (self.capability.production_capacity - self.state.production_total()).max(0.0)
    }

    /// Where the inventory lands at the end of the period under the current
    /// flow and production commitments — the state update without applying
    /// it. Negative projections are clamped at zero.
    pub fn projected_inventory(&self, product: &ProductId) -> f64 {
        let mut level = self.state.inventory.get(product).copied().unwrap_or(0.0);
        level += self.state.inflow.get(product).copied().unwrap_or(0.0);
        level -= self.state.outflow.get(product).copied().unwrap_or(0.0);
        level += self.state.production.get(product).copied().unwrap_or(0.0);
        for (made, &g) in &self.state.production {
            if let Some(requirements) = self.capability.bom.get(made) {
                if let Some(&rate) = requirements.get(product) {
                    level -= rate * g;
                }
            }
        }
        level.max(0.0)
    }

    /// Transport capacity not yet carrying flow (edge agents).
    pub fn residual_transport_capacity(&self) -> f64 {
        let used: f64 = self.state.inflow.values().sum();
        (self.capability.transport_capacity - used).max(0.0)
    }

    /// Advances the inventory one period: `I' = I + u − z + h(I, u)`, where
    /// the production function `h` adds the committed production and
    /// subtracts its bill-of-materials draw. The caller is responsible for
    /// keeping `u`/`z` within the transport capacities of the lanes that
    /// carry them.
    pub fn step_state(
        &mut self,
        inflow: &BTreeMap<ProductId, f64>,
        outflow: &BTreeMap<ProductId, f64>,
    ) -> Result<&BTreeMap<ProductId, f64>, AgentError> {
        let mut next = self.state.inventory.clone();
        let add = |m: &mut BTreeMap<ProductId, f64>, k: &ProductId, dv: f64| {
            *m.entry(k.clone()).or_insert(0.0) += dv;
        };
        for (k, &q) in inflow {
            add(&mut next, k, q);
        }
        for (k, &q) in outflow {
            add(&mut next, k, -q);
        }
        for (product, &g) in &self.state.production {
            add(&mut next, product, g);
            if let Some(requirements) = self.capability.bom.get(product) {
                for (component, &rate) in requirements {
                    add(&mut next, component, -rate * g);
                }
            }
        }
        for (product, &quantity) in &next {
            if quantity < -QUANTITY_TOL {
                return Err(AgentError::NegativeInventory {
                    agent: self.id.clone(),
                    product: product.clone(),
                    quantity,
                });
            }
            // A product the agent cannot hold must pass straight through.
            let capacity = match self.capability.inventory_capacity.get(product) {
                Some(limit) => limit.unwrap_or(f64::INFINITY),
                None => 0.0,
            };
            if quantity > capacity + QUANTITY_TOL {
                return Err(AgentError::CapacityViolation {
                    agent: self.id.clone(),
                    product: product.clone(),
                    quantity,
                    capacity,
                });
            }
        }
        next.retain(|_, q| q.abs() > QUANTITY_TOL);
        self.state.inventory = next;
        self.state.inflow = inflow.clone();
        self.state.outflow = outflow.clone();
        Ok(&self.state.inventory)
    }

    /// Applies a single knowledge update, rejecting changes that would make
    /// the knowledge base inconsistent.
    pub fn update_knowledge(&mut self, change: KnowledgeChange) -> Result<(), AgentError> {
        let inconsistent = |agent: &AgentId, reason: String| AgentError::InconsistentChange {
            agent: agent.clone(),
            reason,
        };
        match change {
            KnowledgeChange::SetProductionCost { product, cost } => {
                match self.capability.production_cost.get_mut(&product) {
                    Some(entry) => *entry = cost,
                    None => {
                        return Err(inconsistent(
                            &self.id,
                            format!("cannot price production of {product}: not producible"),
                        ))
                    }
                }
            }
            KnowledgeChange::AddCapability {
                capability,
                cost,
                capacity,
            } => match capability {
                Capability::Production(k) => {
                    self.capability.production_cost.insert(k.clone(), cost);
                    self.capability.bom.entry(k).or_default();
                }
                Capability::Inventory(k) => {
                    self.capability.holding_cost.insert(k.clone(), cost);
                    self.capability.inventory_capacity.insert(k, capacity);
                }
                Capability::Transport(k) => {
                    self.capability.transport_cost.insert(k, cost);
                }
            },
            KnowledgeChange::RemoveCapability(capability) => {
                if !self.capability.has(&capability) {
                    return Err(inconsistent(
                        &self.id,
                        format!("cannot remove capability \"{capability}\": not held"),
                    ));
                }
                match &capability {
                    Capability::Production(k) => {
                        self.capability.production_cost.remove(k);
                        self.capability.bom.remove(k);
                        self.state.production.remove(k);
                    }
                    Capability::Inventory(k) => {
                        self.capability.holding_cost.remove(k);
                        self.capability.inventory_capacity.remove(k);
                    }
                    Capability::Transport(k) => {
                        self.capability.transport_cost.remove(k);
                    }
                }
                self.environment.peers.remove(&capability);
            }
            KnowledgeChange::ForgetAgent(other) => {
                if other == self.id {
                    return Err(inconsistent(
                        &self.id,
                        "an agent cannot forget itself".into(),
                    ));
                }
                if let AgentId::Vertex(v) = &other {
                    for set in self.environment.upstream.values_mut() {
                        set.remove(v);
                    }
                    for set in self.environment.downstream.values_mut() {
                        set.remove(v);
                    }
                    self.environment.inbound.retain(|(from, _), _| from != v);
                    self.environment.outbound.retain(|(to, _), _| to != v);
                }
                if let AgentId::Transport(key) = &other {
                    for set in self.environment.transporters.values_mut() {
                        set.remove(key);
                    }
                    self.environment.lanes.remove(key);
                }
                for set in self.environment.peers.values_mut() {
                    set.remove(&other);
                }
                self.local_view.remove(&other);
            }
            KnowledgeChange::SetInboundFlow { from, product, qty } => {
                self.environment
                    .upstream
                    .entry(product.clone())
                    .or_default()
                    .insert(from.clone());
                if qty > QUANTITY_TOL {
                    self.environment.inbound.insert((from, product), qty);
                } else {
                    self.environment.inbound.remove(&(from, product));
                }
            }
            KnowledgeChange::SetOutboundFlow { to, product, qty } => {
                self.environment
                    .downstream
                    .entry(product.clone())
                    .or_default()
                    .insert(to.clone());
                if qty > QUANTITY_TOL {
                    self.environment.outbound.insert((to, product), qty);
                } else {
                    self.environment.outbound.remove(&(to, product));
                }
            }
            KnowledgeChange::SetProduction { product, qty } => {
                if !self.capability.production_cost.contains_key(&product) {
                    return Err(inconsistent(
                        &self.id,
                        format!("cannot commit production of {product}: not producible"),
                    ));
                }
                if qty > QUANTITY_TOL {
                    self.state.production.insert(product, qty);
                } else {
                    self.state.production.remove(&product);
                }
            }
            KnowledgeChange::SetDemand { product, demand } => {
                if !matches!(self.kind, AgentKind::Vertex(EntityKind::Customer)) {
                    return Err(inconsistent(
                        &self.id,
                        format!("demand for {product} recorded on a non-customer"),
                    ));
                }
                if demand.quantity > QUANTITY_TOL {
                    self.state.demand.insert(product, demand);
                } else {
                    self.state.demand.remove(&product);
                }
            }
            KnowledgeChange::AddPeer { capability, agent } => {
                if agent == self.id {
                    return Err(inconsistent(
                        &self.id,
                        "an agent is not its own peer".into(),
                    ));
                }
                if !self.capability.has(&capability) {
                    return Err(inconsistent(
                        &self.id,
                        format!("peer recorded under capability \"{capability}\" not held"),
                    ));
                }
                self.environment
                    .peers
                    .entry(capability)
                    .or_default()
                    .insert(agent.clone());
                self.local_view.insert(agent);
            }
        }
        Ok(())
    }

    /// Structured text dump of the knowledge base, for inspection.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        let mut line = |s: String| {
            out.push_str(&s);
            out.push('\n');
        };
        line(format!("agent {} ({})", self.id, self.kind));
        line("  capabilities:".into());
        for (k, c) in &self.capability.production_cost {
            let parts: Vec<String> = self
                .capability
                .bom
                .get(k)
                .into_iter()
                .flatten()
                .map(|(comp, r)| format!("{r} {comp}"))
                .collect();
            let recipe = if parts.is_empty() {
                String::new()
            } else {
                format!(" from {}", parts.join(" + "))
            };
            line(format!(
                "    produce {k} @ {c}/unit{recipe} (shared capacity {})",
                self.capability.production_capacity
            ));
        }
        for (k, c) in &self.capability.holding_cost {
            let cap = match self.capability.inventory_capacity.get(k) {
                Some(Some(limit)) => format!("{limit}"),
                _ => "unlimited".into(),
            };
            line(format!("    hold {k} @ {c}/unit (capacity {cap})"));
        }
        for (k, c) in &self.capability.transport_cost {
            line(format!(
                "    transport {k} @ {c}/unit (shared capacity {}, fixed {})",
                self.capability.transport_capacity, self.capability.transport_fixed_cost
            ));
        }
        line("  environment:".into());
        for (k, set) in &self.environment.upstream {
            let ids: Vec<String> = set.iter().map(|v| v.to_string()).collect();
            line(format!("    upstream[{k}] = {{{}}}", ids.join(", ")));
        }
        for (k, set) in &self.environment.downstream {
            let ids: Vec<String> = set.iter().map(|v| v.to_string()).collect();
            line(format!("    downstream[{k}] = {{{}}}", ids.join(", ")));
        }
        for (cap, set) in &self.environment.peers {
            let ids: Vec<String> = set.iter().map(|a| a.to_string()).collect();
            line(format!("    peers[{cap}] = {{{}}}", ids.join(", ")));
        }
        for ((from, k), q) in &self.environment.inbound {
            line(format!("    inbound {q} {k} from {from}"));
        }
        for ((to, k), q) in &self.environment.outbound {
            line(format!("    outbound {q} {k} to {to}"));
        }
        line("  state:".into());
        for (k, q) in &self.state.inventory {
            line(format!("    stock {q} {k}"));
        }
        for (k, q) in &self.state.production {
            line(format!("    producing {q} {k}"));
        }
        out
    }
}

/// The collection of agents plus network-level operations that keep the
/// interlocking knowledge bases mutually consistent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AgentNetwork {
    pub agents: BTreeMap<AgentId, Agent>,
}

impl AgentNetwork {
    pub fn agent(&self, id: &AgentId) -> Result<&Agent, AgentError> {
        self.agents
            .get(id)
            .ok_or_else(|| AgentError::UnknownAgent(id.clone()))
    }

    pub fn agent_mut(&mut self, id: &AgentId) -> Result<&mut Agent, AgentError> {
        self.agents
            .get_mut(id)
            .ok_or_else(|| AgentError::UnknownAgent(id.clone()))
    }

    pub fn vertex_agent(&self, id: &VertexId) -> Result<&Agent, AgentError> {
        self.agent(&AgentId::Vertex(id.clone()))
    }

    /// Records an agreed flow on a lane, updating the sender's outbound
    /// record, the receiver's inbound record and the lane agent's
    /// throughput, all in lockstep.
    pub fn record_flow(
        &mut self,
        from: &VertexId,
        to: &VertexId,
        product: &ProductId,
        qty: f64,
    ) -> Result<(), AgentError> {
        let lane = AgentId::Transport((from.clone(), to.clone()));
        {
            let lane_agent = self.agent(&lane)?;
            if !lane_agent.capability.transport_cost.contains_key(product) {
                return Err(AgentError::UnknownCapability {
                    agent: lane.clone(),
                    capability: Capability::Transport(product.clone()),
                });
            }
        }
        self.agent_mut(&AgentId::Vertex(from.clone()))?
            .update_knowledge(KnowledgeChange::SetOutboundFlow {
                to: to.clone(),
                product: product.clone(),
                qty,
            })?;
        self.agent_mut(&AgentId::Vertex(to.clone()))?
            .update_knowledge(KnowledgeChange::SetInboundFlow {
                from: from.clone(),
                product: product.clone(),
                qty,
            })?;
        let lane_agent = self.agent_mut(&lane)?;
        if qty > QUANTITY_TOL {
            lane_agent.state.inflow.insert(product.clone(), qty);
            lane_agent.state.outflow.insert(product.clone(), qty);
        } else {
            lane_agent.state.inflow.remove(product);
            lane_agent.state.outflow.remove(product);
        }
        Ok(())
    }

    /// Removes an agent from the network and from every other agent's
    /// knowledge. Removing a vertex also removes its incident lanes.
    pub fn remove_from_service(&mut self, id: &AgentId) -> Result<(), AgentError> {
        if !self.agents.contains_key(id) {
            return Err(AgentError::UnknownAgent(id.clone()));
        }
        let mut doomed = vec![id.clone()];
        if let AgentId::Vertex(v) = id {
            doomed.extend(
                self.agents
                    .keys()
                    .filter(|a| matches!(a, AgentId::Transport((f, t)) if f == v || t == v))
                    .cloned(),
            );
        }
        for gone in &doomed {
            self.agents.remove(gone);
        }
        for agent in self.agents.values_mut() {
            for gone in &doomed {
                // ForgetAgent only errors on self-removal, which cannot
                // happen here.
                agent
                    .update_knowledge(KnowledgeChange::ForgetAgent(gone.clone()))
                    .expect("forgetting a removed agent is always consistent");
            }
        }
        Ok(())
    }

    /// Checks the cross-agent invariants: referenced agents exist, peer
    /// sets exclude self, and the upstream/downstream relations are
    /// mutual. Returns human-readable violation descriptions.
    pub fn verify_consistency(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (id, agent) in &self.agents {
            for other in &agent.local_view {
                if !self.agents.contains_key(other) {
                    out.push(format!("{id}: local view references missing agent {other}"));
                }
            }
            for (cap, set) in &agent.environment.peers {
                if set.contains(id) {
                    out.push(format!("{id}: peer set for \"{cap}\" contains itself"));
                }
                for peer in set {
                    match self.agents.get(peer) {
                        None => out.push(format!("{id}: peer {peer} does not exist")),
                        Some(p) if !p.capability.has(cap) => out.push(format!(
                            "{id}: peer {peer} does not actually hold \"{cap}\""
                        )),
                        Some(_) => {}
                    }
                }
            }
            for (k, ups) in &agent.environment.upstream {
                for up in ups {
                    let Some(upstream) = self.agents.get(&AgentId::Vertex(up.clone())) else {
                        out.push(format!("{id}: upstream {up} does not exist"));
                        continue;
                    };
                    let Some(me) = id.as_vertex() else { continue };
                    let mutual = upstream
                        .environment
                        .downstream
                        .get(k)
                        .is_some_and(|set| set.contains(me));
                    if !mutual {
                        out.push(format!(
                            "{id}: {up} is upstream for {k} but does not list {me} downstream"
                        ));
                    }
                }
            }
            for (k, downs) in &agent.environment.downstream {
                for down in downs {
                    let Some(downstream) = self.agents.get(&AgentId::Vertex(down.clone())) else {
                        out.push(format!("{id}: downstream {down} does not exist"));
                        continue;
                    };
                    let Some(me) = id.as_vertex() else { continue };
                    let mutual = downstream
                        .environment
                        .upstream
                        .get(k)
                        .is_some_and(|set| set.contains(me));
                    if !mutual {
                        out.push(format!(
                            "{id}: {down} is downstream for {k} but does not list {me} upstream"
                        ));
                    }
                }
            }
            for (from, k) in agent.environment.inbound.keys() {
                let known = agent
                    .environment
                    .upstream
                    .get(k)
                    .is_some_and(|set| set.contains(from));
                if !known {
                    out.push(format!(
                        "{id}: inbound flow of {k} from {from} without an upstream relation"
                    ));
                }
            }
            for (to, k) in agent.environment.outbound.keys() {
                let known = agent
                    .environment
                    .downstream
                    .get(k)
                    .is_some_and(|set| set.contains(to));
                if !known {
                    out.push(format!(
                        "{id}: outbound flow of {k} to {to} without a downstream relation"
                    ));
                }
            }
            if let AgentId::Vertex(me) = id {
                for key in agent.environment.lanes.keys() {
                    if &key.0 != me && &key.1 != me {
                        out.push(format!(
                            "{id}: knows lane {}->{} it is not an endpoint of",
                            key.0, key.1
                        ));
                    }
                }
            }
        }
        out
    }
}

/// Builds the agent collection from a network and its current plan: one
/// agent per in-service vertex and lane, capability models mirroring the
/// network parameters, environments derived from the edges plus the plan's
/// active flows, and states initialized from initial stock and the plan.
pub fn init_agents(net: &SupplyNetwork, plan: &FlowPlan) -> Result<AgentNetwork, AgentError> {
    let residual = max_balance_residual(net, plan);
    if residual > 1e-6 {
        return Err(AgentError::InfeasiblePlan { residual });
    }

    let mut agents = BTreeMap::new();

    for (vid, vertex) in &net.vertices {
        if vertex.disabled {
            continue;
        }
        let mut capability = CapabilityModel {
            production_cost: vertex.production_cost.clone(),
            production_capacity: vertex.production_capacity,
            ..CapabilityModel::default()
        };
        for product in vertex.production_cost.keys() {
            let requirements: BTreeMap<ProductId, f64> = net
                .components_of(product)
                .map(|(component, rate)| (component.clone(), rate))
                .collect();
            capability.bom.insert(product.clone(), requirements);
        }
        for (product, holding) in &vertex.holding {
            capability
                .holding_cost
                .insert(product.clone(), holding.unit_cost);
            capability
                .inventory_capacity
                .insert(product.clone(), holding.capacity);
        }

        let mut environment = EnvironmentModel::default();
        for edge in net.in_edges(vid).filter(|e| net.edge_usable(&e.key())) {
            for product in edge.carriable() {
                environment
                    .upstream
                    .entry(product.clone())
                    .or_default()
                    .insert(edge.from.clone());
                environment
                    .transporters
                    .entry(product.clone())
                    .or_default()
                    .insert(edge.key());
            }
            environment.lanes.insert(
                edge.key(),
                LaneInfo {
                    capacity: edge.capacity,
                    fixed_cost: edge.fixed_cost,
                    unit_cost: edge.unit_cost.clone(),
                },
            );
        }
        for edge in net.out_edges(vid).filter(|e| net.edge_usable(&e.key())) {
            for product in edge.carriable() {
                environment
                    .downstream
                    .entry(product.clone())
                    .or_default()
                    .insert(edge.to.clone());
                environment
                    .transporters
                    .entry(product.clone())
                    .or_default()
                    .insert(edge.key());
            }
            environment.lanes.insert(
                edge.key(),
                LaneInfo {
                    capacity: edge.capacity,
                    fixed_cost: edge.fixed_cost,
                    unit_cost: edge.unit_cost.clone(),
                },
            );
        }

        let mut state = StateModel::default();
        for (product, holding) in &vertex.holding {
            if holding.initial > QUANTITY_TOL {
                state.inventory.insert(product.clone(), holding.initial);
            }
        }
        for (product, demand) in net.effective_demand(vid) {
            state.demand.insert(product.clone(), *demand);
        }

        agents.insert(
            AgentId::Vertex(vid.clone()),
            Agent {
                id: AgentId::Vertex(vid.clone()),
                kind: AgentKind::Vertex(vertex.kind),
                capability,
                environment,
                state,
                local_view: BTreeSet::new(),
            },
        );
    }

    for (key, edge) in &net.edges {
        if !net.edge_usable(key) {
            continue;
        }
        let capability = CapabilityModel {
            transport_cost: edge.unit_cost.clone(),
            transport_capacity: edge.capacity,
            transport_fixed_cost: edge.fixed_cost,
            ..CapabilityModel::default()
        };
        let mut environment = EnvironmentModel::default();
        for product in edge.carriable() {
            environment
                .upstream
                .entry(product.clone())
                .or_default()
                .insert(edge.from.clone());
            environment
                .downstream
                .entry(product.clone())
                .or_default()
                .insert(edge.to.clone());
        }
        agents.insert(
            AgentId::Transport(key.clone()),
            Agent {
                id: AgentId::Transport(key.clone()),
                kind: AgentKind::Transport,
                capability,
                environment,
                state: StateModel::default(),
                local_view: BTreeSet::new(),
            },
        );
    }

    for agent in agents.values_mut() {
        refresh_flow_knowledge(agent, net, plan);
    }

    // Peer sets: group agents by shared capability, excluding self.
    let mut by_capability: BTreeMap<Capability, BTreeSet<AgentId>> = BTreeMap::new();
    for (id, agent) in &agents {
        for cap in agent.capability.all() {
            by_capability.entry(cap).or_default().insert(id.clone());
        }
    }
    let ids: Vec<AgentId> = agents.keys().cloned().collect();
    for id in &ids {
        let agent = agents.get_mut(id).unwrap();
        for cap in agent.capability.all() {
            let mut peers = by_capability.get(&cap).cloned().unwrap_or_default();
            peers.remove(id);
            agent.environment.peers.insert(cap, peers);
        }
    }

    // Local views: everyone the environment references.
    for id in &ids {
        let agent = agents.get_mut(id).unwrap();
        let mut view = BTreeSet::new();
        for set in agent.environment.upstream.values() {
            view.extend(set.iter().cloned().map(AgentId::Vertex));
        }
        for set in agent.environment.downstream.values() {
            view.extend(set.iter().cloned().map(AgentId::Vertex));
        }
        for set in agent.environment.transporters.values() {
            view.extend(set.iter().cloned().map(AgentId::Transport));
        }
        for set in agent.environment.peers.values() {
            view.extend(set.iter().cloned());
        }
        view.remove(id);
        agent.local_view = view;
    }

    Ok(AgentNetwork { agents })
}

/// Rebuilds the plan-derived part of one agent's knowledge — agreed flows,
/// state inflow/outflow and production commitments — from the current plan,
/// leaving the static relations (partners, peers, lanes) alone. "The state
/// model is updated based on the new flow balance of the agent."
pub fn refresh_flow_knowledge(agent: &mut Agent, net: &SupplyNetwork, plan: &FlowPlan) {
    agent.state.inflow.clear();
    agent.state.outflow.clear();
    agent.state.production.clear();
    match agent.id.clone() {
        AgentId::Vertex(v) => {
            agent.environment.inbound.clear();
            agent.environment.outbound.clear();
            for edge in net.in_edges(&v).filter(|e| net.edge_usable(&e.key())) {
                for product in edge.carriable() {
                    let q = plan.flow(&edge.from, &edge.to, product);
                    if q > QUANTITY_TOL {
                        agent
                            .environment
                            .inbound
                            .insert((edge.from.clone(), product.clone()), q);
                        *agent.state.inflow.entry(product.clone()).or_insert(0.0) += q;
                    }
                }
            }
            for edge in net.out_edges(&v).filter(|e| net.edge_usable(&e.key())) {
                for product in edge.carriable() {
                    let q = plan.flow(&edge.from, &edge.to, product);
                    if q > QUANTITY_TOL {
                        agent
                            .environment
                            .outbound
                            .insert((edge.to.clone(), product.clone()), q);
                        *agent.state.outflow.entry(product.clone()).or_insert(0.0) += q;
                    }
                }
            }
            for product in net.products.keys() {
                // Customers consume what they absorb; modeled as outbound so
                // the state update nets to their inventory change.
                let consumed = plan.satisfied_at(&v, product);
                if consumed > QUANTITY_TOL {
                    *agent.state.outflow.entry(product.clone()).or_insert(0.0) += consumed;
                }
                let g = plan.produced_at(&v, product);
                if g > QUANTITY_TOL {
                    agent.state.production.insert(product.clone(), g);
                }
            }
        }
        AgentId::Transport((from, to)) => {
            for (product, q) in plan.edge_flows(&from, &to) {
                if q > QUANTITY_TOL {
                    agent.state.inflow.insert(product.clone(), q);
                    agent.state.outflow.insert(product, q);
                }
            }
        }
    }
}

/// The U set relevant to a product, used by the protocol to address
/// requests upstream.
pub fn upstream_vertices<'a>(agent: &'a Agent, product: &ProductId) -> BTreeSet<&'a VertexId> {
    agent
        .environment
        .upstream
        .get(product)
        .map(|s| s.iter().collect())
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::network::{Demand, Edge, Holding, Product, Vertex};
    use crate::planner;
    use milp::SolverConfig;

    fn pid(s: &str) -> ProductId {
        ProductId::from(s)
    }
    fn vid(s: &str) -> VertexId {
        VertexId::from(s)
    }

    /// S1, S2 supply `part`; O assembles `widget`; D distributes; C consumes.
    fn fixture() -> (SupplyNetwork, FlowPlan) {
        let mut net = SupplyNetwork::default();
        for p in ["part", "widget"] {
            net.products.insert(
                pid(p),
                Product {
                    id: pid(p),
                    name: p.to_string(),
                },
            );
        }
        net.bom.insert((pid("part"), pid("widget")), 1.0);

        for (id, cost) in [("S1", 1.0), ("S2", 2.0)] {
            let mut s = Vertex::new(id, EntityKind::TierSupplier);
            s.production_capacity = 20.0;
            s.production_cost.insert(pid("part"), cost);
            s.line_opening_cost = 1.0;
            net.vertices.insert(vid(id), s);
        }
        let mut o = Vertex::new("O", EntityKind::Oem);
        o.production_capacity = 20.0;
        o.production_cost.insert(pid("widget"), 2.0);
        o.line_opening_cost = 2.0;
        o.holding.insert(
            pid("part"),
            Holding {
                initial: 2.0,
                unit_cost: 0.1,
                capacity: Some(15.0),
            },
        );
        net.vertices.insert(vid("O"), o);
        let mut d = Vertex::new("D", EntityKind::Distributor);
        d.holding.insert(
            pid("widget"),
            Holding {
                initial: 0.0,
                unit_cost: 0.2,
                capacity: Some(10.0),
            },
        );
        net.vertices.insert(vid("D"), d);
        let mut c = Vertex::new("C", EntityKind::Customer);
        c.demand.insert(
            pid("widget"),
            Demand {
                quantity: 6.0,
                shortfall_penalty: 60.0,
            },
        );
        net.vertices.insert(vid("C"), c);

        for (from, to, product) in [
            ("S1", "O", "part"),
            ("S2", "O", "part"),
            ("O", "D", "widget"),
            ("D", "C", "widget"),
        ] {
            let e = Edge {
                from: vid(from),
                to: vid(to),
                capacity: 15.0,
                fixed_cost: 1.0,
                unit_cost: [(pid(product), 0.5)].into(),
                change_penalty: 2.0,
                disabled: false,
            };
            net.edges.insert(e.key(), e);
        }

        let plan = planner::plan(&net, &SolverConfig::default()).unwrap();
        (net, plan)
    }

    #[test]
    fn init_creates_one_agent_per_entity() {
        let (net, plan) = fixture();
        let world = init_agents(&net, &plan).unwrap();
        assert_eq!(world.agents.len(), net.vertices.len() + net.edges.len());
        assert!(world.verify_consistency().is_empty());
    }

    #[test]
    fn capability_models_mirror_the_network() {
        let (net, plan) = fixture();
        let world = init_agents(&net, &plan).unwrap();
        let o = world.vertex_agent(&vid("O")).unwrap();
        assert_eq!(o.capability.production_cost[&pid("widget")], 2.0);
        assert_eq!(o.capability.bom[&pid("widget")][&pid("part")], 1.0);
        assert_eq!(o.capability.holding_cost[&pid("part")], 0.1);
        assert_eq!(o.capability.inventory_capacity[&pid("part")], Some(15.0));
        let lane = world.agent(&AgentId::transport("S1", "O")).unwrap();
        assert_eq!(lane.capability.transport_capacity, 15.0);
        assert_eq!(lane.capability.transport_cost[&pid("part")], 0.5);
        // The OEM knows the contract terms of lanes it touches, and the
        // customer knows its own demand.
        let lane_info = &o.environment.lanes[&(vid("S1"), vid("O"))];
        assert_eq!(lane_info.capacity, 15.0);
        assert_eq!(lane_info.fixed_cost, 1.0);
        let c = world.vertex_agent(&vid("C")).unwrap();
        assert_eq!(c.state.demand[&pid("widget")].quantity, 6.0);
        assert_eq!(c.state.demand[&pid("widget")].shortfall_penalty, 60.0);
    }

    #[test]
    fn lane_residual_subtracts_committed_flow() {
        let (net, plan) = fixture();
        let world = init_agents(&net, &plan).unwrap();
        let o = world.vertex_agent(&vid("O")).unwrap();
        let shipped = plan.flow(&vid("O"), &vid("D"), &pid("widget"));
        let residual = o
            .environment
            .lane_residual(&vid("O"), &(vid("O"), vid("D")));
        assert!((residual - (15.0 - shipped)).abs() < 1e-9);
        // Unknown lane → nothing left to offer.
        assert_eq!(
            o.environment
                .lane_residual(&vid("O"), &(vid("O"), vid("C"))),
            0.0
        );
    }

    #[test]
    fn projected_inventory_follows_commitments() {
        let (net, plan) = fixture();
        let world = init_agents(&net, &plan).unwrap();
        // Projection equals the plan's end-of-period stock everywhere.
        for (id, agent) in &world.agents {
            let AgentId::Vertex(v) = id else { continue };
            for k in net.products.keys() {
                let projected = agent.projected_inventory(k);
                let planned = plan.inventory_at(v, k);
                assert!(
                    (projected - planned).abs() < 1e-6,
                    "{v} {k}: projected {projected} vs planned {planned}"
                );
            }
        }
    }

    #[test]
    fn demand_updates_are_customer_only() {
        let (net, plan) = fixture();
        let mut world = init_agents(&net, &plan).unwrap();
        let c = world.agent_mut(&AgentId::vertex("C")).unwrap();
        c.update_knowledge(KnowledgeChange::SetDemand {
            product: pid("widget"),
            demand: Demand {
                quantity: 9.0,
                shortfall_penalty: 60.0,
            },
        })
        .unwrap();
        assert_eq!(c.state.demand[&pid("widget")].quantity, 9.0);
        let o = world.agent_mut(&AgentId::vertex("O")).unwrap();
        assert!(o
            .update_knowledge(KnowledgeChange::SetDemand {
                product: pid("widget"),
                demand: Demand {
                    quantity: 1.0,
                    shortfall_penalty: 1.0,
                },
            })
            .is_err());
    }

    #[test]
    fn environments_are_mutual_and_carry_flow_info() {
        let (net, plan) = fixture();
        let world = init_agents(&net, &plan).unwrap();
        let o = world.vertex_agent(&vid("O")).unwrap();
        assert!(o.environment.upstream[&pid("part")].contains(&vid("S1")));
        assert!(o.environment.downstream[&pid("widget")].contains(&vid("D")));
        // The plan ships 6 widgets through O; its outbound info must agree.
        assert!(
            (o.environment.outbound[&(vid("D"), pid("widget"))]
                - plan.flow(&vid("O"), &vid("D"), &pid("widget")))
            .abs()
                < 1e-9
        );
    }

    #[test]
    fn empty_plan_still_populates_capabilities() {
        let (net, _) = fixture();
        let mut quiet = net.clone();
        for v in quiet.vertices.values_mut() {
            v.demand.clear();
            for h in v.holding.values_mut() {
                h.initial = 0.0;
            }
        }
        let world = init_agents(&quiet, &FlowPlan::default()).unwrap();
        let o = world.vertex_agent(&vid("O")).unwrap();
        assert!(o.environment.inbound.is_empty());
        assert!(o.environment.outbound.is_empty());
        assert!(!o.capability.production_cost.is_empty());
        assert!(o.environment.upstream[&pid("part")].contains(&vid("S2")));
    }

    #[test]
    fn peers_share_the_capability_and_exclude_self() {
        let (net, plan) = fixture();
        let world = init_agents(&net, &plan).unwrap();
        let s1 = world.vertex_agent(&vid("S1")).unwrap();
        let peers = s1
            .same_capability_peers(&Capability::Production(pid("part")))
            .unwrap();
        assert_eq!(peers, [AgentId::vertex("S2")].into());
        // D does not produce anything.
        let d = world.vertex_agent(&vid("D")).unwrap();
        assert!(matches!(
            d.same_capability_peers(&Capability::Production(pid("widget"))),
            Err(AgentError::UnknownCapability { .. })
        ));
    }

    #[test]
    fn step_state_is_a_fixed_point_on_the_plan() {
        let (net, plan) = fixture();
        let mut world = init_agents(&net, &plan).unwrap();
        // Stepping every vertex agent with its planned in/out flows must
        // land exactly on the plan's end-of-period inventories.
        let ids: Vec<AgentId> = world.agents.keys().cloned().collect();
        for id in ids {
            let AgentId::Vertex(v) = id.clone() else {
                continue;
            };
            let agent = world.agents.get_mut(&id).unwrap();
            let u = agent.state.inflow.clone();
            let z = agent.state.outflow.clone();
            let next = agent.step_state(&u, &z).unwrap().clone();
            for (product, qty) in &next {
                let planned = plan.inventory_at(&v, product);
                assert!(
                    (qty - planned).abs() < 1e-6,
                    "{v} {product}: {qty} vs planned {planned}"
                );
            }
        }
    }

    #[test]
    fn step_state_catches_capacity_and_negativity() {
        let (net, plan) = fixture();
        let mut world = init_agents(&net, &plan).unwrap();
        let d = world.agent_mut(&AgentId::vertex("D")).unwrap();
        // 12 widgets in, none out: capacity is 10.
        let err = d
            .step_state(&[(pid("widget"), 12.0)].into(), &BTreeMap::new())
            .unwrap_err();
        assert!(matches!(err, AgentError::CapacityViolation { capacity, .. } if capacity == 10.0));
        let err = d
            .step_state(&BTreeMap::new(), &[(pid("widget"), 3.0)].into())
            .unwrap_err();
        assert!(matches!(err, AgentError::NegativeInventory { .. }));
        // Pass-through of a non-holdable product is fine; retention is not.
        let s1 = world.agent_mut(&AgentId::vertex("S1")).unwrap();
        s1.state.production.clear();
        assert!(s1
            .step_state(&[(pid("part"), 4.0)].into(), &[(pid("part"), 4.0)].into())
            .is_ok());
        let err = s1
            .step_state(&[(pid("part"), 4.0)].into(), &BTreeMap::new())
            .unwrap_err();
        assert!(matches!(err, AgentError::CapacityViolation { capacity, .. } if capacity == 0.0));
    }

    #[test]
    fn oem_production_consumes_components() {
        let (net, plan) = fixture();
        let mut world = init_agents(&net, &plan).unwrap();
        let o = world.agent_mut(&AgentId::vertex("O")).unwrap();
        o.state.inventory = [(pid("part"), 5.0)].into();
        o.state.production = [(pid("widget"), 3.0)].into();
        // No flows: production eats 3 parts and yields 3 widgets, which must
        // leave (O cannot hold widgets) — so ship them out.
        let next = o
            .step_state(&BTreeMap::new(), &[(pid("widget"), 3.0)].into())
            .unwrap();
        assert_eq!(next, &BTreeMap::from([(pid("part"), 2.0)]));
    }

    #[test]
    fn knowledge_updates_apply_and_reject_inconsistencies() {
        let (net, plan) = fixture();
        let mut world = init_agents(&net, &plan).unwrap();
        let o = world.agent_mut(&AgentId::vertex("O")).unwrap();
        o.update_knowledge(KnowledgeChange::SetProductionCost {
            product: pid("widget"),
            cost: 9.0,
        })
        .unwrap();
        assert_eq!(o.capability.production_cost[&pid("widget")], 9.0);
        assert!(o
            .update_knowledge(KnowledgeChange::SetProductionCost {
                product: pid("part"),
                cost: 1.0,
            })
            .is_err());
        assert!(o
            .update_knowledge(KnowledgeChange::SetProduction {
                product: pid("part"),
                qty: 2.0,
            })
            .is_err());
    }

    #[test]
    fn record_flow_updates_both_sides_and_the_lane() {
        let (net, plan) = fixture();
        let mut world = init_agents(&net, &plan).unwrap();
        world
            .record_flow(&vid("S2"), &vid("O"), &pid("part"), 4.0)
            .unwrap();
        let s2 = world.vertex_agent(&vid("S2")).unwrap();
        assert_eq!(s2.environment.outbound[&(vid("O"), pid("part"))], 4.0);
        let o = world.vertex_agent(&vid("O")).unwrap();
        assert_eq!(o.environment.inbound[&(vid("S2"), pid("part"))], 4.0);
        let lane = world.agent(&AgentId::transport("S2", "O")).unwrap();
        assert_eq!(lane.state.inflow[&pid("part")], 4.0);
        assert!(world.verify_consistency().is_empty());
        // A lane cannot carry a product outside its capability.
        assert!(world
            .record_flow(&vid("S2"), &vid("O"), &pid("widget"), 1.0)
            .is_err());
    }

    #[test]
    fn removal_cascades_to_lanes_and_purges_knowledge() {
        let (net, plan) = fixture();
        let mut world = init_agents(&net, &plan).unwrap();
        world.remove_from_service(&AgentId::vertex("S1")).unwrap();
        assert!(world.agent(&AgentId::vertex("S1")).is_err());
        assert!(world.agent(&AgentId::transport("S1", "O")).is_err());
        let o = world.vertex_agent(&vid("O")).unwrap();
        assert!(!o.environment.upstream[&pid("part")].contains(&vid("S1")));
        assert!(!o.environment.inbound.keys().any(|(f, _)| f == &vid("S1")));
        let s2 = world.vertex_agent(&vid("S2")).unwrap();
        assert!(s2
            .same_capability_peers(&Capability::Production(pid("part")))
            .unwrap()
            .is_empty());
        assert!(world.verify_consistency().is_empty());
    }

    #[test]
    fn describe_dumps_the_knowledge_base() {
        let (net, plan) = fixture();
        let world = init_agents(&net, &plan).unwrap();
        let text = world.vertex_agent(&vid("O")).unwrap().describe();
        assert!(text.contains("agent O (OEM)"));
        assert!(text.contains("produce widget @ 2/unit from 1 part"));
        assert!(text.contains("hold part @ 0.1/unit (capacity 15)"));
        assert!(text.contains("upstream[part] = {S1, S2}"));
    }

    #[test]
    fn infeasible_plan_is_rejected() {
        let (net, _) = fixture();
        let mut bogus = FlowPlan::default();
        bogus.flows.insert((vid("S1"), vid("O"), pid("part")), 3.0);
        bogus.edge_used.insert((vid("S1"), vid("O")));
        assert!(matches!(
            init_agents(&net, &bogus),
            Err(AgentError::InfeasiblePlan { .. })
        ));
    }
}
