//! The distributed recovery protocol. When a disruption hits, the affected
//! agent opens a structured conversation with capable peers — request,
//! response, inform — and the accepted commitments are stitched into the
//! standing plan entity by entity, cascading follow-on requests upstream
//! where a provider cannot cover an allocation locally. Shortfalls that
//! survive the conversation either trigger a centralized replan or are
//! booked as unmet demand, depending on policy.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use milp::{LinExpr, ProblemBuilder, Relation, SolveStatus, SolverConfig, VarId};
use thiserror::Error;

use crate::agents::{
    init_agents, refresh_flow_knowledge, Agent, AgentError, AgentId, AgentNetwork, Capability,
    KnowledgeChange,
};
use crate::model::{
    apply_disruption, max_balance_residual, DisruptionEvent, EdgeKey, FlowPlan, ModelError,
    ProductId, SupplyNetwork, VertexId, QUANTITY_TOL,
};
use crate::planner::{self, PlanError, ReplanPenalties};

/// Units per (destination vertex, product), the common currency of the
/// conversation: requests ask for one, responses offer one, informs award
/// one.
pub type FlowVector = BTreeMap<(VertexId, ProductId), f64>;

/// A call for replacement supply: the quantities the sender needs covered,
/// plus optional urgency weights that bias both the responders' fill order
/// and the final allocation. Entries without a weight rank lowest.
#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub from: AgentId,
    pub needs: FlowVector,
    pub requirements: BTreeMap<(VertexId, ProductId), f64>,
}

/// A responder's counter-offer: how much of each requested entry it could
/// cover, with its price terms and current commitments attached so the
/// allocator can weigh cost and plan change without reading the
/// responder's books.
#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub from: AgentId,
    /// Feasible coverage per requested entry, capped by the request.
    pub offer: FlowVector,
    /// Quoted per-unit cost of serving each offered entry.
    pub unit_cost: BTreeMap<(VertexId, ProductId), f64>,
    /// One-off fee per destination whose lane is currently unused.
    pub open_cost: BTreeMap<VertexId, f64>,
    /// Units the responder already ships per offered entry; awards come on
    /// top of these.
    pub prior: FlowVector,
}

/// One entry in the conversation transcript.
#[derive(Debug, Clone, PartialEq)]
pub enum MessageBody {
    Request {
        from: AgentId,
        to: AgentId,
        needs: FlowVector,
        requirements: BTreeMap<(VertexId, ProductId), f64>,
    },
    Response {
        from: AgentId,
        to: AgentId,
        request_seq: usize,
        offer: FlowVector,
    },
    Inform {
        from: AgentId,
        to: AgentId,
        response_seq: usize,
        allocation: FlowVector,
    },
    /// The affected agent gives up on local recovery and asks the central
    /// planner to take over.
    FallbackRequest { from: AgentId, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub seq: usize,
    pub body: MessageBody,
}

/// The full transcript of one recovery, in send order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MessageLog {
    pub messages: Vec<Message>,
}

impl MessageLog {
    pub fn push(&mut self, body: MessageBody) -> usize {
        let seq = self.messages.len();
        self.messages.push(Message { seq, body });
        seq
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    /// Checks the transcript's internal consistency: sequence numbers are
    /// dense, every response answers a matching request without
    /// over-offering, and every inform stays within the offer it accepts.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for (i, m) in self.messages.iter().enumerate() {
            if m.seq != i {
                problems.push(format!("message {i} carries sequence number {}", m.seq));
            }
            match &m.body {
                MessageBody::Request { needs, .. } => {
                    for ((j, k), &q) in needs {
                        if q < 0.0 {
                            problems.push(format!("message {i}: negative need {q} for {k} at {j}"));
                        }
                    }
                }
                MessageBody::Response {
                    from,
                    to,
                    request_seq,
                    offer,
                } => match self.messages.get(*request_seq).map(|m| &m.body) {
                    Some(MessageBody::Request {
                        from: rf,
                        to: rt,
                        needs,
                        ..
                    }) if rf == to && rt == from => {
                        for ((j, k), &q) in offer {
                            if q < 0.0 {
                                problems.push(format!(
                                    "message {i}: negative offer {q} for {k} at {j}"
                                ));
                            }
                            match needs.get(&(j.clone(), k.clone())) {
                                Some(&need) if q <= need + QUANTITY_TOL => {}
                                Some(&need) => problems.push(format!(
                                    "message {i}: offers {q} of {k} to {j} but only {need} was requested"
                                )),
                                None => problems.push(format!(
                                    "message {i}: offers {k} to {j}, which was never requested"
                                )),
                            }
                        }
                    }
                    _ => problems.push(format!(
                        "message {i}: response does not answer a matching request"
                    )),
                },
                MessageBody::Inform {
                    from,
                    to,
                    response_seq,
                    allocation,
                } => match self.messages.get(*response_seq).map(|m| &m.body) {
                    Some(MessageBody::Response {
                        from: rf,
                        to: rt,
                        offer,
                        ..
                    }) if rf == to && rt == from => {
                        for ((j, k), &q) in allocation {
                            if q < 0.0 {
                                problems.push(format!(
                                    "message {i}: negative allocation {q} for {k} at {j}"
                                ));
                            }
                            let offered =
                                offer.get(&(j.clone(), k.clone())).copied().unwrap_or(0.0);
                            if q > offered + QUANTITY_TOL {
                                problems.push(format!(
                                    "message {i}: awards {q} of {k} to {j} but only {offered} was offered"
                                ));
                            }
                        }
                    }
                    _ => problems.push(format!(
                        "message {i}: inform does not answer a matching response"
                    )),
                },
                MessageBody::FallbackRequest { .. } => {}
            }
        }
        problems
    }

    /// Line-per-message text form of the transcript, stable across runs.
    pub fn export(&self) -> String {
        fn vector_text(v: &FlowVector) -> String {
            if v.is_empty() {
                return "-".into();
            }
            v.iter()
                .map(|((j, k), q)| format!("{j}:{k}={q}"))
                .collect::<Vec<_>>()
                .join(";")
        }
        let mut out = String::new();
        for m in &self.messages {
            let line = match &m.body {
                MessageBody::Request {
                    from, to, needs, ..
                } => {
                    format!("{} request {from} -> {to} {}", m.seq, vector_text(needs))
                }
                MessageBody::Response {
                    from,
                    to,
                    request_seq,
                    offer,
                } => format!(
                    "{} response {from} -> {to} re={request_seq} {}",
                    m.seq,
                    vector_text(offer)
                ),
                MessageBody::Inform {
                    from,
                    to,
                    response_seq,
                    allocation,
                } => format!(
                    "{} inform {from} -> {to} re={response_seq} {}",
                    m.seq,
                    vector_text(allocation)
                ),
                MessageBody::FallbackRequest { from, reason } => {
                    format!("{} fallback {from} reason={reason}", m.seq)
                }
            };
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    /// Every agent that sent or was sent a message.
    pub fn participants(&self) -> BTreeSet<AgentId> {
        let mut out = BTreeSet::new();
        for m in &self.messages {
            match &m.body {
                MessageBody::Request { from, to, .. }
                | MessageBody::Response { from, to, .. }
                | MessageBody::Inform { from, to, .. } => {
                    out.insert(from.clone());
                    out.insert(to.clone());
                }
                MessageBody::FallbackRequest { from, .. } => {
                    out.insert(from.clone());
                }
            }
        }
        out
    }
}

/// Communication effort of a conversation: one unit per message sent.
pub fn comm_effort(log: &MessageLog) -> usize {
    log.messages.len()
}

/// How a recovery ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoveryStatus {
    /// The conversation replaced every lost unit.
    Recovered,
    /// Some units stayed unreplaced and were booked as shortfall.
    PartiallyRecovered,
    /// Some units stayed unreplaced and the central planner took over.
    FellBackToCentralized,
}

impl fmt::Display for RecoveryStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = match self {
            RecoveryStatus::Recovered => "recovered",
            RecoveryStatus::PartiallyRecovered => "partially_recovered",
            RecoveryStatus::FellBackToCentralized => "fell_back_to_centralized",
        };
        f.write_str(text)
    }
}

/// What to do when the conversation cannot replace everything.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FallbackPolicy {
    /// Hand the disrupted network to the centralized re-planner.
    #[default]
    CentralizedReplan,
    /// Keep the locally patched plan and book the gap as shortfall.
    AcceptShortfall,
}

#[derive(Debug, Clone, Default)]
pub struct ProtocolConfig {
    pub fallback: FallbackPolicy,
    pub solver: SolverConfig,
    /// Change penalties for a fallback replan; `None` uses the ones stored
    /// on the network.
    pub replan_penalties: Option<ReplanPenalties>,
}

/// The result of one recovery run: the final status, the patched (or
/// replanned) plan, the message transcript and whatever stayed unreplaced.
#[derive(Debug, Clone)]
pub struct RecoveryOutcome {
    pub status: RecoveryStatus,
    pub plan: FlowPlan,
    pub log: MessageLog,
    /// Units per product that the conversation could not replace.
    pub unrecovered: BTreeMap<ProductId, f64>,
}

/// The live system a recovery acts on: the network, the standing plan and
/// the agents' knowledge bases, kept mutually consistent.
#[derive(Debug, Clone)]
pub struct World {
    pub net: SupplyNetwork,
    pub plan: FlowPlan,
    pub agents: AgentNetwork,
}

impl World {
    pub fn new(net: SupplyNetwork, plan: FlowPlan) -> Result<Self, AgentError> {
        let agents = init_agents(&net, &plan)?;
        Ok(World { net, plan, agents })
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("optimization inside the protocol failed: {0}")]
    Optimization(String),
    #[error("local repair stranded {quantity} units of {product} at {vertex}")]
    Patch {
        vertex: VertexId,
        product: ProductId,
        quantity: f64,
    },
    #[error("local repair exceeded the cascade depth limit at {vertex}")]
    RepairLoop { vertex: VertexId },
    #[error("patched plan is out of balance (max residual {residual})")]
    Unbalanced { residual: f64 },
}

/// How deep fulfilment and rebalancing cascades may recurse before the
/// repair is abandoned. Each hop crosses at least one network tier, so
/// legitimate chains stay far below this.
const MAX_DEPTH: usize = 16;

// ---------------------------------------------------------------------------
// Conversation operations
// ---------------------------------------------------------------------------

/// Drafts the opening request for the agent hit by `event`, along with the
/// peers it should go to. Returns `None` when the event leaves this agent
/// nothing to replace.
///
/// * Losing a vertex puts its whole outbound commitment on the table and
///   addresses the peers sharing the relevant production (or, failing
///   that, inventory) capability.
/// * Losing a lane asks the parallel lanes into the same destination to
///   carry its through-flow.
/// * A demand increase has the customer ask its upstream partners for the
///   uncovered remainder, weighted by the shortfall penalty behind it.
pub fn make_request(
    agent: &Agent,
    event: &DisruptionEvent,
) -> Option<(Request, BTreeSet<AgentId>)> {
    match event {
        DisruptionEvent::VertexLoss { vertex } => {
            let AgentId::Vertex(me) = &agent.id else {
                return None;
            };
            if me != vertex {
                return None;
            }
            let needs: FlowVector = agent
                .environment
                .outbound
                .iter()
                .filter(|(_, &q)| q > QUANTITY_TOL)
                .map(|(idx, &q)| (idx.clone(), q))
                .collect();
            if needs.is_empty() {
                return None;
            }
            let mut recipients = BTreeSet::new();
            let products: BTreeSet<&ProductId> = needs.keys().map(|(_, k)| k).collect();
            for k in products {
                let capability = if agent.capability.production_cost.contains_key(k) {
                    Capability::Production(k.clone())
                } else if agent.capability.holding_cost.contains_key(k) {
                    Capability::Inventory(k.clone())
                } else {
                    continue;
                };
                if let Ok(peers) = agent.same_capability_peers(&capability) {
                    recipients.extend(
                        peers
                            .into_iter()
                            .filter(|p| matches!(p, AgentId::Vertex(_))),
                    );
                }
            }
            Some((
                Request {
                    from: agent.id.clone(),
                    needs,
                    requirements: BTreeMap::new(),
                },
                recipients,
            ))
        }
        DisruptionEvent::EdgeLoss { edges } => {
            let AgentId::Transport(key) = &agent.id else {
                return None;
            };
            if !edges.contains(key) {
                return None;
            }
            let needs: FlowVector = agent
                .state
                .inflow
                .iter()
                .filter(|(_, &q)| q > QUANTITY_TOL)
                .map(|(k, &q)| ((key.1.clone(), k.clone()), q))
                .collect();
            if needs.is_empty() {
                return None;
            }
            let mut recipients = BTreeSet::new();
            for (_, k) in needs.keys() {
                if let Ok(peers) = agent.same_capability_peers(&Capability::Transport(k.clone())) {
                    recipients.extend(
                        peers
                            .into_iter()
                            .filter(|p| matches!(p, AgentId::Transport((_, to)) if to == &key.1)),
                    );
                }
            }
            Some((
                Request {
                    from: agent.id.clone(),
                    needs,
                    requirements: BTreeMap::new(),
                },
                recipients,
            ))
        }
        DisruptionEvent::NewDemand {
            vertex, product, ..
        } => {
            let AgentId::Vertex(me) = &agent.id else {
                return None;
            };
            if me != vertex {
                return None;
            }
            let d = agent.state.demand.get(product)?;
            let inflow = agent.state.inflow.get(product).copied().unwrap_or(0.0);
            let deficit = d.quantity - inflow;
            if deficit <= QUANTITY_TOL {
                return None;
            }
            let mut needs = BTreeMap::new();
            needs.insert((me.clone(), product.clone()), deficit);
            let mut requirements = BTreeMap::new();
            requirements.insert((me.clone(), product.clone()), d.shortfall_penalty);
            let recipients: BTreeSet<AgentId> = agent
                .environment
                .upstream
                .get(product)
                .map(|s| s.iter().cloned().map(AgentId::Vertex).collect())
                .unwrap_or_default();
            Some((
                Request {
                    from: agent.id.clone(),
                    needs,
                    requirements,
                },
                recipients,
            ))
        }
    }
}

/// The requested entries this agent could in principle serve, in key
/// order.
fn response_indices(agent: &Agent, request: &Request) -> Vec<(VertexId, ProductId)> {
    let mut out = Vec::new();
    match &agent.id {
        AgentId::Vertex(_) => {
            for ((j, k), &q) in &request.needs {
                if q <= QUANTITY_TOL {
                    continue;
                }
                if agent
                    .environment
                    .downstream
                    .get(k)
                    .is_some_and(|d| d.contains(j))
                {
                    out.push((j.clone(), k.clone()));
                }
            }
        }
        AgentId::Transport(key) => {
            for ((j, k), &q) in &request.needs {
                if q <= QUANTITY_TOL {
                    continue;
                }
                if j == &key.1 && agent.capability.transport_cost.contains_key(k) {
                    out.push((j.clone(), k.clone()));
                }
            }
        }
    }
    out
}

/// One solve of the responder's feasibility model over its own knowledge:
/// offers bounded by the request, lane headroom per destination, projected
/// stock plus extra production plus upstream replenishment per product,
/// shared production capacity, and upstream lane headroom. `target`
/// switches the objective from total fill to one entry's fill; `fixed`
/// pins entries decided in earlier rounds; `min_total` keeps the total at
/// the optimum while individual entries are maximized.
fn solve_response_lp(
    agent: &Agent,
    request: &Request,
    indices: &[(VertexId, ProductId)],
    fixed: &BTreeMap<(VertexId, ProductId), f64>,
    target: Option<&(VertexId, ProductId)>,
    min_total: Option<f64>,
    solver: &SolverConfig,
) -> Result<BTreeMap<(VertexId, ProductId), f64>, ProtocolError> {
    let mut b = ProblemBuilder::new();
    let mut offer_vars: BTreeMap<(VertexId, ProductId), VarId> = BTreeMap::new();
    for idx in indices {
        let ub = request.needs.get(idx).copied().unwrap_or(0.0).max(0.0);
        let v = b.add_continuous(format!("offer[{}:{}]", idx.0, idx.1), Some(ub));
        offer_vars.insert(idx.clone(), v);
    }
    match &agent.id {
        AgentId::Transport(_) => {
            if !offer_vars.is_empty() {
                let mut cap = LinExpr::new();
                for v in offer_vars.values() {
                    cap.add(*v, 1.0);
                }
                b.add_constraint(
                    "lane_capacity",
                    cap,
                    Relation::Le,
                    agent.residual_transport_capacity(),
                );
            }
        }
        AgentId::Vertex(me) => {
            let requested: BTreeSet<ProductId> = indices.iter().map(|(_, k)| k.clone()).collect();
            let mut g_vars: BTreeMap<ProductId, VarId> = BTreeMap::new();
            for k in &requested {
                if agent.capability.production_cost.contains_key(k) {
                    g_vars.insert(k.clone(), b.add_continuous(format!("make[{k}]"), None));
                }
            }
            let mut relevant = requested.clone();
            for k in g_vars.keys() {
                if let Some(reqs) = agent.capability.bom_requirements(k) {
                    relevant.extend(reqs.keys().cloned());
                }
            }
            let mut w_vars: BTreeMap<(EdgeKey, ProductId), VarId> = BTreeMap::new();
            for (key, info) in &agent.environment.lanes {
                if &key.1 != me {
                    continue;
                }
                for p in &relevant {
                    if info.unit_cost.contains_key(p) {
                        let v = b.add_continuous(format!("draw[{}->{}:{p}]", key.0, key.1), None);
                        w_vars.insert((key.clone(), p.clone()), v);
                    }
                }
            }
            let dests: BTreeSet<VertexId> = indices.iter().map(|(j, _)| j.clone()).collect();
            for j in &dests {
                let mut e = LinExpr::new();
                for (idx, v) in &offer_vars {
                    if &idx.0 == j {
                        e.add(*v, 1.0);
                    }
                }
                let key = (me.clone(), j.clone());
                b.add_constraint(
                    format!("lane[{j}]"),
                    e,
                    Relation::Le,
                    agent.environment.lane_residual(me, &key),
                );
            }
            for p in &relevant {
                let mut e = LinExpr::new();
                let mut any = false;
                for (idx, v) in &offer_vars {
                    if &idx.1 == p {
                        e.add(*v, 1.0);
                        any = true;
                    }
                }
                for (k, gv) in &g_vars {
                    if let Some(r) = agent.capability.bom.get(k).and_then(|m| m.get(p)) {
                        if *r > 0.0 {
                            e.add(*gv, *r);
                            any = true;
                        }
                    }
                }
                if let Some(gv) = g_vars.get(p) {
                    e.add(*gv, -1.0);
                }
                for ((_, wp), wv) in &w_vars {
                    if wp == p {
                        e.add(*wv, -1.0);
                    }
                }
                if !any {
                    continue;
                }
                b.add_constraint(
                    format!("supply[{p}]"),
                    e,
                    Relation::Le,
                    agent.projected_inventory(p).max(0.0),
                );
            }
            if !g_vars.is_empty() {
                let mut e = LinExpr::new();
                for v in g_vars.values() {
                    e.add(*v, 1.0);
                }
                b.add_constraint(
                    "production_capacity",
                    e,
                    Relation::Le,
                    agent.residual_production_capacity(),
                );
            }
            let lanes_used: BTreeSet<EdgeKey> = w_vars.keys().map(|(key, _)| key.clone()).collect();
            for key in lanes_used {
                let mut e = LinExpr::new();
                for ((k2, _), wv) in &w_vars {
                    if *k2 == key {
                        e.add(*wv, 1.0);
                    }
                }
                b.add_constraint(
                    format!("inbound[{}->{}]", key.0, key.1),
                    e,
                    Relation::Le,
                    agent.environment.lane_residual(me, &key),
                );
            }
        }
    }
    for (idx, &val) in fixed {
        if let Some(v) = offer_vars.get(idx) {
            let mut e = LinExpr::new();
            e.add(*v, 1.0);
            b.add_constraint(format!("pin[{}:{}]", idx.0, idx.1), e, Relation::Eq, val);
        }
    }
    if let Some(floor) = min_total {
        let mut e = LinExpr::new();
        for v in offer_vars.values() {
            e.add(*v, 1.0);
        }
        b.add_constraint("keep_total", e, Relation::Ge, floor);
    }
    let mut obj = LinExpr::new();
    match target {
        Some(idx) => {
            if let Some(v) = offer_vars.get(idx) {
                obj.add(*v, -1.0);
            }
        }
        None => {
            for v in offer_vars.values() {
                obj.add(*v, -1.0);
            }
        }
    }
    b.set_objective(obj);
    let problem = b
        .build()
        .map_err(|e| ProtocolError::Optimization(e.to_string()))?;
    let sol =
        milp::solve(&problem, solver).map_err(|e| ProtocolError::Optimization(e.to_string()))?;
    if sol.status != SolveStatus::Optimal {
        return Err(ProtocolError::Optimization(format!(
            "response model for {} ended {:?}",
            agent.id, sol.status
        )));
    }
    Ok(offer_vars
        .iter()
        .map(|(idx, v)| (idx.clone(), sol.values[*v].max(0.0)))
        .collect())
}

/// Works out what the agent can offer against a request, using only its
/// own knowledge base: projected stock, spare production fed by its
/// current suppliers, and lane headroom. The offer maximizes total
/// coverage; among equally full offers, entries are filled greedily in
/// descending requirement weight (ties broken by product, then
/// destination), so scarce capacity goes to the most urgent entries
/// first. Price terms and current commitments ride along for the
/// allocator.
pub fn compute_response(
    agent: &Agent,
    request: &Request,
    solver: &SolverConfig,
) -> Result<Response, ProtocolError> {
    let indices = response_indices(agent, request);
    let mut offer: FlowVector = BTreeMap::new();
    if !indices.is_empty() {
        let first = solve_response_lp(
            agent,
            request,
            &indices,
            &BTreeMap::new(),
            None,
            None,
            solver,
        )?;
        let f_star: f64 = first.values().sum();
        let weight =
            |idx: &(VertexId, ProductId)| request.requirements.get(idx).copied().unwrap_or(0.0);
        let mut order = indices.clone();
        order.sort_by(|a, b| {
            weight(b)
                .partial_cmp(&weight(a))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.1.cmp(&b.1))
                .then_with(|| a.0.cmp(&b.0))
        });
        let mut pinned: BTreeMap<(VertexId, ProductId), f64> = BTreeMap::new();
        for idx in &order {
            let vals = solve_response_lp(
                agent,
                request,
                &indices,
                &pinned,
                Some(idx),
                Some(f_star - 1e-9),
                solver,
            )?;
            let cap = request.needs.get(idx).copied().unwrap_or(0.0);
            let v = vals.get(idx).copied().unwrap_or(0.0).clamp(0.0, cap);
            pinned.insert(idx.clone(), v);
        }
        offer = pinned
            .into_iter()
            .filter(|(_, q)| *q > QUANTITY_TOL)
            .collect();
    }
    let mut unit_cost = BTreeMap::new();
    let mut open_cost = BTreeMap::new();
    let mut prior: FlowVector = BTreeMap::new();
    match &agent.id {
        AgentId::Vertex(me) => {
            for (j, k) in offer.keys() {
                let key = (me.clone(), j.clone());
                if let Some(info) = agent.environment.lanes.get(&key) {
                    unit_cost.insert(
                        (j.clone(), k.clone()),
                        info.unit_cost.get(k).copied().unwrap_or(0.0),
                    );
                    if info.fixed_cost > QUANTITY_TOL
                        && agent.environment.lane_load(me, &key) <= QUANTITY_TOL
                    {
                        open_cost.insert(j.clone(), info.fixed_cost);
                    }
                }
                if let Some(&q) = agent.environment.outbound.get(&(j.clone(), k.clone())) {
                    if q > QUANTITY_TOL {
                        prior.insert((j.clone(), k.clone()), q);
                    }
                }
            }
        }
        AgentId::Transport(_) => {
            let through: f64 = agent.state.inflow.values().sum();
            for (j, k) in offer.keys() {
                unit_cost.insert(
                    (j.clone(), k.clone()),
                    agent
                        .capability
                        .transport_cost
                        .get(k)
                        .copied()
                        .unwrap_or(0.0),
                );
                if agent.capability.transport_fixed_cost > QUANTITY_TOL && through <= QUANTITY_TOL {
                    open_cost.insert(j.clone(), agent.capability.transport_fixed_cost);
                }
                if let Some(&q) = agent.state.inflow.get(k) {
                    if q > QUANTITY_TOL {
                        prior.insert((j.clone(), k.clone()), q);
                    }
                }
            }
        }
    }
    Ok(Response {
        from: agent.id.clone(),
        offer,
        unit_cost,
        open_cost,
        prior,
    })
}

/// Which level of the allocation hierarchy a solve optimizes; each later
/// stage pins the earlier optima as constraints.
enum AllocationStage {
    /// Maximize requirement-weighted coverage.
    Fill,
    /// Minimize quoted unit costs plus lane-opening fees at best coverage.
    Cost { fill: f64 },
    /// Steer cost-equal splits toward the smallest responder ids.
    Rank { fill: f64, cost: f64 },
}

/// Splits the requested quantities across the offers, lexicographically:
/// first cover as much requirement-weighted need as possible, then choose
/// the cheapest such split under the quoted unit costs plus one-off fees
/// for currently unused lanes, then break remaining ties toward the
/// lexicographically smallest responder ids. Awards are increments on top
/// of whatever the responders already ship.
pub fn select_allocation(
    request: &Request,
    responses: &[(AgentId, Response)],
    solver: &SolverConfig,
) -> Result<BTreeMap<AgentId, FlowVector>, ProtocolError> {
    let mut ordered: Vec<&(AgentId, Response)> = responses.iter().collect();
    ordered.sort_by(|a, b| a.0.cmp(&b.0));
    struct Slot {
        rank: usize,
        id: AgentId,
        j: VertexId,
        k: ProductId,
        ub: f64,
        cost: f64,
        weight: f64,
    }
    let mut slots: Vec<Slot> = Vec::new();
    for (rank, (id, resp)) in ordered.iter().enumerate() {
        for ((j, k), &q) in &resp.offer {
            let idx = (j.clone(), k.clone());
            let need = request.needs.get(&idx).copied().unwrap_or(0.0);
            let ub = q.min(need);
            if ub <= QUANTITY_TOL {
                continue;
            }
            slots.push(Slot {
                rank,
                id: id.clone(),
                j: j.clone(),
                k: k.clone(),
                ub,
                cost: resp.unit_cost.get(&idx).copied().unwrap_or(0.0),
                weight: request
                    .requirements
                    .get(&idx)
                    .copied()
                    .unwrap_or(0.0)
                    .max(1.0),
            });
        }
    }
    if slots.is_empty() {
        return Ok(BTreeMap::new());
    }
    let mut open_groups: BTreeMap<(usize, VertexId), (f64, Vec<usize>)> = BTreeMap::new();
    for (si, s) in slots.iter().enumerate() {
        if let Some(&fee) = ordered[s.rank].1.open_cost.get(&s.j) {
            if fee > QUANTITY_TOL {
                open_groups
                    .entry((s.rank, s.j.clone()))
                    .or_insert((fee, Vec::new()))
                    .1
                    .push(si);
            }
        }
    }
    let build_and_solve = |stage: &AllocationStage| -> Result<(f64, Vec<f64>), ProtocolError> {
        let mut b = ProblemBuilder::new();
        let mut yvars: Vec<VarId> = Vec::with_capacity(slots.len());
        for (si, s) in slots.iter().enumerate() {
            yvars.push(b.add_continuous(format!("y{si}"), Some(s.ub)));
        }
        // fee binaries only matter once cost enters the picture
        let mut cost_terms: Vec<(VarId, f64)> = slots
            .iter()
            .enumerate()
            .map(|(si, s)| (yvars[si], s.cost))
            .collect();
        if !matches!(stage, AllocationStage::Fill) {
            for ((rank, j), (fee, members)) in &open_groups {
                let beta = b.add_binary(format!("open{rank}_{j}"));
                cost_terms.push((beta, *fee));
                let big: f64 = members.iter().map(|&si| slots[si].ub).sum();
                let mut e = LinExpr::new();
                for &si in members {
                    e.add(yvars[si], 1.0);
                }
                e.add(beta, -big);
                b.add_constraint(format!("use_open{rank}_{j}"), e, Relation::Le, 0.0);
            }
        }
        let mut per_need: BTreeMap<(VertexId, ProductId), Vec<usize>> = BTreeMap::new();
        for (si, s) in slots.iter().enumerate() {
            per_need
                .entry((s.j.clone(), s.k.clone()))
                .or_default()
                .push(si);
        }
        for (idx, members) in &per_need {
            let need = request.needs.get(idx).copied().unwrap_or(0.0);
            let mut e = LinExpr::new();
            for &si in members {
                e.add(yvars[si], 1.0);
            }
            b.add_constraint(format!("need[{}:{}]", idx.0, idx.1), e, Relation::Le, need);
        }
        let weighted_fill = |b: &mut ProblemBuilder, floor: f64| {
            let mut e = LinExpr::new();
            for (si, s) in slots.iter().enumerate() {
                e.add(yvars[si], s.weight);
            }
            b.add_constraint("hold_fill", e, Relation::Ge, floor - 1e-9);
        };
        let mut obj = LinExpr::new();
        match stage {
            AllocationStage::Fill => {
                for (si, s) in slots.iter().enumerate() {
                    obj.add(yvars[si], -s.weight);
                }
            }
            AllocationStage::Cost { fill } => {
                weighted_fill(&mut b, *fill);
                for (v, c) in &cost_terms {
                    obj.add(*v, *c);
                }
            }
            AllocationStage::Rank { fill, cost } => {
                weighted_fill(&mut b, *fill);
                let mut e = LinExpr::new();
                for (v, c) in &cost_terms {
                    e.add(*v, *c);
                }
                b.add_constraint("hold_cost", e, Relation::Le, cost + 1e-7);
                for (si, s) in slots.iter().enumerate() {
                    obj.add(yvars[si], (s.rank + 1) as f64);
                }
            }
        }
        b.set_objective(obj);
        let p = b
            .build()
            .map_err(|e| ProtocolError::Optimization(e.to_string()))?;
        let sol =
            milp::solve(&p, solver).map_err(|e| ProtocolError::Optimization(e.to_string()))?;
        if sol.status != SolveStatus::Optimal {
            return Err(ProtocolError::Optimization(format!(
                "allocation model ended {:?}",
                sol.status
            )));
        }
        let vals: Vec<f64> = yvars.iter().map(|v| sol.values[*v]).collect();
        Ok((sol.objective, vals))
    };
    let (neg_fill, _) = build_and_solve(&AllocationStage::Fill)?;
    let fill = -neg_fill;
    let (cost, _) = build_and_solve(&AllocationStage::Cost { fill })?;
    let (_, mut vals) = build_and_solve(&AllocationStage::Rank { fill, cost })?;
    // The stage slacks leave optima a hair inside their bounds; snap those
    // back onto the bound so accepted quantities echo the offers exactly
    // instead of eroding a few nano-units per conversation hop.
    for (si, s) in slots.iter().enumerate() {
        if s.ub - vals[si] < 1e-7 {
            vals[si] = s.ub;
        }
    }
    let mut out: BTreeMap<AgentId, FlowVector> = BTreeMap::new();
    for (si, s) in slots.iter().enumerate() {
        if vals[si] > QUANTITY_TOL {
            out.entry(s.id.clone())
                .or_default()
                .insert((s.j.clone(), s.k.clone()), vals[si]);
        }
    }
    Ok(out)
}

/// The upstream half of the conversation, stated as a planning step: given
/// an accepted allocation, works out which inputs the provider cannot
/// cover from projected stock or spare production and drafts the follow-on
/// requests to its own suppliers, one per product.
pub fn propagate(agent: &Agent, allocation: &FlowVector) -> Vec<(Request, BTreeSet<AgentId>)> {
    let AgentId::Vertex(me) = &agent.id else {
        return Vec::new();
    };
    let mut accepted: BTreeMap<ProductId, f64> = BTreeMap::new();
    for ((_, k), &q) in allocation {
        if q > QUANTITY_TOL {
            *accepted.entry(k.clone()).or_default() += q;
        }
    }
    let mut needs: BTreeMap<ProductId, f64> = BTreeMap::new();
    for (k, &q) in &accepted {
        let stock = agent.projected_inventory(k).max(0.0);
        let rem = (q - stock).max(0.0);
        if rem <= QUANTITY_TOL {
            continue;
        }
        if agent.capability.production_cost.contains_key(k) {
            let make = rem.min(agent.residual_production_capacity()).max(0.0);
            if let Some(reqs) = agent.capability.bom_requirements(k) {
                for (c, r) in reqs {
                    let short = (r * make - agent.projected_inventory(c).max(0.0)).max(0.0);
                    if short > QUANTITY_TOL {
                        *needs.entry(c.clone()).or_default() += short;
                    }
                }
            }
            let passthrough = rem - make;
            if passthrough > QUANTITY_TOL {
                *needs.entry(k.clone()).or_default() += passthrough;
            }
        } else {
            *needs.entry(k.clone()).or_default() += rem;
        }
    }
    let mut out = Vec::new();
    for (k, q) in needs {
        let Some(ups) = agent.environment.upstream.get(&k) else {
            continue;
        };
        if ups.is_empty() {
            continue;
        }
        let recipients: BTreeSet<AgentId> = ups.iter().cloned().map(AgentId::Vertex).collect();
        let mut nv: FlowVector = BTreeMap::new();
        nv.insert((me.clone(), k.clone()), q);
        out.push((
            Request {
                from: agent.id.clone(),
                needs: nv,
                requirements: BTreeMap::new(),
            },
            recipients,
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Plan surgery engine
// ---------------------------------------------------------------------------

/// Working state of one recovery: the disrupted network, the plan being
/// patched and the agents, kept in lock-step through every edit.
struct Ctx<'a> {
    net: &'a SupplyNetwork,
    agents: &'a mut AgentNetwork,
    plan: &'a mut FlowPlan,
    log: &'a mut MessageLog,
    solver: &'a SolverConfig,
}

impl Ctx<'_> {
    /// Recomputes one vertex agent's cached per-product inflow/outflow
    /// from its flow records (plus customer consumption).
    fn sync_vertex_flow_state(&mut self, v: &VertexId, k: &ProductId) {
        let satisfied = self.plan.satisfied_at(v, k);
        if let Ok(a) = self.agents.agent_mut(&AgentId::Vertex(v.clone())) {
            let inflow = a.environment.inbound_total(k);
            let outflow = a.environment.outbound_total(k) + satisfied;
            if inflow > QUANTITY_TOL {
                a.state.inflow.insert(k.clone(), inflow);
            } else {
                a.state.inflow.remove(k);
            }
            if outflow > QUANTITY_TOL {
                a.state.outflow.insert(k.clone(), outflow);
            } else {
                a.state.outflow.remove(k);
            }
        }
    }

    /// Applies a flow change to the plan and mirrors it into every agent
    /// knowledge base that still exists.
    fn change_flow(&mut self, i: &VertexId, j: &VertexId, k: &ProductId, delta: f64) {
        let mut new = (self.plan.flow(i, j, k) + delta).max(0.0);
        if new <= QUANTITY_TOL {
            new = 0.0;
        }
        let fkey = (i.clone(), j.clone(), k.clone());
        if new > 0.0 {
            self.plan.flows.insert(fkey, new);
        } else {
            self.plan.flows.remove(&fkey);
        }
        let ekey = (i.clone(), j.clone());
        if self.plan.edge_total(i, j) > QUANTITY_TOL {
            self.plan.edge_used.insert(ekey.clone());
        } else {
            self.plan.edge_used.remove(&ekey);
        }
        if let Ok(a) = self.agents.agent_mut(&AgentId::Vertex(i.clone())) {
            let _ = a.update_knowledge(KnowledgeChange::SetOutboundFlow {
                to: j.clone(),
                product: k.clone(),
                qty: new,
            });
        }
        if let Ok(a) = self.agents.agent_mut(&AgentId::Vertex(j.clone())) {
            let _ = a.update_knowledge(KnowledgeChange::SetInboundFlow {
                from: i.clone(),
                product: k.clone(),
                qty: new,
            });
        }
        if let Ok(a) = self.agents.agent_mut(&AgentId::Transport(ekey)) {
            if new > 0.0 {
                a.state.inflow.insert(k.clone(), new);
                a.state.outflow.insert(k.clone(), new);
            } else {
                a.state.inflow.remove(k);
                a.state.outflow.remove(k);
            }
        }
        self.sync_vertex_flow_state(i, k);
        self.sync_vertex_flow_state(j, k);
    }

    fn set_produced(&mut self, v: &VertexId, k: &ProductId, qty: f64) {
        let qty = if qty > QUANTITY_TOL { qty } else { 0.0 };
        let key = (v.clone(), k.clone());
        if qty > 0.0 {
            self.plan.produced.insert(key, qty);
        } else {
            self.plan.produced.remove(&key);
        }
        if self.plan.produced_total(v) > QUANTITY_TOL {
            self.plan.line_open.insert(v.clone());
        } else {
            self.plan.line_open.remove(v);
        }
        if let Ok(a) = self.agents.agent_mut(&AgentId::Vertex(v.clone())) {
            let _ = a.update_knowledge(KnowledgeChange::SetProduction {
                product: k.clone(),
                qty,
            });
        }
    }

    fn inventory(&self, v: &VertexId, k: &ProductId) -> f64 {
        self.plan.inventory_at(v, k)
    }

    fn add_inventory(&mut self, v: &VertexId, k: &ProductId, delta: f64) {
        let new = (self.plan.inventory_at(v, k) + delta).max(0.0);
        let key = (v.clone(), k.clone());
        if new > QUANTITY_TOL {
            self.plan.inventory.insert(key, new);
        } else {
            self.plan.inventory.remove(&key);
        }
    }

    /// Spare end-of-period storage for a product at a vertex.
    fn holding_room(&self, v: &VertexId, k: &ProductId) -> f64 {
        let Some(vx) = self.net.vertices.get(v) else {
            return 0.0;
        };
        if vx.disabled {
            return 0.0;
        }
        let Some(h) = vx.holding.get(k) else {
            return 0.0;
        };
        match h.capacity {
            Some(cap) => (cap - self.inventory(v, k)).max(0.0),
            None => f64::INFINITY,
        }
    }

    /// Sets satisfied demand and keeps the shortfall ledger and the
    /// customer agent's consumption in step.
    fn set_satisfied(&mut self, v: &VertexId, k: &ProductId, qty: f64) {
        let qty = if qty > QUANTITY_TOL { qty } else { 0.0 };
        let key = (v.clone(), k.clone());
        if qty > 0.0 {
            self.plan.satisfied.insert(key.clone(), qty);
        } else {
            self.plan.satisfied.remove(&key);
        }
        let demand = self
            .net
            .effective_demand(v)
            .find(|(p, _)| *p == k)
            .map(|(_, d)| d.quantity)
            .unwrap_or(0.0);
        let gap = demand - qty;
        if gap > QUANTITY_TOL {
            self.plan.shortfall.insert(key, gap);
        } else {
            self.plan.shortfall.remove(&key);
        }
        self.sync_vertex_flow_state(v, k);
    }

    fn producible(&self, v: &VertexId, k: &ProductId) -> bool {
        self.net
            .vertices
            .get(v)
            .is_some_and(|vx| !vx.disabled && vx.production_cost.contains_key(k))
    }

    /// Rebalances a vertex that now has more of a product arriving or made
    /// than leaving: park it in storage, then stop making it (freeing its
    /// inputs, which cascade as surplus themselves), then push the cut
    /// upstream lane by lane.
    fn fix_source_surplus(
        &mut self,
        v: &VertexId,
        k: &ProductId,
        quantity: f64,
        depth: usize,
    ) -> Result<(), ProtocolError> {
        if quantity <= QUANTITY_TOL {
            return Ok(());
        }
        if depth > MAX_DEPTH {
            return Err(ProtocolError::RepairLoop { vertex: v.clone() });
        }
        let mut left = quantity;
        let park = left.min(self.holding_room(v, k));
        if park > QUANTITY_TOL {
            self.add_inventory(v, k, park);
            left -= park;
        }
        if left <= QUANTITY_TOL {
            return Ok(());
        }
        let made = self.plan.produced_at(v, k);
        let cut = left.min(made);
        if cut > QUANTITY_TOL {
            self.set_produced(v, k, made - cut);
            left -= cut;
            let comps: Vec<(ProductId, f64)> = self
                .net
                .components_of(k)
                .map(|(c, r)| (c.clone(), r))
                .collect();
            for (c, r) in comps {
                self.fix_source_surplus(v, &c, r * cut, depth + 1)?;
            }
        }
        if left <= QUANTITY_TOL {
            return Ok(());
        }
        left -= self.cut_inbound(v, k, left, depth)?;
        if left > QUANTITY_TOL {
            return Err(ProtocolError::Patch {
                vertex: v.clone(),
                product: k.clone(),
                quantity: left,
            });
        }
        Ok(())
    }

    /// Cancels inbound flows of one product, highest sender id first, and
    /// rebalances each sender. Returns how much was cancelled.
    fn cut_inbound(
        &mut self,
        v: &VertexId,
        k: &ProductId,
        quantity: f64,
        depth: usize,
    ) -> Result<f64, ProtocolError> {
        let mut inbound: Vec<(VertexId, f64)> = self
            .net
            .in_edges(v)
            .filter(|e| self.net.edge_usable(&e.key()))
            .map(|e| (e.from.clone(), self.plan.flow(&e.from, v, k)))
            .filter(|(_, q)| *q > QUANTITY_TOL)
            .collect();
        inbound.sort_by(|a, b| b.0.cmp(&a.0));
        let mut done = 0.0;
        for (from, q) in inbound {
            if quantity - done <= QUANTITY_TOL {
                break;
            }
            let take = (quantity - done).min(q);
            self.change_flow(&from, v, k, -take);
            self.fix_source_surplus(&from, k, take, depth + 1)?;
            done += take;
        }
        Ok(done)
    }

    /// Cancels outbound flows of one product, highest receiver id first,
    /// and rebalances each receiver. Returns how much was cancelled.
    fn cut_outbound(
        &mut self,
        v: &VertexId,
        k: &ProductId,
        quantity: f64,
        depth: usize,
    ) -> Result<f64, ProtocolError> {
        let mut outbound: Vec<(VertexId, f64)> = self
            .net
            .out_edges(v)
            .filter(|e| self.net.edge_usable(&e.key()))
            .map(|e| (e.to.clone(), self.plan.flow(v, &e.to, k)))
            .filter(|(_, q)| *q > QUANTITY_TOL)
            .collect();
        outbound.sort_by(|a, b| b.0.cmp(&a.0));
        let mut done = 0.0;
        for (to, q) in outbound {
            if quantity - done <= QUANTITY_TOL {
                break;
            }
            let take = (quantity - done).min(q);
            self.change_flow(v, &to, k, -take);
            self.settle_deficit(&to, k, take, depth + 1)?;
            done += take;
        }
        Ok(done)
    }

    /// Rebalances a vertex that now receives less of a product than it
    /// uses: draw down end-of-period stock, then book unmet demand, then
    /// scale back production that consumed it (rebalancing the other
    /// inputs and the unmade output), then pass the cut downstream.
    fn settle_deficit(
        &mut self,
        v: &VertexId,
        k: &ProductId,
        quantity: f64,
        depth: usize,
    ) -> Result<(), ProtocolError> {
        if quantity <= QUANTITY_TOL {
            return Ok(());
        }
        if depth > MAX_DEPTH {
            return Err(ProtocolError::RepairLoop { vertex: v.clone() });
        }
        let mut left = quantity;
        let draw = left.min(self.inventory(v, k));
        if draw > QUANTITY_TOL {
            self.add_inventory(v, k, -draw);
            left -= draw;
        }
        if left <= QUANTITY_TOL {
            return Ok(());
        }
        let sat = self.plan.satisfied_at(v, k);
        let cut = left.min(sat);
        if cut > QUANTITY_TOL {
            self.set_satisfied(v, k, sat - cut);
            left -= cut;
        }
        if left <= QUANTITY_TOL {
            return Ok(());
        }
        let users: Vec<(ProductId, f64)> = self
            .net
            .products_using(k)
            .map(|(m, r)| (m.clone(), r))
            .collect();
        for (m, r) in users {
            if left <= QUANTITY_TOL {
                break;
            }
            if r <= 0.0 {
                continue;
            }
            let made = self.plan.produced_at(v, &m);
            if made <= QUANTITY_TOL {
                continue;
            }
            let cut_m = (left / r).min(made);
            if cut_m <= QUANTITY_TOL {
                continue;
            }
            self.set_produced(v, &m, made - cut_m);
            left -= r * cut_m;
            let comps: Vec<(ProductId, f64)> = self
                .net
                .components_of(&m)
                .map(|(c, rc)| (c.clone(), rc))
                .collect();
            for (c, rc) in comps {
                if &c == k {
                    continue;
                }
                self.fix_source_surplus(v, &c, rc * cut_m, depth + 1)?;
            }
            let mut rem_m = cut_m;
            let d = rem_m.min(self.inventory(v, &m));
            if d > QUANTITY_TOL {
                self.add_inventory(v, &m, -d);
                rem_m -= d;
            }
            if rem_m > QUANTITY_TOL {
                rem_m -= self.cut_outbound(v, &m, rem_m, depth)?;
            }
            if rem_m > QUANTITY_TOL {
                return Err(ProtocolError::Patch {
                    vertex: v.clone(),
                    product: m.clone(),
                    quantity: rem_m,
                });
            }
        }
        if left <= QUANTITY_TOL {
            return Ok(());
        }
        left -= self.cut_outbound(v, k, left, depth)?;
        if left > QUANTITY_TOL {
            return Err(ProtocolError::Patch {
                vertex: v.clone(),
                product: k.clone(),
                quantity: left,
            });
        }
        Ok(())
    }

    /// Runs one full conversation: requests to every recipient, a response
    /// from each, an allocation, and informs to the responders that won
    /// volume. Returns the allocation.
    fn converse(
        &mut self,
        requester: &AgentId,
        request: &Request,
        recipients: &BTreeSet<AgentId>,
    ) -> Result<BTreeMap<AgentId, FlowVector>, ProtocolError> {
        if recipients.is_empty() || request.needs.values().all(|q| *q <= QUANTITY_TOL) {
            return Ok(BTreeMap::new());
        }
        let mut request_seqs: Vec<(AgentId, usize)> = Vec::new();
        for r in recipients {
            let seq = self.log.push(MessageBody::Request {
                from: requester.clone(),
                to: r.clone(),
                needs: request.needs.clone(),
                requirements: request.requirements.clone(),
            });
            request_seqs.push((r.clone(), seq));
        }
        let mut responders: Vec<(AgentId, usize, Response)> = Vec::new();
        for (r, req_seq) in request_seqs {
            let Ok(agent) = self.agents.agent(&r) else {
                continue;
            };
            let resp = compute_response(agent, request, self.solver)?;
            let seq = self.log.push(MessageBody::Response {
                from: r.clone(),
                to: requester.clone(),
                request_seq: req_seq,
                offer: resp.offer.clone(),
            });
            responders.push((r, seq, resp));
        }
        let pairs: Vec<(AgentId, Response)> = responders
            .iter()
            .map(|(r, _, resp)| (r.clone(), resp.clone()))
            .collect();
        let alloc = select_allocation(request, &pairs, self.solver)?;
        for (r, resp_seq, _) in &responders {
            if let Some(v) = alloc.get(r) {
                if !v.is_empty() {
                    self.log.push(MessageBody::Inform {
                        from: requester.clone(),
                        to: r.clone(),
                        response_seq: *resp_seq,
                        allocation: v.clone(),
                    });
                }
            }
        }
        Ok(alloc)
    }

    /// Makes a provider deliver up to `qty` of a product to `to`, sourcing
    /// in order from finished stock, extra production (acquiring missing
    /// inputs upstream) and pass-through purchases. Commits the delivery
    /// as a flow and returns the amount actually delivered.
    fn fulfill(
        &mut self,
        provider: &VertexId,
        to: &VertexId,
        k: &ProductId,
        qty: f64,
        depth: usize,
    ) -> Result<f64, ProtocolError> {
        if qty <= QUANTITY_TOL || depth > MAX_DEPTH {
            return Ok(0.0);
        }
        let lane = (provider.clone(), to.clone());
        let Some(edge) = self.net.edges.get(&lane) else {
            return Ok(0.0);
        };
        if !self.net.edge_usable(&lane) || !edge.unit_cost.contains_key(k) {
            return Ok(0.0);
        }
        let residual = (edge.capacity - self.plan.edge_total(provider, to)).max(0.0);
        let want = qty.min(residual);
        if want <= QUANTITY_TOL {
            return Ok(0.0);
        }
        let draw = want.min(self.inventory(provider, k));
        let mut covered = draw;
        if want - covered > QUANTITY_TOL && self.producible(provider, k) {
            let room = (self.net.effective_production_capacity(provider)
                - self.plan.produced_total(provider))
            .max(0.0);
            let goal = (want - covered).min(room);
            if goal > QUANTITY_TOL {
                covered += self.produce_extra(provider, k, goal, depth)?;
            }
        }
        if want - covered > QUANTITY_TOL {
            covered += self.acquire(provider, k, want - covered, depth + 1)?;
        }
        if covered <= QUANTITY_TOL {
            return Ok(0.0);
        }
        if draw > QUANTITY_TOL {
            self.add_inventory(provider, k, -draw);
        }
        self.change_flow(provider, to, k, covered);
        Ok(covered)
    }

    /// Raises a provider's production of one product by up to `goal`,
    /// reserving component stock and acquiring what is missing upstream.
    /// Components acquired beyond the achievable rate are parked in
    /// storage or their inbound flows are cancelled again. Returns the
    /// extra production committed.
    fn produce_extra(
        &mut self,
        v: &VertexId,
        k: &ProductId,
        goal: f64,
        depth: usize,
    ) -> Result<f64, ProtocolError> {
        let comps: Vec<(ProductId, f64)> = self
            .net
            .components_of(k)
            .map(|(c, r)| (c.clone(), r))
            .collect();
        let mut feasible = goal;
        let mut sourced: Vec<(ProductId, f64, f64)> = Vec::new();
        for (c, r) in &comps {
            if feasible <= QUANTITY_TOL {
                break;
            }
            let need = r * feasible;
            let reserve = need.min(self.inventory(v, c));
            let missing = need - reserve;
            let got = if missing > QUANTITY_TOL {
                self.acquire(v, c, missing, depth + 1)?
            } else {
                0.0
            };
            feasible = feasible.min((reserve + got) / r);
            sourced.push((c.clone(), *r, got));
        }
        let extra = if feasible > QUANTITY_TOL {
            feasible
        } else {
            0.0
        };
        for (c, r, got) in sourced {
            let used = r * extra;
            let consume_acq = got.min(used);
            let consume_stock = used - consume_acq;
            if consume_stock > QUANTITY_TOL {
                self.add_inventory(v, &c, -consume_stock);
            }
            let leftover = got - consume_acq;
            if leftover > QUANTITY_TOL {
                let park = leftover.min(self.holding_room(v, &c));
                if park > QUANTITY_TOL {
                    self.add_inventory(v, &c, park);
                }
                let rest = leftover - park;
                if rest > QUANTITY_TOL {
                    let cut = self.cut_inbound(v, &c, rest, depth + 1)?;
                    if rest - cut > QUANTITY_TOL {
                        return Err(ProtocolError::Patch {
                            vertex: v.clone(),
                            product: c,
                            quantity: rest - cut,
                        });
                    }
                }
            }
        }
        if extra > 0.0 {
            let made = self.plan.produced_at(v, k);
            self.set_produced(v, k, made + extra);
        }
        Ok(extra)
    }

    /// Sources `qty` of a product for `buyer` by conversing with its known
    /// upstream partners and fulfilling whatever they are awarded. Returns
    /// the amount that actually arrived.
    fn acquire(
        &mut self,
        buyer: &VertexId,
        k: &ProductId,
        qty: f64,
        depth: usize,
    ) -> Result<f64, ProtocolError> {
        if qty <= QUANTITY_TOL || depth > MAX_DEPTH {
            return Ok(0.0);
        }
        let buyer_id = AgentId::Vertex(buyer.clone());
        let Ok(agent) = self.agents.agent(&buyer_id) else {
            return Ok(0.0);
        };
        let ups: BTreeSet<AgentId> = agent
            .environment
            .upstream
            .get(k)
            .map(|s| {
                s.iter()
                    .filter(|u| self.net.edge_usable(&((*u).clone(), buyer.clone())))
                    .cloned()
                    .map(AgentId::Vertex)
                    .collect()
            })
            .unwrap_or_default();
        let mut needs: FlowVector = BTreeMap::new();
        needs.insert((buyer.clone(), k.clone()), qty);
        let request = Request {
            from: buyer_id.clone(),
            needs,
            requirements: BTreeMap::new(),
        };
        let alloc = self.converse(&buyer_id, &request, &ups)?;
        let mut got = 0.0;
        for (rid, vector) in alloc {
            let AgentId::Vertex(up) = rid else {
                continue;
            };
            for ((j, kk), q) in vector {
                if &j != buyer || &kk != k {
                    continue;
                }
                got += self.fulfill(&up, buyer, k, q, depth + 1)?;
            }
        }
        Ok(got)
    }
}

// ---------------------------------------------------------------------------
// Recovery drivers
// ---------------------------------------------------------------------------

fn recover_vertex_loss(
    ctx: &mut Ctx,
    vertex: &VertexId,
    event: &DisruptionEvent,
    unrecovered: &mut BTreeMap<ProductId, f64>,
) -> Result<(), ProtocolError> {
    let dead = AgentId::Vertex(vertex.clone());
    let conversation = match ctx.agents.agent(&dead) {
        Ok(agent) => make_request(agent, event),
        Err(_) => None,
    };
    // sever inbound commitments while their lanes still exist, pushing the
    // surplus back onto the senders
    let inbound: Vec<(VertexId, ProductId, f64)> = ctx
        .plan
        .flows
        .iter()
        .filter(|((_, t, _), _)| t == vertex)
        .map(|((f, _, k), &q)| (f.clone(), k.clone(), q))
        .collect();
    for (from, k, q) in inbound {
        ctx.change_flow(&from, vertex, &k, -q);
        ctx.fix_source_surplus(&from, &k, q, 0)?;
    }
    // strike the lost vertex's own rows from the ledger
    let outbound: Vec<(VertexId, ProductId, f64)> = ctx
        .plan
        .flows
        .iter()
        .filter(|((f, _, _), _)| f == vertex)
        .map(|((_, t, k), &q)| (t.clone(), k.clone(), q))
        .collect();
    for (to, k, _) in &outbound {
        ctx.plan
            .flows
            .remove(&(vertex.clone(), to.clone(), k.clone()));
    }
    ctx.plan.produced.retain(|(v, _), _| v != vertex);
    ctx.plan.inventory.retain(|(v, _), _| v != vertex);
    ctx.plan.satisfied.retain(|(v, _), _| v != vertex);
    ctx.plan.shortfall.retain(|(v, _), _| v != vertex);
    ctx.plan.line_open.remove(vertex);
    ctx.plan
        .edge_used
        .retain(|(f, t)| f != vertex && t != vertex);
    if ctx.agents.agents.contains_key(&dead) {
        ctx.agents.remove_from_service(&dead)?;
    }
    let mut deficits: BTreeMap<(VertexId, ProductId), f64> = BTreeMap::new();
    for (to, k, q) in outbound {
        *deficits.entry((to, k)).or_default() += q;
    }
    let orphaned: Vec<(VertexId, ProductId)> = deficits.keys().cloned().collect();
    for (to, k) in &orphaned {
        ctx.sync_vertex_flow_state(to, k);
    }
    let alloc = match conversation {
        Some((request, recipients)) => ctx.converse(&dead, &request, &recipients)?,
        None => BTreeMap::new(),
    };
    let mut delivered: BTreeMap<(VertexId, ProductId), f64> = BTreeMap::new();
    for (rid, vector) in alloc {
        let AgentId::Vertex(provider) = rid else {
            continue;
        };
        for ((j, k), q) in vector {
            let d = ctx.fulfill(&provider, &j, &k, q, 0)?;
            *delivered.entry((j, k)).or_default() += d;
        }
    }
    for ((j, k), need) in deficits {
        let gap = need
            - delivered
                .get(&(j.clone(), k.clone()))
                .copied()
                .unwrap_or(0.0);
        if gap > QUANTITY_TOL {
            ctx.settle_deficit(&j, &k, gap, 0)?;
            *unrecovered.entry(k).or_default() += gap;
        }
    }
    Ok(())
}

fn recover_edge_loss(
    ctx: &mut Ctx,
    key: &EdgeKey,
    event: &DisruptionEvent,
    unrecovered: &mut BTreeMap<ProductId, f64>,
) -> Result<(), ProtocolError> {
    let lane_id = AgentId::Transport(key.clone());
    let conversation = match ctx.agents.agent(&lane_id) {
        Ok(agent) => make_request(agent, event),
        Err(_) => None,
    };
    let lost: Vec<(ProductId, f64)> = ctx.plan.edge_flows(&key.0, &key.1).into_iter().collect();
    for (k, q) in &lost {
        ctx.change_flow(&key.0, &key.1, k, -q);
        ctx.fix_source_surplus(&key.0, k, *q, 0)?;
    }
    if ctx.agents.agents.contains_key(&lane_id) {
        ctx.agents.remove_from_service(&lane_id)?;
    }
    let alloc = match conversation {
        Some((request, recipients)) => ctx.converse(&lane_id, &request, &recipients)?,
        None => BTreeMap::new(),
    };
    let mut delivered: BTreeMap<(VertexId, ProductId), f64> = BTreeMap::new();
    for (rid, vector) in alloc {
        let AgentId::Transport((from, _)) = rid else {
            continue;
        };
        for ((j, k), q) in vector {
            let d = ctx.fulfill(&from, &j, &k, q, 0)?;
            *delivered.entry((j, k)).or_default() += d;
        }
    }
    for (k, q) in lost {
        let gap = q - delivered
            .get(&(key.1.clone(), k.clone()))
            .copied()
            .unwrap_or(0.0);
        if gap > QUANTITY_TOL {
            ctx.settle_deficit(&key.1, &k, gap, 0)?;
            *unrecovered.entry(k).or_default() += gap;
        }
    }
    Ok(())
}

fn recover_new_demand(
    ctx: &mut Ctx,
    vertex: &VertexId,
    product: &ProductId,
    event: &DisruptionEvent,
    unrecovered: &mut BTreeMap<ProductId, f64>,
) -> Result<(), ProtocolError> {
    let cid = AgentId::Vertex(vertex.clone());
    // the customer learns its new demand level first
    let demand = ctx
        .net
        .vertices
        .get(vertex)
        .and_then(|v| v.demand.get(product))
        .copied();
    if let Some(d) = demand {
        ctx.agents
            .agent_mut(&cid)?
            .update_knowledge(KnowledgeChange::SetDemand {
                product: product.clone(),
                demand: d,
            })?;
    }
    let conversation = make_request(ctx.agents.agent(&cid)?, event);
    let Some((request, recipients)) = conversation else {
        return Ok(());
    };
    let deficit = request
        .needs
        .get(&(vertex.clone(), product.clone()))
        .copied()
        .unwrap_or(0.0);
    let alloc = ctx.converse(&cid, &request, &recipients)?;
    let mut delivered = 0.0;
    for (rid, vector) in alloc {
        let AgentId::Vertex(provider) = rid else {
            continue;
        };
        for ((j, k), q) in vector {
            if &j != vertex || &k != product {
                continue;
            }
            delivered += ctx.fulfill(&provider, vertex, product, q, 0)?;
        }
    }
    let sat = ctx.plan.satisfied_at(vertex, product);
    ctx.set_satisfied(vertex, product, sat + delivered);
    let gap = deficit - delivered;
    if gap > QUANTITY_TOL {
        *unrecovered.entry(product.clone()).or_default() += gap;
    }
    Ok(())
}

/// Runs the distributed recovery for one disruption: applies the event,
/// has the affected agent converse with its peers, patches the plan with
/// the agreed replacements, and settles whatever could not be replaced
/// according to the fallback policy. On success the world is advanced to
/// the disrupted network and the final plan, with every agent's knowledge
/// refreshed.
pub fn run_recovery(
    world: &mut World,
    event: &DisruptionEvent,
    cfg: &ProtocolConfig,
) -> Result<RecoveryOutcome, ProtocolError> {
    let disrupted = apply_disruption(&world.net, event)?;
    let mut plan = world.plan.clone();
    let mut log = MessageLog::default();
    let mut unrecovered: BTreeMap<ProductId, f64> = BTreeMap::new();
    let reporter = match event {
        DisruptionEvent::VertexLoss { vertex } => AgentId::Vertex(vertex.clone()),
        DisruptionEvent::NewDemand { vertex, .. } => AgentId::Vertex(vertex.clone()),
        DisruptionEvent::EdgeLoss { edges } => {
            let mut keys = edges.clone();
            keys.sort();
            AgentId::Transport(
                keys.into_iter()
                    .next()
                    .unwrap_or_else(|| (VertexId::new(""), VertexId::new(""))),
            )
        }
    };
    {
        let mut ctx = Ctx {
            net: &disrupted,
            agents: &mut world.agents,
            plan: &mut plan,
            log: &mut log,
            solver: &cfg.solver,
        };
        match event {
            DisruptionEvent::VertexLoss { vertex } => {
                recover_vertex_loss(&mut ctx, vertex, event, &mut unrecovered)?;
            }
            DisruptionEvent::EdgeLoss { edges } => {
                let mut keys = edges.clone();
                keys.sort();
                keys.dedup();
                for key in &keys {
                    recover_edge_loss(&mut ctx, key, event, &mut unrecovered)?;
                }
            }
            DisruptionEvent::NewDemand {
                vertex, product, ..
            } => {
                recover_new_demand(&mut ctx, vertex, product, event, &mut unrecovered)?;
            }
        }
    }
    plan.prune();
    plan.edge_used = plan
        .flows
        .keys()
        .map(|(i, j, _)| (i.clone(), j.clone()))
        .collect();
    plan.line_open = plan.produced.keys().map(|(v, _)| v.clone()).collect();
    let residual = max_balance_residual(&disrupted, &plan);
    if residual > 1e-6 {
        return Err(ProtocolError::Unbalanced { residual });
    }
    unrecovered.retain(|_, q| *q > QUANTITY_TOL);
    let status = if unrecovered.is_empty() {
        RecoveryStatus::Recovered
    } else {
        match cfg.fallback {
            FallbackPolicy::CentralizedReplan => {
                let summary = unrecovered
                    .iter()
                    .map(|(k, q)| format!("{k}={q:.3}"))
                    .collect::<Vec<_>>()
                    .join(",");
                log.push(MessageBody::FallbackRequest {
                    from: reporter.clone(),
                    reason: format!("unreplaced: {summary}"),
                });
                let penalties = cfg
                    .replan_penalties
                    .clone()
                    .unwrap_or_else(|| ReplanPenalties::from_network(&disrupted));
                let (replanned, _) =
                    planner::replan(&disrupted, &world.plan, &penalties, &cfg.solver)?;
                plan = replanned;
                RecoveryStatus::FellBackToCentralized
            }
            FallbackPolicy::AcceptShortfall => RecoveryStatus::PartiallyRecovered,
        }
    };
    world.net = disrupted;
    world.plan = plan.clone();
    for agent in world.agents.agents.values_mut() {
        refresh_flow_knowledge(agent, &world.net, &world.plan);
    }
    Ok(RecoveryOutcome {
        status,
        plan,
        log,
        unrecovered,
    })
}
