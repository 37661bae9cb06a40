//! Supply network: products, vertices, directed transport edges and the bill
//! of materials.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Identifier of a product type.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProductId(pub String);

impl ProductId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }
}

impl fmt::Display for ProductId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ProductId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// Identifier of a network vertex (supplier, manufacturer, distributor or
/// customer).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(pub String);

impl VertexId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for VertexId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// Directed edge key `(from, to)`.
pub type EdgeKey = (VertexId, VertexId);

/// A product type: symbolic id plus a human label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Product {
    pub id: ProductId,
    pub name: String,
}

/// Role of a vertex in the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    TierSupplier,
    Oem,
    Distributor,
    Customer,
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntityKind::TierSupplier => write!(f, "tier supplier"),
            EntityKind::Oem => write!(f, "OEM"),
            EntityKind::Distributor => write!(f, "distributor"),
            EntityKind::Customer => write!(f, "customer"),
        }
    }
}

/// Demand for one product at one vertex: quantity plus the per-unit penalty
/// for leaving it unsatisfied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Demand {
    pub quantity: f64,
    pub shortfall_penalty: f64,
}

/// Inventory parameters for one product at one vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Holding {
    /// Stock on hand at the start of the period.
    pub initial: f64,
    /// Cost per unit held at the end of the period.
    pub unit_cost: f64,
    /// Optional storage limit.
    pub capacity: Option<f64>,
}

/// A network vertex with all of its planning parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub id: VertexId,
    pub kind: EntityKind,
    /// Total production capacity across products (0 for non-producers).
    pub production_capacity: f64,
    /// Fixed cost of opening the production line.
    pub line_opening_cost: f64,
    /// Per-unit production cost, keyed by producible product.
    pub production_cost: BTreeMap<ProductId, f64>,
    /// Inventory parameters, keyed by holdable product.
    pub holding: BTreeMap<ProductId, Holding>,
    /// Demand entries (customers only).
    pub demand: BTreeMap<ProductId, Demand>,
    /// Penalty for changing this vertex's line-open status during a replan.
    pub change_penalty: f64,
    /// Set when a disruption removed this vertex from service.
    pub disabled: bool,
}

impl Vertex {
    pub fn new(id: impl Into<String>, kind: EntityKind) -> Self {
        Self {
            id: VertexId::new(id),
            kind,
            production_capacity: 0.0,
            line_opening_cost: 0.0,
            production_cost: BTreeMap::new(),
            holding: BTreeMap::new(),
            demand: BTreeMap::new(),
            change_penalty: 0.0,
            disabled: false,
        }
    }

    /// Products this vertex can manufacture.
    pub fn producible(&self) -> impl Iterator<Item = &ProductId> {
        self.production_cost.keys()
    }

    /// Products this vertex can hold in inventory.
    pub fn holdable(&self) -> impl Iterator<Item = &ProductId> {
        self.holding.keys()
    }
}

/// A directed transport edge with mixed-product capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: VertexId,
    pub to: VertexId,
    /// Capacity shared across all products on this edge.
    pub capacity: f64,
    /// Fixed cost paid when the edge is used at all.
    pub fixed_cost: f64,
    /// Per-unit transport cost, keyed by carriable product.
    pub unit_cost: BTreeMap<ProductId, f64>,
    /// Penalty for changing this edge's use status during a replan.
    pub change_penalty: f64,
    /// Set when a disruption removed this edge from service.
    pub disabled: bool,
}

impl Edge {
    pub fn key(&self) -> EdgeKey {
        (self.from.clone(), self.to.clone())
    }

    /// Products this edge can carry.
    pub fn carriable(&self) -> impl Iterator<Item = &ProductId> {
        self.unit_cost.keys()
    }
}

/// The full network: graph, products and bill of materials.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SupplyNetwork {
    pub products: BTreeMap<ProductId, Product>,
    pub vertices: BTreeMap<VertexId, Vertex>,
    pub edges: BTreeMap<EdgeKey, Edge>,
    /// `bom[(component, product)] = r`: units of `component` consumed per
    /// unit of `product` manufactured.
    pub bom: BTreeMap<(ProductId, ProductId), f64>,
    /// Free-form description carried through the network file.
    pub description: Option<String>,
}

impl SupplyNetwork {
    pub fn edge(&self, from: &VertexId, to: &VertexId) -> Option<&Edge> {
        self.edges.get(&(from.clone(), to.clone()))
    }

    /// True when the edge and both endpoints are in service.
    pub fn edge_usable(&self, key: &EdgeKey) -> bool {
        self.edges.get(key).is_some_and(|e| !e.disabled)
            && self.vertices.get(&key.0).is_some_and(|v| !v.disabled)
            && self.vertices.get(&key.1).is_some_and(|v| !v.disabled)
    }

    /// Components consumed per unit of `product`, with their rates.
    pub fn components_of<'a>(
        &'a self,
        product: &'a ProductId,
    ) -> impl Iterator<Item = (&'a ProductId, f64)> + 'a {
        self.bom
            .iter()
            .filter(move |((_, p), _)| p == product)
            .map(|((component, _), &r)| (component, r))
    }

    /// Products that consume `component`, with their rates.
    pub fn products_using<'a>(
        &'a self,
        component: &'a ProductId,
    ) -> impl Iterator<Item = (&'a ProductId, f64)> + 'a {
        self.bom
            .iter()
            .filter(move |((c, _), _)| c == component)
            .map(|((_, product), &r)| (product, r))
    }

    /// Production capacity with disruptions applied.
    pub fn effective_production_capacity(&self, v: &VertexId) -> f64 {
        match self.vertices.get(v) {
            Some(vx) if !vx.disabled => vx.production_capacity,
            _ => 0.0,
        }
    }

    /// Initial inventory with disruptions applied (a lost vertex's stock is
    /// unreachable).
    pub fn effective_initial_inventory(&self, v: &VertexId, k: &ProductId) -> f64 {
        match self.vertices.get(v) {
            Some(vx) if !vx.disabled => vx.holding.get(k).map_or(0.0, |h| h.initial),
            _ => 0.0,
        }
    }

    /// Demand entries with disruptions applied (a lost vertex demands
    /// nothing).
    pub fn effective_demand<'a>(
        &'a self,
        v: &VertexId,
    ) -> impl Iterator<Item = (&'a ProductId, &'a Demand)> + 'a {
        self.vertices
            .get(v)
            .into_iter()
            .filter(|vx| !vx.disabled)
            .flat_map(|vx| vx.demand.iter())
    }

    /// Edges into `v`, in deterministic order.
    pub fn in_edges<'a>(&'a self, v: &'a VertexId) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.values().filter(move |e| &e.to == v)
    }

    /// Edges out of `v`, in deterministic order.
    pub fn out_edges<'a>(&'a self, v: &'a VertexId) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.values().filter(move |e| &e.from == v)
    }
}

/// One violation found by [`validate_network`]; names the entity and field.
#[derive(Debug, Clone, PartialEq)]
pub enum NetworkViolation {
    NegativeValue {
        entity: String,
        field: String,
        value: f64,
    },
    UnknownVertexInEdge {
        from: VertexId,
        to: VertexId,
        missing: VertexId,
    },
    SelfLoop {
        vertex: VertexId,
    },
    UnknownProduct {
        entity: String,
        product: ProductId,
    },
    BomCycle {
        products: Vec<ProductId>,
    },
    DemandOnNonCustomer {
        vertex: VertexId,
    },
    ProductionOnNonProducer {
        vertex: VertexId,
    },
    InitialInventoryExceedsCapacity {
        vertex: VertexId,
        product: ProductId,
    },
    EdgeKeyMismatch {
        key: EdgeKey,
        actual: EdgeKey,
    },
    VertexKeyMismatch {
        key: VertexId,
        actual: VertexId,
    },
}

impl fmt::Display for NetworkViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetworkViolation::NegativeValue {
                entity,
                field,
                value,
            } => write!(f, "{entity}: field {field} is negative ({value})"),
            NetworkViolation::UnknownVertexInEdge { from, to, missing } => {
                write!(f, "edge {from}->{to}: vertex {missing} does not exist")
            }
            NetworkViolation::SelfLoop { vertex } => {
                write!(f, "edge {vertex}->{vertex}: self-loops are not allowed")
            }
            NetworkViolation::UnknownProduct { entity, product } => {
                write!(f, "{entity}: product {product} is not declared")
            }
            NetworkViolation::BomCycle { products } => {
                let cycle: Vec<String> = products.iter().map(|p| p.0.clone()).collect();
                write!(f, "bill of materials is cyclic among: {}", cycle.join(", "))
            }
            NetworkViolation::DemandOnNonCustomer { vertex } => {
                write!(f, "vertex {vertex}: demand on a non-customer")
            }
            NetworkViolation::ProductionOnNonProducer { vertex } => {
                write!(
                    f,
                    "vertex {vertex}: production capacity on a vertex that is neither an OEM nor a tier supplier"
                )
            }
            NetworkViolation::InitialInventoryExceedsCapacity { vertex, product } => {
                write!(
                    f,
                    "vertex {vertex}: initial inventory of {product} exceeds its storage capacity"
                )
            }
            NetworkViolation::EdgeKeyMismatch { key, actual } => write!(
                f,
                "edge stored under ({}, {}) reports endpoints ({}, {})",
                key.0, key.1, actual.0, actual.1
            ),
            NetworkViolation::VertexKeyMismatch { key, actual } => {
                write!(f, "vertex stored under {key} reports id {actual}")
            }
        }
    }
}

/// Checks every structural invariant of the network and reports all
/// violations found (an empty report means the network is well formed).
pub fn validate_network(net: &SupplyNetwork) -> Vec<NetworkViolation> {
    let mut out = Vec::new();
    let require_nonneg = |entity: &str, field: &str, value: f64, out: &mut Vec<_>| {
        if value < 0.0 || !value.is_finite() {
            out.push(NetworkViolation::NegativeValue {
                entity: entity.to_string(),
                field: field.to_string(),
                value,
            });
        }
    };

    for (key, v) in &net.vertices {
        if key != &v.id {
            out.push(NetworkViolation::VertexKeyMismatch {
                key: key.clone(),
                actual: v.id.clone(),
            });
        }
        let entity = format!("vertex {}", v.id);
        require_nonneg(&entity, "p_bar", v.production_capacity, &mut out);
        require_nonneg(&entity, "phi", v.line_opening_cost, &mut out);
        require_nonneg(&entity, "rho_V", v.change_penalty, &mut out);
        for (k, &e) in &v.production_cost {
            require_nonneg(&entity, &format!("e[{k}]"), e, &mut out);
            if !net.products.contains_key(k) {
                out.push(NetworkViolation::UnknownProduct {
                    entity: entity.clone(),
                    product: k.clone(),
                });
            }
        }
        for (k, h) in &v.holding {
            require_nonneg(&entity, &format!("I0[{k}]"), h.initial, &mut out);
            require_nonneg(&entity, &format!("h[{k}]"), h.unit_cost, &mut out);
            if let Some(cap) = h.capacity {
                require_nonneg(&entity, &format!("inventory_capacity[{k}]"), cap, &mut out);
                if h.initial > cap {
                    out.push(NetworkViolation::InitialInventoryExceedsCapacity {
                        vertex: v.id.clone(),
                        product: k.clone(),
                    });
                }
            }
            if !net.products.contains_key(k) {
                out.push(NetworkViolation::UnknownProduct {
                    entity: entity.clone(),
                    product: k.clone(),
                });
            }
        }
        for (k, d) in &v.demand {
            require_nonneg(&entity, &format!("d[{k}]"), d.quantity, &mut out);
            require_nonneg(
                &entity,
                &format!("rho_d[{k}]"),
                d.shortfall_penalty,
                &mut out,
            );
            if !net.products.contains_key(k) {
                out.push(NetworkViolation::UnknownProduct {
                    entity: entity.clone(),
                    product: k.clone(),
                });
            }
            if d.quantity > 0.0 && v.kind != EntityKind::Customer {
                out.push(NetworkViolation::DemandOnNonCustomer {
                    vertex: v.id.clone(),
                });
            }
        }
        if v.production_capacity > 0.0
            && !matches!(v.kind, EntityKind::Oem | EntityKind::TierSupplier)
        {
            out.push(NetworkViolation::ProductionOnNonProducer {
                vertex: v.id.clone(),
            });
        }
    }
    // Deduplicate kind-level violations that fire once per entry.
    out.dedup();

    for (key, e) in &net.edges {
        if key != &e.key() {
            out.push(NetworkViolation::EdgeKeyMismatch {
                key: key.clone(),
                actual: e.key(),
            });
        }
        let entity = format!("edge {}->{}", e.from, e.to);
        if e.from == e.to {
            out.push(NetworkViolation::SelfLoop {
                vertex: e.from.clone(),
            });
        }
        for end in [&e.from, &e.to] {
            if !net.vertices.contains_key(end) {
                out.push(NetworkViolation::UnknownVertexInEdge {
                    from: e.from.clone(),
                    to: e.to.clone(),
                    missing: end.clone(),
                });
            }
        }
        require_nonneg(&entity, "q", e.capacity, &mut out);
        require_nonneg(&entity, "f", e.fixed_cost, &mut out);
        require_nonneg(&entity, "rho_E", e.change_penalty, &mut out);
        for (k, &c) in &e.unit_cost {
            require_nonneg(&entity, &format!("c[{k}]"), c, &mut out);
            if !net.products.contains_key(k) {
                out.push(NetworkViolation::UnknownProduct {
                    entity: entity.clone(),
                    product: k.clone(),
                });
            }
        }
    }

    for ((component, product), &r) in &net.bom {
        let entity = format!("bom {component}->{product}");
        require_nonneg(&entity, "r", r, &mut out);
        for k in [component, product] {
            if !net.products.contains_key(k) {
                out.push(NetworkViolation::UnknownProduct {
                    entity: entity.clone(),
                    product: k.clone(),
                });
            }
        }
    }
    if let Some(cycle) = bom_cycle(net) {
        out.push(NetworkViolation::BomCycle { products: cycle });
    }

    out
}

/// Kahn's algorithm over the component→product relation; returns the
/// products stuck in a cycle, if any.
fn bom_cycle(net: &SupplyNetwork) -> Option<Vec<ProductId>> {
    let mut indegree: BTreeMap<&ProductId, usize> = BTreeMap::new();
    for p in net.products.keys() {
        indegree.insert(p, 0);
    }
    for (component, product) in net.bom.keys() {
        if net.products.contains_key(component) && net.products.contains_key(product) {
            *indegree.entry(product).or_insert(0) += 1;
            indegree.entry(component).or_insert(0);
        }
    }
    let mut queue: Vec<&ProductId> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&p, _)| p)
        .collect();
    let mut removed = 0usize;
    while let Some(p) = queue.pop() {
        removed += 1;
        for (component, product) in net.bom.keys() {
            if component == p && net.products.contains_key(product) {
                let d = indegree.get_mut(product).expect("indegree entry exists");
                *d -= 1;
                if *d == 0 {
                    queue.push(product);
                }
            }
        }
    }
    if removed == indegree.len() {
        None
    } else {
        Some(
            indegree
                .into_iter()
                .filter(|(_, d)| *d > 0)
                .map(|(p, _)| p.clone())
                .collect(),
        )
    }
}
