//! On-disk JSON schema for networks, scenarios and plans.
//!
//! A network file has five sections. Parameter fields use the planning
//! symbols directly:
//!
//! ```json
//! {
//!   "products": [ { "id": "raw_beef", "name": "RawBeef" } ],
//!   "vertices": [ {
//!       "id": "T1", "kind": "tier_supplier",
//!       "p_bar": 120.0, "phi": 4.0, "rho_V": 30.0,
//!       "e":   { "raw_beef": 3.2 },
//!       "h":   { "raw_beef": 0.1 },
//!       "I0":  { "raw_beef": 0.0 },
//!       "inventory_capacity": { "raw_beef": 50.0 },
//!       "d":     { "beef_patty": 20.0 },
//!       "rho_d": { "beef_patty": 50.0 }
//!   } ],
//!   "edges": [ {
//!       "from": "T1", "to": "O1",
//!       "q": 60.0, "f": 1.0, "rho_E": 8.0,
//!       "c": { "raw_beef": 2.1 }
//!   } ],
//!   "bom": [ { "component": "raw_beef", "product": "beef_patty", "r": 1.0 } ],
//!   "params": { "description": "optional free-form metadata" }
//! }
//! ```
//!
//! Per vertex: `p_bar` production capacity, `phi` line-opening cost, `e`
//! unit production costs (its producible products), `h` unit holding costs
//! (its holdable products), `I0` initial stock (keys must appear in `h`),
//! `d`/`rho_d` demand and shortfall penalty (customers), `rho_V` the
//! replan status-change penalty. Per edge: `q` shared capacity, `f` fixed
//! use cost, `c` unit transport costs (its carriable products), `rho_E` the
//! replan status-change penalty. `r` is the units of `component` consumed
//! per unit of `product`. Omitted numeric fields default to zero; a missing
//! `rho_d` entry for a demanded product defaults to zero penalty. The
//! optional `disabled` flags let a disrupted network round-trip through a
//! file.
//!
//! Scenario files hold a single disruption event, tagged by `type`:
//! `{"type": "vertex_loss", "vertex": "O1"}`,
//! `{"type": "edge_loss", "edges": [["T4", "O3"]]}` or
//! `{"type": "new_demand", "vertex": "C5", "product": "beef_patty",
//! "added": 5.0}`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::disruption::DisruptionEvent;
use super::network::{
    validate_network, Edge, EntityKind, Holding, NetworkViolation, Product, ProductId,
    SupplyNetwork, Vertex, VertexId,
};
use super::plan::FlowPlan;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("failed to read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("network is not well formed:\n{}", format_violations(.0))]
    Invalid(Vec<NetworkViolation>),
    #[error("duplicate {kind} {id}")]
    Duplicate { kind: &'static str, id: String },
}

fn format_violations(violations: &[NetworkViolation]) -> String {
    violations
        .iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkFile {
    pub products: Vec<ProductRecord>,
    pub vertices: Vec<VertexRecord>,
    pub edges: Vec<EdgeRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bom: Vec<BomRecord>,
    #[serde(default, skip_serializing_if = "ParamsRecord::is_empty")]
    pub params: ParamsRecord,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProductRecord {
    pub id: ProductId,
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VertexRecord {
    pub id: VertexId,
    pub kind: EntityKind,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub p_bar: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub phi: f64,
    #[serde(rename = "rho_V", default, skip_serializing_if = "is_zero")]
    pub rho_v: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub e: BTreeMap<ProductId, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub h: BTreeMap<ProductId, f64>,
    #[serde(rename = "I0", default, skip_serializing_if = "BTreeMap::is_empty")]
    pub i0: BTreeMap<ProductId, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub inventory_capacity: BTreeMap<ProductId, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub d: BTreeMap<ProductId, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub rho_d: BTreeMap<ProductId, f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub disabled: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub from: VertexId,
    pub to: VertexId,
    pub q: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub f: f64,
    #[serde(rename = "rho_E", default, skip_serializing_if = "is_zero")]
    pub rho_e: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub c: BTreeMap<ProductId, f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub disabled: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BomRecord {
    pub component: ProductId,
    pub product: ProductId,
    pub r: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParamsRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl ParamsRecord {
    fn is_empty(&self) -> bool {
        self.description.is_none()
    }
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl NetworkFile {
    /// Builds and validates the in-memory network; all structural violations
    /// are reported together.
    pub fn into_network(self) -> Result<SupplyNetwork, SchemaError> {
        let mut net = SupplyNetwork {
            description: self.params.description,
            ..SupplyNetwork::default()
        };
        for p in self.products {
            let name = p.name.unwrap_or_else(|| p.id.0.clone());
            let prev = net.products.insert(
                p.id.clone(),
                Product {
                    id: p.id.clone(),
                    name,
                },
            );
            if prev.is_some() {
                return Err(SchemaError::Duplicate {
                    kind: "product",
                    id: p.id.0,
                });
            }
        }
        for v in self.vertices {
            let mut vertex = Vertex::new(v.id.0.clone(), v.kind);
            vertex.production_capacity = v.p_bar;
            vertex.line_opening_cost = v.phi;
            vertex.change_penalty = v.rho_v;
            vertex.production_cost = v.e;
            vertex.disabled = v.disabled;
            for (k, unit_cost) in v.h {
                vertex.holding.insert(
                    k.clone(),
                    Holding {
                        initial: v.i0.get(&k).copied().unwrap_or(0.0),
                        unit_cost,
                        capacity: v.inventory_capacity.get(&k).copied(),
                    },
                );
            }
            // I0 entries without a holding entry get one with zero cost, so
            // stock can be declared without pricing it.
            for (k, initial) in v.i0 {
                vertex.holding.entry(k.clone()).or_insert(Holding {
                    initial,
                    unit_cost: 0.0,
                    capacity: v.inventory_capacity.get(&k).copied(),
                });
            }
            for (k, quantity) in v.d {
                let penalty = v.rho_d.get(&k).copied().unwrap_or(0.0);
                vertex.demand.insert(
                    k,
                    super::network::Demand {
                        quantity,
                        shortfall_penalty: penalty,
                    },
                );
            }
            if net.vertices.insert(v.id.clone(), vertex).is_some() {
                return Err(SchemaError::Duplicate {
                    kind: "vertex",
                    id: v.id.0,
                });
            }
        }
        for e in self.edges {
            let edge = Edge {
                from: e.from.clone(),
                to: e.to.clone(),
                capacity: e.q,
                fixed_cost: e.f,
                unit_cost: e.c,
                change_penalty: e.rho_e,
                disabled: e.disabled,
            };
            if net.edges.insert(edge.key(), edge).is_some() {
                return Err(SchemaError::Duplicate {
                    kind: "edge",
                    id: format!("{}->{}", e.from, e.to),
                });
            }
        }
        for b in self.bom {
            let key = (b.component.clone(), b.product.clone());
            if net.bom.insert(key, b.r).is_some() {
                return Err(SchemaError::Duplicate {
                    kind: "bom entry",
                    id: format!("{}->{}", b.component, b.product),
                });
            }
        }
        let violations = validate_network(&net);
        if violations.is_empty() {
            Ok(net)
        } else {
            Err(SchemaError::Invalid(violations))
        }
    }

    pub fn from_network(net: &SupplyNetwork) -> Self {
        NetworkFile {
            products: net
                .products
                .values()
                .map(|p| ProductRecord {
                    id: p.id.clone(),
                    name: Some(p.name.clone()),
                })
                .collect(),
            vertices: net
                .vertices
                .values()
                .map(|v| VertexRecord {
                    id: v.id.clone(),
                    kind: v.kind,
                    p_bar: v.production_capacity,
                    phi: v.line_opening_cost,
                    rho_v: v.change_penalty,
                    e: v.production_cost.clone(),
                    h: v.holding
                        .iter()
                        .map(|(k, h)| (k.clone(), h.unit_cost))
                        .collect(),
                    i0: v
                        .holding
                        .iter()
                        .filter(|(_, h)| h.initial != 0.0)
                        .map(|(k, h)| (k.clone(), h.initial))
                        .collect(),
                    inventory_capacity: v
                        .holding
                        .iter()
                        .filter_map(|(k, h)| h.capacity.map(|c| (k.clone(), c)))
                        .collect(),
                    d: v.demand
                        .iter()
                        .map(|(k, d)| (k.clone(), d.quantity))
                        .collect(),
                    rho_d: v
                        .demand
                        .iter()
                        .map(|(k, d)| (k.clone(), d.shortfall_penalty))
                        .collect(),
                    disabled: v.disabled,
                })
                .collect(),
            edges: net
                .edges
                .values()
                .map(|e| EdgeRecord {
                    from: e.from.clone(),
                    to: e.to.clone(),
                    q: e.capacity,
                    f: e.fixed_cost,
                    rho_e: e.change_penalty,
                    c: e.unit_cost.clone(),
                    disabled: e.disabled,
                })
                .collect(),
            bom: net
                .bom
                .iter()
                .map(|((component, product), &r)| BomRecord {
                    component: component.clone(),
                    product: product.clone(),
                    r,
                })
                .collect(),
            params: ParamsRecord {
                description: net.description.clone(),
            },
        }
    }
}

/// Loads and validates a network file.
pub fn load_network(path: impl AsRef<Path>) -> Result<SupplyNetwork, SchemaError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SchemaError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let file: NetworkFile = serde_json::from_str(&text).map_err(|source| SchemaError::Json {
        path: path.display().to_string(),
        source,
    })?;
    file.into_network()
}

/// Serializes a network to pretty-printed JSON with stable ordering.
pub fn network_to_json(net: &SupplyNetwork) -> String {
    let file = NetworkFile::from_network(net);
    let mut out = serde_json::to_string_pretty(&file).expect("network serializes");
    out.push('\n');
    out
}

/// Writes a network file.
pub fn save_network(net: &SupplyNetwork, path: impl AsRef<Path>) -> Result<(), SchemaError> {
    let path = path.as_ref();
    std::fs::write(path, network_to_json(net)).map_err(|source| SchemaError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Loads a disruption scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<DisruptionEvent, SchemaError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SchemaError::Read {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| SchemaError::Json {
        path: path.display().to_string(),
        source,
    })
}

/// Flat, serializable form of a [`FlowPlan`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PlanFile {
    pub flows: Vec<FlowRecord>,
    pub edges_used: Vec<(VertexId, VertexId)>,
    pub satisfied: Vec<VertexProductQty>,
    pub produced: Vec<VertexProductQty>,
    pub lines_open: Vec<VertexId>,
    pub inventory: Vec<VertexProductQty>,
    pub shortfall: Vec<VertexProductQty>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowRecord {
    pub from: VertexId,
    pub to: VertexId,
    pub product: ProductId,
    pub qty: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VertexProductQty {
    pub vertex: VertexId,
    pub product: ProductId,
    pub qty: f64,
}

impl PlanFile {
    pub fn from_plan(plan: &FlowPlan) -> Self {
        let vpq = |m: &BTreeMap<(VertexId, ProductId), f64>| {
            m.iter()
                .map(|((vertex, product), &qty)| VertexProductQty {
                    vertex: vertex.clone(),
                    product: product.clone(),
                    qty,
                })
                .collect()
        };
        PlanFile {
            flows: plan
                .flows
                .iter()
                .map(|((from, to, product), &qty)| FlowRecord {
                    from: from.clone(),
                    to: to.clone(),
                    product: product.clone(),
                    qty,
                })
                .collect(),
            edges_used: plan.edge_used.iter().cloned().collect(),
            satisfied: vpq(&plan.satisfied),
            produced: vpq(&plan.produced),
            lines_open: plan.line_open.iter().cloned().collect(),
            inventory: vpq(&plan.inventory),
            shortfall: vpq(&plan.shortfall),
        }
    }

    pub fn into_plan(self) -> FlowPlan {
        let mut plan = FlowPlan::default();
        for f in self.flows {
            plan.flows.insert((f.from, f.to, f.product), f.qty);
        }
        plan.edge_used = self.edges_used.into_iter().collect();
        for s in self.satisfied {
            plan.satisfied.insert((s.vertex, s.product), s.qty);
        }
        for p in self.produced {
            plan.produced.insert((p.vertex, p.product), p.qty);
        }
        plan.line_open = self.lines_open.into_iter().collect();
        for i in self.inventory {
            plan.inventory.insert((i.vertex, i.product), i.qty);
        }
        for s in self.shortfall {
            plan.shortfall.insert((s.vertex, s.product), s.qty);
        }
        plan
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "products": [
            {"id": "part", "name": "Part"},
            {"id": "widget", "name": "Widget"}
        ],
        "vertices": [
            {"id": "S", "kind": "tier_supplier", "p_bar": 20, "phi": 3,
             "rho_V": 5, "e": {"part": 1.0}},
            {"id": "O", "kind": "oem", "p_bar": 20, "phi": 5,
             "e": {"widget": 2.0}, "h": {"part": 0.2}, "I0": {"part": 4}},
            {"id": "C", "kind": "customer", "d": {"widget": 4},
             "rho_d": {"widget": 25}}
        ],
        "edges": [
            {"from": "S", "to": "O", "q": 10, "f": 2, "rho_E": 7,
             "c": {"part": 0.5}},
            {"from": "O", "to": "C", "q": 10, "f": 2, "c": {"widget": 1.5}}
        ],
        "bom": [
            {"component": "part", "product": "widget", "r": 1.0}
        ],
        "params": {"description": "three-vertex chain"}
    }"#;

    #[test]
    fn sample_file_parses_and_validates() {
        let file: NetworkFile = serde_json::from_str(SAMPLE).unwrap();
        let net = file.into_network().unwrap();
        assert_eq!(net.products.len(), 2);
        assert_eq!(net.vertices.len(), 3);
        assert_eq!(net.edges.len(), 2);
        assert_eq!(net.description.as_deref(), Some("three-vertex chain"));
        let o = &net.vertices[&VertexId::from("O")];
        assert_eq!(o.holding[&ProductId::from("part")].initial, 4.0);
        let c = &net.vertices[&VertexId::from("C")];
        assert_eq!(c.demand[&ProductId::from("widget")].shortfall_penalty, 25.0);
    }

    #[test]
    fn network_round_trips_through_json() {
        let file: NetworkFile = serde_json::from_str(SAMPLE).unwrap();
        let net = file.into_network().unwrap();
        let json = network_to_json(&net);
        let reparsed: NetworkFile = serde_json::from_str(&json).unwrap();
        let net2 = reparsed.into_network().unwrap();
        assert_eq!(net, net2);
        // And the serialization itself is stable.
        assert_eq!(json, network_to_json(&net2));
    }

    #[test]
    fn invalid_network_reports_all_violations() {
        let bad = SAMPLE.replace("\"q\": 10, \"f\": 2, \"rho_E\": 7", "\"q\": -1, \"f\": 2");
        let file: NetworkFile = serde_json::from_str(&bad).unwrap();
        match file.into_network() {
            Err(SchemaError::Invalid(violations)) => {
                assert!(!violations.is_empty());
            }
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_vertex_is_rejected() {
        let dup = SAMPLE.replace(
            "{\"id\": \"S\", \"kind\": \"tier_supplier\"",
            "{\"id\": \"C\", \"kind\": \"tier_supplier\"",
        );
        let file: NetworkFile = serde_json::from_str(&dup).unwrap();
        assert!(matches!(
            file.into_network(),
            Err(SchemaError::Duplicate { kind: "vertex", .. })
        ));
    }

    #[test]
    fn scenario_events_round_trip() {
        let events = [
            DisruptionEvent::VertexLoss {
                vertex: VertexId::from("O1"),
            },
            DisruptionEvent::EdgeLoss {
                edges: vec![(VertexId::from("T4"), VertexId::from("O3"))],
            },
            DisruptionEvent::NewDemand {
                vertex: VertexId::from("C5"),
                product: ProductId::from("beef_patty"),
                added: 5.0,
            },
        ];
        for event in events {
            let json = serde_json::to_string(&event).unwrap();
            let back: DisruptionEvent = serde_json::from_str(&json).unwrap();
            assert_eq!(event, back);
        }
    }

    #[test]
    fn plan_file_round_trips() {
        let mut plan = FlowPlan::default();
        plan.flows.insert(
            (
                VertexId::from("A"),
                VertexId::from("B"),
                ProductId::from("widget"),
            ),
            3.5,
        );
        plan.edge_used
            .insert((VertexId::from("A"), VertexId::from("B")));
        plan.produced
            .insert((VertexId::from("A"), ProductId::from("widget")), 3.5);
        plan.line_open.insert(VertexId::from("A"));
        let file = PlanFile::from_plan(&plan);
        let json = serde_json::to_string_pretty(&file).unwrap();
        let back: PlanFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_plan(), plan);
    }
}
