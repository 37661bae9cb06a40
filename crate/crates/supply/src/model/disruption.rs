//! Disruption events and their application to a network.

use serde::{Deserialize, Serialize};

use super::network::{ProductId, SupplyNetwork, VertexId};
use super::plan::ModelError;

/// A single disruption hitting the network at the start of the period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DisruptionEvent {
    /// A set of transport lanes becomes unavailable.
    EdgeLoss { edges: Vec<(VertexId, VertexId)> },
    /// A vertex (with its production, inventory and incident lanes) becomes
    /// unavailable.
    VertexLoss { vertex: VertexId },
    /// A customer receives additional demand for one product.
    NewDemand {
        vertex: VertexId,
        product: ProductId,
        added: f64,
    },
}

impl DisruptionEvent {
    /// Short label used in reports and file names.
    pub fn label(&self) -> String {
        match self {
            DisruptionEvent::EdgeLoss { edges } => format!("edge-loss-{}", edges.len()),
            DisruptionEvent::VertexLoss { vertex } => format!("loss-{vertex}"),
            DisruptionEvent::NewDemand {
                vertex, product, ..
            } => format!("new-demand-{vertex}-{product}"),
        }
    }
}

/// Returns a copy of the network with the event applied; the original is
/// untouched. Losses only flip `disabled` flags, so applying the same loss
/// twice is a no-op.
pub fn apply_disruption(
    net: &SupplyNetwork,
    event: &DisruptionEvent,
) -> Result<SupplyNetwork, ModelError> {
    let mut out = net.clone();
    match event {
        DisruptionEvent::EdgeLoss { edges } => {
            for key in edges {
                let edge = out
                    .edges
                    .get_mut(key)
                    .ok_or_else(|| ModelError::UnknownEdge(key.0.clone(), key.1.clone()))?;
                edge.disabled = true;
            }
        }
        DisruptionEvent::VertexLoss { vertex } => {
            let v = out
                .vertices
                .get_mut(vertex)
                .ok_or_else(|| ModelError::UnknownVertex(vertex.clone()))?;
            v.disabled = true;
            for edge in out.edges.values_mut() {
                if &edge.from == vertex || &edge.to == vertex {
                    edge.disabled = true;
                }
            }
        }
        DisruptionEvent::NewDemand {
            vertex,
            product,
            added,
        } => {
            if !out.products.contains_key(product) {
                return Err(ModelError::UnknownProduct(product.clone()));
            }
            if !added.is_finite() || *added < 0.0 {
                return Err(ModelError::BadQuantity {
                    context: format!("new demand at {vertex} for {product}"),
                    value: *added,
                });
            }
            let v = out
                .vertices
                .get_mut(vertex)
                .ok_or_else(|| ModelError::UnknownVertex(vertex.clone()))?;
            if let Some(entry) = v.demand.get_mut(product) {
                entry.quantity += added;
            } else {
                // A brand-new product for this customer: price the shortfall
                // like its most urgent existing demand.
                let penalty = v
                    .demand
                    .values()
                    .map(|d| d.shortfall_penalty)
                    .fold(f64::NAN, f64::max);
                if penalty.is_nan() {
                    return Err(ModelError::NoDemand {
                        vertex: vertex.clone(),
                        product: product.clone(),
                    });
                }
                v.demand.insert(
                    product.clone(),
                    super::network::Demand {
                        quantity: *added,
                        shortfall_penalty: penalty,
                    },
                );
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::network::{Demand, Edge, EntityKind, Product, Vertex};
    use std::collections::BTreeMap;

    fn pid(s: &str) -> ProductId {
        ProductId::from(s)
    }
    fn vid(s: &str) -> VertexId {
        VertexId::from(s)
    }

    fn small_net() -> SupplyNetwork {
        let mut net = SupplyNetwork::default();
        net.products.insert(
            pid("widget"),
            Product {
                id: pid("widget"),
                name: "Widget".into(),
            },
        );
        let mut a = Vertex::new("A", EntityKind::Oem);
        a.production_capacity = 5.0;
        let b = Vertex::new("B", EntityKind::Distributor);
        let mut c = Vertex::new("C", EntityKind::Customer);
        c.demand.insert(
            pid("widget"),
            Demand {
                quantity: 3.0,
                shortfall_penalty: 9.0,
            },
        );
        for v in [a, b, c] {
            net.vertices.insert(v.id.clone(), v);
        }
        for (from, to) in [("A", "B"), ("B", "C")] {
            let e = Edge {
                from: vid(from),
                to: vid(to),
                capacity: 5.0,
                fixed_cost: 0.0,
                unit_cost: BTreeMap::new(),
                change_penalty: 0.0,
                disabled: false,
            };
            net.edges.insert(e.key(), e);
        }
        net
    }

    #[test]
    fn empty_edge_loss_changes_nothing() {
        let net = small_net();
        let out = apply_disruption(&net, &DisruptionEvent::EdgeLoss { edges: vec![] }).unwrap();
        assert_eq!(out, net);
    }

    #[test]
    fn vertex_loss_disables_vertex_and_incident_edges() {
        let net = small_net();
        let event = DisruptionEvent::VertexLoss { vertex: vid("B") };
        let out = apply_disruption(&net, &event).unwrap();
        assert!(out.vertices[&vid("B")].disabled);
        assert!(out.edges[&(vid("A"), vid("B"))].disabled);
        assert!(out.edges[&(vid("B"), vid("C"))].disabled);
        assert_eq!(out.effective_production_capacity(&vid("B")), 0.0);
        // Idempotent.
        let again = apply_disruption(&out, &event).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn new_demand_increments_existing_entry() {
        let net = small_net();
        let event = DisruptionEvent::NewDemand {
            vertex: vid("C"),
            product: pid("widget"),
            added: 2.5,
        };
        let out = apply_disruption(&net, &event).unwrap();
        assert_eq!(out.vertices[&vid("C")].demand[&pid("widget")].quantity, 5.5);
        // The original network is untouched.
        assert_eq!(net.vertices[&vid("C")].demand[&pid("widget")].quantity, 3.0);
    }

    #[test]
    fn new_demand_for_new_product_inherits_the_max_penalty() {
        let mut net = small_net();
        net.products.insert(
            pid("gadget"),
            Product {
                id: pid("gadget"),
                name: "Gadget".into(),
            },
        );
        let event = DisruptionEvent::NewDemand {
            vertex: vid("C"),
            product: pid("gadget"),
            added: 1.0,
        };
        let out = apply_disruption(&net, &event).unwrap();
        let d = &out.vertices[&vid("C")].demand[&pid("gadget")];
        assert_eq!(d.quantity, 1.0);
        assert_eq!(d.shortfall_penalty, 9.0);
    }

    #[test]
    fn unknown_references_are_errors() {
        let net = small_net();
        assert!(apply_disruption(
            &net,
            &DisruptionEvent::VertexLoss {
                vertex: vid("ghost")
            }
        )
        .is_err());
        assert!(apply_disruption(
            &net,
            &DisruptionEvent::EdgeLoss {
                edges: vec![(vid("A"), vid("C"))]
            }
        )
        .is_err());
        assert!(apply_disruption(
            &net,
            &DisruptionEvent::NewDemand {
                vertex: vid("C"),
                product: pid("ghost"),
                added: 1.0
            }
        )
        .is_err());
    }
}
