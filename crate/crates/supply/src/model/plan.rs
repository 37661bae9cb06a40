//! Flow plans and their cost accounting.

use std::collections::BTreeMap;

use thiserror::Error;

use super::network::{EdgeKey, ProductId, SupplyNetwork, VertexId};

/// Quantities closer than this are considered equal throughout the model.
pub const QUANTITY_TOL: f64 = 1e-6;

/// One period's worth of decisions: product flows per edge, edge/line usage,
/// production, satisfied demand, end-of-period inventory and shortfalls.
///
/// All maps are sparse: an absent key means zero (or unused, for the binary
/// sets).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowPlan {
    /// `y`: units of product flowing along each edge.
    pub flows: BTreeMap<(VertexId, VertexId, ProductId), f64>,
    /// `β`: edges in use.
    pub edge_used: std::collections::BTreeSet<EdgeKey>,
    /// `x`: satisfied demand per (vertex, product).
    pub satisfied: BTreeMap<(VertexId, ProductId), f64>,
    /// `p`: produced units per (vertex, product).
    pub produced: BTreeMap<(VertexId, ProductId), f64>,
    /// `ζ`: vertices with an open production line.
    pub line_open: std::collections::BTreeSet<VertexId>,
    /// `I`: end-of-period inventory per (vertex, product).
    pub inventory: BTreeMap<(VertexId, ProductId), f64>,
    /// `Δ^d`: unsatisfied demand per (vertex, product).
    pub shortfall: BTreeMap<(VertexId, ProductId), f64>,
}

impl FlowPlan {
    pub fn flow(&self, from: &VertexId, to: &VertexId, product: &ProductId) -> f64 {
        self.flows
            .get(&(from.clone(), to.clone(), product.clone()))
            .copied()
            .unwrap_or(0.0)
    }

    /// Total units on an edge across products.
    pub fn edge_total(&self, from: &VertexId, to: &VertexId) -> f64 {
        self.flows
            .iter()
            .filter(|((f, t, _), _)| f == from && t == to)
            .map(|(_, &q)| q)
            .sum()
    }

    /// Product quantities on an edge, in product order.
    pub fn edge_flows(&self, from: &VertexId, to: &VertexId) -> BTreeMap<ProductId, f64> {
        self.flows
            .iter()
            .filter(|((f, t, _), _)| f == from && t == to)
            .map(|((_, _, k), &q)| (k.clone(), q))
            .collect()
    }

    /// Adds `qty` to a flow, marking the edge used; removes entries that
    /// fall to zero.
    pub fn add_flow(&mut self, from: &VertexId, to: &VertexId, product: &ProductId, qty: f64) {
        let key = (from.clone(), to.clone(), product.clone());
        let entry = self.flows.entry(key.clone()).or_insert(0.0);
        *entry += qty;
        if *entry <= QUANTITY_TOL {
            self.flows.remove(&key);
        }
        if qty > 0.0 {
            self.edge_used.insert((from.clone(), to.clone()));
        }
    }

    pub fn produced_at(&self, v: &VertexId, product: &ProductId) -> f64 {
        self.produced
            .get(&(v.clone(), product.clone()))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn produced_total(&self, v: &VertexId) -> f64 {
        self.produced
            .iter()
            .filter(|((pv, _), _)| pv == v)
            .map(|(_, &q)| q)
            .sum()
    }

    pub fn inventory_at(&self, v: &VertexId, product: &ProductId) -> f64 {
        self.inventory
            .get(&(v.clone(), product.clone()))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn satisfied_at(&self, v: &VertexId, product: &ProductId) -> f64 {
        self.satisfied
            .get(&(v.clone(), product.clone()))
            .copied()
            .unwrap_or(0.0)
    }

    /// Drops zero-magnitude entries so two equivalent plans compare equal.
    pub fn prune(&mut self) {
        self.flows.retain(|_, q| q.abs() > QUANTITY_TOL);
        self.satisfied.retain(|_, q| q.abs() > QUANTITY_TOL);
        self.produced.retain(|_, q| q.abs() > QUANTITY_TOL);
        self.inventory.retain(|_, q| q.abs() > QUANTITY_TOL);
        self.shortfall.retain(|_, q| q.abs() > QUANTITY_TOL);
    }
}

/// Errors raised when a plan's dimensions do not match the network.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("vertex {0} does not exist in the network")]
    UnknownVertex(VertexId),
    #[error("edge {0}->{1} does not exist in the network")]
    UnknownEdge(VertexId, VertexId),
    #[error("product {0} is not declared in the network")]
    UnknownProduct(ProductId),
    #[error("edge {from}->{to} cannot carry product {product}")]
    ProductNotCarried {
        from: VertexId,
        to: VertexId,
        product: ProductId,
    },
    #[error("vertex {vertex} cannot produce product {product}")]
    ProductNotProduced {
        vertex: VertexId,
        product: ProductId,
    },
    #[error("vertex {vertex} cannot hold product {product}")]
    ProductNotHeld {
        vertex: VertexId,
        product: ProductId,
    },
    #[error("vertex {vertex} has no demand entry for product {product}")]
    NoDemand {
        vertex: VertexId,
        product: ProductId,
    },
    #[error("quantity for {context} is negative or not finite ({value})")]
    BadQuantity { context: String, value: f64 },
}

/// Cost of a plan, split by term; `total` is always the sum of the parts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub transport_var: f64,
    pub holding: f64,
    pub production_var: f64,
    pub transport_fixed: f64,
    pub production_fixed: f64,
    pub demand_penalty: f64,
    pub edge_change_penalty: f64,
    pub vertex_change_penalty: f64,
    pub total: f64,
}

impl CostBreakdown {
    fn finish(mut self) -> Self {
        self.total = self.transport_var
            + self.holding
            + self.production_var
            + self.transport_fixed
            + self.production_fixed
            + self.demand_penalty
            + self.edge_change_penalty
            + self.vertex_change_penalty;
        self
    }

    /// Transport (variable + fixed) plus holding: the flow-side costs.
    pub fn flow_costs(&self) -> f64 {
        self.transport_var + self.transport_fixed + self.holding
    }

    /// Production variable + fixed: the production-side costs.
    pub fn production_costs(&self) -> f64 {
        self.production_var + self.production_fixed
    }
}

/// Sums every cost term of the plan against the network's parameters. With a
/// baseline plan, the edge/vertex change penalties are included; without one
/// they are zero.
pub fn total_cost(
    net: &SupplyNetwork,
    plan: &FlowPlan,
    baseline: Option<&FlowPlan>,
) -> Result<CostBreakdown, ModelError> {
    let mut cost = CostBreakdown::default();

    for ((from, to, product), &qty) in &plan.flows {
        let edge = net
            .edge(from, to)
            .ok_or_else(|| ModelError::UnknownEdge(from.clone(), to.clone()))?;
        let unit = edge
            .unit_cost
            .get(product)
            .ok_or_else(|| ModelError::ProductNotCarried {
                from: from.clone(),
                to: to.clone(),
                product: product.clone(),
            })?;
        check_qty(qty, || format!("flow {from}->{to} of {product}"))?;
        cost.transport_var += unit * qty;
    }

    for key in &plan.edge_used {
        let edge = net
            .edges
            .get(key)
            .ok_or_else(|| ModelError::UnknownEdge(key.0.clone(), key.1.clone()))?;
        cost.transport_fixed += edge.fixed_cost;
    }

    for ((v, product), &qty) in &plan.inventory {
        let vertex = net
            .vertices
            .get(v)
            .ok_or_else(|| ModelError::UnknownVertex(v.clone()))?;
        let holding = vertex
            .holding
            .get(product)
            .ok_or_else(|| ModelError::ProductNotHeld {
                vertex: v.clone(),
                product: product.clone(),
            })?;
        check_qty(qty, || format!("inventory at {v} of {product}"))?;
        cost.holding += holding.unit_cost * qty;
    }

    for ((v, product), &qty) in &plan.produced {
        let vertex = net
            .vertices
            .get(v)
            .ok_or_else(|| ModelError::UnknownVertex(v.clone()))?;
        let unit =
            vertex
                .production_cost
                .get(product)
                .ok_or_else(|| ModelError::ProductNotProduced {
                    vertex: v.clone(),
                    product: product.clone(),
                })?;
        check_qty(qty, || format!("production at {v} of {product}"))?;
        cost.production_var += unit * qty;
    }

    for v in &plan.line_open {
        let vertex = net
            .vertices
            .get(v)
            .ok_or_else(|| ModelError::UnknownVertex(v.clone()))?;
        cost.production_fixed += vertex.line_opening_cost;
    }

    for ((v, product), &qty) in &plan.shortfall {
        let vertex = net
            .vertices
            .get(v)
            .ok_or_else(|| ModelError::UnknownVertex(v.clone()))?;
        let demand = vertex
            .demand
            .get(product)
            .ok_or_else(|| ModelError::NoDemand {
                vertex: v.clone(),
                product: product.clone(),
            })?;
        check_qty(qty, || format!("shortfall at {v} of {product}"))?;
        cost.demand_penalty += demand.shortfall_penalty * qty;
    }

    if let Some(base) = baseline {
        for (key, edge) in &net.edges {
            let before = base.edge_used.contains(key);
            let after = plan.edge_used.contains(key);
            if before != after {
                cost.edge_change_penalty += edge.change_penalty;
            }
        }
        for (id, vertex) in &net.vertices {
            let before = base.line_open.contains(id);
            let after = plan.line_open.contains(id);
            if before != after {
                cost.vertex_change_penalty += vertex.change_penalty;
            }
        }
    }

    Ok(cost.finish())
}

fn check_qty(qty: f64, context: impl Fn() -> String) -> Result<(), ModelError> {
    if !qty.is_finite() || qty < -QUANTITY_TOL {
        return Err(ModelError::BadQuantity {
            context: context(),
            value: qty,
        });
    }
    Ok(())
}

/// Per-(vertex, product) conservation residual:
///
/// `inflow − outflow + production − consumption − satisfied − (I − I⁰)`
///
/// where consumption is the bill-of-materials draw of everything the vertex
/// produces. Zero everywhere for a feasible plan. Disabled vertices
/// contribute their initial inventory as zero (their stock is unreachable).
pub fn flow_balance_residual(
    net: &SupplyNetwork,
    plan: &FlowPlan,
) -> BTreeMap<(VertexId, ProductId), f64> {
    let mut residual = BTreeMap::new();
    for v in net.vertices.keys() {
        for k in net.products.keys() {
            let inflow: f64 = net.in_edges(v).map(|e| plan.flow(&e.from, &e.to, k)).sum();
            let outflow: f64 = net.out_edges(v).map(|e| plan.flow(&e.from, &e.to, k)).sum();
            let produced = plan.produced_at(v, k);
            let consumed: f64 = net
                .products_using(k)
                .map(|(product, r)| r * plan.produced_at(v, product))
                .sum();
            let satisfied = plan.satisfied_at(v, k);
            let inv_delta = plan.inventory_at(v, k) - net.effective_initial_inventory(v, k);
            let value = inflow - outflow + produced - consumed - satisfied - inv_delta;
            residual.insert((v.clone(), k.clone()), value);
        }
    }
    residual
}

/// Largest absolute conservation residual of the plan.
pub fn max_balance_residual(net: &SupplyNetwork, plan: &FlowPlan) -> f64 {
    flow_balance_residual(net, plan)
        .values()
        .fold(0.0, |acc, r| acc.max(r.abs()))
}
