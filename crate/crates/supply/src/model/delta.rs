//! Differences between a baseline plan and a revised plan: status changes,
//! the added-edge and changed-flow counts, and the cost deltas.

use std::collections::{BTreeMap, BTreeSet};

use super::network::{EdgeKey, SupplyNetwork, VertexId};
use super::plan::{total_cost, FlowPlan, ModelError, QUANTITY_TOL};

/// How a revised plan differs from its baseline.
///
/// The counts follow the disruption-metrics reading of "changed": edges that
/// the disruption itself disabled are excluded from `added_edges` and
/// `changed_flows` (their flows drop to zero by force, not by choice),
/// while the status-change maps cover every edge/vertex because the replan
/// cost model charges for forced changes too.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlanDelta {
    /// `Δ^E`: edges whose use status differs from the baseline.
    pub edge_status_changed: BTreeMap<EdgeKey, bool>,
    /// `Δ^V`: vertices whose line-open status differs from the baseline.
    pub vertex_status_changed: BTreeMap<VertexId, bool>,
    /// `E_a`: usable edges that were off in the baseline and are on now.
    pub added_edges: usize,
    /// `F_c`: usable edges used in the baseline whose product-flow vector
    /// changed (including drops to zero).
    pub changed_flows: usize,
    /// `C_f`: change in transport (variable + fixed) + holding cost.
    pub flow_cost_change: f64,
    /// `C_p`: change in production (variable + fixed) cost.
    pub production_cost_change: f64,
    /// Usable edges whose product-flow vector differs (supersets the edges
    /// behind both counts above).
    pub flow_changed_edges: BTreeSet<EdgeKey>,
    /// Vertices whose production quantities or line status changed.
    pub production_changed: BTreeSet<VertexId>,
}

/// Compares two plans over the given network (normally the disrupted one, so
/// disabled edges are excluded from the metric counts).
pub fn plan_delta(
    baseline: &FlowPlan,
    new: &FlowPlan,
    net: &SupplyNetwork,
) -> Result<PlanDelta, ModelError> {
    let mut delta = PlanDelta::default();

    for key in net.edges.keys() {
        let before = baseline.edge_used.contains(key);
        let after = new.edge_used.contains(key);
        delta
            .edge_status_changed
            .insert(key.clone(), before != after);
        let usable = net.edge_usable(key);
        if usable && !before && after {
            delta.added_edges += 1;
        }
        let flows_differ = edge_flows_differ(baseline, new, key);
        if usable && flows_differ {
            delta.flow_changed_edges.insert(key.clone());
            if before {
                delta.changed_flows += 1;
            }
        }
    }

    for id in net.vertices.keys() {
        let before = baseline.line_open.contains(id);
        let after = new.line_open.contains(id);
        delta
            .vertex_status_changed
            .insert(id.clone(), before != after);
        if before != after || production_differs(baseline, new, id) {
            delta.production_changed.insert(id.clone());
        }
    }

    let base_cost = total_cost(net, baseline, None)?;
    let new_cost = total_cost(net, new, None)?;
    delta.flow_cost_change = new_cost.flow_costs() - base_cost.flow_costs();
    delta.production_cost_change = new_cost.production_costs() - base_cost.production_costs();

    Ok(delta)
}

fn edge_flows_differ(a: &FlowPlan, b: &FlowPlan, key: &EdgeKey) -> bool {
    let fa = a.edge_flows(&key.0, &key.1);
    let fb = b.edge_flows(&key.0, &key.1);
    let products: BTreeSet<_> = fa.keys().chain(fb.keys()).collect();
    products.iter().any(|k| {
        let qa = fa.get(*k).copied().unwrap_or(0.0);
        let qb = fb.get(*k).copied().unwrap_or(0.0);
        (qa - qb).abs() > QUANTITY_TOL
    })
}

fn production_differs(a: &FlowPlan, b: &FlowPlan, v: &VertexId) -> bool {
    let pa: BTreeMap<_, _> = a
        .produced
        .iter()
        .filter(|((pv, _), _)| pv == v)
        .map(|((_, k), &q)| (k.clone(), q))
        .collect();
    let pb: BTreeMap<_, _> = b
        .produced
        .iter()
        .filter(|((pv, _), _)| pv == v)
        .map(|((_, k), &q)| (k.clone(), q))
        .collect();
    let products: BTreeSet<_> = pa.keys().chain(pb.keys()).collect();
    products.iter().any(|k| {
        let qa = pa.get(*k).copied().unwrap_or(0.0);
        let qb = pb.get(*k).copied().unwrap_or(0.0);
        (qa - qb).abs() > QUANTITY_TOL
    })
}
