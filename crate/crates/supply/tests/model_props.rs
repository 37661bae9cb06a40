//! Randomized invariants for the network model, cost accounting and plan
//! diffing, checked against independent re-computations.

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use supply::model::network::{Demand, Edge, Holding, Product, Vertex};
use supply::{
    apply_disruption, plan_delta, total_cost, validate_network, DisruptionEvent, EntityKind,
    FlowPlan, NetworkFile, ProductId, SupplyNetwork, VertexId,
};

fn pid(s: &str) -> ProductId {
    ProductId::from(s)
}
fn vid(s: &str) -> VertexId {
    VertexId::from(s)
}

/// Two-product, three-layer network (suppliers make `part`, plants turn it
/// into `widget`, customers demand `widget`) with randomized parameters.
fn random_network(rng: &mut ChaCha8Rng) -> SupplyNetwork {
    let mut net = SupplyNetwork::default();
    for (id, name) in [("part", "Part"), ("widget", "Widget")] {
        net.products.insert(
            pid(id),
            Product {
                id: pid(id),
                name: name.to_string(),
            },
        );
    }
    net.bom
        .insert((pid("part"), pid("widget")), rng.gen_range(1..=2) as f64);

    for id in ["S1", "S2"] {
        let mut v = Vertex::new(id, EntityKind::TierSupplier);
        v.production_capacity = rng.gen_range(10..=40) as f64;
        v.line_opening_cost = rng.gen_range(0..=5) as f64;
        v.change_penalty = rng.gen_range(0..=10) as f64;
        v.production_cost
            .insert(pid("part"), rng.gen_range(1..=6) as f64);
        net.vertices.insert(v.id.clone(), v);
    }
    for id in ["O1", "O2"] {
        let mut v = Vertex::new(id, EntityKind::Oem);
        v.production_capacity = rng.gen_range(10..=40) as f64;
        v.line_opening_cost = rng.gen_range(0..=8) as f64;
        v.change_penalty = rng.gen_range(0..=10) as f64;
        v.production_cost
            .insert(pid("widget"), rng.gen_range(1..=6) as f64);
        let initial = rng.gen_range(0..=5) as f64;
        v.holding.insert(
            pid("part"),
            Holding {
                initial,
                unit_cost: rng.gen_range(1..=3) as f64 * 0.1,
                capacity: if rng.gen_bool(0.5) {
                    Some(initial + rng.gen_range(0..=10) as f64)
                } else {
                    None
                },
            },
        );
        net.vertices.insert(v.id.clone(), v);
    }
    for id in ["C1", "C2"] {
        let mut v = Vertex::new(id, EntityKind::Customer);
        v.demand.insert(
            pid("widget"),
            Demand {
                quantity: rng.gen_range(1..=10) as f64,
                shortfall_penalty: rng.gen_range(10..=80) as f64,
            },
        );
        net.vertices.insert(v.id.clone(), v);
    }

    let lanes: Vec<(&str, &str, &str)> = vec![
        ("S1", "O1", "part"),
        ("S1", "O2", "part"),
        ("S2", "O1", "part"),
        ("S2", "O2", "part"),
        ("O1", "C1", "widget"),
        ("O1", "C2", "widget"),
        ("O2", "C1", "widget"),
        ("O2", "C2", "widget"),
    ];
    for (from, to, product) in lanes {
        let e = Edge {
            from: vid(from),
            to: vid(to),
            capacity: rng.gen_range(5..=30) as f64,
            fixed_cost: rng.gen_range(0..=4) as f64,
            unit_cost: [(pid(product), rng.gen_range(1..=8) as f64 * 0.5)].into(),
            change_penalty: rng.gen_range(0..=10) as f64,
            disabled: false,
        };
        net.edges.insert(e.key(), e);
    }
    assert!(validate_network(&net).is_empty());
    net
}

/// A plan whose entries all reference valid network dimensions. Not
/// necessarily flow-balanced: cost accounting and diffing must work on any
/// well-typed plan.
fn random_plan(rng: &mut ChaCha8Rng, net: &SupplyNetwork) -> FlowPlan {
    let mut plan = FlowPlan::default();
    for edge in net.edges.values() {
        for product in edge.unit_cost.keys() {
            if rng.gen_bool(0.6) {
                plan.add_flow(&edge.from, &edge.to, product, rng.gen_range(1..=6) as f64);
            }
        }
        // Sometimes an edge is reserved without carrying anything.
        if rng.gen_bool(0.1) {
            plan.edge_used.insert(edge.key());
        }
    }
    for v in net.vertices.values() {
        for product in v.production_cost.keys() {
            if rng.gen_bool(0.7) {
                plan.produced
                    .insert((v.id.clone(), product.clone()), rng.gen_range(1..=8) as f64);
                plan.line_open.insert(v.id.clone());
            }
        }
        for product in v.holding.keys() {
            if rng.gen_bool(0.5) {
                plan.inventory
                    .insert((v.id.clone(), product.clone()), rng.gen_range(0..=4) as f64);
            }
        }
        for (product, demand) in &v.demand {
            let served = rng.gen_range(0..=demand.quantity as u32) as f64;
            if served > 0.0 {
                plan.satisfied
                    .insert((v.id.clone(), product.clone()), served);
            }
            if rng.gen_bool(0.5) {
                plan.shortfall
                    .insert((v.id.clone(), product.clone()), demand.quantity - served);
            }
        }
    }
    plan.prune();
    plan
}

/// Naive term-by-term recomputation of the plan cost, written against the
/// raw maps rather than the accounting code.
fn oracle_total(net: &SupplyNetwork, plan: &FlowPlan, baseline: Option<&FlowPlan>) -> f64 {
    let mut total = 0.0;
    for ((from, to, product), qty) in &plan.flows {
        total += net.edges[&(from.clone(), to.clone())].unit_cost[product] * qty;
    }
    for key in &plan.edge_used {
        total += net.edges[key].fixed_cost;
    }
    for ((v, product), qty) in &plan.inventory {
        total += net.vertices[v].holding[product].unit_cost * qty;
    }
    for ((v, product), qty) in &plan.produced {
        total += net.vertices[v].production_cost[product] * qty;
    }
    for v in &plan.line_open {
        total += net.vertices[v].line_opening_cost;
    }
    for ((v, product), qty) in &plan.shortfall {
        total += net.vertices[v].demand[product].shortfall_penalty * qty;
    }
    if let Some(base) = baseline {
        for (key, edge) in &net.edges {
            if base.edge_used.contains(key) != plan.edge_used.contains(key) {
                total += edge.change_penalty;
            }
        }
        for (id, v) in &net.vertices {
            if base.line_open.contains(id) != plan.line_open.contains(id) {
                total += v.change_penalty;
            }
        }
    }
    total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cost_matches_naive_recomputation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng);
        let base = random_plan(&mut rng, &net);
        let plan = random_plan(&mut rng, &net);
        for baseline in [None, Some(&base)] {
            let cost = total_cost(&net, &plan, baseline).unwrap();
            let expect = oracle_total(&net, &plan, baseline);
            prop_assert!((cost.total - expect).abs() < 1e-9 * (1.0 + expect.abs()));
            let parts = cost.flow_costs()
                + cost.production_costs()
                + cost.demand_penalty
                + cost.edge_change_penalty
                + cost.vertex_change_penalty;
            prop_assert!((cost.total - parts).abs() < 1e-9);
        }
    }

    #[test]
    fn self_baseline_adds_no_penalty(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng);
        let plan = random_plan(&mut rng, &net);
        let with = total_cost(&net, &plan, Some(&plan)).unwrap();
        let without = total_cost(&net, &plan, None).unwrap();
        prop_assert_eq!(with, without);
    }

    #[test]
    fn delta_of_a_plan_with_itself_is_zero(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng);
        let plan = random_plan(&mut rng, &net);
        let delta = plan_delta(&plan, &plan, &net).unwrap();
        prop_assert_eq!(delta.added_edges, 0);
        prop_assert_eq!(delta.changed_flows, 0);
        prop_assert_eq!(delta.flow_cost_change, 0.0);
        prop_assert_eq!(delta.production_cost_change, 0.0);
        prop_assert!(delta.edge_status_changed.values().all(|&c| !c));
        prop_assert!(delta.vertex_status_changed.values().all(|&c| !c));
        prop_assert!(delta.flow_changed_edges.is_empty());
        prop_assert!(delta.production_changed.is_empty());
    }

    #[test]
    fn cost_deltas_are_antisymmetric(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng);
        let a = random_plan(&mut rng, &net);
        let b = random_plan(&mut rng, &net);
        let fwd = plan_delta(&a, &b, &net).unwrap();
        let back = plan_delta(&b, &a, &net).unwrap();
        prop_assert!((fwd.flow_cost_change + back.flow_cost_change).abs() < 1e-9);
        prop_assert!((fwd.production_cost_change + back.production_cost_change).abs() < 1e-9);
        // The status-change maps are direction-independent.
        prop_assert_eq!(&fwd.edge_status_changed, &back.edge_status_changed);
        prop_assert_eq!(&fwd.vertex_status_changed, &back.vertex_status_changed);
    }

    #[test]
    fn added_and_changed_edges_are_disjoint(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng);
        let a = random_plan(&mut rng, &net);
        let b = random_plan(&mut rng, &net);
        let delta = plan_delta(&a, &b, &net).unwrap();
        // Recount both metrics straight off the raw plans.
        let mut added = 0usize;
        let mut changed = 0usize;
        for key in net.edges.keys() {
            if !net.edge_usable(key) {
                continue;
            }
            let before = a.edge_used.contains(key);
            let after = b.edge_used.contains(key);
            let differs: bool = {
                let fa = a.edge_flows(&key.0, &key.1);
                let fb = b.edge_flows(&key.0, &key.1);
                let keys: std::collections::BTreeSet<_> =
                    fa.keys().chain(fb.keys()).cloned().collect();
                keys.iter().any(|k| {
                    (fa.get(k).copied().unwrap_or(0.0) - fb.get(k).copied().unwrap_or(0.0)).abs()
                        > 1e-6
                })
            };
            if !before && after {
                added += 1;
            }
            if before && differs {
                changed += 1;
            }
        }
        prop_assert_eq!(delta.added_edges, added);
        prop_assert_eq!(delta.changed_flows, changed);
    }

    #[test]
    fn network_json_round_trip_is_identity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng);
        let json = supply::network_to_json(&net);
        let file: NetworkFile = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(file.into_network().unwrap(), net);
    }

    #[test]
    fn disruptions_are_idempotent(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng);
        let events = [
            DisruptionEvent::VertexLoss { vertex: vid("O1") },
            DisruptionEvent::EdgeLoss {
                edges: vec![(vid("S1"), vid("O1"))],
            },
        ];
        for event in events {
            let once = apply_disruption(&net, &event).unwrap();
            let twice = apply_disruption(&once, &event).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert!(validate_network(&once).is_empty());
        }
    }

    #[test]
    fn vertex_loss_disables_incident_edges_only(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng);
        let lost = vid("O2");
        let hit = apply_disruption(&net, &DisruptionEvent::VertexLoss { vertex: lost.clone() })
            .unwrap();
        for (key, edge) in &hit.edges {
            let incident = key.0 == lost || key.1 == lost;
            prop_assert_eq!(edge.disabled, incident);
        }
        let expected: BTreeMap<_, _> = net
            .vertices
            .keys()
            .map(|v| (v.clone(), *v == lost))
            .collect();
        let actual: BTreeMap<_, _> = hit
            .vertices
            .iter()
            .map(|(v, vx)| (v.clone(), vx.disabled))
            .collect();
        prop_assert_eq!(actual, expected);
    }
}
