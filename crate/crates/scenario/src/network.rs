//! The reference case-study network: a meat-processing chain with eight
//! component suppliers, three assembly plants, four distribution centers and
//! eight customers.
//!
//! The topology, capability assignment and cost table are fixed; demand
//! volumes are drawn per seed from documented ranges and every capacity is
//! derived from them so that the base plan always serves all demand with
//! aggregate slack of at least 50%. All numbers are reconstructions for a
//! desk-scale study, not measurements of any real chain.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use supply::model::network::{Demand, Holding};
use supply::{Edge, EntityKind, Product, ProductId, SupplyNetwork, Vertex, VertexId};

/// Seed of the checked-in reference network used by reports and tests.
pub const REFERENCE_SEED: u64 = 7;

/// Portion of the second distribution center's demand that the baseline
/// sources from plant O2; the rest comes from O1. Keeping this fixed pins
/// the capacity squeeze at O2 that the disruption scenarios rely on.
const SECOND_SOURCE_SHARE: f64 = 8.0;

/// Demand surge used by the builtin `c5` scenario.
pub const C5_SURGE: f64 = 8.0;

fn pid(s: &str) -> ProductId {
    ProductId::from(s)
}

fn vid(s: &str) -> VertexId {
    VertexId::from(s)
}

/// Per-customer demand volumes drawn from the documented ranges:
/// patties in 8..=12 units, steaks in 5..=7 units.
fn draw_demands(seed: u64) -> BTreeMap<&'static str, (f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ["C1", "C2", "C3", "C4", "C5", "C6", "C7", "C8"]
        .into_iter()
        .map(|c| {
            let patty = rng.gen_range(8..=12) as f64;
            let steak = rng.gen_range(5..=7) as f64;
            (c, (patty, steak))
        })
        .collect()
}

/// Builds the 23-entity network for the given seed.
pub fn build_case_study_network(seed: u64) -> SupplyNetwork {
    let demands = draw_demands(seed);
    let patty = |c: &str| demands[c].0;
    let steak = |c: &str| demands[c].1;
    let total = |c: &str| demands[c].0 + demands[c].1;

    // Distribution-center loads and the plant loads they induce. D1 and D2
    // are served by O1 (except for a fixed slice of D2 covered by O2), D3
    // entirely by O2, and D4 by O3. O2's capacity equals its load exactly,
    // which is what forces both methods to look elsewhere when demand grows.
    let d1_total = total("C1") + total("C2");
    let d2_total = total("C3") + total("C4");
    let d3_total = total("C5") + total("C6");
    let d4_total = total("C7") + total("C8");
    let o1_load = d1_total + d2_total - SECOND_SOURCE_SHARE;
    let o2_cap = d3_total + SECOND_SOURCE_SHARE;
    let o3_load = d4_total;
    let o1_patty = patty("C1") + patty("C2") + patty("C3") + patty("C4");
    let total_patty: f64 = demands.values().map(|d| d.0).sum();
    let total_steak: f64 = demands.values().map(|d| d.1).sum();

    let mut net = SupplyNetwork {
        description: Some(format!(
            "meat-processing case study (seed {seed}): 8 suppliers, 3 plants, \
             4 distribution centers, 8 customers"
        )),
        ..SupplyNetwork::default()
    };

    for (id, name) in [
        ("raw_beef", "Raw Beef"),
        ("seasoning", "Seasoning"),
        ("package0", "Package 0"),
        ("package1", "Package 1"),
        ("beef_patty", "Beef Patty"),
        ("steak", "Steak"),
    ] {
        net.products.insert(
            pid(id),
            Product {
                id: pid(id),
                name: name.to_string(),
            },
        );
    }
    for component in ["raw_beef", "seasoning", "package0"] {
        net.bom.insert((pid(component), pid("beef_patty")), 1.0);
    }
    for component in ["raw_beef", "seasoning", "package1"] {
        net.bom.insert((pid(component), pid("steak")), 1.0);
    }

    // Component suppliers: three for raw beef, two for seasoning (T4 serves
    // only O1 and has T5 as its stand-in), two for packaging 0 and one for
    // packaging 1.
    let suppliers: [(&str, &str, f64, f64); 8] = [
        ("T1", "raw_beef", 1.00, o1_load + 20.0),
        ("T2", "raw_beef", 1.05, o2_cap + 12.0),
        ("T3", "raw_beef", 0.95, o3_load + o1_load + 20.0),
        ("T4", "seasoning", 0.80, o1_load + 15.0),
        ("T5", "seasoning", 0.85, o2_cap + o3_load + o1_load + 20.0),
        ("T6", "package0", 0.90, o1_patty + 20.0),
        ("T7", "package0", 0.92, total_patty + 30.0),
        ("T8", "package1", 1.10, total_steak + 40.0),
    ];
    for (id, product, cost, capacity) in suppliers {
        let mut v = Vertex::new(id, EntityKind::TierSupplier);
        v.production_capacity = capacity;
        v.production_cost.insert(pid(product), cost);
        v.line_opening_cost = 3.0;
        v.change_penalty = 3.0;
        net.vertices.insert(vid(id), v);
    }

    // Assembly plants: all three make both end products and have room to
    // park finished goods or components if a lane drops out from under them.
    // O2 is the cheap plant but has zero spare capacity, O1 is mid-priced
    // with expensive steak, and O3 carries a clear premium plus lots of
    // slack, so it only wins work when something else is out.
    let plants: [(&str, f64, f64, f64); 3] = [
        ("O1", 2.10, 2.45, o1_load + 25.0),
        ("O2", 2.00, 2.05, o2_cap),
        ("O3", 2.70, 2.75, o3_load + 80.0),
    ];
    for (id, patty_cost, steak_cost, capacity) in plants {
        let mut v = Vertex::new(id, EntityKind::Oem);
        v.production_capacity = capacity;
        v.production_cost.insert(pid("beef_patty"), patty_cost);
        v.production_cost.insert(pid("steak"), steak_cost);
        v.line_opening_cost = 5.0;
        v.change_penalty = 3.0;
        for p in ["beef_patty", "steak"] {
            v.holding.insert(
                pid(p),
                Holding {
                    initial: 0.0,
                    unit_cost: 0.10,
                    capacity: Some(40.0),
                },
            );
        }
        for p in ["raw_beef", "seasoning", "package0", "package1"] {
            v.holding.insert(
                pid(p),
                Holding {
                    initial: 0.0,
                    unit_cost: 0.05,
                    capacity: Some(40.0),
                },
            );
        }
        net.vertices.insert(vid(id), v);
    }

    for id in ["D1", "D2", "D3", "D4"] {
        let mut v = Vertex::new(id, EntityKind::Distributor);
        v.change_penalty = 3.0;
        for p in ["beef_patty", "steak"] {
            v.holding.insert(
                pid(p),
                Holding {
                    initial: 0.0,
                    unit_cost: 0.08,
                    capacity: Some(60.0),
                },
            );
        }
        net.vertices.insert(vid(id), v);
    }

    for c in ["C1", "C2", "C3", "C4", "C5", "C6", "C7", "C8"] {
        let mut v = Vertex::new(c, EntityKind::Customer);
        v.change_penalty = 3.0;
        v.demand.insert(
            pid("beef_patty"),
            Demand {
                quantity: patty(c),
                shortfall_penalty: 50.0,
            },
        );
        v.demand.insert(
            pid("steak"),
            Demand {
                quantity: steak(c),
                shortfall_penalty: 50.0,
            },
        );
        net.vertices.insert(vid(c), v);
    }

    let mut lane =
        |from: &str, to: &str, products: &[&str], unit: f64, capacity: f64, fixed: f64| {
            let unit_cost: BTreeMap<ProductId, f64> =
                products.iter().map(|p| (pid(p), unit)).collect();
            net.edges.insert(
                (vid(from), vid(to)),
                Edge {
                    from: vid(from),
                    to: vid(to),
                    capacity,
                    fixed_cost: fixed,
                    unit_cost,
                    change_penalty: 2.0,
                    disabled: false,
                },
            );
        };

    // Supplier lanes. Each plant has a single source per component except
    // O1's seasoning, where T5 keeps an idle lane as backup for T4.
    let supplier_cap = |id: &str| -> f64 {
        suppliers
            .iter()
            .find(|(s, ..)| *s == id)
            .map(|&(_, _, _, c)| c)
            .unwrap()
    };
    lane("T1", "O1", &["raw_beef"], 0.30, supplier_cap("T1"), 1.0);
    lane("T2", "O2", &["raw_beef"], 0.30, supplier_cap("T2"), 1.0);
    lane("T3", "O3", &["raw_beef"], 0.30, supplier_cap("T3"), 1.0);
    lane("T4", "O1", &["seasoning"], 0.30, supplier_cap("T4"), 1.0);
    lane("T5", "O2", &["seasoning"], 0.30, supplier_cap("T5"), 1.0);
    lane("T5", "O3", &["seasoning"], 0.30, supplier_cap("T5"), 1.0);
    lane("T5", "O1", &["seasoning"], 0.30, o1_load + 20.0, 2.0);
    lane("T6", "O1", &["package0"], 0.30, supplier_cap("T6"), 1.0);
    lane("T7", "O2", &["package0"], 0.30, supplier_cap("T7"), 1.0);
    lane("T7", "O3", &["package0"], 0.30, supplier_cap("T7"), 1.0);
    lane("T8", "O1", &["package1"], 0.30, supplier_cap("T8"), 1.0);
    lane("T8", "O2", &["package1"], 0.30, supplier_cap("T8"), 1.0);
    lane("T8", "O3", &["package1"], 0.30, supplier_cap("T8"), 1.0);

    // Plant-to-distributor lanes. The three idle O3 lanes are the recovery
    // paths when O1 dies or D3 needs more than O2 can give.
    let both = ["beef_patty", "steak"];
    lane("O1", "D1", &both, 0.40, o1_load + 25.0, 1.0);
    lane("O1", "D2", &both, 0.40, o1_load + 25.0, 1.0);
    lane("O2", "D2", &both, 0.45, o2_cap, 1.0);
    lane("O2", "D3", &both, 0.40, o2_cap, 1.0);
    lane("O3", "D1", &both, 0.45, d1_total + 20.0, 2.0);
    lane("O3", "D2", &both, 0.45, d2_total + 20.0, 2.0);
    lane("O3", "D3", &both, 0.42, d3_total + 20.0, 2.0);
    lane("O3", "D4", &both, 0.40, o3_load + 80.0, 1.0);

    // Distributor-to-customer lanes; every customer is single-homed.
    for (d, c) in [
        ("D1", "C1"),
        ("D1", "C2"),
        ("D2", "C3"),
        ("D2", "C4"),
        ("D3", "C5"),
        ("D3", "C6"),
        ("D4", "C7"),
        ("D4", "C8"),
    ] {
        lane(d, c, &both, 0.35, total(c) + 15.0, 1.0);
    }

    net
}

/// The fixed network the reports, golden files and acceptance checks use.
pub fn reference_network() -> SupplyNetwork {
    build_case_study_network(REFERENCE_SEED)
}
