//! Built-in desk-scale fixtures shared by the oracle command and the
//! verification suite.

use rand::Rng;

use crate::budget::BudgetModel;
use crate::graph::{generate_synthetic, load_edge_list, DirectedGraph, SyntheticKind, WeightMode};
use crate::strategy::{build_scenario, Scenario, ScenarioKind, StrategyModel};

pub struct DeskFixture {
    pub name: &'static str,
    pub graph: DirectedGraph,
    pub strategy: StrategyModel,
    pub scenario: Scenario,
}

fn fixture(
    name: &'static str,
    text: &str,
    mode: WeightMode,
    kind: ScenarioKind,
    d: usize,
) -> DeskFixture {
    let graph = load_edge_list(text.as_bytes(), mode).expect("fixture graph parses");
    let (strategy, scenario) = build_scenario(&graph, kind, d, None, 1701).expect("fixture scenario");
    DeskFixture {
        name,
        graph,
        strategy,
        scenario,
    }
}

/// Five tiny graphs (n <= 6, m <= 8) mixing explicit and weighted-cascade
/// weights, with personalized and segment scenarios.
pub fn desk_fixtures() -> Vec<DeskFixture> {
    vec![
        fixture(
            "path3_explicit",
            "3 2\n0 1 0.5\n1 2 0.25\n",
            WeightMode::Explicit,
            ScenarioKind::Personalized,
            3,
        ),
        fixture(
            "star5_wc",
            "5 4\n1 0\n2 0\n3 0\n4 0\n",
            WeightMode::WeightedCascade,
            ScenarioKind::Personalized,
            5,
        ),
        fixture(
            "cycle4_explicit",
            "4 4\n0 1 0.7\n1 2 0.4\n2 3 0.6\n3 0 0.5\n",
            WeightMode::Explicit,
            ScenarioKind::Personalized,
            4,
        ),
        fixture(
            "dag6_wc",
            "6 8\n0 2\n1 2\n2 3\n2 4\n3 5\n4 5\n0 4\n1 3\n",
            WeightMode::WeightedCascade,
            ScenarioKind::Personalized,
            6,
        ),
        fixture(
            "mesh6_segment",
            "6 7\n0 1 0.8\n1 2 0.3\n2 0 0.5\n3 4 0.6\n4 5 0.9\n5 3 0.2\n2 3 0.4\n",
            WeightMode::Explicit,
            ScenarioKind::Segment,
            2,
        ),
    ]
}

/// The 8-node fixture used for the approximation-ratio checks: two loose
/// clusters under weighted cascade, segment scenario with two strategies.
pub fn ratio_fixture() -> DeskFixture {
    let graph = load_edge_list(
        "8 10\n0 1\n1 2\n2 0\n0 3\n3 4\n4 5\n5 6\n6 7\n7 4\n2 5\n".as_bytes(),
        WeightMode::WeightedCascade,
    )
    .expect("ratio fixture parses");
    let (strategy, scenario) =
        build_scenario(&graph, ScenarioKind::Segment, 2, Some((2, 6)), 4242)
            .expect("ratio fixture scenario");
    DeskFixture {
        name: "ratio8_segment",
        graph,
        strategy,
        scenario,
    }
}

/// The 500-node weighted-cascade graph for the qualitative trend check. The
/// density is tuned so the mean RR-set size lands near the value reported
/// for real collaboration networks of this kind.
pub fn trend_graph(seed: u64) -> DirectedGraph {
    let g = generate_synthetic(SyntheticKind::ErdosRenyi, 500, 0.003, seed)
        .expect("trend graph generates");
    crate::graph::assign_weighted_cascade(g)
}

/// Uniform draw over the box followed by projection onto P; always feasible.
pub fn random_feasible_x(budget: &BudgetModel, rng: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<f64> = budget
        .upper()
        .iter()
        .map(|&u| rng.random::<f64>() * if u.is_finite() { u } else { budget.k })
        .collect();
    budget.project(&raw)
}
