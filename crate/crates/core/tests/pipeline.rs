//! End-to-end runs on the small fixtures through the public API.

use restora_core::ncadmm::{run_restoration_with, Executor};
use restora_core::{
    bottom_up_cluster, default_relaxation, derive_adjacency, fixtures, optimal_cluster_count, oracle_solve,
    plan_feasibility_check, run_restoration, Clustering, Feeder, Mode, Phase, RootedTree, SolverConfig,
};

fn clusters(f: &Feeder) -> Clustering {
    let n = f.nodes().len();
    let k = optimal_cluster_count(n, 1.0, 1.0);
    let tree = RootedTree::from_feeder(f).unwrap();
    derive_adjacency(&bottom_up_cluster(&tree, k, default_relaxation(n, k)), f).unwrap()
}

#[test]
fn every_fixture_partitions_into_connected_covering_clusters() {
    for &name in fixtures::NAMES {
        let (f, _) = fixtures::by_name(name).unwrap();
        let cl = clusters(&f);
        let k = optimal_cluster_count(f.nodes().len(), 1.0, 1.0);
        assert_eq!(cl.len(), k, "{name}: sizes {:?}", cl.sizes());
        assert_eq!(cl.sizes().iter().sum::<usize>(), f.nodes().len(), "{name}");
        let roots = cl.parent_of.values().filter(|p| p.is_none()).count();
        assert_eq!(roots, 1, "{name}");
    }
}

#[test]
fn f6_matches_the_oracle() {
    let (f, sc) = fixtures::f6_blackout();
    let cfg = SolverConfig::default();
    let (plan, trace) = run_restoration(&f, &sc, &clusters(&f), &cfg).unwrap();
    let best = oracle_solve(&f, &sc, &cfg).unwrap();
    assert!(plan.converged() && plan.is_feasible(), "{:?}", plan.status);
    assert!(plan_feasibility_check(&plan, &f, &sc).ok());
    assert!((plan.objective - best.objective).abs() <= 1e-4 * best.objective);
    for (a, b) in plan.steps.iter().zip(&best.plan.steps) {
        assert_eq!(a.line_closed, b.line_closed);
        assert_eq!(a.load_on, b.load_on);
    }
    assert_eq!(trace.records.len(), plan.iterations);
    assert_eq!(trace.records.first().unwrap().phase, Phase::Relax);
    assert_eq!(trace.last().unwrap().phase, Phase::Polish);
}

struct Reversed;

impl Executor for Reversed {
    fn for_each_mut<T: Send, F: Fn(&mut T) + Sync>(&self, items: &mut [T], work: F) {
        items.iter_mut().rev().for_each(work);
    }
}

#[test]
fn agent_order_does_not_change_the_plan() {
    let (f, sc) = fixtures::f6_fault("4-5");
    let cfg = SolverConfig::default();
    let cl = clusters(&f);
    let (a, _) = run_restoration(&f, &sc, &cl, &cfg).unwrap();
    let (b, _) = run_restoration_with(&f, &sc, &cl, &cfg, &Reversed).unwrap();
    assert_eq!(a, b);
}

#[test]
fn projection_stops_at_the_iteration_cap() {
    let (f, sc) = fixtures::f6_hard_scenario();
    let cfg = SolverConfig { mode: Mode::Projection, max_iters: 200, ..SolverConfig::default() };
    let (plan, trace) = run_restoration(&f, &sc, &clusters(&f), &cfg).unwrap();
    assert!(plan.iterations <= 200);
    assert!(trace.records.len() <= 200);
    assert!(!plan.converged() || !plan.is_feasible());
}
