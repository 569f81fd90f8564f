use super::*;
use crate::clustering::{bottom_up_cluster, default_relaxation, derive_adjacency, optimal_cluster_count, RootedTree};
use crate::feeder::{make_scenario, SubstationCapacity};
use crate::fixtures;
use proptest::prelude::*;

fn clusters(f: &Feeder) -> Clustering {
    let n = f.nodes().len();
    let k = optimal_cluster_count(n, 1.0, 1.0);
    let tree = RootedTree::from_feeder(f).unwrap();
    derive_adjacency(&bottom_up_cluster(&tree, k, default_relaxation(n, k)), f).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

#[test]
fn rounding_ties_go_up() {
    assert_eq!(project_boolean(0.49), 0.0);
    assert_eq!(project_boolean(0.51), 1.0);
    assert_eq!(project_boolean(0.5), 1.0);
}

#[test]
fn prox_examples() {
    assert!(close(prox_boolean(0.7, 0.0), 0.7));
    assert!(close(prox_boolean(0.8, 1.0), 0.9));
    assert!(prox_boolean(0.3, 1e15) < 1e-12);
}

#[test]
fn proximal_factor_growth() {
    assert!(close(update_t(0.0, 0.1, 1.0, 1.0), 0.2));
    assert_eq!(update_t(4.5, 0.0, 0.3, 0.7), 4.5);
    assert!(close(update_t(1.0, 0.1, 0.1, 0.1), 3.0));
    // Zero residuals hit the floor instead of dividing by zero.
    assert!(update_t(0.0, 0.1, 0.0, 0.0).is_finite());
}

#[test]
fn consensus_examples() {
    assert!(close(consensus_continuous(&[(0.4, 0.0), (0.6, 0.0)]), 0.5));
    assert!(close(consensus_binary(&[(0.8, 0.0)], BooleanUpdate::Prox(1.0)), 0.9));
    for t in [0.0, 1.0, 1e6] {
        assert_eq!(consensus_binary(&[(1.0, 0.0), (1.0, 0.0)], BooleanUpdate::Prox(t)), 1.0);
    }
    assert_eq!(consensus_binary(&[(0.3, 0.0), (0.8, 0.0)], BooleanUpdate::Snap), 1.0);
    // Averages outside the unit interval are clamped before the prox step.
    assert_eq!(consensus_binary(&[(1.0, 0.4)], BooleanUpdate::Prox(0.0)), 1.0);
}

#[test]
fn multiplier_example() {
    assert!(close(multiplier_update(0.0, 0.8, 0.9), -0.1));
}

#[test]
fn residual_examples() {
    let zero = [0.0, 0.0];
    assert_eq!(residuals(1.0, &zero, &zero, Some((&zero, &zero))), (0.0, 0.0));
    let (rp, rd) = residuals(1.0, &[0.8 - 0.9], &[0.0], Some((&[0.0], &[0.0])));
    assert!(close(rp, 0.1));
    assert_eq!(rd, 0.0);
    let dz = [0.3, -0.4];
    let (_, r1) = residuals(1.0, &zero, &zero, Some((&dz, &zero)));
    let (_, r2) = residuals(2.0, &zero, &zero, Some((&dz, &zero)));
    assert!(close(r1, 0.5));
    assert!(close(r2, 2.0 * r1));
    assert_eq!(residuals(1.0, &zero, &zero, None).1, f64::INFINITY);
}

#[test]
fn phase_names_round_trip() {
    for p in [Phase::Relax, Phase::Drive, Phase::Project, Phase::Polish] {
        assert_eq!(Phase::parse(p.as_str()), Some(p));
    }
    assert_eq!(Phase::parse("warmup"), None);
}

#[test]
fn status_and_violation_names_round_trip() {
    for s in [PlanStatus::Converged, PlanStatus::NotConverged, PlanStatus::Infeasible] {
        assert_eq!(PlanStatus::parse(s.as_str()), Some(s));
    }
    for k in ViolationKind::ALL {
        assert_eq!(ViolationKind::parse(k.as_str()), Some(k));
    }
    assert_eq!(ViolationKind::parse("loop"), None);
}

proptest! {
    #[test]
    fn prox_stays_between_value_and_rounding(w in 0.0..=1.0f64, t in 0.0..1e6f64) {
        let z = prox_boolean(w, t);
        let b = project_boolean(w);
        prop_assert!(z >= w.min(b) - 1e-12 && z <= w.max(b) + 1e-12);
    }

    #[test]
    fn prox_approaches_rounding_monotonically(w in 0.0..=1.0f64, t in 0.0..1e3f64, dt in 0.0..1e3f64) {
        let b = project_boolean(w);
        prop_assert!((prox_boolean(w, t + dt) - b).abs() <= (prox_boolean(w, t) - b).abs() + 1e-15);
    }

    #[test]
    fn boolean_values_are_fixed_points(b in prop::bool::ANY, t in 0.0..1e9f64) {
        let v = if b { 1.0 } else { 0.0 };
        prop_assert_eq!(prox_boolean(v, t), v);
    }

    #[test]
    fn proximal_factor_never_shrinks(t in 0.0..1e6f64, c in 0.0..10.0f64, rp in 0.0..10.0f64, rd in 0.0..10.0f64) {
        prop_assert!(update_t(t, c, rp, rd) >= t);
    }
}

fn dead_steps(f: &Feeder, sc: &Scenario) -> Vec<StepPlan> {
    (0..sc.horizon).map(|_| StepPlan::dead(f, sc)).collect()
}

#[test]
fn dead_plan_passes_the_check() {
    let (f, sc) = fixtures::f6_blackout();
    assert!(check_steps(&dead_steps(&f, &sc), &f, &sc).ok());
}

#[test]
fn closed_loop_is_a_radiality_violation() {
    let (f, sc) = fixtures::f6_blackout();
    let mut steps = dead_steps(&f, &sc);
    for s in &mut steps {
        s.line_closed = vec![true; f.lines().len()];
        s.node_energized = vec![true; f.nodes().len()];
        s.voltage = vec![vec![1.0]; f.nodes().len()];
    }
    let report = check_steps(&steps, &f, &sc);
    assert!(report.count(ViolationKind::Radiality) > 0);
    assert!(report.violations.iter().any(|v| v.element.contains("loop")));
}

#[test]
fn load_shed_between_steps_is_flagged() {
    let (f, sc) = fixtures::f6_blackout();
    let mut steps = dead_steps(&f, &sc);
    // Dispatchable load at node 6 served at step 1, dropped at step 2.
    steps[0].load_p[4][0] = 0.05;
    let report = check_steps(&steps, &f, &sc);
    assert!(report.count(ViolationKind::Sequencing) >= 1);
    assert!(report.violations.iter().any(|v| v.kind == ViolationKind::Sequencing && v.step == 1));
}

#[test]
fn faulted_line_closed_is_flagged() {
    let (f, sc) = fixtures::f6_fault("4-5");
    let mut steps = dead_steps(&f, &sc);
    let l = f.line_index("4-5").unwrap();
    steps[0].line_closed[l] = true;
    assert!(check_steps(&steps, &f, &sc).count(ViolationKind::FaultIsolation) >= 1);
}

#[test]
fn f6_blackout_keeps_ties_open() {
    let (f, sc) = fixtures::f6_blackout();
    let (plan, trace) = run_restoration(&f, &sc, &clusters(&f), &SolverConfig::default()).unwrap();
    assert!(plan.converged(), "{:?}", plan.diagnostics);
    assert!(plan.is_feasible(), "{:?}", plan.feasibility.violations);
    let tie = f.line_index("3-5").unwrap();
    assert!(plan.steps.iter().all(|s| !s.line_closed[tie]));
    assert!(plan.objective > 0.0);
    assert_eq!(trace.records.len(), plan.iterations);
    assert_eq!(trace.clusters.len(), 2);
}

#[test]
fn fault_next_to_the_substation_side_isolates() {
    let (f, sc) = fixtures::f6_fault("2-4");
    let (plan, _) = run_restoration(&f, &sc, &clusters(&f), &SolverConfig::default()).unwrap();
    assert!(plan.is_feasible(), "{:?}", plan.feasibility.violations);
    let faulted = f.line_index("2-4").unwrap();
    let tie = f.line_index("3-5").unwrap();
    for s in &plan.steps {
        assert!(!s.line_closed[faulted]);
        // Node 2 is a dead fault end tied to the substation by a plain line,
        // so nothing can be served and the tie gains nothing.
        assert!(!s.line_closed[tie]);
        assert!(s.node_energized.iter().all(|on| !on));
    }
}

#[test]
fn zero_capacity_gives_the_all_zero_plan() {
    let f = fixtures::f6();
    let none = SubstationCapacity { p: 0.0, q: 0.0 };
    let sc = make_scenario(&f, &[], &[none, none], 2).unwrap();
    let (plan, _) = run_restoration(&f, &sc, &clusters(&f), &SolverConfig::default()).unwrap();
    assert!(plan.is_feasible());
    assert_eq!(plan.objective, 0.0);
    for s in &plan.steps {
        assert!(s.load_p.iter().flatten().all(|p| p.abs() < 1e-9));
        assert!(s.node_energized.iter().all(|on| !on));
    }
}

#[test]
fn runs_are_reproducible() {
    let (f, sc) = fixtures::f6_fault("4-5");
    let cl = clusters(&f);
    let a = run_restoration(&f, &sc, &cl, &SolverConfig::default()).unwrap();
    let b = run_restoration(&f, &sc, &cl, &SolverConfig::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn trace_phases_follow_the_schedule() {
    let (f, sc) = fixtures::f6_fault("4-5");
    let (plan, trace) = run_restoration(&f, &sc, &clusters(&f), &SolverConfig::default()).unwrap();
    assert!(plan.converged());
    let phases: Vec<Phase> = trace.records.iter().map(|r| r.phase).collect();
    assert!(phases.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(phases.first(), Some(&Phase::Relax));
    assert_eq!(phases.last(), Some(&Phase::Polish));
    let drive: Vec<f64> = trace.records.iter().filter(|r| r.phase == Phase::Drive).map(|r| r.t_tilde).collect();
    assert!(!drive.is_empty());
    assert!(drive.windows(2).all(|w| w[1] > w[0]));
    assert!(trace.records.iter().filter(|r| r.phase == Phase::Relax).all(|r| r.t_tilde == 0.0));
    assert_eq!(trace.records[0].r_d, f64::INFINITY);
}

#[test]
fn projection_mode_starts_by_rounding() {
    let (f, sc) = fixtures::f6_fault("4-5");
    let cfg = SolverConfig { mode: Mode::Projection, max_iters: 200, ..SolverConfig::default() };
    let (plan, trace) = run_restoration(&f, &sc, &clusters(&f), &cfg).unwrap();
    assert_eq!(plan.mode, Mode::Projection);
    assert_eq!(trace.records[0].phase, Phase::Project);
    assert_eq!(trace.iterations_in(Phase::Relax) + trace.iterations_in(Phase::Drive), 0);
}

#[test]
fn bad_inputs_are_rejected() {
    let (f, sc) = fixtures::f6_blackout();
    let cl = clusters(&f);
    let cfg = SolverConfig { eps: 0.0, ..SolverConfig::default() };
    assert!(matches!(run_restoration(&f, &sc, &cl, &cfg), Err(RunError::Config(_))));
    let mut partial = cl.clone();
    partial.assignment.remove(&crate::feeder::NodeId(5));
    assert!(matches!(
        run_restoration(&f, &sc, &partial, &SolverConfig::default()),
        Err(RunError::Clustering(_))
    ));
}

#[test]
fn executor_order_does_not_matter() {
    struct Reversed;
    impl Executor for Reversed {
        fn for_each_mut<T: Send, F: Fn(&mut T) + Sync>(&self, items: &mut [T], f: F) {
            for it in items.iter_mut().rev() {
                f(it);
            }
        }
    }
    let (f, sc) = fixtures::f6_fault("4-5");
    let cl = clusters(&f);
    let a = run_restoration(&f, &sc, &cl, &SolverConfig::default()).unwrap();
    let b = run_restoration_with(&f, &sc, &cl, &SolverConfig::default(), &Reversed).unwrap();
    assert_eq!(a, b);
}
