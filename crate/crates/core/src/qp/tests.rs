use super::*;
use crate::subproblem::{Penalty, RowTag};
use alloc::string::String;
use proptest::prelude::*;

const INF: f64 = f64::INFINITY;

fn program(bounds: &[(f64, f64)]) -> ConvexProgram {
    let mut p = ConvexProgram::default();
    for (i, (lo, hi)) in bounds.iter().enumerate() {
        p.add_var(alloc::format!("x{i}"), *lo, *hi);
    }
    p
}

fn solve_default(p: &ConvexProgram) -> Solution {
    solve(p, &QpSettings::default()).unwrap()
}

#[test]
fn projection_onto_box() {
    let mut p = program(&[(0.0, 1.0)]);
    p.penalties.push(Penalty { var: 0, center: 3.0, weight: 1.0 });
    let s = solve_default(&p);
    assert!(s.is_optimal());
    assert!((s.x[0] - 1.0).abs() < 1e-6);
    assert!((s.objective - 4.0).abs() < 1e-5);
}

#[test]
fn linear_objective_hits_row_bound() {
    let mut p = program(&[(0.0, INF)]);
    p.cost[0] = -1.0;
    p.add_row(alloc::vec![(0, 1.0)], -INF, 2.0, RowTag::User);
    let s = solve_default(&p);
    assert!(s.is_optimal());
    assert!((s.x[0] - 2.0).abs() < 1e-6);
}

#[test]
fn two_variable_lp_vertex() {
    // max x + y  s.t.  x + 2y <= 4, 3x + y <= 6: the two rows cross at (1.6, 1.2).
    let mut p = program(&[(0.0, INF), (0.0, INF)]);
    p.cost = alloc::vec![-1.0, -1.0];
    p.add_row(alloc::vec![(0, 1.0), (1, 2.0)], -INF, 4.0, RowTag::User);
    p.add_row(alloc::vec![(0, 3.0), (1, 1.0)], -INF, 6.0, RowTag::User);
    let s = solve_default(&p);
    assert!(s.is_optimal());
    assert!((s.x[0] - 1.6).abs() < 1e-6 && (s.x[1] - 1.2).abs() < 1e-6);
    assert!((s.objective + 2.8).abs() < 1e-6);
    assert!(s.gap <= 1e-5);
}

#[test]
fn equality_with_penalties() {
    let mut p = program(&[(-10.0, 10.0), (-10.0, 10.0)]);
    p.penalties.push(Penalty { var: 0, center: 0.0, weight: 1.0 });
    p.penalties.push(Penalty { var: 1, center: 0.0, weight: 1.0 });
    p.add_row(alloc::vec![(0, 1.0), (1, 1.0)], 1.0, 1.0, RowTag::User);
    let s = solve_default(&p);
    assert!(s.is_optimal());
    assert!((s.x[0] - 0.5).abs() < 1e-6 && (s.x[1] - 0.5).abs() < 1e-6);
}

#[test]
fn infeasible_rows_detected() {
    let mut p = program(&[(0.0, 1.0), (0.0, 1.0)]);
    p.add_row(alloc::vec![(0, 1.0), (1, 1.0)], 3.0, INF, RowTag::User);
    assert_eq!(solve_default(&p).status, SolveStatus::Infeasible);
}

#[test]
fn infeasible_after_fixing() {
    let mut p = program(&[(1.0, 1.0), (0.0, 1.0)]);
    p.add_row(alloc::vec![(0, 1.0)], -INF, 0.5, RowTag::User);
    assert_eq!(solve_default(&p).status, SolveStatus::Infeasible);
}

#[test]
fn unbounded_detected() {
    let mut p = program(&[(0.0, INF)]);
    p.cost[0] = -1.0;
    assert_eq!(solve_default(&p).status, SolveStatus::Unbounded);
}

#[test]
fn all_fixed_program() {
    let mut p = program(&[(0.25, 0.25)]);
    p.cost[0] = 2.0;
    let s = solve_default(&p);
    assert!(s.is_optimal());
    assert_eq!(s.x, alloc::vec![0.25]);
    assert_eq!(s.objective, 0.5);
}

#[test]
fn cones_must_be_polygonized() {
    let mut p = program(&[(-1.0, 1.0), (-1.0, 1.0)]);
    p.cones.push(DiskCap { p: 0, q: 1, radius: 1.0, gate: None, tag: RowTag::FlowCap });
    assert_eq!(solve(&p, &QpSettings::default()), Err(SolveError::UnpolygonizedCones(1)));
    let poly = polygonize_program(&p, 12).unwrap();
    assert_eq!(poly.rows.len(), 12);
    assert!(solve_default(&poly).is_optimal());
}

fn inside(rows: &[Row], p: f64, q: f64) -> bool {
    rows.iter().all(|r| r.violation(&[p, q, 1.0]) <= 1e-12)
}

fn disk(gate: Option<usize>) -> DiskCap {
    DiskCap { p: 0, q: 1, radius: 2.0, gate, tag: RowTag::FlowCap }
}

#[test]
fn polygon_examples() {
    let s = 2.0;
    let rows = polygonize_soc(&disk(None), 8).unwrap();
    assert_eq!(rows.len(), 8);
    assert!(inside(&rows, s, 0.0));
    let c45 = core::f64::consts::FRAC_1_SQRT_2;
    assert!(inside(&rows, 0.99 * s * c45, 0.99 * s * c45));
    assert!(!inside(&rows, 1.01 * s, 0.0));
    assert_eq!(polygonize_soc(&disk(None), 7), Err(SolveError::InvalidSides(7)));
    assert_eq!(polygonize_soc(&disk(None), 6), Err(SolveError::InvalidSides(6)));
}

#[test]
fn gated_polygon_closes_with_gate() {
    let rows = polygonize_soc(&disk(Some(2)), 12).unwrap();
    let at = |p: f64, q: f64, g: f64| rows.iter().all(|r| r.violation(&[p, q, g]) <= 1e-12);
    assert!(at(0.0, 0.0, 0.0));
    assert!(!at(0.01, 0.0, 0.0));
    assert!(at(2.0, 0.0, 1.0));
}

#[test]
fn workspace_update_matches_fresh_solve() {
    let mut p = program(&[(0.0, 1.0), (0.0, 1.0)]);
    p.add_row(alloc::vec![(0, 1.0), (1, 1.0)], -INF, 1.5, RowTag::User);
    p.penalties.push(Penalty { var: 0, center: 0.9, weight: 0.5 });
    p.penalties.push(Penalty { var: 1, center: 0.2, weight: 0.5 });
    p.cost = alloc::vec![-0.3, -0.1];
    let settings = QpSettings::default();
    let mut ws = QpWorkspace::new(&p, &settings).unwrap();
    let first = ws.solve(&p);
    assert!(first.is_optimal());

    p.penalties[0].center = 0.1;
    p.penalties[1].center = 1.4;
    ws.update_objective(&p).unwrap();
    ws.warm_start(&first.x);
    let warm = ws.solve(&p);
    let fresh = solve(&p, &settings).unwrap();
    assert!(warm.is_optimal() && fresh.is_optimal());
    for (a, b) in warm.x.iter().zip(&fresh.x) {
        assert!((a - b).abs() < 1e-5);
    }

    p.penalties[0].weight = 2.0;
    assert_eq!(ws.update_objective(&p), Err(SolveError::StructureChanged));
}

#[test]
fn solves_are_deterministic() {
    let mut p = program(&[(0.0, 2.0), (-1.0, 1.0), (0.0, 3.0)]);
    p.cost = alloc::vec![-1.0, 0.5, -0.25];
    p.add_row(alloc::vec![(0, 1.0), (1, 1.0), (2, 1.0)], 0.5, 2.5, RowTag::User);
    p.add_row(alloc::vec![(0, 1.0), (2, -1.0)], -INF, 0.7, RowTag::User);
    p.penalties.push(Penalty { var: 1, center: 0.3, weight: 0.1 });
    let a = solve_default(&p);
    let b = solve_default(&p);
    assert_eq!(a, b);
}

#[test]
fn status_names() {
    assert_eq!(SolveStatus::MaxIterations.as_str(), "iteration_limit");
    assert_eq!(String::from(SolveStatus::Optimal.as_str()), "optimal");
}

/// Independent oracle for two-variable programs: dense grid search over the box.
fn grid_min(p: &ConvexProgram, steps: usize) -> Option<f64> {
    let (lo0, hi0) = (p.vars[0].lower, p.vars[0].upper);
    let (lo1, hi1) = (p.vars[1].lower, p.vars[1].upper);
    let mut best: Option<f64> = None;
    for i in 0..=steps {
        for j in 0..=steps {
            let x = [lo0 + (hi0 - lo0) * i as f64 / steps as f64, lo1 + (hi1 - lo1) * j as f64 / steps as f64];
            if p.rows.iter().all(|r| r.violation(&x) <= 1e-12) {
                let f = p.objective(&x);
                best = Some(best.map_or(f, |b: f64| b.min(f)));
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optimal_points_are_feasible_and_no_worse_than_grid(
        c0 in -2.0..2.0f64, c1 in -2.0..2.0f64,
        a0 in -1.0..1.0f64, a1 in -1.0..1.0f64, b in 0.1..1.5f64,
        w in 0.0..1.0f64, center in -1.0..2.0f64,
    ) {
        // The origin is always feasible, so every instance is feasible and bounded.
        let mut p = program(&[(0.0, 1.0), (0.0, 1.0)]);
        p.cost = alloc::vec![c0, c1];
        p.add_row(alloc::vec![(0, a0), (1, a1)], -INF, b, RowTag::User);
        p.penalties.push(Penalty { var: 0, center, weight: w });
        let s = solve_default(&p);
        prop_assert!(s.is_optimal());
        prop_assert!(p.max_violation(&s.x) <= 1e-6);
        prop_assert!(s.gap <= 1e-5);
        let g = grid_min(&p, 200).unwrap();
        prop_assert!(s.objective <= g + 1e-6);
    }

    #[test]
    fn polygon_is_inscribed(angle in 0.0..6.3f64, radius in 0.0..1.2f64, half_sides in 4usize..16) {
        let sides = 2 * half_sides;
        let rows = polygonize_soc(&disk(None), sides).unwrap();
        let s = 2.0;
        let (p, q) = (radius * s * libm::cos(angle), radius * s * libm::sin(angle));
        if inside(&rows, p, q) {
            prop_assert!(libm::sqrt(p * p + q * q) <= s + 1e-9);
        }
        let inner = s * libm::cos(core::f64::consts::PI / sides as f64);
        if libm::sqrt(p * p + q * q) <= inner - 1e-9 {
            prop_assert!(inside(&rows, p, q));
        }
    }
}
