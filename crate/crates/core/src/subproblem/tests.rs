use super::*;
use alloc::vec;
use alloc::vec::Vec;
use crate::clustering::{bottom_up_cluster, derive_adjacency, RootedTree};
use crate::fixtures;
use crate::qp::{polygonize_program, solve, QpSettings};

fn two_clusters(f: &Feeder) -> Clustering {
    let tree = RootedTree::from_feeder(f).unwrap();
    derive_adjacency(&bottom_up_cluster(&tree, 2, 1), f).unwrap()
}

fn line(f: &Feeder, id: &str) -> usize {
    f.line_index(id).unwrap()
}

fn node(f: &Feeder, id: u32) -> usize {
    f.node_index(crate::feeder::NodeId(id)).unwrap()
}

#[test]
fn joint_line_quantities_are_binding_in_both_clusters() {
    let (f, s) = fixtures::f6_blackout();
    let cl = two_clusters(&f);
    let sw = line(&f, "2-4");
    let tie = line(&f, "3-5");
    assert_eq!(cl.joint_lines, [sw, tie].into_iter().collect());
    for c in cl.ids() {
        let idx = classify_variables(&f, &s, &cl, c).unwrap();
        for t in 0..2 {
            for l in [sw, tie] {
                for q in [
                    Quantity::FlowP { line: l, phase: 0 },
                    Quantity::FlowQ { line: l, phase: 0 },
                    Quantity::LineOn { line: l },
                    Quantity::Parent { line: l, dir: Dir::Forward },
                    Quantity::Parent { line: l, dir: Dir::Reverse },
                ] {
                    let j = idx.at(t, q).unwrap();
                    assert!(idx.is_binding(j), "{q:?} in cluster {c}");
                    assert_eq!(idx.sharers(j).len(), 2);
                }
            }
        }
    }
}

#[test]
fn interior_entries_have_a_single_holder() {
    let (f, s) = fixtures::f6_blackout();
    let cl = two_clusters(&f);
    let root = cl.cluster_of(f.substation()).unwrap();
    let idx = classify_variables(&f, &s, &cl, root).unwrap();
    let j = idx.at(0, Quantity::NodeOn { node: node(&f, 6) }).unwrap();
    assert!(!idx.is_binding(j));
    assert_eq!(idx.sharers(j).len(), 1);
    let j = idx.at(1, Quantity::FlowP { line: line(&f, "1-2"), phase: 0 }).unwrap();
    assert!(!idx.is_binding(j));
}

#[test]
fn external_voltage_copies_link_to_the_joint_line() {
    let (f, s) = fixtures::f6_blackout();
    let cl = two_clusters(&f);
    let root = cl.cluster_of(f.substation()).unwrap();
    let idx = classify_variables(&f, &s, &cl, root).unwrap();
    assert_eq!(idx.external_nodes, vec![node(&f, 4), node(&f, 5)]);
    let j = idx.at(0, Quantity::Volt { node: node(&f, 4), phase: 0 }).unwrap();
    assert_eq!(
        idx.links[j],
        vec![SharedKey { step: 0, line: line(&f, "2-4"), qty: SharedQty::VoltTo(0) }]
    );
}

#[test]
fn fault_isolation_appears_as_bounds() {
    let (f, s) = fixtures::f6_fault("2-4");
    let cl = two_clusters(&f);
    let root = cl.cluster_of(f.substation()).unwrap();
    let idx = classify_variables(&f, &s, &cl, root).unwrap();
    let prog = build_local_program(&idx, &f, &s, &SolverConfig::default());
    for t in 0..2 {
        let a = idx.at(t, Quantity::LineOn { line: line(&f, "2-4") }).unwrap();
        assert_eq!((prog.vars[a].lower, prog.vars[a].upper), (0.0, 0.0));
        let b = idx.at(t, Quantity::NodeOn { node: node(&f, 2) }).unwrap();
        assert_eq!(prog.vars[b].upper, 0.0);
        assert!(idx.at(t, Quantity::Parent { line: line(&f, "2-4"), dir: Dir::Forward }).is_none());
    }
    let other = cl.ids().find(|c| *c != root).unwrap();
    let idx = classify_variables(&f, &s, &cl, other).unwrap();
    let prog = build_local_program(&idx, &f, &s, &SolverConfig::default());
    let b = idx.at(0, Quantity::NodeOn { node: node(&f, 4) }).unwrap();
    assert_eq!(prog.vars[b].upper, 0.0);
}

#[test]
fn substation_capacity_row_in_root_cluster_only() {
    let (f, s) = fixtures::f6_blackout();
    let cl = two_clusters(&f);
    let root = cl.cluster_of(f.substation()).unwrap();
    for c in cl.ids() {
        let idx = classify_variables(&f, &s, &cl, c).unwrap();
        let prog = build_local_program(&idx, &f, &s, &SolverConfig::default());
        let rows: Vec<&Row> = prog.rows.iter().filter(|r| r.tag == RowTag::SubstationP).collect();
        if c == root {
            assert_eq!(rows.len(), 2);
            assert_eq!((rows[0].lower, rows[0].upper), (0.0, 0.5));
            // Outflow on 1-2 and 1-6.
            let mut cols: Vec<usize> = rows[0].terms.iter().map(|t| t.0).collect();
            cols.sort_unstable();
            let mut want = vec![
                idx.at(0, Quantity::FlowP { line: line(&f, "1-2"), phase: 0 }).unwrap(),
                idx.at(0, Quantity::FlowP { line: line(&f, "1-6"), phase: 0 }).unwrap(),
            ];
            want.sort_unstable();
            assert_eq!(cols, want);
        } else {
            assert!(rows.is_empty());
        }
    }
}

/// Row counts by role, derived from the feeder by hand-written formulas.
fn expected_f6_single_cluster_counts(f: &Feeder, horizon: usize) -> (usize, usize, usize) {
    let nd = f.loads().iter().filter(|l| !l.dispatchable).count();
    let d = f.loads().len() - nd;
    let n = f.nodes().len();
    let switchable = f.lines().iter().filter(|l| l.is_switchable()).count();
    let plain = f.lines().len() - switchable;
    let per_step = 2 * nd       // pickup equalities
        + nd + 2 * d            // node gating of loads
        + 2 * (n - 1) + 1       // voltage box + reference
        + 2                     // substation P and Q
        + plain + 2 * switchable // voltage drop
        + 2 * (n - 1)           // balance
        + plain + switchable    // tree rows
        + 2 * switchable        // closed switch ends energized
        + plain                 // plain lines energize together
        + 2 * (n - 1); // one parent, energized has parent
    let sequencing = (horizon - 1) * f.loads().len();
    let vars_per_step = 2 * f.loads().len() + n + 2 * f.lines().len() + nd + n + switchable + 2 * f.lines().len();
    (horizon * per_step + sequencing, horizon * f.lines().len(), horizon * vars_per_step)
}

#[test]
fn golden_counts_single_cluster_f6() {
    let (f, s) = fixtures::f6_blackout();
    let cl = Clustering::single(&f);
    let idx = classify_variables(&f, &s, &cl, crate::clustering::ClusterId(0)).unwrap();
    let prog = build_local_program(&idx, &f, &s, &SolverConfig::default());
    let (rows, cones, vars) = expected_f6_single_cluster_counts(&f, 2);
    assert_eq!(prog.rows.len(), rows);
    assert_eq!(prog.rows.len(), 143);
    assert_eq!(prog.cones.len(), cones);
    assert_eq!(prog.num_vars(), vars);
    assert_eq!(prog.num_vars(), 104);
    // Same input, same program.
    assert_eq!(prog, build_local_program(&idx, &f, &s, &SolverConfig::default()));
}

fn all_closed_assignment(idx: &VarIndex, f: &Feeder) -> BTreeMap<VarKey, f64> {
    // 2-4 closed, tie open, everything energized and picked up; tree rooted at node 1.
    let tie = f.line_index("3-5").unwrap();
    let mut a = BTreeMap::new();
    for j in idx.binaries() {
        let key = idx.keys[j];
        let v = match key.qty {
            Quantity::LineOn { line } => (line != tie) as u8 as f64,
            Quantity::Parent { line, dir } => {
                if line == tie {
                    0.0
                } else {
                    // Every F6 line is listed parent-first.
                    (dir == Dir::Forward) as u8 as f64
                }
            }
            _ => 1.0,
        };
        a.insert(key, v);
    }
    a
}

#[test]
fn switches_closed_on_fault_free_f6_is_feasible() {
    let (f, s) = fixtures::f6_blackout();
    let cl = Clustering::single(&f);
    let idx = classify_variables(&f, &s, &cl, crate::clustering::ClusterId(0)).unwrap();
    let mut prog = build_local_program(&idx, &f, &s, &SolverConfig::default());
    // Only the final step has room for every load.
    let mut a = all_closed_assignment(&idx, &f);
    for (k, v) in a.iter_mut() {
        if k.step == 0 {
            if let Quantity::LoadOn { .. } = k.qty {
                *v = 0.0;
            }
        }
    }
    fix_binaries(&mut prog, &idx, &a).unwrap();
    let poly = polygonize_program(&prog, 12).unwrap();
    let sol = solve(&poly, &QpSettings::default()).unwrap();
    assert!(sol.is_optimal(), "{:?} {} {} {} {}", sol.status, sol.primal_residual, sol.dual_residual, sol.gap, poly.max_violation(&sol.x));
    assert!(poly.max_violation(&sol.x) <= 1e-6);
}

#[test]
fn fixing_rejects_bad_values() {
    let (f, s) = fixtures::f6_fault("2-4");
    let cl = Clustering::single(&f);
    let idx = classify_variables(&f, &s, &cl, crate::clustering::ClusterId(0)).unwrap();
    let prog = build_local_program(&idx, &f, &s, &SolverConfig::default());
    let mut a: BTreeMap<VarKey, f64> = idx.binaries().map(|j| (idx.keys[j], 0.0)).collect();

    let sw = f.line_index("2-4").unwrap();
    a.insert(VarKey { step: 0, qty: Quantity::LineOn { line: sw } }, 1.0);
    let err = fix_binaries(&mut prog.clone(), &idx, &a).unwrap_err();
    assert!(matches!(err, SubproblemError::Conflict { .. }));

    a.insert(VarKey { step: 0, qty: Quantity::LineOn { line: sw } }, 0.5);
    let err = fix_binaries(&mut prog.clone(), &idx, &a).unwrap_err();
    assert!(matches!(err, SubproblemError::NonBoolean { .. }));

    a.remove(&VarKey { step: 0, qty: Quantity::LineOn { line: sw } });
    let err = fix_binaries(&mut prog.clone(), &idx, &a).unwrap_err();
    assert!(matches!(err, SubproblemError::MissingAssignment(_)));
}

#[test]
fn consensus_penalties_and_missing_entries() {
    let (f, s) = fixtures::f6_blackout();
    let cl = two_clusters(&f);
    let c = cl.ids().next().unwrap();
    let idx = classify_variables(&f, &s, &cl, c).unwrap();
    let cfg = SolverConfig::default();
    let mut view = ConsensusView::default();
    for (_, k) in idx.all_links() {
        view.xbar.insert(k, 0.25);
        view.u_shared.insert(k, 0.05);
    }
    for j in idx.binaries() {
        view.z.insert(idx.keys[j], 1.0);
        view.u_bool.insert(idx.keys[j], -0.5);
    }
    let prog = build_subproblem(&idx, &f, &s, &view, &cfg).unwrap();
    let slots = penalty_slots(&idx);
    assert_eq!(prog.penalties.len(), slots.len());
    for (p, slot) in prog.penalties.iter().zip(&slots) {
        assert_eq!(p.weight, 0.5 * cfg.rho);
        let want = match slot {
            PenaltySlot::Shared { .. } => 0.2,
            PenaltySlot::Boolean { .. } => 1.5,
        };
        assert!((p.center - want).abs() < 1e-15);
    }

    let first = idx.binaries().next().unwrap();
    view.z.remove(&idx.keys[first]);
    assert!(matches!(
        build_subproblem(&idx, &f, &s, &view, &cfg),
        Err(SubproblemError::MissingConsensus(_))
    ));
}

#[test]
fn dump_lists_every_block() {
    let (f, s) = fixtures::f6_blackout();
    let cl = Clustering::single(&f);
    let idx = classify_variables(&f, &s, &cl, crate::clustering::ClusterId(0)).unwrap();
    let prog = build_local_program(&idx, &f, &s, &SolverConfig::default());
    let d = prog.dump();
    assert!(d.starts_with("NAME"));
    assert!(d.contains("substation_p"));
    assert!(d.contains("node_on[1,t1]"));
    assert!(d.trim_end().ends_with("ENDATA"));
}

#[test]
fn unknown_cluster_rejected() {
    let (f, s) = fixtures::f6_blackout();
    let cl = Clustering::single(&f);
    assert_eq!(
        classify_variables(&f, &s, &cl, crate::clustering::ClusterId(7)).unwrap_err(),
        SubproblemError::UnknownCluster(crate::clustering::ClusterId(7))
    );
}
