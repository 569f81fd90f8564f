//! Desk-scale test feeders.
//!
//! All values are per-unit on a 1 MVA, 4.16 kV base. The JSON copies shipped
//! with the `restora` crate are generated from these builders.

use alloc::vec;
use alloc::vec::Vec;

use crate::feeder::{
    make_scenario, Base, CapBank, DerUnit, Feeder, FeederParts, Line, LineKind, Load, Node, NodeId,
    Scenario, SubstationCapacity,
};

fn line1(from: u32, to: u32, kind: LineKind, r: f64, x: f64, s_max: f64) -> Line {
    Line {
        id: alloc::format!("{from}-{to}"),
        from: NodeId(from),
        to: NodeId(to),
        r: vec![r],
        x: vec![x],
        s_max: vec![s_max],
        kind,
        switch_priority: match kind {
            LineKind::Tie => 1.0,
            LineKind::Switchable => 2.0,
            _ => 0.0,
        },
        regulator_ratio: if kind == LineKind::Regulator { Some(vec![1.0]) } else { None },
    }
}

fn load1(node: u32, p: f64, q: f64, w: f64, dispatchable: bool) -> Load {
    Load { node: NodeId(node), p_max: vec![p], q_max: vec![q], priority: vec![w], dispatchable }
}

fn nodes(ids: impl IntoIterator<Item = u32>) -> Vec<Node> {
    ids.into_iter().map(|i| Node { id: NodeId(i) }).collect()
}

fn cap(p: f64, q: f64) -> SubstationCapacity {
    SubstationCapacity { p, q }
}

/// Six-node feeder: one sectionalizing switch (2-4) and one tie (3-5).
///
/// ```text
///   1 ── 2 ── 3
///   │    ┆    ┊ tie
///   6    4 ── 5
/// ```
pub fn f6() -> Feeder {
    use LineKind::*;
    let parts = FeederParts {
        base: Base::default(),
        phase_count: 1,
        nodes: nodes(1..=6),
        lines: vec![
            line1(1, 2, Plain, 0.01, 0.02, 1.0),
            line1(2, 3, Plain, 0.01, 0.02, 1.0),
            line1(2, 4, Switchable, 0.01, 0.02, 1.0),
            line1(4, 5, Plain, 0.01, 0.02, 1.0),
            line1(1, 6, Plain, 0.01, 0.02, 1.0),
            line1(3, 5, Tie, 0.01, 0.02, 1.0),
        ],
        loads: vec![
            load1(2, 0.14, 0.05, 20.0, false),
            load1(3, 0.20, 0.08, 50.0, false),
            load1(4, 0.25, 0.10, 10.0, false),
            load1(5, 0.15, 0.06, 30.0, false),
            load1(6, 0.10, 0.04, 15.0, true),
        ],
        ders: vec![],
        caps: vec![],
        substation: NodeId(1),
    };
    Feeder::new(parts).expect("fixture is well formed")
}

/// Two-step blackout profile for [`f6`]: 0.5 then 1.0 p.u.
pub fn f6_profile() -> Vec<SubstationCapacity> {
    vec![cap(0.5, 0.3), cap(1.0, 0.6)]
}

pub fn f6_blackout() -> (Feeder, Scenario) {
    let f = f6();
    let s = make_scenario(&f, &[], &f6_profile(), 2).expect("valid scenario");
    (f, s)
}

/// [`f6`] with a fault on `line` (e.g. `"4-5"`).
pub fn f6_fault(line: &str) -> (Feeder, Scenario) {
    let f = f6();
    let s = make_scenario(&f, &[line], &f6_profile(), 2).expect("valid scenario");
    (f, s)
}

/// Six-node feeder where the high-priority load at node 5 is only worth
/// serving if both the switch and the tie carry part of its demand; any
/// rounding that closes both creates a loop.
pub fn f6_hard() -> Feeder {
    use LineKind::*;
    let parts = FeederParts {
        base: Base::default(),
        phase_count: 1,
        nodes: nodes(1..=6),
        lines: vec![
            line1(1, 2, Plain, 0.01, 0.02, 1.5),
            line1(2, 3, Plain, 0.01, 0.02, 1.5),
            line1(2, 4, Switchable, 0.01, 0.02, 0.35),
            line1(4, 5, Plain, 0.01, 0.02, 0.35),
            line1(1, 6, Plain, 0.01, 0.02, 1.5),
            line1(3, 5, Tie, 0.01, 0.02, 0.35),
        ],
        loads: vec![
            load1(3, 0.10, 0.04, 10.0, false),
            load1(4, 0.05, 0.02, 10.0, false),
            load1(5, 0.30, 0.12, 50.0, false),
            load1(6, 0.10, 0.04, 10.0, true),
        ],
        ders: vec![],
        caps: vec![],
        substation: NodeId(1),
    };
    Feeder::new(parts).expect("fixture is well formed")
}

pub fn f6_hard_scenario() -> (Feeder, Scenario) {
    let f = f6_hard();
    let s = make_scenario(&f, &[], &[cap(0.6, 0.4), cap(1.0, 0.6)], 2).expect("valid scenario");
    (f, s)
}

/// Thirteen-node feeder with a regulator at the head, two sectionalizing
/// switches, one tie, a PV inverter and a capacitor bank.
pub fn f13() -> Feeder {
    use LineKind::*;
    let mut reg = line1(1, 2, Regulator, 0.002, 0.006, 1.5);
    reg.regulator_ratio = Some(vec![1.01]);
    let parts = FeederParts {
        base: Base::default(),
        phase_count: 1,
        nodes: nodes(1..=13),
        lines: vec![
            reg,
            line1(2, 3, Plain, 0.01, 0.02, 1.0),
            line1(3, 4, Plain, 0.01, 0.02, 0.5),
            line1(3, 5, Switchable, 0.01, 0.02, 0.5),
            line1(5, 6, Plain, 0.01, 0.02, 0.5),
            line1(2, 7, Plain, 0.01, 0.02, 1.0),
            line1(7, 8, Plain, 0.01, 0.02, 0.5),
            line1(8, 9, Plain, 0.01, 0.02, 0.5),
            line1(8, 10, Switchable, 0.01, 0.02, 0.5),
            line1(7, 11, Plain, 0.01, 0.02, 0.5),
            line1(11, 12, Plain, 0.01, 0.02, 0.5),
            line1(12, 13, Plain, 0.01, 0.02, 0.5),
            line1(6, 9, Tie, 0.01, 0.02, 0.5),
        ],
        loads: vec![
            load1(3, 0.08, 0.03, 20.0, true),
            load1(4, 0.12, 0.05, 50.0, false),
            load1(6, 0.15, 0.06, 30.0, false),
            load1(9, 0.10, 0.04, 25.0, false),
            load1(10, 0.09, 0.04, 10.0, false),
            load1(12, 0.07, 0.03, 15.0, true),
            load1(13, 0.11, 0.05, 40.0, false),
        ],
        ders: vec![DerUnit { node: NodeId(11), s_inv_max: vec![0.05] }],
        caps: vec![CapBank { node: NodeId(9), q_cap_max: vec![0.03] }],
        substation: NodeId(1),
    };
    Feeder::new(parts).expect("fixture is well formed")
}

pub fn f13_profile() -> Vec<SubstationCapacity> {
    vec![cap(0.3, 0.2), cap(0.5, 0.3), cap(0.8, 0.5)]
}

pub fn f13_blackout() -> (Feeder, Scenario) {
    let f = f13();
    let s = make_scenario(&f, &[], &f13_profile(), 3).expect("valid scenario");
    (f, s)
}

/// IEEE 123-node feeder topology (single-phase equivalent), substation at 150.
/// Nodes that only touch normally-open ties without any other connection
/// (251, 350, 451) are left out.
pub fn ieee123() -> Feeder {
    use LineKind::*;
    const PLAIN: &[(u32, u32)] = &[
        (1, 2), (1, 3), (1, 7), (3, 4), (3, 5), (5, 6), (7, 8), (8, 12), (8, 9), (8, 13),
        (13, 34), (13, 18), (14, 11), (14, 10), (15, 16), (15, 17), (18, 19), (18, 21),
        (19, 20), (21, 22), (21, 23), (23, 24), (23, 25), (25, 28), (26, 27), (26, 31),
        (27, 33), (28, 29), (29, 30), (30, 250), (31, 32), (34, 15), (35, 36), (35, 40),
        (36, 37), (36, 38), (38, 39), (40, 41), (40, 42), (42, 43), (42, 44), (44, 45),
        (44, 47), (45, 46), (47, 48), (47, 49), (49, 50), (50, 51), (51, 151), (52, 53),
        (53, 54), (54, 55), (54, 57), (55, 56), (57, 58), (57, 60), (58, 59), (60, 62),
        (62, 63), (63, 64), (64, 65), (65, 66), (67, 68), (67, 72), (67, 97), (68, 69),
        (69, 70), (70, 71), (72, 73), (72, 76), (73, 74), (74, 75), (76, 77), (76, 86),
        (77, 78), (78, 79), (78, 80), (80, 81), (81, 82), (81, 84), (82, 83), (84, 85),
        (86, 87), (87, 88), (87, 89), (89, 90), (89, 91), (91, 92), (91, 93), (93, 94),
        (93, 95), (95, 96), (97, 98), (98, 99), (99, 100), (100, 450), (101, 102),
        (101, 105), (102, 103), (103, 104), (105, 106), (105, 108), (106, 107), (108, 109),
        (108, 300), (109, 110), (110, 111), (110, 112), (112, 113), (113, 114), (135, 35),
        (152, 52), (197, 101), (149, 1), (60, 61), (61, 610),
    ];
    const REGULATORS: &[(u32, u32)] = &[(150, 149), (9, 14), (25, 26), (160, 67)];
    const SWITCHES: &[(u32, u32)] = &[(13, 152), (18, 135), (60, 160), (97, 197)];
    const TIES: &[(u32, u32)] = &[(54, 94), (151, 300)];
    const LOADS_KW: &[(u32, f64)] = &[
        (1, 40.0), (2, 20.0), (4, 40.0), (5, 20.0), (6, 40.0), (7, 20.0), (9, 40.0), (10, 20.0),
        (11, 40.0), (12, 20.0), (16, 40.0), (17, 20.0), (19, 40.0), (20, 40.0), (22, 40.0),
        (24, 40.0), (28, 40.0), (29, 40.0), (30, 40.0), (31, 20.0), (32, 20.0), (33, 40.0),
        (34, 40.0), (35, 40.0), (37, 40.0), (38, 20.0), (39, 20.0), (41, 20.0), (42, 20.0),
        (43, 40.0), (45, 20.0), (46, 20.0), (47, 105.0), (48, 210.0), (49, 140.0), (50, 40.0),
        (51, 20.0), (52, 40.0), (53, 40.0), (55, 20.0), (56, 20.0), (58, 20.0), (59, 20.0),
        (60, 20.0), (62, 40.0), (63, 40.0), (64, 75.0), (65, 140.0), (66, 75.0), (68, 20.0),
        (69, 40.0), (70, 20.0), (71, 40.0), (73, 40.0), (74, 40.0), (75, 40.0), (76, 245.0),
        (77, 40.0), (79, 40.0), (80, 40.0), (82, 40.0), (83, 20.0), (84, 20.0), (85, 40.0),
        (86, 20.0), (87, 40.0), (88, 40.0), (90, 40.0), (92, 40.0), (94, 40.0), (95, 20.0),
        (96, 20.0), (98, 40.0), (99, 40.0), (100, 40.0), (102, 20.0), (103, 40.0), (104, 40.0),
        (106, 40.0), (107, 40.0), (109, 40.0), (111, 20.0), (112, 20.0), (113, 40.0), (114, 20.0),
    ];

    let mut lines = Vec::new();
    let mut add = |list: &[(u32, u32)], kind: LineKind, s_max: f64| {
        for &(a, b) in list {
            lines.push(line1(a, b, kind, 0.005, 0.01, s_max));
        }
    };
    add(PLAIN, Plain, 1.5);
    add(REGULATORS, Regulator, 5.0);
    add(SWITCHES, Switchable, 5.0);
    add(TIES, Tie, 1.5);
    let mut ids: Vec<u32> = lines.iter().flat_map(|l| [l.from.0, l.to.0]).collect();
    ids.sort_unstable();
    ids.dedup();
    let loads = LOADS_KW
        .iter()
        .map(|&(n, kw)| {
            let p = kw / 1000.0;
            let w = if n == 48 || n == 65 { 50.0 } else { 10.0 };
            load1(n, p, 0.484 * p, w, n == 47 || n == 76)
        })
        .collect();
    let parts = FeederParts {
        base: Base::default(),
        phase_count: 1,
        nodes: nodes(ids),
        lines,
        loads,
        ders: vec![
            DerUnit { node: NodeId(66), s_inv_max: vec![0.3] },
            DerUnit { node: NodeId(105), s_inv_max: vec![0.3] },
        ],
        caps: vec![],
        substation: NodeId(150),
    };
    Feeder::new(parts).expect("fixture is well formed")
}

pub fn ieee123_blackout() -> (Feeder, Scenario) {
    let f = ieee123();
    let prof = [cap(0.4, 0.2), cap(1.4, 0.7), cap(3.5, 1.7)];
    let s = make_scenario(&f, &[], &prof, 3).expect("valid scenario");
    (f, s)
}

/// Named fixture lookup used by the CLI and tests.
pub fn by_name(name: &str) -> Option<(Feeder, Scenario)> {
    match name {
        "f6" => Some(f6_blackout()),
        "f6_fault" => Some(f6_fault("4-5")),
        "f6_hard" => Some(f6_hard_scenario()),
        "f13" => Some(f13_blackout()),
        "ieee123" => Some(ieee123_blackout()),
        _ => None,
    }
}

pub const NAMES: &[&str] = &["f6", "f6_fault", "f6_hard", "f13", "ieee123"];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{
        bottom_up_cluster, default_relaxation, derive_adjacency, optimal_cluster_count, RootedTree,
    };
    use crate::feeder::validate_feeder;

    #[test]
    fn fixtures_are_valid() {
        for name in NAMES {
            let (f, s) = by_name(name).unwrap();
            let r = validate_feeder(&f);
            assert!(r.ok(), "{name}: {:?}", r.violations);
            s.validate(&f).unwrap();
        }
    }

    #[test]
    fn f6_counts() {
        let f = f6();
        assert_eq!(f.nodes().len(), 6);
        assert_eq!(f.lines().len(), 6);
        assert_eq!(f.lines().iter().filter(|l| l.is_switchable()).count(), 2);
    }

    #[test]
    fn ieee123_clusters() {
        let f = ieee123();
        let n = f.nodes().len();
        let k = optimal_cluster_count(n, 1.0, 1.0);
        assert_eq!(k, 11, "n = {n}");
        let tree = RootedTree::from_feeder(&f).unwrap();
        let r = default_relaxation(n, k);
        assert_eq!(r, 2);
        let c = derive_adjacency(&bottom_up_cluster(&tree, k, r), &f).unwrap();
        assert_eq!(c.len(), 11, "sizes {:?}", c.sizes());
        assert!(c.sizes().iter().all(|s| (8..=15).contains(s)), "sizes {:?}", c.sizes());
    }
}
