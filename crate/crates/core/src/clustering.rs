//! Two-level autonomous clustering.
//!
//! The first level picks the cluster count that balances per-agent work
//! against the number of agents; the second level walks the network tree
//! bottom-up and detaches subtrees whose size is close to the ideal.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::feeder::{Feeder, NodeId};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClusterId(pub usize);

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TopologyError {
    Cycle,
    Disconnected(NodeId),
    UnknownNode(NodeId),
    DisconnectedCluster(ClusterId),
    Unassigned(NodeId),
}

impl fmt::Display for TopologyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologyError::Cycle => write!(f, "topology contains a cycle"),
            TopologyError::Disconnected(n) => write!(f, "node {n} is not reachable from the root"),
            TopologyError::UnknownNode(n) => write!(f, "unknown node {n}"),
            TopologyError::DisconnectedCluster(c) => write!(f, "cluster {c} is not connected"),
            TopologyError::Unassigned(n) => write!(f, "node {n} is not assigned to a cluster"),
        }
    }
}

impl core::error::Error for TopologyError {}

/// Integer cluster count minimizing `lambda1 * k + lambda2 * n / k` over
/// `k in [1, n]`; ties go to the smaller count. With equal weights this is
/// `round(sqrt(n))`.
pub fn optimal_cluster_count(n: usize, lambda1: f64, lambda2: f64) -> usize {
    if n <= 1 {
        return 1;
    }
    let cost = |k: usize| lambda1 * k as f64 + lambda2 * n as f64 / k as f64;
    let guess = math::sqrt(lambda2 * n as f64 / lambda1);
    let lo = (math::floor(guess) as usize).clamp(1, n);
    let hi = (math::ceil(guess) as usize).clamp(1, n);
    let mut best = lo;
    // Scan a small window; the cost is convex in k so the minimum is next to the guess.
    for k in lo.saturating_sub(1).max(1)..=(hi + 1).min(n) {
        if cost(k) < cost(best) - 1e-12 * cost(best).abs() {
            best = k;
        }
    }
    best
}

/// Default relaxation factor: a fifth of the ideal cluster size, at least 1.
pub fn default_relaxation(n: usize, k: usize) -> usize {
    let m = n.div_ceil(k.max(1));
    (m / 5).max(1)
}

/// A tree rooted at the substation, children kept in ascending id order.
#[derive(Debug, Clone, PartialEq)]
pub struct RootedTree {
    root: NodeId,
    order: Vec<NodeId>,
    children: BTreeMap<NodeId, Vec<NodeId>>,
    parent: BTreeMap<NodeId, Option<NodeId>>,
}

impl RootedTree {
    pub fn from_edges(
        root: NodeId,
        nodes: &[NodeId],
        edges: &[(NodeId, NodeId)],
    ) -> Result<RootedTree, TopologyError> {
        let mut adj: BTreeMap<NodeId, Vec<NodeId>> = nodes.iter().map(|n| (*n, Vec::new())).collect();
        if !adj.contains_key(&root) {
            return Err(TopologyError::UnknownNode(root));
        }
        for &(a, b) in edges {
            if !adj.contains_key(&a) {
                return Err(TopologyError::UnknownNode(a));
            }
            if !adj.contains_key(&b) {
                return Err(TopologyError::UnknownNode(b));
            }
            if a == b {
                return Err(TopologyError::Cycle);
            }
            adj.get_mut(&a).unwrap().push(b);
            adj.get_mut(&b).unwrap().push(a);
        }
        if edges.len() + 1 > adj.len() {
            return Err(TopologyError::Cycle);
        }
        let mut parent = BTreeMap::new();
        let mut children: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        let mut order = Vec::with_capacity(adj.len());
        parent.insert(root, None);
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            order.push(v);
            let mut kids = Vec::new();
            for &w in &adj[&v] {
                if parent.get(&v).copied().flatten() == Some(w) {
                    continue;
                }
                if parent.contains_key(&w) {
                    return Err(TopologyError::Cycle);
                }
                parent.insert(w, Some(v));
                kids.push(w);
            }
            kids.sort_unstable();
            stack.extend(kids.iter().rev());
            children.insert(v, kids);
        }
        if let Some(n) = adj.keys().find(|n| !parent.contains_key(n)) {
            return Err(TopologyError::Disconnected(*n));
        }
        Ok(RootedTree { root, order, children, parent })
    }

    /// Tree of the normally-closed lines (ties removed) rooted at the substation.
    pub fn from_feeder(f: &Feeder) -> Result<RootedTree, TopologyError> {
        let nodes: Vec<NodeId> = f.nodes().iter().map(|n| n.id).collect();
        let edges: Vec<(NodeId, NodeId)> =
            f.normal_lines().map(|li| (f.lines()[li].from, f.lines()[li].to)).collect();
        RootedTree::from_edges(f.substation(), &nodes, &edges)
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        self.children.get(&v).map(|c| c.as_slice()).unwrap_or(&[])
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.parent.get(&v).copied().flatten()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.order.iter().copied()
    }

    /// Postorder with children visited in ascending id order.
    pub fn postorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.order.len());
        let mut stack = vec![(self.root, false)];
        while let Some((v, expanded)) = stack.pop() {
            if expanded {
                out.push(v);
            } else {
                stack.push((v, true));
                for &c in self.children(v).iter().rev() {
                    stack.push((c, false));
                }
            }
        }
        out
    }
}

/// Number of nodes in the subtree under each node (itself included).
pub fn subtree_sizes(tree: &RootedTree) -> BTreeMap<NodeId, usize> {
    let mut size = BTreeMap::new();
    for v in tree.postorder() {
        let s = 1 + tree.children(v).iter().map(|c| size[c]).sum::<usize>();
        size.insert(v, s);
    }
    size
}

/// Node partition plus the cluster graph induced by the feeder lines.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Clustering {
    pub assignment: BTreeMap<NodeId, ClusterId>,
    pub clusters: BTreeMap<ClusterId, BTreeSet<NodeId>>,
    /// Line indices whose endpoints lie in different clusters.
    pub joint_lines: BTreeSet<usize>,
    pub neighbor_map: BTreeMap<ClusterId, BTreeSet<ClusterId>>,
    /// Neighbor toward the substation; `None` for the substation cluster.
    pub parent_of: BTreeMap<ClusterId, Option<ClusterId>>,
}

impl Clustering {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ClusterId> + '_ {
        self.clusters.keys().copied()
    }

    pub fn cluster_of(&self, node: NodeId) -> Option<ClusterId> {
        self.assignment.get(&node).copied()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.values().map(|c| c.len()).collect()
    }

    /// One cluster holding every node.
    pub fn single(f: &Feeder) -> Clustering {
        let c = ClusterId(0);
        let nodes: BTreeSet<NodeId> = f.nodes().iter().map(|n| n.id).collect();
        let mut out = Clustering {
            assignment: nodes.iter().map(|n| (*n, c)).collect(),
            clusters: BTreeMap::new(),
            ..Clustering::default()
        };
        out.clusters.insert(c, nodes);
        out.neighbor_map.insert(c, BTreeSet::new());
        out.parent_of.insert(c, None);
        out
    }
}

/// Bottom-up traverse clustering.
///
/// Walks the tree in postorder, tracking the size of each node's remaining
/// subtree, and detaches a subtree as soon as its size falls in
/// `[m - r, m + r]` with `m = ceil(N / k)`. Once the remaining tree holds at
/// most `m + r` nodes it becomes the final (root) cluster. A full pass that
/// detaches nothing widens `r` by one, so the loop always terminates.
pub fn bottom_up_cluster(tree: &RootedTree, k: usize, r: usize) -> Clustering {
    let n = tree.len();
    let k = k.max(1);
    let m = n.div_ceil(k).max(1);
    let mut r = r;
    let mut alive: BTreeSet<NodeId> = tree.nodes().collect();
    let mut groups: Vec<BTreeSet<NodeId>> = Vec::new();
    let post = tree.postorder();

    loop {
        if alive.len() <= m + r {
            break;
        }
        let lo = m.saturating_sub(r).max(1);
        let hi = m + r;
        let mut size: BTreeMap<NodeId, usize> = BTreeMap::new();
        let mut detached = false;
        for &v in &post {
            if !alive.contains(&v) {
                size.insert(v, 0);
                continue;
            }
            let s = 1 + tree.children(v).iter().map(|c| size[c]).sum::<usize>();
            if (lo..=hi).contains(&s) && v != tree.root() {
                let group = collect_alive_subtree(tree, v, &alive);
                for u in &group {
                    alive.remove(u);
                }
                groups.push(group);
                size.insert(v, 0);
                detached = true;
                if alive.len() <= m + r {
                    break;
                }
            } else {
                size.insert(v, s);
            }
        }
        if !detached {
            r += 1;
        }
    }
    if !alive.is_empty() {
        groups.push(alive);
    }

    let mut out = Clustering::default();
    for (i, g) in groups.into_iter().enumerate() {
        let c = ClusterId(i);
        for v in &g {
            out.assignment.insert(*v, c);
        }
        out.clusters.insert(c, g);
    }
    out
}

fn collect_alive_subtree(tree: &RootedTree, v: NodeId, alive: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::new();
    let mut stack = vec![v];
    while let Some(u) = stack.pop() {
        if alive.contains(&u) {
            out.insert(u);
            stack.extend(tree.children(u).iter().copied());
        }
    }
    out
}

/// Fills joint lines, the neighbor map and parent clusters.
pub fn derive_adjacency(clustering: &Clustering, f: &Feeder) -> Result<Clustering, TopologyError> {
    let mut out = Clustering {
        assignment: clustering.assignment.clone(),
        clusters: clustering.clusters.clone(),
        ..Clustering::default()
    };
    for node in f.nodes() {
        if !out.assignment.contains_key(&node.id) {
            return Err(TopologyError::Unassigned(node.id));
        }
    }
    for c in out.clusters.keys() {
        out.neighbor_map.insert(*c, BTreeSet::new());
    }
    for (li, line) in f.lines().iter().enumerate() {
        let a = out.assignment[&line.from];
        let b = out.assignment[&line.to];
        if a != b {
            out.joint_lines.insert(li);
            out.neighbor_map.get_mut(&a).unwrap().insert(b);
            out.neighbor_map.get_mut(&b).unwrap().insert(a);
        }
    }

    // Connectivity of each cluster over normally-closed lines.
    let mut dsu = crate::feeder::Dsu::new(f.nodes().len());
    for li in f.normal_lines() {
        let l = &f.lines()[li];
        if out.assignment[&l.from] == out.assignment[&l.to] {
            let (a, b) = f.ends(li);
            dsu.union(a, b);
        }
    }
    for (c, members) in &out.clusters {
        let mut roots = members.iter().map(|n| dsu.find(f.node_index(*n).unwrap()));
        let first = roots.next();
        if roots.any(|r| Some(r) != first) {
            return Err(TopologyError::DisconnectedCluster(*c));
        }
    }

    let tree = RootedTree::from_feeder(f)?;
    for (c, members) in &out.clusters {
        let mut parent = None;
        for &v in members {
            if let Some(p) = tree.parent(v) {
                let pc = out.assignment[&p];
                if pc != *c {
                    parent = Some(pc);
                    break;
                }
            }
        }
        out.parent_of.insert(*c, parent);
    }
    Ok(out)
}
