use std::collections::BTreeMap;

use restora_core::{ClusterId, Clustering, Feeder, NodeId};
use serde::{Deserialize, Serialize};

use crate::error::{from_json, InputError};

/// Clustering output of the `cluster` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterFile {
    pub k: usize,
    pub r: usize,
    pub sizes: Vec<usize>,
    /// Node id to cluster id.
    pub assignment: BTreeMap<u32, usize>,
    /// Ids of lines whose ends lie in different clusters.
    pub joint_lines: Vec<String>,
    pub neighbor_map: BTreeMap<usize, Vec<usize>>,
    /// Parent cluster toward the substation; `null` for the root cluster.
    pub parent_of: BTreeMap<usize, Option<usize>>,
}

impl ClusterFile {
    pub fn new(cl: &Clustering, f: &Feeder, k: usize, r: usize) -> ClusterFile {
        ClusterFile {
            k,
            r,
            sizes: cl.sizes(),
            assignment: cl.assignment.iter().map(|(n, c)| (n.0, c.0)).collect(),
            joint_lines: cl.joint_lines.iter().map(|&l| f.lines()[l].id.clone()).collect(),
            neighbor_map: cl.neighbor_map.iter().map(|(c, ns)| (c.0, ns.iter().map(|n| n.0).collect())).collect(),
            parent_of: cl.parent_of.iter().map(|(c, p)| (c.0, p.map(|p| p.0))).collect(),
        }
    }

    /// Rebuilds the clustering; joint lines and adjacency are re-derived from `f`.
    pub fn to_clustering(&self, f: &Feeder) -> Result<Clustering, InputError> {
        let mut cl = Clustering::default();
        for (&n, &c) in &self.assignment {
            cl.assignment.insert(NodeId(n), ClusterId(c));
            cl.clusters.entry(ClusterId(c)).or_default().insert(NodeId(n));
        }
        restora_core::derive_adjacency(&cl, f).map_err(|e| InputError::Invalid(format!("clustering: {e}")))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("cluster serialization cannot fail")
    }

    pub fn from_json_str(text: &str) -> Result<ClusterFile, InputError> {
        from_json(text)
    }
}
