//! Cluster collections with oriented Steiner trees and their validator.

pub mod agg;

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, NodeId};

/// Constant `c` in the aggregation round bounds.
pub const ROUND_CONSTANT: u64 = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cluster {
    pub id: NodeId,
    /// Root of the Steiner tree.
    pub leader: usize,
    /// Sorted node indices.
    pub members: Vec<usize>,
    /// Oriented tree edges `(child, parent)`.
    pub steiner: Vec<(usize, usize)>,
}

impl Cluster {
    pub fn singleton(g: &Graph, v: usize) -> Self {
        Cluster {
            id: g.id(v),
            leader: v,
            members: vec![v],
            steiner: vec![],
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// All nodes of the Steiner tree, sorted.
    pub fn tree_nodes(&self) -> Vec<usize> {
        let mut nodes: Vec<usize> = self
            .steiner
            .iter()
            .flat_map(|&(c, p)| [c, p])
            .chain([self.leader])
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }

    pub fn parent_map(&self) -> HashMap<usize, usize> {
        self.steiner.iter().copied().collect()
    }

    /// Distance in tree edges from each tree node to the leader.
    pub fn depths(&self) -> HashMap<usize, usize> {
        let parent = self.parent_map();
        let mut depth: HashMap<usize, usize> = HashMap::new();
        depth.insert(self.leader, 0);
        for &(c, _) in &self.steiner {
            let mut path = vec![];
            let mut x = c;
            while !depth.contains_key(&x) {
                path.push(x);
                x = parent[&x];
            }
            let mut d = depth[&x];
            for y in path.into_iter().rev() {
                d += 1;
                depth.insert(y, d);
            }
        }
        depth
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClusterCollection {
    pub clusters: Vec<Cluster>,
}

#[derive(Serialize, Deserialize)]
struct CollectionRepr {
    clusters: Vec<Vec<usize>>,
    leaders: Vec<usize>,
    steiner_edges: Vec<Vec<[usize; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ids: Option<Vec<NodeId>>,
}

impl ClusterCollection {
    pub fn new(clusters: Vec<Cluster>) -> Self {
        ClusterCollection { clusters }
    }

    pub fn singletons(g: &Graph, nodes: &[usize]) -> Self {
        ClusterCollection::new(nodes.iter().map(|&v| Cluster::singleton(g, v)).collect())
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn clustered(&self) -> usize {
        self.clusters.iter().map(Cluster::len).sum()
    }

    /// Cluster index of every node, if any.
    pub fn membership(&self, n: usize) -> Vec<Option<usize>> {
        let mut m = vec![None; n];
        for (i, c) in self.clusters.iter().enumerate() {
            for &v in &c.members {
                m[v] = Some(i);
            }
        }
        m
    }

    pub fn to_json(&self) -> serde_json::Value {
        let repr = CollectionRepr {
            clusters: self.clusters.iter().map(|c| c.members.clone()).collect(),
            leaders: self.clusters.iter().map(|c| c.leader).collect(),
            steiner_edges: self
                .clusters
                .iter()
                .map(|c| c.steiner.iter().map(|&(a, b)| [a, b]).collect())
                .collect(),
            ids: Some(self.clusters.iter().map(|c| c.id).collect()),
        };
        serde_json::to_value(repr).expect("serializable")
    }

    /// Parses the JSON form; cluster ids default to the leader's identifier.
    pub fn from_json(g: &Graph, value: &serde_json::Value) -> Result<Self, ClusterError> {
        let repr: CollectionRepr = serde_json::from_value(value.clone())
            .map_err(|e| ClusterError::Format(e.to_string()))?;
        let k = repr.clusters.len();
        if repr.leaders.len() != k || repr.steiner_edges.len() != k {
            return Err(ClusterError::Format(
                "clusters, leaders and steiner_edges must have equal length".into(),
            ));
        }
        if let Some(ids) = &repr.ids {
            if ids.len() != k {
                return Err(ClusterError::Format("ids length mismatch".into()));
            }
        }
        let mut clusters = Vec::with_capacity(k);
        for i in 0..k {
            let leader = repr.leaders[i];
            if leader >= g.n() {
                return Err(ClusterError::NodeOutOfRange { cluster: i, node: leader });
            }
            let mut members = repr.clusters[i].clone();
            members.sort_unstable();
            clusters.push(Cluster {
                id: repr.ids.as_ref().map_or(g.id(leader), |ids| ids[i]),
                leader,
                members,
                steiner: repr.steiner_edges[i].iter().map(|e| (e[0], e[1])).collect(),
            });
        }
        Ok(ClusterCollection::new(clusters))
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ClusterError {
    #[error("format error: {0}")]
    Format(String),
    #[error("cluster {cluster}: node {node} out of range")]
    NodeOutOfRange { cluster: usize, node: usize },
    #[error("cluster {cluster} is empty")]
    EmptyCluster { cluster: usize },
    #[error("clusters share an identifier: {a} and {b}")]
    DuplicateClusterId { a: usize, b: usize },
    #[error("disjointness violated: node {node} in clusters {a} and {b}")]
    Overlap { node: usize, a: usize, b: usize },
    #[error("cluster {cluster}: steiner edge {edge:?} is not an edge of the graph")]
    NotAnEdge { cluster: usize, edge: (usize, usize) },
    #[error("cluster {cluster}: node {node} has two parents")]
    TwoParents { cluster: usize, node: usize },
    #[error("cluster {cluster}: the leader {node} has a parent")]
    LeaderHasParent { cluster: usize, node: usize },
    #[error("cluster {cluster}: node {node} does not reach the leader")]
    NotRooted { cluster: usize, node: usize },
    #[error("cluster {cluster}: member {node} is not in the steiner tree")]
    MemberNotInTree { cluster: usize, node: usize },
    #[error("convergecast in cluster {cluster}: {count} special nodes exceed the limit {limit}")]
    TooManySpecial { cluster: usize, count: usize, limit: usize },
    #[error("value {value} does not fit in {width} bits")]
    ValueTooWide { value: u64, width: u32 },
    #[error("info of node {node} has {bits} bits, limit {limit}")]
    InfoTooWide { node: usize, bits: u64, limit: u64 },
    #[error("cluster {cluster} has {size} members, limit {limit}")]
    ClusterTooLarge { cluster: usize, size: usize, limit: usize },
    #[error("engine: {0}")]
    Engine(#[from] crate::engine::EngineError),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CollectionStats {
    pub clusters: usize,
    pub clustered_nodes: usize,
    /// Maximum Steiner tree diameter, in edges.
    pub beta: usize,
    /// Maximum number of Steiner trees containing one edge.
    pub kappa: usize,
    /// Maximum number of Steiner trees containing one node.
    pub kappa_node: usize,
    /// Minimum distance between two distinct clusters; `None` if fewer than two.
    pub min_cluster_distance: Option<u32>,
}

pub fn validate_collection(g: &Graph, cc: &ClusterCollection) -> Result<CollectionStats, ClusterError> {
    let n = g.n();
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut ids: HashMap<NodeId, usize> = HashMap::new();
    for (i, c) in cc.clusters.iter().enumerate() {
        if c.members.is_empty() {
            return Err(ClusterError::EmptyCluster { cluster: i });
        }
        if let Some(&a) = ids.get(&c.id) {
            return Err(ClusterError::DuplicateClusterId { a, b: i });
        }
        ids.insert(c.id, i);
        for &v in c.members.iter().chain([&c.leader]) {
            if v >= n {
                return Err(ClusterError::NodeOutOfRange { cluster: i, node: v });
            }
        }
        for &v in &c.members {
            match owner[v] {
                Some(a) if a != i => return Err(ClusterError::Overlap { node: v, a, b: i }),
                Some(_) => {
                    return Err(ClusterError::Format(format!("cluster {i} lists node {v} twice")))
                }
                None => owner[v] = Some(i),
            }
        }
    }

    let mut edge_load = vec![0usize; g.m()];
    let mut node_load = vec![0usize; n];
    let mut beta = 0;
    for (i, c) in cc.clusters.iter().enumerate() {
        let mut parent: HashMap<usize, usize> = HashMap::new();
        for &(ch, p) in &c.steiner {
            if ch >= n || p >= n {
                return Err(ClusterError::NodeOutOfRange { cluster: i, node: ch.max(p) });
            }
            let Some(e) = g.edge_index(ch, p) else {
                return Err(ClusterError::NotAnEdge { cluster: i, edge: (ch, p) });
            };
            if ch == c.leader {
                return Err(ClusterError::LeaderHasParent { cluster: i, node: ch });
            }
            if parent.insert(ch, p).is_some() {
                return Err(ClusterError::TwoParents { cluster: i, node: ch });
            }
            edge_load[e] += 1;
        }
        // every tree node must reach the leader without revisiting
        let mut reaches: HashMap<usize, bool> = HashMap::new();
        reaches.insert(c.leader, true);
        for &(ch, _) in &c.steiner {
            let mut path = vec![];
            let mut x = ch;
            let ok = loop {
                if let Some(&r) = reaches.get(&x) {
                    break r;
                }
                if path.contains(&x) || path.len() > c.steiner.len() {
                    break false;
                }
                path.push(x);
                match parent.get(&x) {
                    Some(&p) => x = p,
                    None => break false,
                }
            };
            if !ok {
                return Err(ClusterError::NotRooted { cluster: i, node: ch });
            }
            for y in path {
                reaches.insert(y, true);
            }
        }
        for &v in &c.members {
            if v != c.leader && !parent.contains_key(&v) {
                return Err(ClusterError::MemberNotInTree { cluster: i, node: v });
            }
        }
        for v in c.tree_nodes() {
            node_load[v] += 1;
        }
        beta = beta.max(tree_diameter(c));
    }

    Ok(CollectionStats {
        clusters: cc.len(),
        clustered_nodes: cc.clustered(),
        beta,
        kappa: edge_load.iter().copied().max().unwrap_or(0),
        kappa_node: if cc.is_empty() {
            0
        } else {
            node_load.iter().copied().max().unwrap_or(0)
        },
        min_cluster_distance: min_cluster_distance(g, cc),
    })
}

/// Number of edges on the longest path of the (undirected) Steiner tree.
pub fn tree_diameter(c: &Cluster) -> usize {
    if c.steiner.is_empty() {
        return 0;
    }
    let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
    for &(a, b) in &c.steiner {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    let far = |s: usize| -> (usize, usize) {
        let mut dist: HashMap<usize, usize> = HashMap::new();
        dist.insert(s, 0);
        let mut q = VecDeque::from([s]);
        let mut best = (s, 0);
        while let Some(u) = q.pop_front() {
            let d = dist[&u];
            if d > best.1 {
                best = (u, d);
            }
            for &w in &adj[&u] {
                if !dist.contains_key(&w) {
                    dist.insert(w, d + 1);
                    q.push_back(w);
                }
            }
        }
        best
    };
    let (a, _) = far(c.leader);
    far(a).1
}

/// Minimum over pairs of distinct clusters of their hop distance in `g`.
pub fn min_cluster_distance(g: &Graph, cc: &ClusterCollection) -> Option<u32> {
    if cc.len() < 2 {
        return None;
    }
    let n = g.n();
    let mut dist = vec![u32::MAX; n];
    let mut label = vec![usize::MAX; n];
    let mut q = VecDeque::new();
    for (i, c) in cc.clusters.iter().enumerate() {
        for &v in &c.members {
            dist[v] = 0;
            label[v] = i;
            q.push_back(v);
        }
    }
    while let Some(u) = q.pop_front() {
        for &w in g.neighbors(u) {
            if dist[w] == u32::MAX {
                dist[w] = dist[u] + 1;
                label[w] = label[u];
                q.push_back(w);
            }
        }
    }
    g.edges()
        .iter()
        .filter(|&&(u, v)| label[u] != usize::MAX && label[v] != usize::MAX && label[u] != label[v])
        .map(|&(u, v)| dist[u] + dist[v] + 1)
        .min()
}

/// Groups clusters whose pairwise distance is at most `k`, transitively.
/// Returns lists of cluster indices ordered by first cluster.
pub fn distance_k_components(g: &Graph, cc: &ClusterCollection, k: usize) -> Vec<Vec<usize>> {
    let adj = cluster_graph(g, cc, k);
    let mut seen = vec![false; cc.len()];
    let mut out = Vec::new();
    for s in 0..cc.len() {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut i = 0;
        while i < comp.len() {
            for &t in &adj[comp[i]] {
                if !seen[t] {
                    seen[t] = true;
                    comp.push(t);
                }
            }
            i += 1;
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Adjacency between clusters at distance at most `k` (sorted lists).
pub fn cluster_graph(g: &Graph, cc: &ClusterCollection, k: usize) -> Vec<Vec<usize>> {
    let member = cc.membership(g.n());
    let mut adj = vec![Vec::new(); cc.len()];
    let mut dist = vec![u32::MAX; g.n()];
    let mut touched = Vec::new();
    for (i, c) in cc.clusters.iter().enumerate() {
        let mut q = VecDeque::new();
        for &v in &c.members {
            dist[v] = 0;
            touched.push(v);
            q.push_back(v);
        }
        while let Some(u) = q.pop_front() {
            if let Some(j) = member[u] {
                if j != i {
                    adj[i].push(j);
                }
            }
            if dist[u] as usize >= k {
                continue;
            }
            for &w in g.neighbors(u) {
                if dist[w] == u32::MAX {
                    dist[w] = dist[u] + 1;
                    touched.push(w);
                    q.push_back(w);
                }
            }
        }
        for &t in &touched {
            dist[t] = u32::MAX;
        }
        touched.clear();
        adj[i].sort_unstable();
        adj[i].dedup();
    }
    adj
}
