//! Static undirected graphs with wide node identifiers, plus the centralized
//! oracles (BFS, power adjacency, components) used by validators.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use num_bigint::BigUint;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::math::log2_ceil;

/// Identifier up to 256 bits, stored most significant word first so that the
/// derived ordering is numeric.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodeId(pub [u64; 4]);

impl NodeId {
    pub const MAX_BITS: u32 = 256;

    pub fn from_u64(v: u64) -> Self {
        NodeId([0, 0, 0, v])
    }

    pub fn parse_decimal(s: &str) -> Option<Self> {
        let big = BigUint::parse_bytes(s.trim().as_bytes(), 10)?;
        if big.bits() > 256 {
            return None;
        }
        let digits = big.to_u64_digits();
        let mut words = [0u64; 4];
        for (i, d) in digits.iter().enumerate() {
            words[3 - i] = *d;
        }
        Some(NodeId(words))
    }

    pub fn to_biguint(&self) -> BigUint {
        let mut digits: Vec<u64> = self.0.to_vec();
        digits.reverse();
        BigUint::from_slice(
            &digits
                .iter()
                .flat_map(|w| [*w as u32, (*w >> 32) as u32])
                .collect::<Vec<_>>(),
        )
    }

    /// Number of significant bits (0 for the value 0).
    pub fn bits(&self) -> u32 {
        for (i, w) in self.0.iter().enumerate() {
            if *w != 0 {
                return (4 - i as u32) * 64 - w.leading_zeros();
            }
        }
        0
    }

    /// Least significant 64 bits.
    pub fn low_u64(&self) -> u64 {
        self.0[3]
    }

    /// Bit `i` counted from the least significant end.
    pub fn bit(&self, i: u32) -> bool {
        if i >= 256 {
            return false;
        }
        let word = 3 - (i / 64) as usize;
        (self.0[word] >> (i % 64)) & 1 == 1
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0[..3] == [0, 0, 0] {
            write!(f, "{}", self.0[3])
        } else {
            write!(f, "{}", self.to_biguint())
        }
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self)
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(u64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(NodeId::from_u64(v)),
            Repr::Str(s) => NodeId::parse_decimal(&s)
                .ok_or_else(|| serde::de::Error::custom(format!("bad node id {s:?}"))),
        }
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: malformed line: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: duplicate edge {u}-{v}")]
    DuplicateEdge { line: usize, u: usize, v: usize },
    #[error("line {line}: self-loop at node {u}")]
    SelfLoop { line: usize, u: usize },
    #[error("line {line}: node index {index} out of range (n = {n})")]
    IndexOutOfRange { line: usize, index: usize, n: usize },
    #[error("duplicate identifier {0}")]
    DuplicateId(NodeId),
    #[error("identifier {id} does not fit in {bits} bits")]
    IdTooWide { id: NodeId, bits: u32 },
    #[error("empty source set")]
    EmptySources,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Undirected simple graph with sorted adjacency and per-node identifiers.
///
/// Directed edge slots are laid out CSR-style: slot `offsets[v] + i` is the
/// `i`-th neighbor of `v`; `rev[s]` is the slot of the same edge seen from the
/// other endpoint and `edge_of[s]` its undirected edge index.
#[derive(Clone, Debug)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
    ids: Vec<NodeId>,
    id_bits: u32,
    max_degree: usize,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    rev: Vec<usize>,
    edge_of: Vec<usize>,
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.adj == other.adj && self.ids == other.ids && self.id_bits == other.id_bits
    }
}

impl Eq for Graph {}

pub fn default_id_bits(n: usize) -> u32 {
    2 * log2_ceil(n)
}

impl Graph {
    /// Builds a graph from an edge list; identifiers default to node indices.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut adj = vec![Vec::new(); n];
        for (i, &(u, v)) in edges.iter().enumerate() {
            let line = i + 2;
            for x in [u, v] {
                if x >= n {
                    return Err(GraphError::IndexOutOfRange { line, index: x, n });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop { line, u });
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        for (u, list) in adj.iter_mut().enumerate() {
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                let v = w[0];
                // report the line of the second occurrence
                let (a, b) = (u.min(v), u.max(v));
                let line = edges
                    .iter()
                    .enumerate()
                    .filter(|(_, &(x, y))| (x.min(y), x.max(y)) == (a, b))
                    .nth(1)
                    .map(|(i, _)| i + 2)
                    .unwrap_or(0);
                return Err(GraphError::DuplicateEdge { line, u: a, v: b });
            }
        }
        let ids = (0..n as u64).map(NodeId::from_u64).collect();
        Ok(Self::from_adjacency(adj, ids, default_id_bits(n)))
    }

    fn from_adjacency(adj: Vec<Vec<usize>>, ids: Vec<NodeId>, id_bits: u32) -> Self {
        let n = adj.len();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for list in &adj {
            offsets.push(offsets.last().unwrap() + list.len());
        }
        let slots = *offsets.last().unwrap();
        let mut rev = vec![0; slots];
        let mut edge_of = vec![0; slots];
        let mut edges = Vec::with_capacity(slots / 2);
        for u in 0..n {
            for (i, &v) in adj[u].iter().enumerate() {
                if u < v {
                    let s = offsets[u] + i;
                    let j = adj[v].binary_search(&u).expect("symmetric adjacency");
                    let t = offsets[v] + j;
                    rev[s] = t;
                    rev[t] = s;
                    edge_of[s] = edges.len();
                    edge_of[t] = edges.len();
                    edges.push((u, v));
                }
            }
        }
        let max_degree = adj.iter().map(Vec::len).max().unwrap_or(0);
        Graph {
            adj,
            ids,
            id_bits,
            max_degree,
            edges,
            offsets,
            rev,
            edge_of,
        }
    }

    /// Replaces identifiers; they must be distinct and fit in `id_bits`.
    pub fn with_ids(mut self, ids: Vec<NodeId>, id_bits: u32) -> Result<Self, GraphError> {
        assert_eq!(ids.len(), self.n(), "one identifier per node");
        let id_bits = id_bits.min(NodeId::MAX_BITS);
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(GraphError::DuplicateId(w[0]));
        }
        if let Some(id) = ids.iter().find(|id| id.bits() > id_bits) {
            return Err(GraphError::IdTooWide { id: *id, bits: id_bits });
        }
        self.ids = ids;
        self.id_bits = id_bits;
        Ok(self)
    }

    pub fn with_id_bits(self, id_bits: u32) -> Result<Self, GraphError> {
        let ids = self.ids.clone();
        self.with_ids(ids, id_bits)
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn id(&self, v: usize) -> NodeId {
        self.ids[v]
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn id_bits(&self) -> u32 {
        self.id_bits
    }

    /// Undirected edges `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n() && self.adj[u].binary_search(&v).is_ok()
    }

    pub fn edge_index(&self, u: usize, v: usize) -> Option<usize> {
        self.slot(u, v).map(|s| self.edge_of[s])
    }

    /// Directed slot of `v` in the neighbor list of `u`.
    pub fn slot(&self, u: usize, v: usize) -> Option<usize> {
        self.adj[u]
            .binary_search(&v)
            .ok()
            .map(|i| self.offsets[u] + i)
    }

    pub fn slot_offset(&self, v: usize) -> usize {
        self.offsets[v]
    }

    pub fn num_slots(&self) -> usize {
        self.rev.len()
    }

    pub fn reverse_slot(&self, s: usize) -> usize {
        self.rev[s]
    }

    pub fn edge_of_slot(&self, s: usize) -> usize {
        self.edge_of[s]
    }

    /// Port of `u` in `v`'s neighbor list, i.e. the index at which `v` sees `u`.
    pub fn port_back(&self, v: usize, port: usize) -> usize {
        let s = self.offsets[v] + port;
        let t = self.rev[s];
        let u = self.adj[v][port];
        t - self.offsets[u]
    }

    /// Parses the edge-list text format.
    pub fn parse_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hl, header) = lines.next().ok_or(GraphError::Malformed {
            line: 1,
            msg: "missing header `n m`".into(),
        })?;
        let nums = parse_usizes(hl, header, 2)?;
        let (n, m) = (nums[0], nums[1]);
        let mut edges = Vec::with_capacity(m);
        let mut edge_lines = Vec::with_capacity(m);
        for _ in 0..m {
            let (ln, l) = lines.next().ok_or(GraphError::Malformed {
                line: hl + edges.len() + 1,
                msg: format!("expected {m} edge lines, found {}", edges.len()),
            })?;
            let uv = parse_usizes(ln, l, 2)?;
            edges.push((uv[0], uv[1]));
            edge_lines.push(ln);
        }
        let mut ids: Vec<NodeId> = (0..n as u64).map(NodeId::from_u64).collect();
        let mut seen = vec![false; n];
        let mut any_id = false;
        for (ln, l) in lines {
            let parts: Vec<&str> = l.split_whitespace().collect();
            if parts.len() != 3 || parts[0] != "id" {
                return Err(GraphError::Malformed {
                    line: ln,
                    msg: format!("expected `id u value`, got {l:?}"),
                });
            }
            let u: usize = parts[1].parse().map_err(|_| GraphError::Malformed {
                line: ln,
                msg: format!("bad node index {:?}", parts[1]),
            })?;
            if u >= n {
                return Err(GraphError::IndexOutOfRange { line: ln, index: u, n });
            }
            if seen[u] {
                return Err(GraphError::Malformed {
                    line: ln,
                    msg: format!("identifier of node {u} given twice"),
                });
            }
            seen[u] = true;
            ids[u] = NodeId::parse_decimal(parts[2]).ok_or_else(|| GraphError::Malformed {
                line: ln,
                msg: format!("bad identifier {:?}", parts[2]),
            })?;
            any_id = true;
        }
        let g = Graph::new(n, &edges).map_err(|e| relabel_line(e, &edge_lines))?;
        if any_id {
            let need = ids.iter().map(NodeId::bits).max().unwrap_or(0);
            let bits = default_id_bits(n).max(need);
            g.with_ids(ids, bits)
        } else {
            Ok(g)
        }
    }

    /// Canonical text form: header, sorted edges, then `id` lines only when
    /// some identifier differs from its index.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{} {}\n", self.n(), self.m());
        for &(u, v) in &self.edges {
            out.push_str(&format!("{u} {v}\n"));
        }
        let default = self
            .ids
            .iter()
            .enumerate()
            .all(|(i, id)| *id == NodeId::from_u64(i as u64));
        if !default {
            for (i, id) in self.ids.iter().enumerate() {
                out.push_str(&format!("id {i} {id}\n"));
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), GraphError> {
        std::fs::write(path, self.to_edge_list())?;
        Ok(())
    }

    /// Subgraph induced by `nodes` (kept in the given order); returns the graph
    /// and the local-to-global index map. Identifiers are inherited.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> (Graph, Vec<usize>) {
        let mut local = vec![usize::MAX; self.n()];
        for (i, &v) in nodes.iter().enumerate() {
            local[v] = i;
        }
        let adj: Vec<Vec<usize>> = nodes
            .iter()
            .map(|&v| {
                let mut l: Vec<usize> = self.adj[v]
                    .iter()
                    .filter_map(|&u| (local[u] != usize::MAX).then_some(local[u]))
                    .collect();
                l.sort_unstable();
                l
            })
            .collect();
        let ids = nodes.iter().map(|&v| self.ids[v]).collect();
        (Self::from_adjacency(adj, ids, self.id_bits), nodes.to_vec())
    }

    /// `G^k`: same nodes and identifiers, edges between distinct nodes at
    /// distance at most `k`.
    pub fn power(&self, k: usize) -> Graph {
        let n = self.n();
        let mut adj = vec![Vec::new(); n];
        let mut dist = vec![usize::MAX; n];
        let mut touched = Vec::new();
        let mut queue = VecDeque::new();
        for s in 0..n {
            dist[s] = 0;
            touched.push(s);
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                if dist[u] == k {
                    continue;
                }
                for &w in &self.adj[u] {
                    if dist[w] == usize::MAX {
                        dist[w] = dist[u] + 1;
                        touched.push(w);
                        queue.push_back(w);
                    }
                }
            }
            for &t in &touched {
                if t != s {
                    adj[s].push(t);
                }
                dist[t] = usize::MAX;
            }
            touched.clear();
            adj[s].sort_unstable();
        }
        Self::from_adjacency(adj, self.ids.clone(), self.id_bits)
    }
}

fn relabel_line(e: GraphError, edge_lines: &[usize]) -> GraphError {
    let map = |line: usize| edge_lines.get(line.wrapping_sub(2)).copied().unwrap_or(line);
    match e {
        GraphError::DuplicateEdge { line, u, v } => GraphError::DuplicateEdge { line: map(line), u, v },
        GraphError::SelfLoop { line, u } => GraphError::SelfLoop { line: map(line), u },
        GraphError::IndexOutOfRange { line, index, n } => {
            GraphError::IndexOutOfRange { line: map(line), index, n }
        }
        other => other,
    }
}

fn parse_usizes(line: usize, text: &str, count: usize) -> Result<Vec<usize>, GraphError> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    if parts.len() != count {
        return Err(GraphError::Malformed {
            line,
            msg: format!("expected {count} integers, got {text:?}"),
        });
    }
    parts
        .iter()
        .map(|p| {
            p.parse::<usize>().map_err(|_| GraphError::Malformed {
                line,
                msg: format!("not a non-negative integer: {p:?}"),
            })
        })
        .collect()
}

pub fn load_graph(path: &Path) -> Result<Graph, GraphError> {
    let text = std::fs::read_to_string(path)?;
    Graph::parse_edge_list(&text)
}

/// Hop distances to a source set; `u32::MAX` encodes unreachable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceOracle {
    pub sources: Vec<usize>,
    dist: Vec<u32>,
}

impl DistanceOracle {
    pub const INF: u32 = u32::MAX;

    pub fn get(&self, v: usize) -> Option<u32> {
        let d = self.dist[v];
        (d != Self::INF).then_some(d)
    }

    pub fn raw(&self) -> &[u32] {
        &self.dist
    }
}

pub fn bfs_distances(g: &Graph, sources: &[usize]) -> Result<DistanceOracle, GraphError> {
    if sources.is_empty() {
        return Err(GraphError::EmptySources);
    }
    let n = g.n();
    if let Some(&s) = sources.iter().find(|&&s| s >= n) {
        return Err(GraphError::IndexOutOfRange { line: 0, index: s, n });
    }
    Ok(DistanceOracle {
        sources: sources.to_vec(),
        dist: bfs_bounded(g, sources, u32::MAX),
    })
}

/// Multi-source BFS truncated at depth `limit` (nodes beyond stay `u32::MAX`).
pub fn bfs_bounded(g: &Graph, sources: &[usize], limit: u32) -> Vec<u32> {
    let mut dist = vec![u32::MAX; g.n()];
    let mut queue = VecDeque::new();
    for &s in sources {
        if dist[s] != 0 {
            dist[s] = 0;
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        if dist[u] >= limit {
            continue;
        }
        for &w in g.neighbors(u) {
            if dist[w] == u32::MAX {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

pub fn power_adjacent(g: &Graph, u: usize, v: usize, k: usize) -> bool {
    assert!(k >= 1, "k must be positive");
    if u == v {
        return false;
    }
    let d = bfs_bounded(g, &[u], k as u32);
    d[v] != u32::MAX
}

/// Union-find with path halving and union by size.
#[derive(Clone, Debug)]
pub struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    pub fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }
}

/// Maximal groups of predicate-satisfying nodes linked by chains of hops of
/// length at most `k` (intermediate nodes on a hop may be anything). Each
/// component is sorted; components are ordered by their smallest node.
pub fn components_under(g: &Graph, pred: impl Fn(usize) -> bool, k: usize) -> Vec<Vec<usize>> {
    assert!(k >= 1, "k must be positive");
    let n = g.n();
    let marked: Vec<bool> = (0..n).map(&pred).collect();
    let mut ds = DisjointSets::new(n);
    if k == 1 {
        for &(u, v) in g.edges() {
            if marked[u] && marked[v] {
                ds.union(u, v);
            }
        }
    } else {
        let mut dist = vec![u32::MAX; n];
        let mut touched = Vec::new();
        let mut queue = VecDeque::new();
        for s in (0..n).filter(|&s| marked[s]) {
            dist[s] = 0;
            touched.push(s);
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                if u != s && marked[u] {
                    ds.union(s, u);
                }
                if dist[u] as usize >= k {
                    continue;
                }
                for &w in g.neighbors(u) {
                    if dist[w] == u32::MAX {
                        dist[w] = dist[u] + 1;
                        touched.push(w);
                        queue.push_back(w);
                    }
                }
            }
            for &t in &touched {
                dist[t] = u32::MAX;
            }
            touched.clear();
        }
    }
    group_by_root(&mut ds, (0..n).filter(|&v| marked[v]))
}

pub(crate) fn group_by_root(
    ds: &mut DisjointSets,
    items: impl Iterator<Item = usize>,
) -> Vec<Vec<usize>> {
    let mut index: std::collections::HashMap<usize, usize> = Default::default();
    let mut out: Vec<Vec<usize>> = Vec::new();
    for v in items {
        let r = ds.find(v);
        let slot = *index.entry(r).or_insert_with(|| {
            out.push(Vec::new());
            out.len() - 1
        });
        out[slot].push(v);
    }
    out
}
