//! Deterministic graph generators and random cluster collections for tests
//! and experiments.

use std::collections::{HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{Cluster, ClusterCollection};
use crate::graph::Graph;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSpec {
    RandomRegular { n: usize, d: usize, seed: u64 },
    Torus { w: usize, h: usize },
    Path { n: usize },
    BoundedEr { n: usize, p: f64, max_degree: usize, seed: u64 },
    Complete { n: usize },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenError {
    #[error("infeasible graph spec: {0}")]
    Infeasible(String),
}

pub fn generate_graph(spec: &GraphSpec) -> Result<Graph, GenError> {
    match *spec {
        GraphSpec::RandomRegular { n, d, seed } => random_regular(n, d, seed),
        GraphSpec::Torus { w, h } => torus(w, h),
        GraphSpec::Path { n } => path(n),
        GraphSpec::BoundedEr { n, p, max_degree, seed } => bounded_er(n, p, max_degree, seed),
        GraphSpec::Complete { n } => complete(n),
    }
}

fn build(n: usize, edges: &[(usize, usize)]) -> Graph {
    Graph::new(n, edges).expect("generator produced a simple graph")
}

pub fn path(n: usize) -> Result<Graph, GenError> {
    if n == 0 {
        return Err(GenError::Infeasible("path needs n >= 1".into()));
    }
    let es: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
    Ok(build(n, &es))
}

pub fn complete(n: usize) -> Result<Graph, GenError> {
    if n == 0 || n > 16 {
        return Err(GenError::Infeasible(format!("complete graph needs 1 <= n <= 16, got {n}")));
    }
    let es: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
    Ok(build(n, &es))
}

pub fn torus(w: usize, h: usize) -> Result<Graph, GenError> {
    if w < 3 || h < 3 {
        return Err(GenError::Infeasible(format!("torus needs sides >= 3, got {w}x{h}")));
    }
    let idx = |x: usize, y: usize| y * w + x;
    let mut es = Vec::new();
    for y in 0..h {
        for x in 0..w {
            es.push((idx(x, y), idx((x + 1) % w, y)));
            es.push((idx(x, y), idx(x, (y + 1) % h)));
        }
    }
    let es: Vec<(usize, usize)> = es.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
    Ok(build(w * h, &es))
}

/// Uniform-ish random `d`-regular graph by sequential pairing with
/// rejection of loops and repeated edges, restarting when stuck.
pub fn random_regular(n: usize, d: usize, seed: u64) -> Result<Graph, GenError> {
    if n * d % 2 != 0 {
        return Err(GenError::Infeasible(format!("n*d must be even (n={n}, d={d})")));
    }
    if d >= n && !(d == 0) {
        return Err(GenError::Infeasible(format!("degree {d} needs more than {n} nodes")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    'attempt: for _ in 0..1000 {
        let mut points: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
        let mut edges: HashSet<(usize, usize)> = HashSet::with_capacity(n * d / 2);
        while !points.is_empty() {
            let mut placed = false;
            for _ in 0..(50 * points.len()).max(100) {
                let i = rng.gen_range(0..points.len());
                let j = rng.gen_range(0..points.len());
                let (u, v) = (points[i], points[j]);
                if u == v || edges.contains(&(u.min(v), u.max(v))) {
                    continue;
                }
                edges.insert((u.min(v), u.max(v)));
                let (a, b) = (i.max(j), i.min(j));
                points.swap_remove(a);
                points.swap_remove(b);
                placed = true;
                break;
            }
            if !placed {
                continue 'attempt;
            }
        }
        let mut es: Vec<(usize, usize)> = edges.into_iter().collect();
        es.sort_unstable();
        return Ok(build(n, &es));
    }
    Err(GenError::Infeasible(format!("no {d}-regular graph found on {n} nodes")))
}

/// Erdős–Rényi `G(n, p)` restricted to maximum degree `max_degree`: edges are
/// considered in random order and skipped when an endpoint is saturated.
pub fn bounded_er(n: usize, p: f64, max_degree: usize, seed: u64) -> Result<Graph, GenError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(GenError::Infeasible(format!("p = {p} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cand: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
        .collect();
    cand.retain(|_| rng.gen_bool(p));
    cand.shuffle(&mut rng);
    let mut deg = vec![0; n];
    let mut es = Vec::new();
    for (u, v) in cand {
        if deg[u] < max_degree && deg[v] < max_degree {
            deg[u] += 1;
            deg[v] += 1;
            es.push((u, v));
        }
    }
    es.sort_unstable();
    Ok(build(n, &es))
}

/// Random cluster collection: `count` disjoint clusters grown as random
/// balls, each with a shortest-path Steiner tree toward its leader that may
/// route through any node, so trees overlap.
pub fn random_collection(g: &Graph, count: usize, max_size: usize, rng: &mut impl Rng) -> ClusterCollection {
    let n = g.n();
    let mut taken = vec![false; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut clusters = Vec::new();
    for &leader in &order {
        if clusters.len() >= count {
            break;
        }
        if taken[leader] {
            continue;
        }
        let size = rng.gen_range(1..=max_size.max(1));
        // members: random nodes near the leader, not necessarily connected
        let radius = rng.gen_range(1..=3u32);
        let dist = crate::graph::bfs_bounded(g, &[leader], radius);
        let mut near: Vec<usize> = (0..n)
            .filter(|&v| v != leader && dist[v] != u32::MAX && !taken[v])
            .collect();
        near.shuffle(rng);
        let mut members = vec![leader];
        members.extend(near.into_iter().take(size - 1));
        for &v in &members {
            taken[v] = true;
        }
        members.sort_unstable();
        let steiner = shortest_path_tree(g, leader, &members);
        clusters.push(Cluster {
            id: g.id(leader),
            leader,
            members,
            steiner,
        });
    }
    ClusterCollection::new(clusters)
}

/// Union of BFS-tree paths from `targets` to `root` (lowest-index parents).
pub fn shortest_path_tree(g: &Graph, root: usize, targets: &[usize]) -> Vec<(usize, usize)> {
    let mut parent = vec![usize::MAX; g.n()];
    let mut q = VecDeque::from([root]);
    parent[root] = root;
    while let Some(u) = q.pop_front() {
        for &w in g.neighbors(u) {
            if parent[w] == usize::MAX {
                parent[w] = u;
                q.push_back(w);
            }
        }
    }
    let mut edges = Vec::new();
    let mut seen = HashSet::new();
    for &t in targets {
        let mut x = t;
        while x != root && seen.insert(x) {
            assert!(parent[x] != usize::MAX, "target {t} unreachable from {root}");
            edges.push((x, parent[x]));
            x = parent[x];
        }
    }
    edges.sort_unstable();
    edges
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::validate_collection;

    #[test]
    fn small_specs() {
        let p = generate_graph(&GraphSpec::Path { n: 3 }).unwrap();
        assert_eq!((p.n(), p.m()), (3, 2));
        let t = generate_graph(&GraphSpec::Torus { w: 4, h: 4 }).unwrap();
        assert_eq!(t.n(), 16);
        assert!((0..16).all(|v| t.degree(v) == 4));
        let k = complete(5).unwrap();
        assert_eq!(k.m(), 10);
        assert!(complete(17).is_err());
    }

    #[test]
    fn regular_is_deterministic() {
        let a = random_regular(64, 4, 1).unwrap();
        let b = random_regular(64, 4, 1).unwrap();
        assert_eq!(a, b);
        assert!((0..64).all(|v| a.degree(v) == 4));
        assert_ne!(a, random_regular(64, 4, 2).unwrap());
        assert!(matches!(random_regular(5, 3, 0), Err(GenError::Infeasible(_))));
    }

    #[test]
    fn dense_regular_graphs() {
        for (n, d) in [(256, 14), (256, 17), (1024, 10), (46, 14)] {
            let g = random_regular(n, d, 3).unwrap();
            assert!((0..n).all(|v| g.degree(v) == d));
        }
    }

    #[test]
    fn er_respects_cap() {
        let g = bounded_er(100, 0.2, 5, 9).unwrap();
        assert!(g.max_degree() <= 5);
        assert_eq!(g, bounded_er(100, 0.2, 5, 9).unwrap());
    }

    #[test]
    fn random_collections_validate() {
        let g = random_regular(256, 4, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let cc = random_collection(&g, 100, 6, &mut rng);
            validate_collection(&g, &cc).unwrap();
        }
    }
}
