//! Red/blue coloring of cluster collections such that every distance-`k`
//! component of at least two clusters is between one half and three
//! quarters blue.
//!
//! Steps:
//! 0. clusters with no other cluster within distance `k` are red;
//! 1. every other cluster selects a path of at most `k` hops to a different
//!    cluster, using the token structure of [`build_connecting_structure`];
//! 2. clusters with at least [`HEAVY_THRESHOLD`] incoming paths are heavy;
//! 3. each heavy cluster colors its selectors alternately blue/red in order
//!    of cluster identifier;
//! 4. heavy clusters left uncolored become blue;
//! 5. the remaining light clusters are covered by stars of size at least two
//!    and each star is colored alternately starting with blue.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::cluster::{cluster_graph, distance_k_components, CollectionStats, ClusterCollection};
use crate::engine::{run, EngineError, NodeCtx, NodeProgram, Payload, SimConfig};
use crate::graph::{Graph, NodeId};
use crate::symmetry::maximal_independent_set;

pub const HEAVY_THRESHOLD: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Blue,
}

#[derive(Clone, Debug)]
pub struct Token {
    id: NodeId,
    id_bits: u32,
    counter_bits: u32,
}

impl Payload for Token {
    fn bits(&self) -> u64 {
        (self.id_bits + self.counter_bits) as u64
    }
}

/// A token a node keeps: cluster identifier, iteration of first arrival and
/// the port it came through (`None` for the node's own cluster).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeldToken {
    pub id: NodeId,
    pub iteration: usize,
    pub port: Option<usize>,
}

/// Every node keeps and relays at most two distinct identifiers: its own
/// cluster's (if it is a member) followed by the earliest foreign ones, lower
/// identifiers first within an iteration. Iteration `i` spans rounds `2i-1`
/// and `2i`; one token per edge and round.
struct TokenProgram {
    own: Option<NodeId>,
    k: usize,
    id_bits: u32,
    counter_bits: u32,
    held: Vec<HeldToken>,
    pending: Vec<HeldToken>,
    arrivals: Vec<(u64, usize, NodeId)>,
    sent_per_port: Vec<usize>,
    done: bool,
}

impl TokenProgram {
    fn send(&mut self, which: usize, out: &mut [Option<Token>]) {
        let Some(t) = self.pending.get(which) else { return };
        for (p, slot) in out.iter_mut().enumerate() {
            if t.port == Some(p) {
                continue;
            }
            *slot = Some(Token {
                id: t.id,
                id_bits: self.id_bits,
                counter_bits: self.counter_bits,
            });
            self.sent_per_port[p] += 1;
        }
    }
}

impl NodeProgram for TokenProgram {
    type Msg = Token;
    type Output = (Vec<HeldToken>, usize);

    fn init(&mut self, ctx: &mut NodeCtx, out: &mut [Option<Token>]) {
        self.sent_per_port = vec![0; ctx.degree()];
        if let Some(id) = self.own {
            let t = HeldToken { id, iteration: 0, port: None };
            self.held.push(t.clone());
            if self.k >= 1 {
                self.pending.push(t);
            }
        }
        if self.k == 0 {
            self.done = true;
        }
        self.send(0, out);
    }

    fn on_round(&mut self, ctx: &mut NodeCtx, inbox: &[Option<Token>], out: &mut [Option<Token>]) {
        let r = ctx.round;
        for (p, m) in inbox.iter().enumerate() {
            if let Some(t) = m {
                if Some(t.id) != self.own {
                    self.arrivals.push((r, p, t.id));
                }
            }
        }
        if r % 2 == 1 {
            self.send(1, out);
            return;
        }
        let iteration = (r / 2) as usize;
        self.arrivals.sort();
        let mut first: BTreeMap<NodeId, usize> = BTreeMap::new();
        for &(_, p, id) in &self.arrivals {
            first.entry(id).or_insert(p);
        }
        self.arrivals.clear();
        self.pending.clear();
        for (id, port) in first {
            if self.held.len() >= 2 {
                break;
            }
            if self.held.iter().any(|h| h.id == id) {
                continue;
            }
            let t = HeldToken { id, iteration, port: Some(port) };
            self.held.push(t.clone());
            if iteration < self.k {
                self.pending.push(t);
            }
        }
        if iteration >= self.k {
            self.done = true;
        } else {
            self.send(0, out);
        }
    }

    fn finished(&self) -> bool {
        self.done
    }

    fn output(&self) -> (Vec<HeldToken>, usize) {
        (
            self.held.clone(),
            self.sent_per_port.iter().copied().max().unwrap_or(0),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SelectedPath {
    pub from_cluster: usize,
    pub to_cluster: usize,
    /// Nodes from the leaf (member of `from_cluster`) to the root (member of
    /// `to_cluster`).
    pub nodes: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ConnectingStructure {
    pub k: usize,
    pub isolated: Vec<bool>,
    pub paths: Vec<Option<SelectedPath>>,
    /// Tokens held per node after the token phase.
    pub held: Vec<Vec<HeldToken>>,
    /// Distinct BFS trees (root cluster identifiers) per edge, over the full
    /// back-pointer forests.
    pub trees_per_edge: Vec<usize>,
    /// Largest number of tokens a node sent over a single edge.
    pub max_tokens_per_edge: usize,
    pub engine_rounds: u64,
}

impl ConnectingStructure {
    pub fn max_trees_per_edge(&self) -> usize {
        self.trees_per_edge.iter().copied().max().unwrap_or(0)
    }

    /// Number of selected paths ending in each cluster.
    pub fn incoming(&self) -> Vec<usize> {
        let mut inc = vec![0; self.paths.len()];
        for p in self.paths.iter().flatten() {
            inc[p.to_cluster] += 1;
        }
        inc
    }
}

pub fn build_connecting_structure(
    g: &Graph,
    cc: &ClusterCollection,
    k: usize,
    cfg: &SimConfig,
) -> Result<ConnectingStructure, EngineError> {
    assert!(k >= 1);
    let n = g.n();
    let member = cc.membership(n);
    let by_id: HashMap<NodeId, usize> = cc.clusters.iter().enumerate().map(|(i, c)| (c.id, i)).collect();
    let id_bits = g
        .id_bits()
        .max(cc.clusters.iter().map(|c| c.id.bits()).max().unwrap_or(0))
        .max(1);
    let counter_bits = crate::cluster::agg::bits_for(k + 1);
    let res = run(
        g,
        |v| TokenProgram {
            own: member[v].map(|i| cc.clusters[i].id),
            k,
            id_bits,
            counter_bits,
            held: vec![],
            pending: vec![],
            arrivals: vec![],
            sent_per_port: vec![],
            done: false,
        },
        cfg,
    )?;
    let held: Vec<Vec<HeldToken>> = res.outputs.iter().map(|o| o.0.clone()).collect();
    let max_tokens_per_edge = res.outputs.iter().map(|o| o.1).max().unwrap_or(0);

    // leaves: members holding a foreign token; the leader picks the member
    // with the lowest identifier, which picks its lowest foreign token
    let mut paths = vec![None; cc.len()];
    for (ci, c) in cc.clusters.iter().enumerate() {
        let leaf = c
            .members
            .iter()
            .copied()
            .filter(|&v| held[v].iter().any(|t| t.id != c.id))
            .min_by_key(|&v| g.id(v));
        let Some(leaf) = leaf else { continue };
        let token = held[leaf]
            .iter()
            .filter(|t| t.id != c.id)
            .min_by_key(|t| t.id)
            .unwrap()
            .id;
        let mut nodes = vec![leaf];
        let mut x = leaf;
        loop {
            let t = held[x].iter().find(|t| t.id == token).expect("token on back-pointer path");
            match t.port {
                None => break,
                Some(p) => {
                    x = g.neighbors(x)[p];
                    nodes.push(x);
                }
            }
        }
        paths[ci] = Some(SelectedPath {
            from_cluster: ci,
            to_cluster: by_id[&token],
            nodes,
        });
    }

    let mut trees: Vec<Vec<NodeId>> = vec![Vec::new(); g.m()];
    for (v, hs) in held.iter().enumerate() {
        for t in hs {
            if let Some(p) = t.port {
                let e = g.edge_index(v, g.neighbors(v)[p]).unwrap();
                trees[e].push(t.id);
            }
        }
    }
    let trees_per_edge = trees
        .into_iter()
        .map(|mut l| {
            l.sort_unstable();
            l.dedup();
            l.len()
        })
        .collect();
    let adj = cluster_graph(g, cc, k);
    Ok(ConnectingStructure {
        k,
        isolated: adj.iter().map(Vec::is_empty).collect(),
        paths,
        held,
        trees_per_edge,
        max_tokens_per_edge,
        engine_rounds: res.metrics.rounds,
    })
}

/// Checks the three structural properties against centralized oracles.
pub fn validate_connecting_structure(
    g: &Graph,
    cc: &ClusterCollection,
    cs: &ConnectingStructure,
) -> Result<(), String> {
    let adj = cluster_graph(g, cc, cs.k);
    let member = cc.membership(g.n());
    for ci in 0..cc.len() {
        let isolated = adj[ci].is_empty();
        if isolated != cs.isolated[ci] {
            return Err(format!("cluster {ci}: isolation flag disagrees with the oracle"));
        }
        match (&cs.paths[ci], isolated) {
            (None, true) => {}
            (Some(_), true) => return Err(format!("isolated cluster {ci} selected a path")),
            (None, false) => return Err(format!("cluster {ci} is not isolated but has no path")),
            (Some(p), false) => {
                if p.nodes.len() > cs.k + 1 {
                    return Err(format!("cluster {ci}: path longer than {}", cs.k));
                }
                if member[p.nodes[0]] != Some(ci) {
                    return Err(format!("cluster {ci}: leaf is not a member"));
                }
                if member[*p.nodes.last().unwrap()] != Some(p.to_cluster) || p.to_cluster == ci {
                    return Err(format!("cluster {ci}: root is not in a different cluster"));
                }
                if p.nodes.windows(2).any(|w| !g.has_edge(w[0], w[1])) {
                    return Err(format!("cluster {ci}: path uses a non-edge"));
                }
            }
        }
    }
    if cs.max_trees_per_edge() > 4 {
        return Err(format!("an edge lies in {} trees", cs.max_trees_per_edge()));
    }
    if cs.max_tokens_per_edge > 2 {
        return Err(format!("a node sent {} tokens over one edge", cs.max_tokens_per_edge));
    }
    Ok(())
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ColoringStats {
    pub heavy: usize,
    pub stars: usize,
    pub max_star: usize,
    pub min_star: usize,
    /// Largest degree in the graph of light clusters left for step 5.
    pub light_max_degree: usize,
    /// Light clusters with no neighbor in that graph, folded into the group of
    /// the heavy cluster that colored their target.
    pub absorbed: usize,
    pub engine_rounds: u64,
    /// Rounds charged for steps computed by the controller, see
    /// [`color_red_blue`].
    pub charged_rounds: u64,
}

#[derive(Clone, Debug)]
pub struct Star {
    pub center: usize,
    pub members: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct RedBlueColoring {
    pub colors: Vec<Color>,
    pub stars: Vec<Star>,
    pub heavy: Vec<bool>,
    pub stats: ColoringStats,
}

impl RedBlueColoring {
    pub fn to_json(&self, cc: &ClusterCollection) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = cc
            .clusters
            .iter()
            .zip(&self.colors)
            .map(|(c, col)| (c.id.to_string(), serde_json::to_value(col).unwrap()))
            .collect();
        serde_json::Value::Object(map)
    }
}

fn color_alternating(list: &mut [usize], cc: &ClusterCollection, colors: &mut [Option<Color>]) {
    list.sort_by_key(|&c| cc.clusters[c].id);
    for (i, &c) in list.iter().enumerate() {
        colors[c] = Some(if i % 2 == 0 { Color::Blue } else { Color::Red });
    }
}

/// Runs steps 0-5. The token phase and the MIS on the square of the light
/// cluster graph are engine executions; the remaining steps are local rules
/// evaluated by the controller and charged `2 (beta + kappa) + k` rounds per
/// cluster-graph round (one aggregation up and down each cluster tree plus a
/// path of at most `k` hops).
pub fn color_red_blue(
    g: &Graph,
    cc: &ClusterCollection,
    stats: &CollectionStats,
    k: usize,
    cfg: &SimConfig,
) -> Result<(RedBlueColoring, ConnectingStructure), EngineError> {
    let p = cc.len();
    let cs = build_connecting_structure(g, cc, k, cfg)?;
    let per_cluster_round = 2 * (stats.beta + stats.kappa) as u64 + k as u64;
    let mut charged = 0u64;
    let mut colors: Vec<Option<Color>> = vec![None; p];

    // step 0
    for c in 0..p {
        if cs.isolated[c] {
            colors[c] = Some(Color::Red);
        }
    }
    // step 1 is the structure; step 2
    let incoming = cs.incoming();
    let heavy: Vec<bool> = incoming.iter().map(|&d| d >= HEAVY_THRESHOLD).collect();
    charged += 2 * per_cluster_round;

    // step 3
    let mut children: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for path in cs.paths.iter().flatten() {
        if heavy[path.to_cluster] {
            children.entry(path.to_cluster).or_default().push(path.from_cluster);
        }
    }
    let mut colored_by: Vec<Option<usize>> = vec![None; p];
    for (&h, kids) in &children {
        for &c in kids {
            colored_by[c] = Some(h);
        }
    }
    // step 5 graph: light clusters not yet colored, edges along selected
    // paths between two of them
    let in_light = |c: usize, colored_by: &[Option<usize>]| {
        !cs.isolated[c] && !heavy[c] && colored_by[c].is_none()
    };
    let light: Vec<usize> = (0..p).filter(|&c| in_light(c, &colored_by)).collect();
    let mut light_index = vec![usize::MAX; p];
    for (i, &c) in light.iter().enumerate() {
        light_index[c] = i;
    }
    let mut ladj: Vec<Vec<usize>> = vec![Vec::new(); light.len()];
    for path in cs.paths.iter().flatten() {
        let (a, b) = (light_index[path.from_cluster], light_index[path.to_cluster]);
        if a != usize::MAX && b != usize::MAX {
            ladj[a].push(b);
            ladj[b].push(a);
        }
    }
    for l in &mut ladj {
        l.sort_unstable();
        l.dedup();
    }
    // isolated light clusters join the heavy group that colored their target
    let mut absorbed = 0;
    for (i, &c) in light.iter().enumerate() {
        if ladj[i].is_empty() {
            let target = cs.paths[c].as_ref().unwrap().to_cluster;
            let h = colored_by[target].expect("a lone light cluster points at a heavy child");
            children.get_mut(&h).unwrap().push(c);
            colored_by[c] = Some(h);
            absorbed += 1;
        }
    }
    for kids in children.values_mut() {
        color_alternating(kids, cc, &mut colors);
    }
    charged += 2 * per_cluster_round;

    // step 4
    for c in 0..p {
        if heavy[c] && colors[c].is_none() {
            colors[c] = Some(Color::Blue);
        }
    }

    // step 5
    let remaining: Vec<usize> = (0..light.len()).filter(|&i| !ladj[i].is_empty()).collect();
    let mut stars = Vec::new();
    let mut engine_rounds = cs.engine_rounds;
    if !remaining.is_empty() {
        let (star_list, mis_rounds) = star_cover(cc, &light, &ladj)?;
        engine_rounds += mis_rounds;
        charged += 2 * mis_rounds * per_cluster_round + 3 * per_cluster_round;
        for s in &star_list {
            let mut members = s.members.clone();
            color_alternating(&mut members, cc, &mut colors);
        }
        stars = star_list;
    }
    let colors: Vec<Color> = colors
        .into_iter()
        .enumerate()
        .map(|(c, col)| col.unwrap_or_else(|| panic!("cluster {c} left uncolored")))
        .collect();
    let light_max_degree = ladj.iter().map(Vec::len).max().unwrap_or(0);
    let sizes: Vec<usize> = stars.iter().map(|s| s.members.len()).collect();
    let stats = ColoringStats {
        heavy: heavy.iter().filter(|&&h| h).count(),
        stars: stars.len(),
        max_star: sizes.iter().copied().max().unwrap_or(0),
        min_star: sizes.iter().copied().min().unwrap_or(0),
        light_max_degree,
        absorbed,
        engine_rounds,
        charged_rounds: charged,
    };
    Ok((
        RedBlueColoring {
            colors,
            stars,
            heavy,
            stats,
        },
        cs,
    ))
}

/// Star cover of the light cluster graph (every vertex has a neighbor).
///
/// An MIS of the square gives centers at pairwise distance at least 3. Each
/// center claims all its neighbors; every other vertex is at distance two
/// from a center and picks its lowest-identifier claimed neighbor `u`. Each
/// such `u` leads a star of itself and its pickers. A center keeps the
/// claimed neighbors nobody picked; if none are left it joins the star of
/// its lowest-identifier neighbor. All stars have between 2 and
/// `1 + max degree` clusters.
fn star_cover(
    cc: &ClusterCollection,
    light: &[usize],
    ladj: &[Vec<usize>],
) -> Result<(Vec<Star>, u64), EngineError> {
    let m = light.len();
    let active: Vec<usize> = (0..m).filter(|&i| !ladj[i].is_empty()).collect();
    let mut pos = vec![usize::MAX; m];
    for (j, &i) in active.iter().enumerate() {
        pos[i] = j;
    }
    // square of the active light graph with cluster identifiers
    let mut edges = Vec::new();
    for (j, &i) in active.iter().enumerate() {
        let mut reach: Vec<usize> = ladj[i].clone();
        for &u in &ladj[i] {
            reach.extend(ladj[u].iter().copied());
        }
        for r in reach {
            let jr = pos[r];
            if jr != usize::MAX && jr > j {
                edges.push((j, jr));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    let ids: Vec<NodeId> = active.iter().map(|&i| cc.clusters[light[i]].id).collect();
    let bits = ids.iter().map(NodeId::bits).max().unwrap_or(1).max(1);
    let sq = Graph::new(active.len(), &edges)
        .expect("simple graph")
        .with_ids(ids, bits)
        .expect("distinct cluster identifiers");
    let (mis, metrics) = maximal_independent_set(&sq, &SimConfig::local())?;

    let id_of = |i: usize| cc.clusters[light[i]].id;
    let mut claimed_by = vec![usize::MAX; m];
    let centers: Vec<usize> = active.iter().copied().filter(|&i| mis[pos[i]]).collect();
    for &c in &centers {
        claimed_by[c] = c;
        for &u in &ladj[c] {
            claimed_by[u] = c;
        }
    }
    let mut pickers: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &w in &active {
        if claimed_by[w] != usize::MAX {
            continue;
        }
        let u = ladj[w]
            .iter()
            .copied()
            .filter(|&u| claimed_by[u] != usize::MAX && claimed_by[u] != u)
            .min_by_key(|&u| id_of(u))
            .expect("unclaimed vertex is next to a claimed one");
        pickers.entry(u).or_default().push(w);
    }
    let mut stars: Vec<Star> = Vec::new();
    let mut star_of_leader: HashMap<usize, usize> = HashMap::new();
    for (&u, ws) in &pickers {
        let mut members = vec![u];
        members.extend(ws);
        star_of_leader.insert(u, stars.len());
        stars.push(Star { center: u, members });
    }
    for &c in &centers {
        let rest: Vec<usize> = ladj[c]
            .iter()
            .copied()
            .filter(|u| !pickers.contains_key(u))
            .collect();
        if rest.is_empty() {
            let u = ladj[c].iter().copied().min_by_key(|&u| id_of(u)).unwrap();
            stars[star_of_leader[&u]].members.push(c);
        } else {
            let mut members = vec![c];
            members.extend(rest);
            stars.push(Star { center: c, members });
        }
    }
    for s in &mut stars {
        s.center = light[s.center];
        for x in &mut s.members {
            *x = light[*x];
        }
        s.members.sort_unstable();
    }
    Ok((stars, metrics.rounds))
}

#[derive(Clone, Debug, Serialize)]
pub struct ComponentBalance {
    pub clusters: Vec<usize>,
    pub blue: usize,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct BalanceReport {
    pub components: Vec<ComponentBalance>,
}

impl BalanceReport {
    pub fn passed(&self) -> bool {
        self.components.iter().all(|c| c.ok)
    }

    pub fn violations(&self) -> Vec<&ComponentBalance> {
        self.components.iter().filter(|c| !c.ok).collect()
    }
}

/// Blue fraction per distance-`k` component with at least two clusters;
/// passes iff it lies in `[1/2, 3/4]`.
pub fn check_balance(g: &Graph, cc: &ClusterCollection, k: usize, colors: &[Color]) -> BalanceReport {
    let components = distance_k_components(g, cc, k)
        .into_iter()
        .filter(|c| c.len() >= 2)
        .map(|clusters| {
            let blue = clusters.iter().filter(|&&c| colors[c] == Color::Blue).count();
            let total = clusters.len();
            let ok = 2 * blue >= total && 4 * blue <= 3 * total;
            ComponentBalance { clusters, blue, ok }
        })
        .collect();
    BalanceReport { components }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::validate_collection;
    use crate::workbench::generators::{random_collection, random_regular};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn path(n: usize) -> Graph {
        let es: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Graph::new(n, &es).unwrap()
    }

    fn color(g: &Graph, cc: &ClusterCollection, k: usize) -> (RedBlueColoring, ConnectingStructure) {
        let stats = validate_collection(g, cc).unwrap();
        color_red_blue(g, cc, &stats, k, &SimConfig::for_graph(g)).unwrap()
    }

    #[test]
    fn two_clusters_through_middle() {
        let g = path(3);
        let cc = ClusterCollection::singletons(&g, &[0, 2]);
        let cs = build_connecting_structure(&g, &cc, 2, &SimConfig::for_graph(&g)).unwrap();
        validate_connecting_structure(&g, &cc, &cs).unwrap();
        assert_eq!(cs.paths[0].as_ref().unwrap().nodes, vec![0, 1, 2]);
        assert_eq!(cs.paths[1].as_ref().unwrap().nodes, vec![2, 1, 0]);
        assert!(cs.max_trees_per_edge() <= 2);
        assert_eq!(cs.engine_rounds, 4);
    }

    #[test]
    fn single_cluster_is_isolated_and_red() {
        let g = path(4);
        let cc = ClusterCollection::singletons(&g, &[1]);
        for k in 1..4 {
            let (col, cs) = color(&g, &cc, k);
            assert!(cs.isolated[0] && cs.paths[0].is_none());
            assert_eq!(col.colors, vec![Color::Red]);
        }
    }

    #[test]
    fn mutual_pair_is_one_star() {
        let g = path(2);
        let cc = ClusterCollection::singletons(&g, &[0, 1]);
        let (col, _) = color(&g, &cc, 1);
        assert_eq!(col.stars.len(), 1);
        assert_eq!(col.stars[0].members, vec![0, 1]);
        let blue = col.colors.iter().filter(|&&c| c == Color::Blue).count();
        assert_eq!(blue, 1);
        assert!(check_balance(&g, &cc, 1, &col.colors).passed());
    }

    #[test]
    fn thirteen_children_of_a_heavy_cluster() {
        // star graph: center 0 with 13 leaves, all singletons
        let es: Vec<(usize, usize)> = (1..14).map(|i| (0, i)).collect();
        let g = Graph::new(14, &es).unwrap();
        let cc = ClusterCollection::singletons(&g, &(0..14).collect::<Vec<_>>());
        let (col, cs) = color(&g, &cc, 1);
        validate_connecting_structure(&g, &cc, &cs).unwrap();
        assert_eq!(cs.incoming()[0], 13);
        assert!(col.heavy[0]);
        let kids_blue = (1..14).filter(|&c| col.colors[c] == Color::Blue).count();
        assert_eq!(kids_blue, 7);
        assert_eq!(col.colors[0], Color::Blue);
        let report = check_balance(&g, &cc, 1, &col.colors);
        assert_eq!(report.components[0].blue, 8);
        assert!(report.passed());
    }

    #[test]
    fn balance_checker_examples() {
        let g = path(4);
        let cc = ClusterCollection::singletons(&g, &[0, 1]);
        assert!(check_balance(&g, &cc, 1, &[Color::Blue, Color::Red]).passed());
        let cc4 = ClusterCollection::singletons(&g, &[0, 1, 2, 3]);
        let r = check_balance(&g, &cc4, 1, &[Color::Blue; 4]);
        assert!(!r.passed());
        assert_eq!(r.violations()[0].clusters, vec![0, 1, 2, 3]);
        let lone = ClusterCollection::singletons(&g, &[0]);
        assert!(check_balance(&g, &lone, 1, &[Color::Red]).components.is_empty());
    }

    #[test]
    fn json_map() {
        let g = path(2);
        let cc = ClusterCollection::singletons(&g, &[0, 1]);
        let (col, _) = color(&g, &cc, 1);
        let v = col.to_json(&cc);
        assert!(v["0"] == "blue" || v["0"] == "red");
        assert_ne!(v["0"], v["1"]);
    }

    #[test]
    fn random_collections_balance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..30 {
            let g = random_regular(128, 3 + trial % 3, trial as u64).unwrap();
            let cc = random_collection(&g, 10 + trial * 3, 4, &mut rng);
            for k in 1..=3 {
                let (col, cs) = color(&g, &cc, k);
                validate_connecting_structure(&g, &cc, &cs).unwrap();
                let rep = check_balance(&g, &cc, k, &col.colors);
                assert!(rep.passed(), "trial {trial} k {k}: {:?}", rep.violations());
                for s in &col.stars {
                    assert!(s.members.len() >= 2);
                    assert!(s.members.len() <= 1 + col.stats.light_max_degree);
                }
            }
        }
    }

    #[test]
    fn singleton_clusters_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for t in 0..10 {
            let g = random_regular(64, 4, t).unwrap();
            let nodes: Vec<usize> = (0..64).filter(|_| rand::Rng::gen_bool(&mut rng, 0.5)).collect();
            let cc = ClusterCollection::singletons(&g, &nodes);
            for k in 1..=3 {
                let (col, cs) = color(&g, &cc, k);
                validate_connecting_structure(&g, &cc, &cs).unwrap();
                assert!(check_balance(&g, &cc, k, &col.colors).passed());
            }
        }
    }
}
