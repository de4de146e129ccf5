//! Ball carving for one color class.
//!
//! [`carve_distance_k`] grows clusters by distance-`k` proposals from red
//! to blue clusters and separates clusters by more than `k`.
//! [`carve_fast`] is the levels-and-tokens variant for `k = 1`.
//!
//! Both are a phase controller around engine runs: the proposal BFS (or the
//! one-round neighborhood exchange) and the red/blue coloring are simulated
//! message by message; cluster-internal counting and decisions are done by
//! the controller and charged as tree aggregations.

use std::collections::{BTreeSet, HashMap};

use num_bigint::BigUint;
use serde::Serialize;

use crate::cluster::agg::bits_for;
use crate::cluster::{distance_k_components, validate_collection, Cluster, ClusterCollection, ClusterError};
use crate::coloring::{color_red_blue, Color};
use crate::engine::{run, EngineError, NodeCtx, NodeProgram, Payload, SimConfig};
use crate::graph::{Graph, NodeId};
use crate::math::{log2_ceil, log43_ceil};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CarveParamsE {
    pub n: usize,
    pub x: u64,
    pub k: usize,
    pub phases: u64,
    pub proposal_parameter: u64,
    pub steps: u64,
    pub beta_bound: u64,
    pub kappa_bound: u64,
}

impl CarveParamsE {
    pub fn new(n: usize, x: u64, k: usize) -> Self {
        assert!(x >= 1 && k >= 1);
        let phases = log43_ceil(n) as u64 + 1;
        let proposal_parameter = x * phases;
        let steps = (proposal_parameter + 1) * log2_ceil(n) as u64;
        CarveParamsE {
            n,
            x,
            k,
            phases,
            proposal_parameter,
            steps,
            beta_bound: k as u64 * phases * steps,
            kappa_bound: 2 * phases * (k as u64).min(steps),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CarveParamsC {
    pub n: usize,
    pub x: u64,
    pub levels: u64,
    pub phases: u64,
    pub pay_per_kill: u64,
    pub steps: u64,
}

impl CarveParamsC {
    pub fn new(n: usize, x: u64) -> Self {
        assert!(x >= 1);
        let levels = log43_ceil(n) as u64 + 1;
        let phases = 2 * levels + 2 * log2_ceil(n) as u64;
        let pay_per_kill = 4 * phases * x;
        CarveParamsC {
            n,
            x,
            levels,
            phases,
            pay_per_kill,
            steps: 2 * pay_per_kill,
        }
    }

    pub fn total_tokens_bound(&self, s: usize) -> u64 {
        4 * self.phases * s as u64
    }
}

/// Multiple of the current Steiner radius charged per step for counting
/// proposals at the leader and announcing the decision.
pub const STEP_AGGREGATION_FACTOR: u64 = 2;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PhaseStats {
    pub phase: u64,
    pub clusters: usize,
    /// Largest distance-`k` component, in clusters.
    pub max_component: usize,
    /// `max_component <= max(1, (3/4)^phase * |S|)`.
    pub component_bound_ok: bool,
    pub dead: usize,
    pub max_radius: usize,
    pub max_congestion: usize,
    pub steps_run: u64,
    /// Blue clusters that were not stalling at the end of the phase.
    pub blue_not_stalled: usize,
    pub tokens_created: u64,
    pub clusters_at_top: usize,
}

#[derive(Clone, Debug)]
pub struct CarveResult {
    pub collection: ClusterCollection,
    pub dead: Vec<usize>,
    pub phases: Vec<PhaseStats>,
    pub engine_rounds: u64,
    pub charged_rounds: u64,
    pub skipped_steps: u64,
    pub tokens_created: u64,
    /// Cluster changes or phase transitions that did not raise (resp. lower)
    /// a node's potential as expected; always zero in a correct run.
    pub potential_violations: u64,
    pub min_token_counter: i64,
    /// Clusters that finished below the top level.
    pub below_top: usize,
}

impl CarveResult {
    pub fn rounds(&self) -> u64 {
        self.engine_rounds + self.charged_rounds
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CarveError {
    #[error("engine: {0}")]
    Engine(#[from] EngineError),
    #[error("invalid intermediate collection: {0}")]
    Cluster(#[from] ClusterError),
    #[error("node {0} is not in the graph")]
    NodeOutOfRange(usize),
}

struct CState {
    id: NodeId,
    leader: usize,
    members: BTreeSet<usize>,
    parent: HashMap<usize, usize>,
    color: Color,
    stalled: bool,
    level: u64,
    tokens: i64,
    changed: bool,
}

impl CState {
    fn in_tree(&self, v: usize) -> bool {
        v == self.leader || self.parent.contains_key(&v)
    }

    /// Red sorts after blue on the same level.
    fn rank(&self) -> u64 {
        2 * self.level + u64::from(self.color == Color::Red)
    }
}

struct State {
    clusters: Vec<CState>,
    member: Vec<Option<usize>>,
    dead: Vec<bool>,
    s: usize,
}

impl State {
    fn new(g: &Graph, s: &[usize]) -> Result<Self, CarveError> {
        let mut st = State {
            clusters: Vec::with_capacity(s.len()),
            member: vec![None; g.n()],
            dead: vec![false; g.n()],
            s: s.len(),
        };
        for &v in s {
            if v >= g.n() {
                return Err(CarveError::NodeOutOfRange(v));
            }
            st.member[v] = Some(st.clusters.len());
            st.clusters.push(CState {
                id: g.id(v),
                leader: v,
                members: BTreeSet::from([v]),
                parent: HashMap::new(),
                color: Color::Red,
                stalled: false,
                level: 0,
                tokens: 1,
                changed: true,
            });
        }
        Ok(st)
    }

    fn alive(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.clusters.len()).filter(|&c| !self.clusters[c].members.is_empty())
    }

    fn move_to(&mut self, v: usize, to: usize, attach: impl FnOnce(&mut CState)) {
        if let Some(from) = self.member[v] {
            self.clusters[from].members.remove(&v);
        }
        self.member[v] = Some(to);
        let c = &mut self.clusters[to];
        c.members.insert(v);
        attach(c);
    }

    fn kill(&mut self, v: usize) {
        if let Some(from) = self.member[v].take() {
            self.clusters[from].members.remove(&v);
        }
        self.dead[v] = true;
    }

    /// Alive clusters with Steiner trees pruned to the paths from members to
    /// the leader; returns the collection and the state index of each entry.
    fn export(&self, which: impl Fn(usize) -> bool) -> (ClusterCollection, Vec<usize>) {
        let mut clusters = Vec::new();
        let mut index = Vec::new();
        for c in self.alive().filter(|&c| which(c)) {
            let cs = &self.clusters[c];
            let mut keep: BTreeSet<(usize, usize)> = BTreeSet::new();
            for &v in &cs.members {
                let mut x = v;
                while let Some(&p) = cs.parent.get(&x) {
                    if !keep.insert((x, p)) {
                        break;
                    }
                    x = p;
                }
            }
            clusters.push(Cluster {
                id: cs.id,
                leader: cs.leader,
                members: cs.members.iter().copied().collect(),
                steiner: keep.into_iter().collect(),
            });
            index.push(c);
        }
        (ClusterCollection::new(clusters), index)
    }

    fn dead_list(&self) -> Vec<usize> {
        (0..self.dead.len()).filter(|&v| self.dead[v]).collect()
    }

    fn max_depth(&self) -> u64 {
        let mut best = 0;
        for c in self.alive() {
            let cs = &self.clusters[c];
            for &v in &cs.members {
                let mut d = 0;
                let mut x = v;
                while let Some(&p) = cs.parent.get(&x) {
                    d += 1;
                    x = p;
                }
                best = best.max(d);
            }
        }
        best
    }

    fn phase_stats(&self, g: &Graph, k: usize, phase: u64) -> Result<PhaseStats, CarveError> {
        let (cc, _) = self.export(|_| true);
        let stats = validate_collection(g, &cc)?;
        let max_component = distance_k_components(g, &cc, k).iter().map(Vec::len).max().unwrap_or(0);
        Ok(PhaseStats {
            phase,
            clusters: cc.len(),
            max_component,
            component_bound_ok: component_bound_holds(max_component, phase, self.s),
            dead: self.dead.iter().filter(|&&d| d).count(),
            max_radius: stats.beta,
            max_congestion: stats.kappa,
            ..Default::default()
        })
    }
}

/// `size <= max(1, (3/4)^phase * s)`, exactly.
pub fn component_bound_holds(size: usize, phase: u64, s: usize) -> bool {
    if size <= 1 {
        return true;
    }
    let lhs = BigUint::from(size) * BigUint::from(4u32).pow(phase as u32);
    let rhs = BigUint::from(s) * BigUint::from(3u32).pow(phase as u32);
    lhs <= rhs
}

#[derive(Clone, Debug)]
struct BfsToken {
    cluster: NodeId,
    hops: u32,
    bits: u64,
}

impl Payload for BfsToken {
    fn bits(&self) -> u64 {
        self.bits
    }
}

/// Distance-`k` proposal BFS: origins send their cluster identifier, every
/// non-blue node adopts the first token (ties by cluster identifier, then
/// sender index) and relays it while it has traveled fewer than `k` hops.
struct BfsProgram {
    origin: Option<NodeId>,
    blocked: bool,
    k: u32,
    bits: u64,
    got: Option<(NodeId, usize, u32)>,
}

impl NodeProgram for BfsProgram {
    type Msg = BfsToken;
    type Output = Option<(NodeId, usize, u32)>;

    fn init(&mut self, _ctx: &mut NodeCtx, out: &mut [Option<BfsToken>]) {
        if let Some(id) = self.origin {
            for slot in out.iter_mut() {
                *slot = Some(BfsToken { cluster: id, hops: 1, bits: self.bits });
            }
        }
    }

    fn on_round(&mut self, ctx: &mut NodeCtx, inbox: &[Option<BfsToken>], out: &mut [Option<BfsToken>]) {
        if self.origin.is_some() || self.blocked || self.got.is_some() {
            return;
        }
        let best = inbox
            .iter()
            .enumerate()
            .filter_map(|(p, m)| m.as_ref().map(|t| (t.cluster, ctx.neighbors[p], p, t.hops)))
            .min();
        let Some((cluster, _, port, hops)) = best else { return };
        self.got = Some((cluster, port, hops));
        if hops < self.k {
            for (p, slot) in out.iter_mut().enumerate() {
                if p != port {
                    *slot = Some(BfsToken { cluster, hops: hops + 1, bits: self.bits });
                }
            }
        }
    }

    fn finished(&self) -> bool {
        true
    }

    fn output(&self) -> Self::Output {
        self.got
    }
}

fn cluster_id_bits(g: &Graph, st: &State) -> u32 {
    g.id_bits().max(st.clusters.iter().map(|c| c.id.bits()).max().unwrap_or(1)).max(1)
}

/// Colors the given clusters with the balanced red/blue coloring at
/// distance `k`; returns (engine rounds, charged rounds).
fn recolor(
    g: &Graph,
    st: &mut State,
    which: &[usize],
    k: usize,
    cfg: &SimConfig,
) -> Result<(u64, u64), CarveError> {
    let set: BTreeSet<usize> = which.iter().copied().collect();
    let (cc, index) = st.export(|c| set.contains(&c));
    if cc.is_empty() {
        return Ok((0, 0));
    }
    let stats = validate_collection(g, &cc)?;
    let (col, _) = color_red_blue(g, &cc, &stats, k, cfg)?;
    for (i, &c) in index.iter().enumerate() {
        st.clusters[c].color = col.colors[i];
    }
    Ok((col.stats.engine_rounds, col.stats.charged_rounds))
}

/// Distance-`k` carving of `s` with parameter `x`; `n` for the parameters is
/// `g.n()` unless `n_bound` gives a larger upper bound.
pub fn carve_distance_k(
    g: &Graph,
    s: &[usize],
    k: usize,
    x: u64,
    n_bound: Option<usize>,
    cfg: &SimConfig,
) -> Result<CarveResult, CarveError> {
    let params = CarveParamsE::new(n_bound.unwrap_or(g.n()).max(g.n()), x, k);
    let mut st = State::new(g, s)?;
    let id_bits = cluster_id_bits(g, &st);
    let bits = (id_bits + bits_for(k + 1)) as u64;
    let mut res = CarveResult {
        collection: ClusterCollection::default(),
        dead: vec![],
        phases: vec![],
        engine_rounds: 0,
        charged_rounds: 0,
        skipped_steps: 0,
        tokens_created: 0,
        potential_violations: 0,
        min_token_counter: 1,
        below_top: 0,
    };
    let mut first = st.phase_stats(g, k, 0)?;
    first.component_bound_ok = true;
    res.phases.push(first);

    for phase in 1..=params.phases {
        let all: Vec<usize> = st.alive().collect();
        let (er, cr) = recolor(g, &mut st, &all, k, cfg)?;
        res.engine_rounds += er;
        res.charged_rounds += cr;
        for c in &mut st.clusters {
            c.stalled = false;
        }
        let mut steps_run = 0;
        for step in 0..params.steps {
            let origin_of: Vec<Option<NodeId>> = (0..g.n())
                .map(|v| {
                    st.member[v].and_then(|c| {
                        let cs = &st.clusters[c];
                        (cs.color == Color::Blue && !cs.stalled).then_some(cs.id)
                    })
                })
                .collect();
            if origin_of.iter().all(Option::is_none) {
                res.skipped_steps += params.steps - step;
                res.charged_rounds +=
                    (params.steps - step) * (k as u64 + STEP_AGGREGATION_FACTOR * st.max_depth());
                break;
            }
            steps_run += 1;
            let sim = run(
                g,
                |v| BfsProgram {
                    origin: origin_of[v],
                    blocked: st.member[v].is_some_and(|c| st.clusters[c].color == Color::Blue),
                    k: k as u32,
                    bits,
                    got: None,
                },
                cfg,
            )?;
            res.engine_rounds += sim.metrics.rounds;
            res.charged_rounds += STEP_AGGREGATION_FACTOR * st.max_depth();

            let by_id: HashMap<NodeId, usize> = st.alive().map(|c| (st.clusters[c].id, c)).collect();
            let mut proposals: HashMap<usize, Vec<usize>> = HashMap::new();
            for v in 0..g.n() {
                let Some(own) = st.member[v] else { continue };
                if st.clusters[own].color != Color::Red {
                    continue;
                }
                if let Some((cid, _, _)) = sim.outputs[v] {
                    proposals.entry(by_id[&cid]).or_default().push(v);
                }
            }
            let targets: Vec<usize> = st
                .alive()
                .filter(|&c| st.clusters[c].color == Color::Blue && !st.clusters[c].stalled)
                .collect();
            for c in targets {
                let p = proposals.remove(&c).unwrap_or_default();
                let size = st.clusters[c].members.len() as u64;
                if !p.is_empty() && size <= params.proposal_parameter * p.len() as u64 {
                    for v in p {
                        let outputs = &sim.outputs;
                        st.move_to(v, c, |cs| {
                            let mut y = v;
                            while !cs.in_tree(y) {
                                let port = outputs[y].expect("proposal path").1;
                                let up = g.neighbors(y)[port];
                                cs.parent.insert(y, up);
                                y = up;
                            }
                        });
                    }
                } else {
                    for v in p {
                        st.kill(v);
                    }
                    st.clusters[c].stalled = true;
                }
            }
        }
        let mut ps = st.phase_stats(g, k, phase)?;
        ps.steps_run = steps_run;
        ps.blue_not_stalled = st
            .alive()
            .filter(|&c| st.clusters[c].color == Color::Blue && !st.clusters[c].stalled)
            .count();
        res.phases.push(ps);
    }
    let (cc, _) = st.export(|_| true);
    res.collection = cc;
    res.dead = st.dead_list();
    Ok(res)
}

#[derive(Clone, Debug)]
struct NeighborInfo {
    cluster: NodeId,
    rank: u64,
    stalled: bool,
    bits: u64,
}

impl Payload for NeighborInfo {
    fn bits(&self) -> u64 {
        self.bits
    }
}

/// One round: every clustered node tells its neighbors its cluster, rank and
/// stalling flag.
struct ExchangeProgram {
    info: Option<NeighborInfo>,
    heard: Vec<Option<NeighborInfo>>,
    done: bool,
}

impl NodeProgram for ExchangeProgram {
    type Msg = NeighborInfo;
    type Output = Vec<Option<NeighborInfo>>;

    fn init(&mut self, _ctx: &mut NodeCtx, out: &mut [Option<NeighborInfo>]) {
        if let Some(info) = &self.info {
            for slot in out.iter_mut() {
                *slot = Some(info.clone());
            }
        }
    }

    fn on_round(&mut self, _ctx: &mut NodeCtx, inbox: &[Option<NeighborInfo>], _out: &mut [Option<NeighborInfo>]) {
        self.heard = inbox.to_vec();
        self.done = true;
    }

    fn finished(&self) -> bool {
        self.done
    }

    fn output(&self) -> Self::Output {
        self.heard.clone()
    }
}

fn potential(phase: u64, level: u64, color: Color) -> i64 {
    3 * phase as i64 - 2 * level as i64 + i64::from(color == Color::Blue)
}

/// Levels-and-tokens carving of `s` (cluster distance 1) with parameter `x`.
///
/// Every clustered node proposes to the adjacent non-stalled cluster of
/// smallest (rank, identifier) below its own rank, where rank orders by
/// level and puts blue before red on a level. A cluster accepts iff it gets
/// at least `ceil(t / (2 PayPerKill))` proposals (and at least one), otherwise
/// it kills the proposers, pays `PayPerKill` tokens each and stalls. Stalled
/// clusters level up at the end of the phase; clusters whose level changed
/// are recolored per level.
pub fn carve_fast(
    g: &Graph,
    s: &[usize],
    x: u64,
    n_bound: Option<usize>,
    cfg: &SimConfig,
) -> Result<CarveResult, CarveError> {
    let params = CarveParamsC::new(n_bound.unwrap_or(g.n()).max(g.n()), x);
    let top = params.levels;
    let ppk = params.pay_per_kill as i64;
    let mut st = State::new(g, s)?;
    let id_bits = cluster_id_bits(g, &st);
    let info_bits = (id_bits + bits_for(2 * top as usize + 2) + 1) as u64;
    let mut res = CarveResult {
        collection: ClusterCollection::default(),
        dead: vec![],
        phases: vec![],
        engine_rounds: 0,
        charged_rounds: 0,
        skipped_steps: 0,
        tokens_created: s.len() as u64,
        potential_violations: 0,
        min_token_counter: 1,
        below_top: 0,
    };
    let mut first = st.phase_stats(g, 1, 0)?;
    first.component_bound_ok = true;
    res.phases.push(first);
    let mut last_potential: Vec<Option<i64>> = vec![None; g.n()];

    for phase in 1..=params.phases {
        for c in &mut st.clusters {
            c.stalled = false;
        }
        let changed: Vec<usize> = st.alive().filter(|&c| st.clusters[c].changed).collect();
        let mut by_level: std::collections::BTreeMap<u64, Vec<usize>> = Default::default();
        for &c in &changed {
            by_level.entry(st.clusters[c].level).or_default().push(c);
        }
        for group in by_level.values() {
            let (er, cr) = recolor(g, &mut st, group, 1, cfg)?;
            res.engine_rounds += er;
            res.charged_rounds += cr;
        }
        for &c in &changed {
            st.clusters[c].changed = false;
        }
        for v in 0..g.n() {
            if let (Some(c), Some(prev)) = (st.member[v], last_potential[v]) {
                let cs = &st.clusters[c];
                if potential(phase, cs.level, cs.color) < prev {
                    res.potential_violations += 1;
                }
            }
        }

        let mut steps_run = 0;
        for step in 0..params.steps {
            steps_run += 1;
            let sim = run(
                g,
                |v| ExchangeProgram {
                    info: st.member[v].map(|c| {
                        let cs = &st.clusters[c];
                        NeighborInfo {
                            cluster: cs.id,
                            rank: cs.rank(),
                            stalled: cs.stalled,
                            bits: info_bits,
                        }
                    }),
                    heard: vec![],
                    done: false,
                },
                cfg,
            )?;
            res.engine_rounds += sim.metrics.rounds;
            res.charged_rounds += STEP_AGGREGATION_FACTOR * st.max_depth();

            let by_id: HashMap<NodeId, usize> = st.alive().map(|c| (st.clusters[c].id, c)).collect();
            let mut proposals: HashMap<usize, Vec<usize>> = HashMap::new();
            let mut any = false;
            for v in 0..g.n() {
                let Some(own) = st.member[v] else { continue };
                let own_rank = st.clusters[own].rank();
                let best = sim.outputs[v]
                    .iter()
                    .flatten()
                    .filter(|i| !i.stalled && i.rank < own_rank && i.cluster != st.clusters[own].id)
                    .map(|i| (i.rank, i.cluster))
                    .min();
                if let Some((_, cid)) = best {
                    proposals.entry(by_id[&cid]).or_default().push(v);
                    any = true;
                }
            }
            let start_member = st.member.clone();
            let open: Vec<usize> = st.alive().filter(|&c| !st.clusters[c].stalled).collect();
            let mut moves: Vec<(usize, usize)> = Vec::new();
            for c in open {
                let p = proposals.remove(&c).unwrap_or_default();
                res.tokens_created += p.len() as u64;
                let t = st.clusters[c].tokens;
                let threshold = (t + 2 * ppk - 1).div_euclid(2 * ppk).max(1);
                if !p.is_empty() && p.len() as i64 >= threshold {
                    st.clusters[c].tokens += p.len() as i64;
                    moves.extend(p.into_iter().map(|v| (v, c)));
                } else {
                    st.clusters[c].tokens -= ppk * p.len() as i64;
                    st.clusters[c].stalled = true;
                    for v in p {
                        st.kill(v);
                    }
                }
            }
            for (v, c) in moves {
                let old = start_member[v].expect("proposer was clustered");
                let before = potential(phase, st.clusters[old].level, st.clusters[old].color);
                let after = potential(phase, st.clusters[c].level, st.clusters[c].color);
                if after <= before {
                    res.potential_violations += 1;
                }
                let anchor = g
                    .neighbors(v)
                    .iter()
                    .copied()
                    .find(|&u| start_member[u] == Some(c))
                    .expect("proposal target is adjacent");
                st.move_to(v, c, |cs| {
                    if !cs.in_tree(v) {
                        cs.parent.insert(v, anchor);
                    }
                });
            }
            for c in st.alive().collect::<Vec<_>>() {
                res.min_token_counter = res.min_token_counter.min(st.clusters[c].tokens);
            }
            if !any {
                // every open cluster just stalled on an empty proposal set;
                // nothing changes for the rest of the phase
                let rest = params.steps - step - 1;
                res.skipped_steps += rest;
                res.charged_rounds += rest * (1 + STEP_AGGREGATION_FACTOR * st.max_depth());
                break;
            }
        }

        for v in 0..g.n() {
            last_potential[v] = st.member[v].map(|c| {
                let cs = &st.clusters[c];
                potential(phase, cs.level, cs.color)
            });
        }
        let mut ps = st.phase_stats(g, 1, phase)?;
        ps.steps_run = steps_run;
        ps.tokens_created = res.tokens_created;
        for c in st.alive().collect::<Vec<_>>() {
            let cs = &mut st.clusters[c];
            if cs.stalled && cs.level < top {
                cs.level += 1;
                cs.changed = true;
            }
        }
        ps.clusters_at_top = st.alive().filter(|&c| st.clusters[c].level == top).count();
        res.phases.push(ps);
    }
    res.below_top = st.alive().filter(|&c| st.clusters[c].level < top).count();
    let (cc, _) = st.export(|_| true);
    res.collection = cc;
    res.dead = st.dead_list();
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workbench::generators::random_regular;

    fn check_e(g: &Graph, k: usize, x: u64) -> CarveResult {
        let s: Vec<usize> = (0..g.n()).collect();
        let r = carve_distance_k(g, &s, k, x, None, &SimConfig::for_graph(g)).unwrap();
        let params = CarveParamsE::new(g.n(), x, k);
        let stats = validate_collection(g, &r.collection).unwrap();
        assert!(r.dead.len() as u64 * x <= s.len() as u64, "dead {}", r.dead.len());
        assert_eq!(r.dead.len() + r.collection.clustered(), s.len());
        if let Some(d) = stats.min_cluster_distance {
            assert!(d as usize > k);
        }
        assert!(stats.beta as u64 <= params.beta_bound);
        assert!(stats.kappa as u64 <= params.kappa_bound);
        assert!(r.phases.iter().all(|p| p.component_bound_ok), "{:?}", r.phases);
        assert!(r.phases.iter().all(|p| p.blue_not_stalled == 0));
        r
    }

    fn check_c(g: &Graph, x: u64) -> CarveResult {
        let s: Vec<usize> = (0..g.n()).collect();
        let r = carve_fast(g, &s, x, None, &SimConfig::for_graph(g)).unwrap();
        let params = CarveParamsC::new(g.n(), x);
        let stats = validate_collection(g, &r.collection).unwrap();
        assert!(r.dead.len() as u64 * x <= s.len() as u64);
        if let Some(d) = stats.min_cluster_distance {
            assert!(d > 1, "clusters at distance {d}");
        }
        assert_eq!(r.below_top, 0);
        assert_eq!(r.potential_violations, 0);
        assert!(r.min_token_counter >= 1);
        assert!(r.tokens_created <= params.total_tokens_bound(s.len()));
        r
    }

    #[test]
    fn parameters() {
        let p = CarveParamsE::new(256, 2, 3);
        assert_eq!((p.phases, p.proposal_parameter, p.steps), (21, 42, 43 * 8));
        assert_eq!(p.kappa_bound, 2 * 21 * 3);
        let c = CarveParamsC::new(256, 2);
        assert_eq!((c.levels, c.phases, c.pay_per_kill), (21, 58, 464));
        assert_eq!(c.steps, 8 * 2 * c.phases);
    }

    #[test]
    fn single_node() {
        let g = Graph::new(1, &[]).unwrap();
        let r = check_e(&g, 1, 2);
        assert_eq!(r.collection.len(), 1);
        let r = check_c(&g, 2);
        assert_eq!(r.collection.len(), 1);
        assert!(r.dead.is_empty());
    }

    #[test]
    fn adjacent_pair_merges() {
        let g = Graph::new(2, &[(0, 1)]).unwrap();
        let r = check_e(&g, 1, 2);
        assert_eq!(r.collection.len(), 1);
        assert_eq!(r.collection.clusters[0].members, vec![0, 1]);
        assert!(r.dead.is_empty());
    }

    #[test]
    fn component_bound_arithmetic() {
        assert!(component_bound_holds(1, 40, 5));
        assert!(component_bound_holds(75, 1, 100));
        assert!(!component_bound_holds(76, 1, 100));
        assert!(!component_bound_holds(2, 30, 100));
    }

    #[test]
    fn random_regular_distance_k() {
        for seed in 0..3 {
            let g = random_regular(64, 4, seed).unwrap();
            for k in [1, 3] {
                check_e(&g, k, 2);
            }
        }
    }

    #[test]
    fn random_regular_levels() {
        for seed in 0..3 {
            let g = random_regular(64, 4, seed).unwrap();
            for x in [2, 4] {
                check_c(&g, x);
            }
        }
    }

    #[test]
    fn subset_carving() {
        let g = random_regular(64, 4, 7).unwrap();
        let s: Vec<usize> = (0..64).step_by(2).collect();
        let r = carve_distance_k(&g, &s, 2, 2, None, &SimConfig::for_graph(&g)).unwrap();
        let all: BTreeSet<usize> = r.collection.clusters.iter().flat_map(|c| c.members.clone()).collect();
        assert!(all.iter().all(|v| v % 2 == 0));
        assert_eq!(all.len() + r.dead.len(), s.len());
        let r = carve_fast(&g, &s, 2, None, &SimConfig::for_graph(&g)).unwrap();
        assert!(r.collection.clusters.iter().flat_map(|c| c.members.iter()).all(|v| v % 2 == 0));
    }
}
