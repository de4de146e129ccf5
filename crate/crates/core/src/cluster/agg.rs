//! Broadcast, aggregation and token learning over overlapping Steiner trees.
//!
//! Every directed tree edge moves one chunk per round. When several trees
//! share a graph edge in the same direction they take turns round-robin in
//! order of cluster identifier, and each message carries a tag of
//! `ceil(log2 t)` bits naming which of the `t` trees on that edge it belongs
//! to. Streams are plain bit sequences, so items are re-chunked freely at
//! every hop.

use std::collections::VecDeque;
use std::sync::Arc;

use super::{Cluster, ClusterCollection, ClusterError, ROUND_CONSTANT};
use crate::engine::{run, BitString, NodeCtx, NodeProgram, Payload, RoundMetrics, SimConfig};
use crate::graph::Graph;

/// Bits needed to tell `count` alternatives apart.
pub fn bits_for(count: usize) -> u32 {
    if count <= 1 {
        0
    } else {
        64 - ((count - 1) as u64).leading_zeros()
    }
}

#[derive(Clone, Debug)]
pub struct TreeMsg {
    tag_bits: u32,
    tree: u32,
    bits: Vec<bool>,
}

impl Payload for TreeMsg {
    fn bits(&self) -> u64 {
        self.tag_bits as u64 + self.bits.len() as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AggregateKind {
    Min,
    SumMod,
    /// Collects the values of the special nodes (those with an input); at
    /// most `max_special` per cluster.
    Convergecast { max_special: usize },
}

enum Op {
    Broadcast { width: u32, payloads: Vec<Vec<bool>> },
    Reduce { kind: AggregateKind, width: u32, inputs: Vec<Option<u64>> },
    Gather { x: u32, idx_bits: u32, count_bits: u32, info: Vec<Vec<bool>> },
    Disseminate { x: u32, idx_bits: u32, count_bits: u32, payloads: Vec<Vec<Vec<bool>>> },
}

#[derive(Clone, Copy)]
enum Dir {
    Up,
    Down(usize),
}

#[derive(Default)]
struct Slot {
    cluster: usize,
    parent: Option<usize>,
    children: Vec<usize>,
    member: bool,
    up: VecDeque<bool>,
    down: Vec<VecDeque<bool>>,
    from_parent: VecDeque<bool>,
    from_child: Vec<VecDeque<bool>>,
    // reduction and broadcast
    child_vals: Vec<Option<u64>>,
    received: Vec<bool>,
    result: Option<u64>,
    // convergecast
    ended: Vec<bool>,
    items: Vec<u64>,
    // numbering
    child_counts: Vec<Option<u64>>,
    count: Option<u64>,
    index: Option<u64>,
    child_ranges: Vec<(u64, u64)>,
    relayed: u64,
    collected: Vec<(u64, Vec<bool>)>,
    payload: Option<Vec<bool>>,
    numbered: bool,
    own_sent: bool,
    done: bool,
}

struct TreeProgram {
    op: Arc<Op>,
    bandwidth: Option<u64>,
    slots: Vec<Slot>,
    /// Per port: `(slot, direction)` sorted by cluster identifier.
    ports: Vec<Vec<(usize, Dir)>>,
    rr: Vec<usize>,
}

fn push_value(q: &mut VecDeque<bool>, v: u64, width: u32) {
    for i in 0..width {
        q.push_back(i < 64 && (v >> i) & 1 == 1);
    }
}

fn take_value(q: &mut VecDeque<bool>, width: u32) -> Option<u64> {
    if (q.len() as u64) < width as u64 {
        return None;
    }
    let mut v = 0u64;
    for i in 0..width {
        if q.pop_front().unwrap() && i < 64 {
            v |= 1 << i;
        }
    }
    Some(v)
}

fn take_bits(q: &mut VecDeque<bool>, width: u32) -> Option<Vec<bool>> {
    if (q.len() as u64) < width as u64 {
        return None;
    }
    Some(q.drain(..width as usize).collect())
}

impl TreeProgram {
    fn is_leader(s: &Slot) -> bool {
        s.parent.is_none()
    }

    fn step_slot(op: &Op, s: &mut Slot, node: usize) {
        if s.done {
            return;
        }
        match op {
            Op::Broadcast { width, payloads } => {
                if Self::is_leader(s) {
                    s.received = payloads[s.cluster].clone();
                    for q in &mut s.down {
                        q.extend(s.received.iter().copied());
                    }
                    s.done = true;
                    return;
                }
                let bits: Vec<bool> = s.from_parent.drain(..).collect();
                for q in &mut s.down {
                    q.extend(bits.iter().copied());
                }
                s.received.extend(bits);
                if s.received.len() as u32 >= *width {
                    s.done = true;
                }
            }
            Op::Reduce { kind, width, inputs } => match kind {
                AggregateKind::Min | AggregateKind::SumMod => {
                    for (i, q) in s.from_child.iter_mut().enumerate() {
                        if s.child_vals[i].is_none() {
                            s.child_vals[i] = take_value(q, *width);
                        }
                    }
                    if s.child_vals.iter().any(Option::is_none) {
                        return;
                    }
                    let mask = if *width >= 64 { u64::MAX } else { (1u64 << width) - 1 };
                    let own = if s.member { inputs[node] } else { None };
                    let vals = s.child_vals.iter().flatten().copied().chain(own);
                    let v = match kind {
                        AggregateKind::Min => vals.fold(mask, u64::min),
                        _ => vals.fold(0u64, |a, b| a.wrapping_add(b)) & mask,
                    };
                    if Self::is_leader(s) {
                        s.result = Some(v);
                    } else {
                        push_value(&mut s.up, v, *width);
                    }
                    s.done = true;
                }
                AggregateKind::Convergecast { .. } => {
                    if !s.own_sent {
                        s.own_sent = true;
                        s.ended = vec![false; s.children.len()];
                        if let (true, Some(v)) = (s.member, inputs[node]) {
                            if Self::is_leader(s) {
                                s.items.push(v);
                            } else {
                                s.up.push_back(true);
                                push_value(&mut s.up, v, *width);
                            }
                        }
                    }
                    let leader = Self::is_leader(s);
                    for i in 0..s.children.len() {
                        let q = &mut s.from_child[i];
                        while !s.ended[i] {
                            match q.front() {
                                None => break,
                                Some(false) => {
                                    q.pop_front();
                                    s.ended[i] = true;
                                }
                                Some(true) => {
                                    if (q.len() as u64) < 1 + *width as u64 {
                                        break;
                                    }
                                    q.pop_front();
                                    let v = take_value(q, *width).unwrap();
                                    if leader {
                                        s.items.push(v);
                                    } else {
                                        s.up.push_back(true);
                                        push_value(&mut s.up, v, *width);
                                    }
                                }
                            }
                        }
                    }
                    if s.ended.iter().all(|&e| e) {
                        if !Self::is_leader(s) {
                            s.up.push_back(false);
                        }
                        s.done = true;
                    }
                }
            },
            Op::Gather { x, idx_bits, count_bits, info } => {
                if !Self::numbering(s, *count_bits) {
                    return;
                }
                let leader = Self::is_leader(s);
                if !s.own_sent {
                    s.own_sent = true;
                    if let Some(idx) = s.index {
                        let item = info[node].clone();
                        if leader {
                            s.collected.push((idx, item));
                        } else {
                            push_value(&mut s.up, idx, *idx_bits);
                            s.up.extend(item);
                            s.relayed += 1;
                        }
                    }
                }
                let width = *idx_bits as usize + *x as usize;
                for i in 0..s.children.len() {
                    while s.from_child[i].len() >= width {
                        let q = &mut s.from_child[i];
                        let idx = take_value(q, *idx_bits).unwrap();
                        let item = take_bits(q, *x).unwrap();
                        if leader {
                            s.collected.push((idx, item));
                        } else {
                            push_value(&mut s.up, idx, *idx_bits);
                            s.up.extend(item);
                            s.relayed += 1;
                        }
                    }
                }
                let got = if leader { s.collected.len() as u64 } else { s.relayed };
                if Some(got) == s.count {
                    s.done = true;
                }
            }
            Op::Disseminate { x, idx_bits, count_bits, payloads } => {
                if !Self::numbering(s, *count_bits) {
                    return;
                }
                let route = |s: &mut Slot, idx: u64, item: Vec<bool>| {
                    if Some(idx) == s.index {
                        s.payload = Some(item);
                    } else {
                        let c = s
                            .child_ranges
                            .iter()
                            .position(|&(a, b)| a <= idx && idx < b)
                            .expect("index inside a child range");
                        push_value(&mut s.down[c], idx, *idx_bits);
                        s.down[c].extend(item);
                    }
                    s.relayed += 1;
                };
                if Self::is_leader(s) {
                    for (idx, item) in payloads[s.cluster].iter().enumerate() {
                        route(s, idx as u64, item.clone());
                    }
                    s.done = true;
                    return;
                }
                let width = *idx_bits as usize + *x as usize;
                while s.from_parent.len() >= width {
                    let idx = take_value(&mut s.from_parent, *idx_bits).unwrap();
                    let item = take_bits(&mut s.from_parent, *x).unwrap();
                    route(s, idx, item);
                }
                if Some(s.relayed) == s.count {
                    s.done = true;
                }
            }
        }
    }

    /// Subtree member counts travel up, then index ranges travel down in
    /// pre-order: own index first, then children in port order. Returns
    /// whether this node has its range.
    fn numbering(s: &mut Slot, count_bits: u32) -> bool {
        if s.count.is_none() {
            for (i, q) in s.from_child.iter_mut().enumerate() {
                if s.child_counts[i].is_none() {
                    s.child_counts[i] = take_value(q, count_bits);
                }
            }
            if s.child_counts.iter().any(Option::is_none) {
                return false;
            }
            let c = s.member as u64 + s.child_counts.iter().flatten().sum::<u64>();
            s.count = Some(c);
            if s.parent.is_some() {
                push_value(&mut s.up, c, count_bits);
            }
        }
        if s.numbered {
            return true;
        }
        let offset = if s.parent.is_none() {
            0
        } else {
            match take_value(&mut s.from_parent, count_bits) {
                Some(o) => o,
                None => return false,
            }
        };
        let mut next = offset;
        if s.member {
            s.index = Some(offset);
            next += 1;
        }
        for i in 0..s.children.len() {
            let c = s.child_counts[i].unwrap();
            s.child_ranges.push((next, next + c));
            push_value(&mut s.down[i], next, count_bits);
            next += c;
        }
        s.numbered = true;
        true
    }

    fn outgoing_empty(&self) -> bool {
        self.slots
            .iter()
            .all(|s| s.up.is_empty() && s.down.iter().all(VecDeque::is_empty))
    }

    fn send(&mut self, out: &mut [Option<TreeMsg>]) {
        for (p, entries) in self.ports.iter().enumerate() {
            let t = entries.len();
            if t == 0 {
                continue;
            }
            let tag_bits = bits_for(t);
            let cap = match self.bandwidth {
                None => usize::MAX,
                Some(b) => {
                    assert!(b > tag_bits as u64, "bandwidth too small for the tree tag");
                    (b - tag_bits as u64) as usize
                }
            };
            for j in 0..t {
                let e = (self.rr[p] + j) % t;
                let (si, dir) = entries[e];
                let q = match dir {
                    Dir::Up => &mut self.slots[si].up,
                    Dir::Down(c) => &mut self.slots[si].down[c],
                };
                if q.is_empty() {
                    continue;
                }
                let take = q.len().min(cap);
                out[p] = Some(TreeMsg {
                    tag_bits,
                    tree: e as u32,
                    bits: q.drain(..take).collect(),
                });
                self.rr[p] = (e + 1) % t;
                break;
            }
        }
    }
}

impl NodeProgram for TreeProgram {
    type Msg = TreeMsg;
    type Output = Vec<(usize, SlotOutput)>;

    fn init(&mut self, ctx: &mut NodeCtx, out: &mut [Option<TreeMsg>]) {
        for s in &mut self.slots {
            Self::step_slot(&self.op, s, ctx.node);
        }
        self.send(out);
    }

    fn on_round(&mut self, ctx: &mut NodeCtx, inbox: &[Option<TreeMsg>], out: &mut [Option<TreeMsg>]) {
        for (p, m) in inbox.iter().enumerate() {
            let Some(m) = m else { continue };
            let (si, dir) = self.ports[p][m.tree as usize];
            let s = &mut self.slots[si];
            match dir {
                Dir::Up => s.from_parent.extend(m.bits.iter().copied()),
                Dir::Down(c) => s.from_child[c].extend(m.bits.iter().copied()),
            }
        }
        for s in &mut self.slots {
            Self::step_slot(&self.op, s, ctx.node);
        }
        self.send(out);
    }

    fn finished(&self) -> bool {
        self.slots.iter().all(|s| s.done) && self.outgoing_empty()
    }

    fn output(&self) -> Vec<(usize, SlotOutput)> {
        self.slots
            .iter()
            .map(|s| {
                (
                    s.cluster,
                    SlotOutput {
                        leader: s.parent.is_none(),
                        member: s.member,
                        received: s.received.clone(),
                        result: s.result,
                        items: s.items.clone(),
                        index: s.index,
                        collected: s.collected.clone(),
                        payload: s.payload.clone(),
                    },
                )
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct SlotOutput {
    pub leader: bool,
    pub member: bool,
    received: Vec<bool>,
    result: Option<u64>,
    items: Vec<u64>,
    pub index: Option<u64>,
    collected: Vec<(u64, Vec<bool>)>,
    payload: Option<Vec<bool>>,
}

fn build_programs(g: &Graph, cc: &ClusterCollection, op: Op, cfg: &SimConfig) -> Vec<TreeProgram> {
    let op = Arc::new(op);
    let n = g.n();
    let mut slots: Vec<Vec<Slot>> = (0..n).map(|_| Vec::new()).collect();
    // (cluster id, slot, dir) per port
    let mut port_lists: Vec<Vec<Vec<(crate::graph::NodeId, usize, Dir)>>> =
        (0..n).map(|v| vec![Vec::new(); g.degree(v)]).collect();
    for (ci, c) in cc.clusters.iter().enumerate() {
        let nodes = c.tree_nodes();
        let parent = c.parent_map();
        let mut children: std::collections::HashMap<usize, Vec<usize>> = Default::default();
        for &(ch, p) in &c.steiner {
            children.entry(p).or_default().push(ch);
        }
        for v in nodes {
            let mut kids = children.remove(&v).unwrap_or_default();
            kids.sort_unstable();
            let child_ports: Vec<usize> = kids
                .iter()
                .map(|&u| g.neighbors(v).binary_search(&u).unwrap())
                .collect();
            let parent_port = parent
                .get(&v)
                .map(|&p| g.neighbors(v).binary_search(&p).unwrap());
            let si = slots[v].len();
            if let Some(pp) = parent_port {
                port_lists[v][pp].push((c.id, si, Dir::Up));
            }
            for (i, &cp) in child_ports.iter().enumerate() {
                port_lists[v][cp].push((c.id, si, Dir::Down(i)));
            }
            let k = child_ports.len();
            slots[v].push(Slot {
                cluster: ci,
                parent: parent_port,
                children: child_ports,
                member: c.members.binary_search(&v).is_ok(),
                down: vec![VecDeque::new(); k],
                from_child: vec![VecDeque::new(); k],
                child_vals: vec![None; k],
                child_counts: vec![None; k],
                ..Default::default()
            });
        }
    }
    slots
        .into_iter()
        .zip(port_lists)
        .map(|(s, pl)| {
            let ports: Vec<Vec<(usize, Dir)>> = pl
                .into_iter()
                .map(|mut l| {
                    l.sort_by_key(|e| e.0);
                    l.into_iter().map(|(_, si, d)| (si, d)).collect()
                })
                .collect();
            let rr = vec![0; ports.len()];
            TreeProgram {
                op: op.clone(),
                bandwidth: cfg.bandwidth.limit(),
                slots: s,
                ports,
                rr,
            }
        })
        .collect()
}

fn execute(
    g: &Graph,
    cc: &ClusterCollection,
    op: Op,
    cfg: &SimConfig,
) -> Result<(Vec<Vec<(usize, SlotOutput)>>, RoundMetrics), ClusterError> {
    let mut progs: Vec<Option<TreeProgram>> = build_programs(g, cc, op, cfg).into_iter().map(Some).collect();
    let res = run(g, |v| progs[v].take().unwrap(), cfg)?;
    Ok((res.outputs, res.metrics))
}

fn to_bits(b: &BitString) -> Vec<bool> {
    (0..b.len()).map(|i| b.get(i)).collect()
}

fn from_bits(bits: &[bool]) -> BitString {
    let mut b = BitString::new();
    for &x in bits {
        b.push_bit(x);
    }
    b
}

/// Every member of a cluster receives the cluster's payload. All payloads
/// must have the same length.
pub fn tree_broadcast(
    g: &Graph,
    cc: &ClusterCollection,
    cfg: &SimConfig,
    payloads: &[BitString],
) -> Result<(Vec<Option<BitString>>, RoundMetrics), ClusterError> {
    assert_eq!(payloads.len(), cc.len(), "one payload per cluster");
    let width = payloads.first().map_or(0, |p| p.len()) as u32;
    if payloads.iter().any(|p| p.len() as u32 != width) {
        return Err(ClusterError::Format("payloads must share one width".into()));
    }
    let op = Op::Broadcast {
        width,
        payloads: payloads.iter().map(to_bits).collect(),
    };
    let (outs, m) = execute(g, cc, op, cfg)?;
    let mut got = vec![None; g.n()];
    for (v, slots) in outs.iter().enumerate() {
        for (_, s) in slots {
            if s.member {
                got[v] = Some(from_bits(&s.received));
            }
        }
    }
    Ok((got, m))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AggregateValue {
    Value(u64),
    Multiset(Vec<u64>),
}

/// Per-cluster aggregate of member inputs, as learned by the leader. For
/// `Min` and `SumMod` every member needs an input; for `Convergecast` the
/// members with an input are the special nodes.
pub fn tree_aggregate(
    g: &Graph,
    cc: &ClusterCollection,
    cfg: &SimConfig,
    kind: AggregateKind,
    inputs: &[Option<u64>],
    width: u32,
) -> Result<(Vec<AggregateValue>, RoundMetrics), ClusterError> {
    assert_eq!(inputs.len(), g.n());
    assert!((1..=64).contains(&width));
    for &v in inputs.iter().flatten() {
        if width < 64 && v >> width != 0 {
            return Err(ClusterError::ValueTooWide { value: v, width });
        }
    }
    if let AggregateKind::Convergecast { max_special } = kind {
        for (i, c) in cc.clusters.iter().enumerate() {
            let count = c.members.iter().filter(|&&v| inputs[v].is_some()).count();
            if count > max_special {
                return Err(ClusterError::TooManySpecial { cluster: i, count, limit: max_special });
            }
        }
    } else {
        for c in &cc.clusters {
            if let Some(&v) = c.members.iter().find(|&&v| inputs[v].is_none()) {
                return Err(ClusterError::Format(format!("member {v} has no input")));
            }
        }
    }
    let op = Op::Reduce {
        kind,
        width,
        inputs: inputs.to_vec(),
    };
    let (outs, m) = execute(g, cc, op, cfg)?;
    let mut res = vec![AggregateValue::Value(0); cc.len()];
    for slots in &outs {
        for (ci, s) in slots {
            if s.leader {
                res[*ci] = match kind {
                    AggregateKind::Convergecast { .. } => {
                        let mut items = s.items.clone();
                        items.sort_unstable();
                        AggregateValue::Multiset(items)
                    }
                    _ => AggregateValue::Value(s.result.expect("leader finished")),
                };
            }
        }
    }
    Ok((res, m))
}

/// Centralized pre-order numbering of members: the leader first (if it is a
/// member), then child subtrees in increasing node order.
pub fn dfs_numbering(c: &Cluster) -> Vec<(usize, u64)> {
    let mut children: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for &(ch, p) in &c.steiner {
        children.entry(p).or_default().push(ch);
    }
    for l in children.values_mut() {
        l.sort_unstable();
    }
    let mut out = Vec::new();
    let mut stack = vec![c.leader];
    while let Some(v) = stack.pop() {
        if c.members.binary_search(&v).is_ok() {
            out.push((v, out.len() as u64));
        }
        if let Some(kids) = children.get(&v) {
            stack.extend(kids.iter().rev());
        }
    }
    out
}

fn check_sizes(cc: &ClusterCollection, max_size: usize) -> Result<(), ClusterError> {
    for (i, c) in cc.clusters.iter().enumerate() {
        if c.len() > max_size {
            return Err(ClusterError::ClusterTooLarge { cluster: i, size: c.len(), limit: max_size });
        }
    }
    Ok(())
}

/// Gathered transcripts: per cluster, `(index, info)` sorted by index.
pub type Transcript = Vec<(u64, BitString)>;

/// Every leader learns the `x`-bit info of each member of its cluster,
/// tagged with the member's pre-order index. Clusters have at most
/// `max_size` members.
pub fn token_learning_gather(
    g: &Graph,
    cc: &ClusterCollection,
    cfg: &SimConfig,
    info: &[BitString],
    x: u32,
    max_size: usize,
) -> Result<(Vec<Transcript>, RoundMetrics), ClusterError> {
    assert_eq!(info.len(), g.n());
    check_sizes(cc, max_size)?;
    let mut padded = Vec::with_capacity(g.n());
    for (v, b) in info.iter().enumerate() {
        if b.len() > x as u64 {
            return Err(ClusterError::InfoTooWide { node: v, bits: b.len(), limit: x as u64 });
        }
        let mut bits = to_bits(b);
        bits.resize(x as usize, false);
        padded.push(bits);
    }
    let op = Op::Gather {
        x,
        idx_bits: bits_for(max_size),
        count_bits: bits_for(max_size + 1),
        info: padded,
    };
    let (outs, m) = execute(g, cc, op, cfg)?;
    let mut res = vec![Vec::new(); cc.len()];
    for slots in &outs {
        for (ci, s) in slots {
            if s.leader {
                let mut t: Transcript = s.collected.iter().map(|(i, b)| (*i, from_bits(b))).collect();
                t.sort_by_key(|e| e.0);
                res[*ci] = t;
            }
        }
    }
    Ok((res, m))
}

/// Each leader sends `payloads[c][i]` (at most `x` bits, padded) to the
/// member with pre-order index `i`.
pub fn token_learning_disseminate(
    g: &Graph,
    cc: &ClusterCollection,
    cfg: &SimConfig,
    payloads: &[Vec<BitString>],
    x: u32,
    max_size: usize,
) -> Result<(Vec<Option<BitString>>, RoundMetrics), ClusterError> {
    assert_eq!(payloads.len(), cc.len());
    check_sizes(cc, max_size)?;
    let mut padded = Vec::with_capacity(cc.len());
    for (ci, list) in payloads.iter().enumerate() {
        if list.len() != cc.clusters[ci].len() {
            return Err(ClusterError::Format(format!(
                "cluster {ci}: {} payloads for {} members",
                list.len(),
                cc.clusters[ci].len()
            )));
        }
        let mut l = Vec::new();
        for b in list {
            if b.len() > x as u64 {
                return Err(ClusterError::InfoTooWide {
                    node: cc.clusters[ci].leader,
                    bits: b.len(),
                    limit: x as u64,
                });
            }
            let mut bits = to_bits(b);
            bits.resize(x as usize, false);
            l.push(bits);
        }
        padded.push(l);
    }
    let op = Op::Disseminate {
        x,
        idx_bits: bits_for(max_size),
        count_bits: bits_for(max_size + 1),
        payloads: padded,
    };
    let (outs, m) = execute(g, cc, op, cfg)?;
    let mut got = vec![None; g.n()];
    for (v, slots) in outs.iter().enumerate() {
        for (_, s) in slots {
            if s.member {
                got[v] = s.payload.as_ref().map(|b| from_bits(b));
            }
        }
    }
    Ok((got, m))
}

/// `c * max(1, kappa/b) * (beta + kappa)`, rounded up.
pub fn broadcast_round_bound(beta: usize, kappa: usize, b: u64) -> u64 {
    let (beta, kappa) = (beta as u64, kappa as u64);
    let factor = kappa.div_ceil(b.max(1)).max(1);
    ROUND_CONSTANT * factor * (beta + kappa)
}

/// `c * kappa * (beta + N x / b)`, rounded up, with `kappa` at least 1.
pub fn token_learning_round_bound(beta: usize, kappa: usize, n_max: usize, x: u32, b: u64) -> u64 {
    let per = (n_max as u64 * x as u64).div_ceil(b.max(1));
    ROUND_CONSTANT * (kappa.max(1) as u64) * (beta as u64 + per)
}
