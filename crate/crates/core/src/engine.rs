//! Synchronous round-based message passing with per-edge bit budgets.
//!
//! A run proceeds as follows. Every node first executes `init`, whose outbox is
//! delivered in round 1. In round `r` every non-halted node sees the messages
//! sent to it in round `r` and may send messages that arrive in round `r + 1`.
//! Traffic is accounted to the round in which it travels. The run ends after
//! the first round at whose end every program is finished (or halted) and no
//! message is in flight; a run where this already holds after `init` takes
//! zero rounds.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{Graph, NodeId};
use crate::math::log2_ceil;

pub trait Payload: Clone {
    fn bits(&self) -> u64;
}

/// Explicit bit string, least significant bit first within each word.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct BitString {
    words: Vec<u64>,
    len: u64,
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_value(value: u64, width: u32) -> Self {
        let mut b = Self::new();
        b.push_value(value, width);
        b
    }

    pub fn push_bit(&mut self, bit: bool) {
        let i = self.len as usize;
        if i % 64 == 0 {
            self.words.push(0);
        }
        if bit {
            self.words[i / 64] |= 1 << (i % 64);
        }
        self.len += 1;
    }

    pub fn push_value(&mut self, value: u64, width: u32) {
        for i in 0..width {
            self.push_bit(i < 64 && (value >> i) & 1 == 1);
        }
    }

    pub fn get(&self, i: u64) -> bool {
        assert!(i < self.len);
        (self.words[(i / 64) as usize] >> (i % 64)) & 1 == 1
    }

    pub fn read_value(&self, at: u64, width: u32) -> u64 {
        (0..width as u64).fold(0, |acc, j| acc | ((self.get(at + j) as u64) << j))
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl Payload for BitString {
    fn bits(&self) -> u64 {
        self.len
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Bandwidth {
    Local,
    Bits(u64),
}

impl Bandwidth {
    pub fn allows(&self, bits: u64) -> bool {
        match self {
            Bandwidth::Local => true,
            Bandwidth::Bits(b) => bits <= *b,
        }
    }

    pub fn limit(&self) -> Option<u64> {
        match self {
            Bandwidth::Local => None,
            Bandwidth::Bits(b) => Some(*b),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub bandwidth: Bandwidth,
    pub max_rounds: u64,
    pub seed: u64,
    /// Cap `h` on draws per node; `None` means unbounded.
    pub tape_cap: Option<u64>,
    pub trace: bool,
}

impl SimConfig {
    pub const DEFAULT_MAX_ROUNDS: u64 = 1_000_000;

    pub fn congest(bits: u64) -> Self {
        assert!(bits >= 1, "bandwidth must be positive");
        SimConfig {
            bandwidth: Bandwidth::Bits(bits),
            max_rounds: Self::DEFAULT_MAX_ROUNDS,
            seed: 0,
            tape_cap: None,
            trace: false,
        }
    }

    pub fn local() -> Self {
        SimConfig {
            bandwidth: Bandwidth::Local,
            ..Self::congest(1)
        }
    }

    /// `max(4 log n, id_bits + 16)` bits, enough for an identifier plus a
    /// small header.
    pub fn for_graph(g: &Graph) -> Self {
        Self::congest(default_bandwidth(g))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_bandwidth(mut self, bandwidth: Bandwidth) -> Self {
        self.bandwidth = bandwidth;
        self
    }
}

pub fn default_bandwidth(g: &Graph) -> u64 {
    (4 * log2_ceil(g.n()) as u64).max(g.id_bits() as u64 + 16)
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("bandwidth exceeded on edge {edge:?} in round {round}: {bits} bits > {budget}")]
    BandwidthExceeded {
        /// Directed `(sender, receiver)` node indices.
        edge: (usize, usize),
        round: u64,
        bits: u64,
        budget: u64,
    },
    #[error("random tape exhausted at node {node}")]
    TapeExhausted { node: usize },
    #[error("tape value {value} at node {node} outside range {range}")]
    TapeValueOutOfRange { node: usize, value: u64, range: u64 },
    #[error("round limit {limit} reached before termination")]
    RoundLimit { limit: u64 },
}

/// The value of draw `index` at `node` under `seed`, uniform in `[0, range)`.
pub fn counter_draw(seed: u64, node: usize, index: u64, range: u64) -> u64 {
    assert!(range >= 1);
    let mut rng = node_rng(seed, node);
    rng.set_word_pos(index as u128 * 16);
    if range == 1 {
        0
    } else {
        rng.gen_range(0..range)
    }
}

fn node_rng(seed: u64, node: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(node as u64);
    rng
}

enum Tape {
    Seeded { rng: ChaCha8Rng, cap: Option<u64> },
    Fixed(Vec<u64>),
}

/// Per-node view handed to program callbacks.
pub struct NodeCtx<'a> {
    pub node: usize,
    pub id: NodeId,
    /// Number of nodes in the graph, assumed globally known.
    pub n: usize,
    /// Identifiers of the neighbors, by port.
    pub neighbor_ids: &'a [NodeId],
    /// Neighbor node indices by port; only for bookkeeping, never for logic
    /// that a real node could not perform.
    pub neighbors: &'a [usize],
    pub round: u64,
    tape: &'a mut Tape,
    draws: &'a mut u64,
    error: &'a mut Option<EngineError>,
}

impl NodeCtx<'_> {
    pub fn degree(&self) -> usize {
        self.neighbors.len()
    }

    /// Next value of this node's random tape, uniform in `[0, range)`.
    /// Errors are recorded and abort the run after the current callback.
    pub fn draw(&mut self, range: u64) -> u64 {
        assert!(range >= 1, "range must be positive");
        let idx = *self.draws;
        let value = match self.tape {
            Tape::Seeded { rng, cap } => {
                if cap.is_some_and(|c| idx >= c) {
                    None
                } else {
                    rng.set_word_pos(idx as u128 * 16);
                    Some(if range == 1 { 0 } else { rng.gen_range(0..range) })
                }
            }
            Tape::Fixed(values) => match values.get(idx as usize) {
                Some(&v) if v < range => Some(v),
                Some(&v) => {
                    self.error.get_or_insert(EngineError::TapeValueOutOfRange {
                        node: self.node,
                        value: v,
                        range,
                    });
                    return 0;
                }
                None => None,
            },
        };
        match value {
            Some(v) => {
                *self.draws += 1;
                v
            }
            None => {
                self.error
                    .get_or_insert(EngineError::TapeExhausted { node: self.node });
                0
            }
        }
    }

    pub fn draws_used(&self) -> u64 {
        *self.draws
    }
}

pub trait NodeProgram {
    type Msg: Payload;
    type Output;

    /// Called once before round 1; messages placed in `out` arrive in round 1.
    fn init(&mut self, _ctx: &mut NodeCtx, _out: &mut [Option<Self::Msg>]) {}

    /// `inbox[p]` holds the message received from the neighbor at port `p`.
    fn on_round(
        &mut self,
        ctx: &mut NodeCtx,
        inbox: &[Option<Self::Msg>],
        out: &mut [Option<Self::Msg>],
    );

    /// Output is ready; the node may still relay messages.
    fn finished(&self) -> bool;

    /// The node no longer takes part; messages sent to it are discarded.
    fn halted(&self) -> bool {
        false
    }

    fn output(&self) -> Self::Output;
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RoundMetrics {
    pub rounds: u64,
    /// Cumulative bits per undirected edge; index 0 is the direction from the
    /// smaller endpoint to the larger one.
    pub edge_bits: Vec<[u64; 2]>,
    pub max_round_bits: u64,
    pub messages_per_round: Vec<u64>,
    pub total_bits: u64,
    pub total_messages: u64,
    /// Draws consumed per node.
    pub draws: Vec<u64>,
}

impl RoundMetrics {
    /// Adds another run's counters as if it were executed after this one.
    pub fn absorb(&mut self, other: &RoundMetrics) {
        self.rounds += other.rounds;
        if self.edge_bits.len() < other.edge_bits.len() {
            self.edge_bits.resize(other.edge_bits.len(), [0, 0]);
        }
        for (a, b) in self.edge_bits.iter_mut().zip(&other.edge_bits) {
            a[0] += b[0];
            a[1] += b[1];
        }
        self.max_round_bits = self.max_round_bits.max(other.max_round_bits);
        self.messages_per_round
            .extend_from_slice(&other.messages_per_round);
        self.total_bits += other.total_bits;
        self.total_messages += other.total_messages;
        if self.draws.len() < other.draws.len() {
            self.draws.resize(other.draws.len(), 0);
        }
        for (a, b) in self.draws.iter_mut().zip(&other.draws) {
            *a += b;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub round: u64,
    pub from: usize,
    pub to: usize,
    pub bits: u64,
}

pub fn write_trace<W: Write>(trace: &[TraceRecord], mut w: W) -> std::io::Result<()> {
    for r in trace {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub struct SimResult<P: NodeProgram> {
    pub outputs: Vec<P::Output>,
    pub metrics: RoundMetrics,
    pub programs: Vec<P>,
    pub trace: Vec<TraceRecord>,
}

pub fn run<P, F>(g: &Graph, factory: F, cfg: &SimConfig) -> Result<SimResult<P>, EngineError>
where
    P: NodeProgram,
    F: FnMut(usize) -> P,
{
    let tapes = (0..g.n())
        .map(|v| Tape::Seeded {
            rng: node_rng(cfg.seed, v),
            cap: cfg.tape_cap,
        })
        .collect();
    execute(g, factory, cfg, tapes)
}

/// Like [`run`] but every draw is read from the supplied per-node tapes.
pub fn run_with_tape<P, F>(
    g: &Graph,
    factory: F,
    cfg: &SimConfig,
    tapes: &[Vec<u64>],
) -> Result<SimResult<P>, EngineError>
where
    P: NodeProgram,
    F: FnMut(usize) -> P,
{
    assert_eq!(tapes.len(), g.n(), "one tape per node");
    let tapes = tapes.iter().map(|t| Tape::Fixed(t.clone())).collect();
    execute(g, factory, cfg, tapes)
}

fn execute<P, F>(
    g: &Graph,
    mut factory: F,
    cfg: &SimConfig,
    mut tapes: Vec<Tape>,
) -> Result<SimResult<P>, EngineError>
where
    P: NodeProgram,
    F: FnMut(usize) -> P,
{
    let n = g.n();
    let slots = g.num_slots();
    let mut programs: Vec<P> = (0..n).map(&mut factory).collect();
    let neighbor_ids: Vec<NodeId> = (0..n)
        .flat_map(|v| g.neighbors(v).iter().map(|&u| g.id(u)))
        .collect();
    let mut draws = vec![0u64; n];
    let mut error: Option<EngineError> = None;
    let mut inbox: Vec<Option<P::Msg>> = vec![None; slots];
    let mut outbox: Vec<Option<P::Msg>> = vec![None; slots];
    let mut metrics = RoundMetrics {
        edge_bits: vec![[0, 0]; g.m()],
        ..Default::default()
    };
    let mut trace = Vec::new();

    let range = |v: usize| g.slot_offset(v)..g.slot_offset(v) + g.degree(v);

    for v in 0..n {
        let r = range(v);
        let mut ctx = NodeCtx {
            node: v,
            id: g.id(v),
            n,
            neighbor_ids: &neighbor_ids[r.clone()],
            neighbors: g.neighbors(v),
            round: 0,
            tape: &mut tapes[v],
            draws: &mut draws[v],
            error: &mut error,
        };
        programs[v].init(&mut ctx, &mut outbox[r]);
        if let Some(e) = error.take() {
            return Err(e);
        }
    }

    let mut round = 0u64;
    let mut in_flight = deliver(g, cfg, 1, &programs, &mut outbox, &mut inbox, &mut metrics, &mut trace)?;
    loop {
        let done = programs.iter().all(|p| p.finished() || p.halted());
        if done && in_flight == 0 {
            break;
        }
        if round >= cfg.max_rounds {
            return Err(EngineError::RoundLimit {
                limit: cfg.max_rounds,
            });
        }
        round += 1;
        for v in 0..n {
            if programs[v].halted() {
                continue;
            }
            let r = range(v);
            let mut ctx = NodeCtx {
                node: v,
                id: g.id(v),
                n,
                neighbor_ids: &neighbor_ids[r.clone()],
                neighbors: g.neighbors(v),
                round,
                tape: &mut tapes[v],
                draws: &mut draws[v],
                error: &mut error,
            };
            programs[v].on_round(&mut ctx, &inbox[r.clone()], &mut outbox[r]);
            if let Some(e) = error.take() {
                return Err(e);
            }
        }
        inbox.iter_mut().for_each(|m| *m = None);
        in_flight = deliver(
            g,
            cfg,
            round + 1,
            &programs,
            &mut outbox,
            &mut inbox,
            &mut metrics,
            &mut trace,
        )?;
    }
    metrics.rounds = round;
    // the trailing counter belongs to a round that never ran
    metrics.messages_per_round.truncate(round as usize);
    metrics.draws = draws;
    let outputs = programs.iter().map(P::output).collect();
    Ok(SimResult {
        outputs,
        metrics,
        programs,
        trace,
    })
}

#[allow(clippy::too_many_arguments)]
fn deliver<P: NodeProgram>(
    g: &Graph,
    cfg: &SimConfig,
    round: u64,
    programs: &[P],
    outbox: &mut [Option<P::Msg>],
    inbox: &mut [Option<P::Msg>],
    metrics: &mut RoundMetrics,
    trace: &mut Vec<TraceRecord>,
) -> Result<usize, EngineError> {
    let mut count = 0usize;
    for v in 0..g.n() {
        let base = g.slot_offset(v);
        for (p, &u) in g.neighbors(v).iter().enumerate() {
            let s = base + p;
            let Some(msg) = outbox[s].take() else { continue };
            let bits = msg.bits();
            if !cfg.bandwidth.allows(bits) {
                return Err(EngineError::BandwidthExceeded {
                    edge: (v, u),
                    round,
                    bits,
                    budget: cfg.bandwidth.limit().unwrap_or(u64::MAX),
                });
            }
            let e = g.edge_of_slot(s);
            metrics.edge_bits[e][(v > u) as usize] += bits;
            metrics.max_round_bits = metrics.max_round_bits.max(bits);
            metrics.total_bits += bits;
            metrics.total_messages += 1;
            if cfg.trace {
                trace.push(TraceRecord {
                    round,
                    from: v,
                    to: u,
                    bits,
                });
            }
            count += 1;
            if !programs[u].halted() {
                inbox[g.reverse_slot(s)] = Some(msg);
            }
        }
    }
    if metrics.messages_per_round.len() < round as usize {
        metrics.messages_per_round.resize(round as usize, 0);
    }
    metrics.messages_per_round[round as usize - 1] += count as u64;
    Ok(count)
}
