//! Deterministic LLL solvers. Residual components are derandomized by fixing
//! the random tapes of the resampling program with the method of conditional
//! expectations, one cluster of a distance-`4(T+r)+1` decomposition at a
//! time; a separate LOCAL solver fixes variables directly over a `λ`-color
//! decomposition of `H^2`.
//!
//! Failure expectations are exact. `X_v` is evaluated on demand: a variable's
//! value after iteration `j` is read from the tape only if some event holding
//! it was a local minimum, events short-circuit on the first known mismatch,
//! and an unfixed tape position is branched on only when the evaluation
//! actually needs it. Expectations are summed per node by linearity.

use std::collections::{BTreeSet, HashMap, VecDeque};

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::cluster::agg::{bits_for, dfs_numbering, token_learning_disseminate, token_learning_gather};
use crate::cluster::{Cluster, ClusterCollection, ClusterError};
use crate::decomposition::{decompose_few_colors, decompose_logn_bounded, DecompositionError};
use crate::engine::{BitString, SimConfig};
use crate::graph::Graph;
use crate::lll::cps::{cps_with_tapes, simulate};
use crate::lll::preshatter::{check_preshatter, preshatter, residual_instance, PreshatterCheck};
use crate::lll::{check_criteria, ped_lambda_holds, serialize_ratio, validate_assignment, CriterionReport, LllError, LllInstance, Predicate};
use crate::math::log2_ceil;

pub const DEFAULT_BUDGET: u64 = 1 << 22;

#[derive(Debug, Error)]
pub enum DerandError {
    #[error(transparent)]
    Lll(#[from] LllError),
    #[error("decomposition: {0}")]
    Decomposition(#[from] DecompositionError),
    #[error("cluster communication: {0}")]
    Cluster(#[from] ClusterError),
    #[error("enumeration needs more than {budget} branches (reached {required})")]
    BudgetExceeded { required: u64, budget: u64 },
    #[error("component of {size} events exceeds the cap of {cap}")]
    TooLarge { size: usize, cap: usize },
    #[error("invariant violated: {message}")]
    Invariant { message: String, audit: Vec<AuditEntry> },
    #[error("final run left events {violated:?} violated")]
    FinalRun { violated: Vec<usize> },
    #[error("transcript mismatch in class {class}: {message}")]
    Transcript { class: usize, message: String },
    #[error("criterion not met")]
    Criterion(Box<CriterionReport>),
    #[error("pre-shattering guarantees failed: {0:?}")]
    Preshatter(Box<PreshatterCheck>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DerandParams {
    /// Round budget of the randomized program.
    pub t: u64,
    /// Verification radius.
    pub r: u64,
    pub budget: u64,
    /// Largest component accepted.
    pub max_component: usize,
    /// `T = ceil(c_t log2 N)`.
    pub c_t: u32,
    /// Engine seed of the simulations; the output does not depend on it.
    pub seed: u64,
}

impl DerandParams {
    /// `T = ceil(c_t log2 N)`, exactly.
    pub fn for_size(n: usize, c_t: u32) -> Self {
        let pow = BigUint::from(n.max(1)).pow(c_t);
        let t = if pow <= BigUint::one() {
            0
        } else {
            (pow - BigUint::one()).bits()
        };
        DerandParams {
            t,
            r: 1,
            budget: DEFAULT_BUDGET,
            max_component: 4096,
            c_t,
            seed: 0,
        }
    }

    /// Same settings with `T` recomputed for a component of `n` events.
    pub fn resized(&self, n: usize) -> Self {
        DerandParams {
            t: Self::for_size(n, self.c_t).t,
            ..self.clone()
        }
    }

    /// Resample iterations that fit in `T` rounds.
    pub fn iterations(&self) -> u64 {
        self.t / 3
    }

    pub fn cluster_distance(&self) -> usize {
        (4 * (self.t + self.r) + 1) as usize
    }
}

/// Per node, the fixed prefix or entries of its tape.
pub type PartialFixing = Vec<Vec<Option<u32>>>;

type Pos = (usize, usize);
type R<T> = Result<T, Pos>;

/// The resampling program's failure indicators `X_v` as functions of the
/// tapes.
pub struct FailureModel<'a> {
    pub inst: &'a LllInstance,
    pub iterations: u64,
    owned: Vec<Vec<usize>>,
    /// Variable to `(owner, index among owned)`.
    slot: Vec<Pos>,
    /// Neighbors with a smaller identifier.
    smaller: Vec<Vec<usize>>,
}

#[derive(Clone, Debug)]
pub struct NodeExpectation {
    pub value: BigRational,
    /// Unfixed tape positions the value depends on.
    pub reads: BTreeSet<Pos>,
    pub leaves: u64,
}

impl<'a> FailureModel<'a> {
    pub fn new(inst: &'a LllInstance, iterations: u64) -> Self {
        let owned = inst.owned();
        let mut slot = vec![(0, 0); inst.num_vars()];
        for (v, o) in owned.iter().enumerate() {
            for (i, &x) in o.iter().enumerate() {
                slot[x] = (v, i);
            }
        }
        let h = &inst.h;
        let smaller = (0..inst.num_events())
            .map(|c| h.neighbors(c).iter().copied().filter(|&d| h.id(d) < h.id(c)).collect())
            .collect();
        FailureModel {
            inst,
            iterations,
            owned,
            slot,
            smaller,
        }
    }

    pub fn tape_len(&self, v: usize) -> usize {
        self.owned[v].len() * (1 + self.iterations as usize)
    }

    pub fn range_at(&self, v: usize, pos: usize) -> u32 {
        let k = self.owned[v].len();
        self.inst.variables[self.owned[v][pos % k]].range
    }

    pub fn empty_fixing(&self) -> PartialFixing {
        (0..self.inst.num_events()).map(|v| vec![None; self.tape_len(v)]).collect()
    }

    /// `X_v` under a complete set of tapes, or the first unfixed position
    /// the evaluation needs.
    pub fn eval(&self, v: usize, fixed: &PartialFixing) -> R<bool> {
        Eval::new(self, fixed.clone()).run(v)
    }

    /// Exact `E[X_v | fixed]`.
    pub fn node_expectation(&self, v: usize, fixed: &PartialFixing, budget: u64) -> Result<NodeExpectation, DerandError> {
        let mut e = Eval::new(self, fixed.clone());
        let mut reads = BTreeSet::new();
        let mut leaves = 0;
        let value = self.rec(v, &mut e, &mut reads, &mut leaves, budget)?;
        Ok(NodeExpectation { value, reads, leaves })
    }

    fn rec(
        &self,
        v: usize,
        e: &mut Eval<'_, 'a>,
        reads: &mut BTreeSet<Pos>,
        leaves: &mut u64,
        budget: u64,
    ) -> Result<BigRational, DerandError> {
        match e.run(v) {
            Ok(b) => {
                *leaves += 1;
                if *leaves > budget {
                    return Err(DerandError::BudgetExceeded { required: *leaves, budget });
                }
                Ok(if b { BigRational::one() } else { BigRational::zero() })
            }
            Err(p) => {
                reads.insert(p);
                let r = self.range_at(p.0, p.1);
                let mut s = BigRational::zero();
                for val in 0..r {
                    e.fixed[p.0][p.1] = Some(val);
                    let mark = e.log.len();
                    let sub = self.rec(v, e, reads, leaves, budget)?;
                    e.undo(mark);
                    if !sub.is_zero() {
                        s += sub;
                    }
                }
                e.fixed[p.0][p.1] = None;
                if !s.is_zero() {
                    s /= BigRational::from_integer(r.into());
                }
                Ok(s)
            }
        }
    }

    /// Exact `E[sum_{v in scope} X_v | fixed]`.
    pub fn failure_expectation(&self, fixed: &PartialFixing, scope: &[usize], budget: u64) -> Result<BigRational, DerandError> {
        let mut s = BigRational::zero();
        for &v in scope {
            s += self.node_expectation(v, fixed, budget)?.value;
        }
        Ok(s)
    }
}

type Key = (usize, u64);

#[derive(Clone, Copy)]
enum Memo {
    Val,
    Viol,
    InI,
}

/// Memoized evaluation over a growing fixing. `Ok` entries stay valid while
/// positions are only added; `Err` entries are tagged with the epoch of the
/// evaluation that produced them and ignored afterwards.
struct Eval<'m, 'a> {
    m: &'m FailureModel<'a>,
    fixed: PartialFixing,
    epoch: u64,
    val: HashMap<Key, (R<u32>, u64)>,
    viol: HashMap<Key, (R<bool>, u64)>,
    in_i: HashMap<Key, (R<bool>, u64)>,
    /// `Ok` entries in insertion order, for backtracking.
    log: Vec<(Memo, Key)>,
}

impl<'m, 'a> Eval<'m, 'a> {
    fn new(m: &'m FailureModel<'a>, fixed: PartialFixing) -> Self {
        Eval {
            m,
            fixed,
            epoch: 0,
            val: HashMap::new(),
            viol: HashMap::new(),
            in_i: HashMap::new(),
            log: Vec::new(),
        }
    }

    fn run(&mut self, v: usize) -> R<bool> {
        self.epoch += 1;
        self.viol(v, self.m.iterations)
    }

    fn undo(&mut self, mark: usize) {
        for (memo, k) in self.log.drain(mark..) {
            match memo {
                Memo::Val => self.val.remove(&k).map(|_| ()),
                Memo::Viol => self.viol.remove(&k).map(|_| ()),
                Memo::InI => self.in_i.remove(&k).map(|_| ()),
            };
        }
    }

    fn cached<T: Copy>(map: &HashMap<Key, (R<T>, u64)>, k: Key, epoch: u64) -> Option<R<T>> {
        match map.get(&k) {
            Some(&(Ok(t), _)) => Some(Ok(t)),
            Some(&(Err(p), e)) if e == epoch => Some(Err(p)),
            _ => None,
        }
    }

    fn store<T: Copy>(&mut self, memo: Memo, k: Key, r: R<T>)
    where
        Self: MemoMap<T>,
    {
        let epoch = self.epoch;
        if r.is_ok() {
            self.log.push((memo, k));
        }
        self.map(memo).insert(k, (r, epoch));
    }

    fn read(&self, p: Pos) -> R<u32> {
        self.fixed[p.0][p.1].ok_or(p)
    }

    /// Value of `x` after `j` iterations.
    fn val(&mut self, x: usize, j: u64) -> R<u32> {
        if let Some(r) = Self::cached(&self.val, (x, j), self.epoch) {
            return r;
        }
        let (o, i) = self.m.slot[x];
        let r = if j == 0 {
            self.read((o, i))
        } else {
            match self.resampled(x, j) {
                Ok(true) => self.read((o, j as usize * self.m.owned[o].len() + i)),
                Ok(false) => self.val(x, j - 1),
                Err(p) => Err(p),
            }
        };
        self.store(Memo::Val, (x, j), r);
        r
    }

    fn resampled(&mut self, x: usize, j: u64) -> R<bool> {
        let mut need = None;
        for &c in &self.m.inst.var_events[x] {
            match self.in_i(c, j) {
                Ok(true) => return Ok(true),
                Ok(false) => {}
                Err(p) => {
                    need.get_or_insert(p);
                }
            }
        }
        need.map_or(Ok(false), Err)
    }

    /// Whether `c` is a local minimum of the violated set in iteration `j`.
    fn in_i(&mut self, c: usize, j: u64) -> R<bool> {
        if let Some(r) = Self::cached(&self.in_i, (c, j), self.epoch) {
            return r;
        }
        let mut need = None;
        let r = 'done: {
            match self.viol(c, j - 1) {
                Ok(false) => break 'done Ok(false),
                Ok(true) => {}
                Err(p) => need = Some(p),
            }
            for d in self.m.smaller[c].clone() {
                match self.viol(d, j - 1) {
                    Ok(true) => break 'done Ok(false),
                    Ok(false) => {}
                    Err(p) => {
                        need.get_or_insert(p);
                    }
                }
            }
            need.map_or(Ok(true), Err)
        };
        self.store(Memo::InI, (c, j), r);
        r
    }

    /// Whether event `e` holds after `j` iterations.
    fn viol(&mut self, e: usize, j: u64) -> R<bool> {
        if let Some(r) = Self::cached(&self.viol, (e, j), self.epoch) {
            return r;
        }
        let inst = self.m.inst;
        let ev = &inst.events[e];
        let r = match &ev.predicate {
            Predicate::Never => Ok(false),
            Predicate::AllEqual(ts) => 'done: {
                let mut need = None;
                for (&x, &t) in ev.vbl.iter().zip(ts) {
                    match self.val(x, j) {
                        Ok(v) if v != t => break 'done Ok(false),
                        Ok(_) => {}
                        Err(p) => {
                            need.get_or_insert(p);
                        }
                    }
                }
                need.map_or(Ok(true), Err)
            }
            Predicate::Table(_) => {
                let mut vals = Vec::with_capacity(ev.vbl.len());
                let mut need = None;
                for &x in &ev.vbl {
                    match self.val(x, j) {
                        Ok(v) => vals.push(v),
                        Err(p) => {
                            need.get_or_insert(p);
                        }
                    }
                }
                match need {
                    Some(p) => Err(p),
                    None => Ok(inst.holds_local(e, &vals)),
                }
            }
        };
        self.store(Memo::Viol, (e, j), r);
        r
    }
}

trait MemoMap<T> {
    fn map(&mut self, memo: Memo) -> &mut HashMap<Key, (R<T>, u64)>;
}

impl MemoMap<u32> for Eval<'_, '_> {
    fn map(&mut self, _: Memo) -> &mut HashMap<Key, (R<u32>, u64)> {
        &mut self.val
    }
}

impl MemoMap<bool> for Eval<'_, '_> {
    fn map(&mut self, memo: Memo) -> &mut HashMap<Key, (R<bool>, u64)> {
        match memo {
            Memo::InI => &mut self.in_i,
            _ => &mut self.viol,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditEntry {
    pub component: usize,
    pub class: usize,
    pub cluster: usize,
    pub node: usize,
    pub position: usize,
    pub value: u32,
    /// Expectation over the nodes affected by this position.
    #[serde(serialize_with = "serialize_ratio")]
    pub before: BigRational,
    #[serde(serialize_with = "serialize_ratio")]
    pub after: BigRational,
    /// Expectation over the whole component after the step.
    #[serde(serialize_with = "serialize_ratio")]
    pub global: BigRational,
}

/// Audit entries as JSON lines.
pub fn audit_json_lines(audit: &[AuditEntry]) -> String {
    let mut s = String::new();
    for a in audit {
        s.push_str(&serde_json::to_string(a).expect("audit entry serializes"));
        s.push('\n');
    }
    s
}

/// Running state of conditional-expectation fixing over one component.
pub struct Fixer<'m, 'a> {
    pub model: &'m FailureModel<'a>,
    pub fixed: PartialFixing,
    pub node_exp: Vec<NodeExpectation>,
    pub global: BigRational,
    pub audit: Vec<AuditEntry>,
    pub component: usize,
    pub leaves: u64,
    budget: u64,
}

impl<'m, 'a> Fixer<'m, 'a> {
    pub fn new(model: &'m FailureModel<'a>, component: usize, budget: u64) -> Result<Self, DerandError> {
        let fixed = model.empty_fixing();
        let mut node_exp = Vec::new();
        let mut global = BigRational::zero();
        let mut leaves = 0;
        for v in 0..model.inst.num_events() {
            let e = model.node_expectation(v, &fixed, budget)?;
            global += &e.value;
            leaves += e.leaves;
            node_exp.push(e);
        }
        let f = Fixer {
            model,
            fixed,
            node_exp,
            global,
            audit: vec![],
            component,
            leaves,
            budget,
        };
        if f.global >= BigRational::one() {
            return Err(DerandError::Invariant {
                message: format!("initial expectation {} is not below 1", f.global),
                audit: vec![],
            });
        }
        Ok(f)
    }

    /// Fixes every tape position of `nodes`, in order.
    pub fn fix_nodes(&mut self, nodes: &[usize], class: usize, cluster: usize) -> Result<(), DerandError> {
        for &v in nodes {
            for pos in 0..self.model.tape_len(v) {
                self.fix_position(v, pos, class, cluster)?;
            }
        }
        Ok(())
    }

    fn fix_position(&mut self, v: usize, pos: usize, class: usize, cluster: usize) -> Result<(), DerandError> {
        let p = (v, pos);
        let affected: Vec<usize> = (0..self.node_exp.len()).filter(|&u| self.node_exp[u].reads.contains(&p)).collect();
        let before: BigRational = affected.iter().map(|&u| self.node_exp[u].value.clone()).sum();
        let mut chosen = None;
        for val in 0..self.model.range_at(v, pos) {
            self.fixed[v][pos] = Some(val);
            let mut fresh = Vec::with_capacity(affected.len());
            let mut after = BigRational::zero();
            for &u in &affected {
                let e = self.model.node_expectation(u, &self.fixed, self.budget)?;
                self.leaves += e.leaves;
                after += &e.value;
                fresh.push(e);
            }
            if after <= before {
                chosen = Some((val, after, fresh));
                break;
            }
        }
        let Some((value, after, fresh)) = chosen else {
            return Err(DerandError::Invariant {
                message: format!("no value of node {v} position {pos} keeps the expectation at {before}"),
                audit: std::mem::take(&mut self.audit),
            });
        };
        self.fixed[v][pos] = Some(value);
        for (&u, e) in affected.iter().zip(fresh) {
            self.node_exp[u] = e;
        }
        self.global = &self.global - &before + &after;
        self.audit.push(AuditEntry {
            component: self.component,
            class,
            cluster,
            node: v,
            position: pos,
            value,
            before,
            after,
            global: self.global.clone(),
        });
        if self.global >= BigRational::one() {
            return Err(DerandError::Invariant {
                message: format!("expectation {} reached 1", self.global),
                audit: std::mem::take(&mut self.audit),
            });
        }
        Ok(())
    }

    pub fn tapes(&self) -> Vec<Vec<u64>> {
        self.fixed
            .iter()
            .map(|t| t.iter().map(|v| v.expect("tape fully fixed") as u64).collect())
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ComponentOutcome {
    pub size: usize,
    /// Values of the component's variables.
    pub values: Vec<u32>,
    pub tapes: Vec<Vec<u64>>,
    pub audit: Vec<AuditEntry>,
    #[serde(serialize_with = "serialize_ratio")]
    pub initial_expectation: BigRational,
    pub params: DerandParams,
    pub colors: usize,
    pub rounds: u64,
    pub leaves: u64,
}

/// Nodes within `radius` of `c`'s members, with a Steiner tree extending
/// `c`'s tree along BFS parents.
fn layer_cluster(h: &Graph, c: &Cluster, radius: u64) -> Cluster {
    let n = h.n();
    let mut dist = vec![u64::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut q = VecDeque::new();
    for &v in &c.members {
        dist[v] = 0;
        q.push_back(v);
    }
    while let Some(u) = q.pop_front() {
        if dist[u] == radius {
            continue;
        }
        for &w in h.neighbors(u) {
            if dist[w] == u64::MAX {
                dist[w] = dist[u] + 1;
                parent[w] = u;
                q.push_back(w);
            }
        }
    }
    let members: Vec<usize> = (0..n).filter(|&v| dist[v] <= radius).collect();
    let mut in_tree = vec![false; n];
    for v in c.tree_nodes() {
        in_tree[v] = true;
    }
    let mut steiner = c.steiner.clone();
    for &w in &members {
        let mut x = w;
        while !in_tree[x] {
            in_tree[x] = true;
            steiner.push((x, parent[x]));
            x = parent[x];
        }
    }
    steiner.sort_unstable();
    Cluster {
        id: c.id,
        leader: c.leader,
        members,
        steiner,
    }
}

fn value_width(range: u32) -> u32 {
    bits_for(range as usize).max(1)
}

fn padded(b: &BitString, x: u32) -> BitString {
    let mut b = b.clone();
    while b.len() < x as u64 {
        b.push_bit(false);
    }
    b
}

/// Derandomizes the resampling program on one connected residual component.
pub fn derandomize_component(
    inst: &LllInstance,
    params: &DerandParams,
    n_global: usize,
    component: usize,
) -> Result<ComponentOutcome, DerandError> {
    let n = inst.num_events();
    if n > params.max_component {
        return Err(DerandError::TooLarge {
            size: n,
            cap: params.max_component,
        });
    }
    let iterations = params.iterations();
    let model = FailureModel::new(inst, iterations);
    let mut fixer = Fixer::new(&model, component, params.budget)?;
    let initial_expectation = fixer.global.clone();
    let h = &inst.h;
    let b = 4 * (log2_ceil(n_global) as u64).max(n as u64);
    let sim = SimConfig::congest(b.max(crate::engine::default_bandwidth(h))).with_seed(params.seed);
    let nd = decompose_logn_bounded(h, params.cluster_distance(), None, &sim)?;
    let mut rounds = nd.rounds();
    // new identifiers in [N]: rank of the original identifier
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| h.id(v));
    let mut new_id = vec![0usize; n];
    for (i, &v) in order.iter().enumerate() {
        new_id[v] = i;
    }
    let w_id = bits_for(n).max(1);
    let radius = 2 * (params.t + params.r);
    for (ci, class) in nd.classes.iter().enumerate() {
        let layers: Vec<Cluster> = class.clusters.iter().map(|c| layer_cluster(h, c, radius)).collect();
        let wcc = ClusterCollection::new(layers);
        let max_size = wcc.clusters.iter().map(Cluster::len).max().unwrap_or(1);
        // gather topology and fixed randomness of W at the leaders
        let info: Vec<BitString> = (0..n)
            .map(|v| {
                let mut s = BitString::new();
                s.push_value(new_id[v] as u64, w_id);
                s.push_value(h.degree(v) as u64, w_id);
                for &u in h.neighbors(v) {
                    s.push_value(new_id[u] as u64, w_id);
                }
                for (pos, val) in fixer.fixed[v].iter().enumerate() {
                    s.push_bit(val.is_some());
                    s.push_value(val.unwrap_or(0) as u64, value_width(model.range_at(v, pos)));
                }
                s
            })
            .collect();
        let x = info.iter().map(BitString::len).max().unwrap_or(1).max(1) as u32;
        let (transcripts, gm) = token_learning_gather(h, &wcc, &sim, &info, x, max_size)?;
        rounds += gm.rounds;
        for (i, c) in wcc.clusters.iter().enumerate() {
            let expect: Vec<(u64, BitString)> = dfs_numbering(c).into_iter().map(|(v, idx)| (idx, padded(&info[v], x))).collect();
            if transcripts[i] != expect {
                return Err(DerandError::Transcript {
                    class: ci,
                    message: format!("cluster {i} leader did not learn its layers"),
                });
            }
        }
        for (i, c) in class.clusters.iter().enumerate() {
            let mut members = c.members.clone();
            members.sort_by_key(|&v| new_id[v]);
            fixer.fix_nodes(&members, ci, i)?;
        }
        // send every member of the cluster its fixed tape
        let payloads: Vec<Vec<BitString>> = wcc
            .clusters
            .iter()
            .enumerate()
            .map(|(i, c)| {
                dfs_numbering(c)
                    .into_iter()
                    .map(|(v, _)| {
                        let mut s = BitString::new();
                        if class.clusters[i].members.binary_search(&v).is_ok() {
                            for (pos, val) in fixer.fixed[v].iter().enumerate() {
                                s.push_value(val.unwrap() as u64, value_width(model.range_at(v, pos)));
                            }
                        }
                        s
                    })
                    .collect()
            })
            .collect();
        let x = payloads.iter().flatten().map(BitString::len).max().unwrap_or(1).max(1) as u32;
        let (got, dm) = token_learning_disseminate(h, &wcc, &sim, &payloads, x, max_size)?;
        rounds += dm.rounds;
        for (i, c) in wcc.clusters.iter().enumerate() {
            for ((v, _), want) in dfs_numbering(c).into_iter().zip(&payloads[i]) {
                if got[v] != Some(padded(want, x)) {
                    return Err(DerandError::Transcript {
                        class: ci,
                        message: format!("node {v} did not receive its tape"),
                    });
                }
            }
        }
    }
    let tapes = fixer.tapes();
    let run = cps_with_tapes(inst, &SimConfig::congest(b.max(1)).with_seed(params.seed), iterations, &tapes)?;
    rounds += run.metrics.rounds;
    if !run.violated.is_empty() {
        return Err(DerandError::FinalRun { violated: run.violated });
    }
    debug_assert_eq!(simulate(inst, iterations, &tapes).1, Vec::<usize>::new());
    Ok(ComponentOutcome {
        size: n,
        values: run.values,
        tapes,
        audit: fixer.audit,
        initial_expectation,
        params: params.clone(),
        colors: nd.classes.len(),
        rounds,
        leaves: fixer.leaves,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DeterministicOutcome {
    pub values: Vec<Option<u32>>,
    pub components: Vec<ComponentOutcome>,
    /// Components run in parallel: the slowest one.
    pub rounds: u64,
}

/// Derandomizes every residual component of `inst` under the partial
/// assignment `values` and merges the results.
pub fn deterministic_lll(
    inst: &LllInstance,
    values: &[Option<u32>],
    components: &[Vec<usize>],
    base: &DerandParams,
) -> Result<DeterministicOutcome, DerandError> {
    let mut out = values.to_vec();
    let mut outcomes = Vec::with_capacity(components.len());
    for (i, comp) in components.iter().enumerate() {
        let sub = residual_instance(inst, values, comp)?;
        let params = base.resized(comp.len());
        let oc = derandomize_component(&sub.instance, &params, inst.num_events(), i)?;
        sub.write_back(&oc.values, &mut out);
        outcomes.push(oc);
    }
    Ok(DeterministicOutcome {
        rounds: outcomes.iter().map(|o| o.rounds).max().unwrap_or(0),
        values: out,
        components: outcomes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionGate {
    /// `p (e d)^8 < 1`.
    Strict,
    /// `sqrt(p) (d+1) < 1`, the condition the residual components need.
    Residual,
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub seed: u64,
    pub gate: CriterionGate,
    pub c_t: u32,
    pub budget: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            gate: CriterionGate::Strict,
            c_t: 4,
            budget: DEFAULT_BUDGET,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PipelineOutcome {
    pub values: Vec<u32>,
    pub criteria: CriterionReport,
    pub preshatter: PreshatterCheck,
    pub residual_components: Vec<usize>,
    pub preshatter_rounds: u64,
    pub deterministic: DeterministicOutcome,
    pub violated: Vec<usize>,
}

impl PipelineOutcome {
    pub fn rounds(&self) -> u64 {
        self.preshatter_rounds + self.deterministic.rounds
    }
}

/// Pre-shattering followed by derandomized resampling on every residual
/// component.
pub fn solve_range_bounded_lll(inst: &LllInstance, cfg: &PipelineConfig) -> Result<PipelineOutcome, DerandError> {
    inst.range_bounded().map_err(LllError::NotRangeBounded)?;
    let criteria = check_criteria(inst, None)?;
    let ok = match cfg.gate {
        CriterionGate::Strict => criteria.ped8_ok,
        CriterionGate::Residual => criteria.residual_ok,
    };
    if !ok {
        return Err(DerandError::Criterion(Box::new(criteria)));
    }
    let sim = SimConfig::for_graph(&inst.h).with_seed(cfg.seed);
    let ps = preshatter(inst, &sim)?;
    let check = check_preshatter(inst, &ps)?;
    if !check.passed() {
        return Err(DerandError::Preshatter(Box::new(check)));
    }
    let base = DerandParams {
        budget: cfg.budget,
        seed: cfg.seed,
        ..DerandParams::for_size(1, cfg.c_t)
    };
    let det = deterministic_lll(inst, &ps.values, &ps.components, &base)?;
    let violated = validate_assignment(inst, &det.values)?;
    if !violated.is_empty() {
        return Err(DerandError::FinalRun { violated });
    }
    Ok(PipelineOutcome {
        values: det.values.iter().map(|v| v.expect("every variable set")).collect(),
        criteria,
        preshatter: check,
        residual_components: ps.components.iter().map(Vec::len).collect(),
        preshatter_rounds: ps.rounds,
        deterministic: det,
        violated,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaOutcome {
    pub values: Vec<u32>,
    pub colors: usize,
    pub clusters: usize,
    pub rounds: u64,
    /// `sum_E P(E | φ)` after every cluster, starting with the empty fixing.
    #[serde(serialize_with = "serialize_ratios")]
    pub audit: Vec<BigRational>,
}

fn serialize_ratios<S: serde::Serializer>(v: &[BigRational], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|r| r.to_string()))
}

/// LOCAL solver over a `λ`-color decomposition of `H^2`: clusters fix the
/// variables their events own by conditional expectations on
/// `sum_E P(E | φ)`. With `enforce` the call refuses instances failing
/// `p (e d)^λ < 1`.
pub fn local_lambda_lll(inst: &LllInstance, lambda: usize, enforce: bool, sim: &SimConfig) -> Result<LambdaOutcome, DerandError> {
    let criteria = check_criteria(inst, Some(lambda as u32))?;
    if enforce && !ped_lambda_holds(&criteria.p, criteria.d, lambda as u32) {
        return Err(DerandError::Criterion(Box::new(criteria)));
    }
    let m = inst.num_events();
    let mut values: Vec<Option<u32>> = vec![None; inst.num_vars()];
    let mut total = BigRational::zero();
    for e in 0..m {
        total += inst.event_probability(e, &values)?;
    }
    let mut audit = vec![total.clone()];
    if total >= BigRational::one() {
        return Err(DerandError::Invariant {
            message: format!("initial sum of probabilities {total} is not below 1"),
            audit: vec![],
        });
    }
    let h2 = inst.h.power(2);
    let nd = if m == 0 {
        None
    } else {
        Some(decompose_few_colors(&h2, lambda, 1, sim)?)
    };
    let owned = inst.owned();
    let mut rounds = 0;
    let mut clusters = 0;
    if let Some(nd) = &nd {
        rounds = nd.rounds();
        for class in &nd.classes {
            let mut depth = 0;
            for c in &class.clusters {
                clusters += 1;
                depth = depth.max(c.depths().values().copied().max().unwrap_or(0));
                for &v in &c.members {
                    for &x in &owned[v] {
                        let evs = &inst.var_events[x];
                        let mut before = BigRational::zero();
                        for &e in evs {
                            before += inst.event_probability(e, &values)?;
                        }
                        let mut done = false;
                        for val in 0..inst.variables[x].range {
                            values[x] = Some(val);
                            let mut after = BigRational::zero();
                            for &e in evs {
                                after += inst.event_probability(e, &values)?;
                            }
                            if after <= before {
                                total = &total - &before + &after;
                                done = true;
                                break;
                            }
                        }
                        if !done {
                            return Err(DerandError::Invariant {
                                message: format!("no value of variable {x} keeps the sum"),
                                audit: vec![],
                            });
                        }
                    }
                }
                if total >= BigRational::one() {
                    return Err(DerandError::Invariant {
                        message: format!("sum reached {total}"),
                        audit: vec![],
                    });
                }
                audit.push(total.clone());
            }
            // gather to the leader and broadcast back, one H^2 hop being two
            // hops of H
            rounds += 4 * (depth as u64 + 1);
        }
    }
    for (x, v) in values.iter_mut().enumerate() {
        if v.is_none() {
            debug_assert!(inst.var_events[x].is_empty());
            *v = Some(0);
        }
    }
    let violated = validate_assignment(inst, &values)?;
    if !violated.is_empty() {
        return Err(DerandError::FinalRun { violated });
    }
    Ok(LambdaOutcome {
        values: values.into_iter().map(Option::unwrap).collect(),
        colors: nd.as_ref().map_or(0, |d| d.colors()),
        clusters,
        rounds,
        audit,
    })
}
