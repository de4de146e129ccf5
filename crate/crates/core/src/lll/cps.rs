//! Parallel resampling on the dependency graph: in every iteration the
//! violated events that are local minima by identifier among their violated
//! neighbors resample all their variables. One iteration takes three rounds
//! (values, violation flags, resample flags).
//!
//! Draws are positional: every node draws one value per owned variable at
//! start-up and again in each resample round, using only those it needs.
//! A node owning `k` variables therefore reads tape position `j * k + i` for
//! variable `i` in iteration `j`, which lets the derandomizer reason about
//! tapes without running the program.

use std::sync::Arc;

use serde::Serialize;

use super::{LllError, LllInstance};
use crate::engine::{run, run_with_tape, NodeCtx, NodeProgram, Payload, RoundMetrics, SimConfig};
use crate::math::log2_ceil;

/// `4 ceil(log2 n)` bits.
pub fn cps_bandwidth(n: usize) -> u64 {
    4 * log2_ceil(n) as u64
}

#[derive(Clone, Debug)]
pub struct CpsConfig {
    pub sim: SimConfig,
    pub max_iterations: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CpsIteration {
    pub violated: Vec<usize>,
    pub resampled: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct CpsResult {
    pub values: Vec<u32>,
    /// Events still violated at the end.
    pub violated: Vec<usize>,
    /// Resample rounds executed.
    pub iterations: u64,
    /// One entry per evaluation, the last one being the final state.
    pub trace: Vec<CpsIteration>,
    pub metrics: RoundMetrics,
}

impl CpsResult {
    pub fn success(&self) -> bool {
        self.violated.is_empty()
    }

    pub fn assignment(&self) -> Vec<Option<u32>> {
        self.values.iter().map(|&v| Some(v)).collect()
    }
}

/// Violated events whose identifier is smaller than that of every violated
/// neighbor.
pub fn local_minima(inst: &LllInstance, violated: &[bool]) -> Vec<bool> {
    let h = &inst.h;
    (0..inst.num_events())
        .map(|e| violated[e] && h.neighbors(e).iter().all(|&b| !violated[b] || h.id(e) < h.id(b)))
        .collect()
}

/// Variables contained in some event of `chosen`.
pub fn resample_set(inst: &LllInstance, chosen: &[bool]) -> Vec<bool> {
    inst.var_events.iter().map(|evs| evs.iter().any(|&e| chosen[e])).collect()
}

/// Tape length of each node for `iterations` resample rounds.
pub fn tape_lengths(inst: &LllInstance, iterations: u64) -> Vec<usize> {
    inst.owned().iter().map(|o| o.len() * (1 + iterations as usize)).collect()
}

struct NodePlan {
    owned: Vec<usize>,
    ranges: Vec<u32>,
    /// Owned variables (indices into `owned`) in this node's event.
    own_in_event: Vec<usize>,
    /// Source of each event variable: `(None, owned index)` or
    /// `(Some(port), index among that port's values)`.
    vbl_src: Vec<(Option<usize>, usize)>,
    /// Per port: owned indices whose variables the neighbor's event uses.
    send: Vec<Vec<usize>>,
    /// Per port: positions in `vbl` filled by the neighbor's values.
    recv: Vec<Vec<usize>>,
}

struct Plan {
    inst: LllInstance,
    nodes: Vec<NodePlan>,
    max_iterations: u64,
}

fn build_plan(inst: &LllInstance, max_iterations: u64) -> Plan {
    let owned = inst.owned();
    let h = &inst.h;
    let nodes = (0..inst.num_events())
        .map(|v| {
            let own = &owned[v];
            let ranges = own.iter().map(|&x| inst.variables[x].range).collect();
            let vbl = &inst.events[v].vbl;
            let own_in_event = own
                .iter()
                .enumerate()
                .filter(|(_, x)| vbl.binary_search(x).is_ok())
                .map(|(i, _)| i)
                .collect();
            let ports = h.neighbors(v);
            let mut recv = vec![Vec::new(); ports.len()];
            let mut vbl_src = Vec::with_capacity(vbl.len());
            for (pos, &x) in vbl.iter().enumerate() {
                let o = inst.variables[x].owner;
                if o == v {
                    vbl_src.push((None, own.binary_search(&x).unwrap()));
                } else {
                    let p = ports.binary_search(&o).expect("owner is a neighbor");
                    vbl_src.push((Some(p), recv[p].len()));
                    recv[p].push(pos);
                }
            }
            let send = ports
                .iter()
                .map(|&u| {
                    let uv = &inst.events[u].vbl;
                    own.iter()
                        .enumerate()
                        .filter(|(_, x)| uv.binary_search(x).is_ok())
                        .map(|(i, _)| i)
                        .collect()
                })
                .collect();
            NodePlan {
                owned: own.clone(),
                ranges,
                own_in_event,
                vbl_src,
                send,
                recv,
            }
        })
        .collect();
    Plan {
        inst: inst.clone(),
        nodes,
        max_iterations,
    }
}

#[derive(Clone, Debug)]
pub enum CpsMsg {
    Values { vals: Vec<u32>, bits: u64 },
    Flag,
}

impl Payload for CpsMsg {
    fn bits(&self) -> u64 {
        match self {
            CpsMsg::Values { bits, .. } => *bits,
            CpsMsg::Flag => 1,
        }
    }
}

struct CpsNode {
    plan: Arc<Plan>,
    v: usize,
    owned_vals: Vec<u32>,
    vbl_vals: Vec<u32>,
    violated: bool,
    in_i: bool,
    iterations: u64,
    done: bool,
    /// `(violated, in I)` per evaluation.
    history: Vec<(bool, bool)>,
}

impl CpsNode {
    fn me(&self) -> &NodePlan {
        &self.plan.nodes[self.v]
    }

    fn draw_all(&mut self, ctx: &mut NodeCtx) -> Vec<u32> {
        let ranges = self.me().ranges.clone();
        ranges.iter().map(|&r| ctx.draw(r as u64) as u32).collect()
    }

    fn values_msg(&self, port: usize) -> CpsMsg {
        let me = self.me();
        let vals: Vec<u32> = me.send[port].iter().map(|&i| self.owned_vals[i]).collect();
        let bits = me.send[port].iter().map(|&i| log2_ceil(me.ranges[i] as usize) as u64).sum();
        CpsMsg::Values { vals, bits }
    }

    fn refresh_own(&mut self) {
        let plan = self.plan.clone();
        for (pos, &(src, i)) in plan.nodes[self.v].vbl_src.iter().enumerate() {
            if src.is_none() {
                self.vbl_vals[pos] = self.owned_vals[i];
            }
        }
    }
}

impl NodeProgram for CpsNode {
    type Msg = CpsMsg;
    type Output = (Vec<u32>, bool, Vec<(bool, bool)>);

    fn init(&mut self, ctx: &mut NodeCtx, out: &mut [Option<CpsMsg>]) {
        self.owned_vals = self.draw_all(ctx);
        self.vbl_vals = vec![0; self.plan.inst.events[self.v].vbl.len()];
        self.refresh_own();
        for (p, slot) in out.iter_mut().enumerate() {
            if !self.me().send[p].is_empty() {
                *slot = Some(self.values_msg(p));
            }
        }
    }

    fn on_round(&mut self, ctx: &mut NodeCtx, inbox: &[Option<CpsMsg>], out: &mut [Option<CpsMsg>]) {
        let plan = self.plan.clone();
        let me = &plan.nodes[self.v];
        match ctx.round % 3 {
            1 => {
                for (p, m) in inbox.iter().enumerate() {
                    if let Some(CpsMsg::Values { vals, .. }) = m {
                        for (&pos, &val) in me.recv[p].iter().zip(vals) {
                            self.vbl_vals[pos] = val;
                        }
                    }
                }
                self.violated = plan.inst.holds_local(self.v, &self.vbl_vals);
                self.history.push((self.violated, false));
                if self.iterations >= plan.max_iterations {
                    self.done = true;
                    return;
                }
                self.done = !self.violated;
                if self.violated {
                    out.iter_mut().for_each(|s| *s = Some(CpsMsg::Flag));
                }
            }
            2 => {
                if !self.violated || self.done {
                    return;
                }
                let smaller = inbox
                    .iter()
                    .enumerate()
                    .any(|(p, m)| m.is_some() && ctx.neighbor_ids[p] < ctx.id);
                self.in_i = !smaller;
                self.history.last_mut().unwrap().1 = self.in_i;
                if self.in_i {
                    out.iter_mut().for_each(|s| *s = Some(CpsMsg::Flag));
                }
            }
            _ => {
                if self.iterations >= plan.max_iterations {
                    return;
                }
                self.iterations += 1;
                let fresh = self.draw_all(ctx);
                let mut changed = vec![false; me.owned.len()];
                let mut hit = vec![false; me.owned.len()];
                if self.in_i {
                    for &i in &me.own_in_event {
                        hit[i] = true;
                    }
                }
                for (p, m) in inbox.iter().enumerate() {
                    if m.is_some() {
                        for &i in &me.send[p] {
                            hit[i] = true;
                        }
                    }
                }
                for i in 0..me.owned.len() {
                    if hit[i] && fresh[i] != self.owned_vals[i] {
                        self.owned_vals[i] = fresh[i];
                        changed[i] = true;
                    }
                }
                self.in_i = false;
                self.refresh_own();
                for (p, slot) in out.iter_mut().enumerate() {
                    if me.send[p].iter().any(|&i| changed[i]) {
                        *slot = Some(self.values_msg(p));
                    }
                }
            }
        }
    }

    fn finished(&self) -> bool {
        self.done
    }

    fn output(&self) -> Self::Output {
        (self.owned_vals.clone(), self.violated, self.history.clone())
    }
}

fn execute(
    inst: &LllInstance,
    sim: &SimConfig,
    max_iterations: u64,
    tapes: Option<&[Vec<u64>]>,
) -> Result<CpsResult, LllError> {
    let plan = Arc::new(build_plan(inst, max_iterations));
    let mut cfg = sim.clone();
    cfg.max_rounds = cfg.max_rounds.max(3 * max_iterations + 3);
    let factory = |v: usize| CpsNode {
        plan: plan.clone(),
        v,
        owned_vals: vec![],
        vbl_vals: vec![],
        violated: false,
        in_i: false,
        iterations: 0,
        done: false,
        history: vec![],
    };
    let res = match tapes {
        Some(t) => run_with_tape(&inst.h, factory, &cfg, t)?,
        None => run(&inst.h, factory, &cfg)?,
    };
    let mut values = vec![0u32; inst.num_vars()];
    let owned = inst.owned();
    for (v, (vals, _, _)) in res.outputs.iter().enumerate() {
        for (&x, &val) in owned[v].iter().zip(vals) {
            values[x] = val;
        }
    }
    let evaluations = res.outputs.iter().map(|o| o.2.len()).max().unwrap_or(0);
    let trace: Vec<CpsIteration> = (0..evaluations)
        .map(|t| CpsIteration {
            violated: (0..inst.num_events()).filter(|&e| res.outputs[e].2.get(t).is_some_and(|h| h.0)).collect(),
            resampled: (0..inst.num_events()).filter(|&e| res.outputs[e].2.get(t).is_some_and(|h| h.1)).collect(),
        })
        .collect();
    let iterations = res.programs.iter().map(|p| p.iterations).max().unwrap_or(0);
    let violated = inst.violated(&values.iter().map(|&v| Some(v)).collect::<Vec<_>>())?;
    Ok(CpsResult {
        values,
        violated,
        iterations,
        trace,
        metrics: res.metrics,
    })
}

/// Runs resampling with the engine's seeded tapes.
pub fn cps_solve(inst: &LllInstance, cfg: &CpsConfig) -> Result<CpsResult, LllError> {
    execute(inst, &cfg.sim, cfg.max_iterations, None)
}

/// Runs resampling reading every draw from `tapes` (see [`tape_lengths`]).
pub fn cps_with_tapes(
    inst: &LllInstance,
    sim: &SimConfig,
    max_iterations: u64,
    tapes: &[Vec<u64>],
) -> Result<CpsResult, LllError> {
    execute(inst, sim, max_iterations, Some(tapes))
}

/// Centralized replay of the same process on explicit tapes; returns the
/// final values and the violated events.
pub fn simulate(inst: &LllInstance, max_iterations: u64, tapes: &[Vec<u64>]) -> (Vec<u32>, Vec<usize>) {
    let owned = inst.owned();
    let mut values = vec![0u32; inst.num_vars()];
    for (v, o) in owned.iter().enumerate() {
        for (i, &x) in o.iter().enumerate() {
            values[x] = tapes[v][i] as u32;
        }
    }
    let violated_now = |values: &[u32]| -> Vec<bool> {
        (0..inst.num_events())
            .map(|e| {
                let local: Vec<u32> = inst.events[e].vbl.iter().map(|&x| values[x]).collect();
                inst.holds_local(e, &local)
            })
            .collect()
    };
    for j in 1..=max_iterations as usize {
        let f = violated_now(&values);
        if !f.iter().any(|&b| b) {
            break;
        }
        let chosen = local_minima(inst, &f);
        let rs = resample_set(inst, &chosen);
        for (v, o) in owned.iter().enumerate() {
            for (i, &x) in o.iter().enumerate() {
                if rs[x] {
                    values[x] = tapes[v][j * o.len() + i] as u32;
                }
            }
        }
    }
    let f = violated_now(&values);
    (values, (0..inst.num_events()).filter(|&e| f[e]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lll::sinkless_instance;
    use crate::workbench::generators::random_regular;
    use crate::Graph;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(inst: &LllInstance, seed: u64) -> CpsConfig {
        CpsConfig {
            sim: SimConfig::congest(cps_bandwidth(inst.num_events())).with_seed(seed),
            max_iterations: 200,
        }
    }

    #[test]
    fn solves_sinkless_on_regular_graphs() {
        let g = random_regular(128, 6, 3).unwrap();
        let inst = sinkless_instance(&g);
        for seed in 0..5 {
            let r = cps_solve(&inst, &cfg(&inst, seed)).unwrap();
            assert!(r.success(), "seed {seed}");
            assert!(crate::lll::validate_assignment(&inst, &r.assignment()).unwrap().is_empty());
            assert_eq!(r.trace.last().unwrap().violated, Vec::<usize>::new());
        }
    }

    #[test]
    fn trace_follows_local_minimum_rule() {
        let g = random_regular(64, 4, 1).unwrap();
        let inst = sinkless_instance(&g);
        let r = cps_solve(&inst, &cfg(&inst, 7)).unwrap();
        for it in &r.trace {
            let mut f = vec![false; inst.num_events()];
            it.violated.iter().for_each(|&e| f[e] = true);
            let lm = local_minima(&inst, &f);
            let expect: Vec<usize> = (0..inst.num_events()).filter(|&e| lm[e]).collect();
            if it.violated.is_empty() {
                assert!(it.resampled.is_empty());
            } else if !std::ptr::eq(it, r.trace.last().unwrap()) {
                assert_eq!(it.resampled, expect);
            }
        }
    }

    #[test]
    fn isolated_events() {
        let g = Graph::new(3, &[]).unwrap();
        let inst = sinkless_instance(&g);
        // every isolated node is a sink: all zero incident edges point at it
        let r = cps_solve(&inst, &CpsConfig { sim: SimConfig::local(), max_iterations: 5 }).unwrap();
        assert_eq!(r.violated, vec![0, 1, 2]);
        assert_eq!(r.iterations, 5);
    }

    #[test]
    fn three_rounds_per_iteration() {
        let g = Graph::new(3, &[(0, 1), (0, 2), (1, 2)]).unwrap();
        let inst = sinkless_instance(&g);
        assert_eq!(tape_lengths(&inst, 4), vec![10, 5, 0]);
        let sim = SimConfig::congest(cps_bandwidth(3));
        // a directed cycle from the start
        let r = cps_with_tapes(&inst, &sim, 4, &[vec![0, 1, 0, 0, 0, 0, 0, 0, 0, 0], vec![0; 5], vec![]]).unwrap();
        assert!(r.success());
        assert_eq!((r.iterations, r.metrics.rounds), (0, 1));
        // node 2 starts as a sink and resamples both of its edges once
        let r = cps_with_tapes(&inst, &sim, 4, &[vec![0, 0, 0, 1, 0, 0, 0, 0, 0, 0], vec![0; 5], vec![]]).unwrap();
        assert!(r.success());
        assert_eq!((r.iterations, r.metrics.rounds), (1, 4));
        assert_eq!(r.values, vec![0, 1, 0]);
        assert_eq!(r.trace[0], CpsIteration { violated: vec![2], resampled: vec![2] });
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn engine_matches_central_replay(seed in 0u64..1000, iters in 0u64..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_regular(16, 3, seed).unwrap();
            let inst = sinkless_instance(&g);
            let tapes: Vec<Vec<u64>> = tape_lengths(&inst, iters)
                .iter()
                .map(|&l| (0..l).map(|_| rng.gen_range(0..2)).collect())
                .collect();
            let r = cps_with_tapes(&inst, &SimConfig::congest(cps_bandwidth(16)), iters, &tapes).unwrap();
            let (vals, viol) = simulate(&inst, iters, &tapes);
            prop_assert_eq!(r.values, vals);
            prop_assert_eq!(r.violated, viol);
        }
    }
}
