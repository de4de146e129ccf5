//! Randomized pre-shattering. Events are processed by the classes of a
//! distance-2 coloring of `H`; a processed event samples its unset, unfrozen
//! variables, after which every event whose conditional probability reached
//! `sqrt(p)` has its variables unset and frozen. Unsetting can raise other
//! events' probabilities, so the check repeats in waves until none qualifies.

use std::collections::BTreeSet;

use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;

use super::{residual_criterion_holds, serialize_ratio, Event, LllError, LllInstance, Predicate, Variable, ENUMERATION_BUDGET};
use crate::engine::{counter_draw, SimConfig};
use crate::graph::{bfs_bounded, components_under, DisjointSets, Graph};
use crate::symmetry::greedy_coloring;

#[derive(Clone, Debug, Serialize)]
pub struct FreezeRecord {
    pub event: usize,
    /// Color class being processed when the freeze happened.
    pub color: u32,
    #[serde(serialize_with = "serialize_ratio")]
    pub probability: BigRational,
}

#[derive(Clone, Debug)]
pub struct PreshatterResult {
    pub values: Vec<Option<u32>>,
    pub frozen: Vec<bool>,
    /// Distance-2 coloring of `H`.
    pub colors: Vec<u32>,
    pub num_colors: usize,
    pub freezes: Vec<FreezeRecord>,
    /// Events with at least one unset variable.
    pub residual: Vec<bool>,
    /// Residual events grouped by shared unset variables.
    pub components: Vec<Vec<usize>>,
    pub rounds: u64,
    pub p: BigRational,
}

impl PreshatterResult {
    pub fn max_component(&self) -> usize {
        self.components.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// `q >= sqrt(p)`, exactly.
fn reaches_threshold(q: &BigRational, p: &BigRational) -> bool {
    !q.is_zero() && q * q >= *p
}

pub fn preshatter(inst: &LllInstance, sim: &SimConfig) -> Result<PreshatterResult, LllError> {
    let m = inst.num_events();
    let nv = inst.num_vars();
    let p = inst.max_probability()?;
    let h2 = inst.h.power(2);
    let (colors, metrics) = greedy_coloring(&h2, &SimConfig::for_graph(&h2).with_seed(sim.seed))?;
    let num_colors = colors.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
    // one round on H^2 is relayed through H in at most d rounds
    let mut rounds = metrics.rounds * inst.dependency_degree().max(1) as u64;
    let mut values: Vec<Option<u32>> = vec![None; nv];
    let mut frozen = vec![false; nv];
    let mut draws = vec![0u64; m];
    let mut freezes = Vec::new();
    let mut classes = vec![Vec::new(); num_colors];
    for e in 0..m {
        classes[colors[e] as usize].push(e);
    }
    for (c, class) in classes.iter().enumerate() {
        // events of one class are at distance >= 3, so each event is
        // affected by at most one of them and the order inside the class
        // does not matter
        for &e in class {
            let mut fresh = Vec::new();
            for &x in &inst.events[e].vbl {
                if values[x].is_none() && !frozen[x] {
                    let o = inst.variables[x].owner;
                    values[x] = Some(counter_draw(sim.seed, o, draws[o], inst.variables[x].range as u64) as u32);
                    draws[o] += 1;
                    fresh.push(x);
                }
            }
            if fresh.is_empty() {
                continue;
            }
            let mut hit = Vec::new();
            for b in std::iter::once(e).chain(inst.h.neighbors(e).iter().copied()) {
                let q = inst.event_probability(b, &values)?;
                if reaches_threshold(&q, &p) {
                    hit.push((b, q));
                }
            }
            if hit.is_empty() {
                continue;
            }
            for &x in &fresh {
                values[x] = None;
            }
            for (b, q) in hit {
                for &x in &inst.events[b].vbl {
                    frozen[x] = true;
                }
                freezes.push(FreezeRecord {
                    event: b,
                    color: c as u32,
                    probability: q,
                });
            }
        }
        rounds += 2;
    }
    let residual: Vec<bool> = (0..m)
        .map(|e| inst.events[e].vbl.iter().any(|&x| values[x].is_none()))
        .collect();
    let components = residual_components(inst, &values);
    // variables outside every event are never sampled
    for x in 0..nv {
        if inst.var_events[x].is_empty() {
            values[x] = Some(0);
        }
    }
    Ok(PreshatterResult {
        values,
        frozen,
        colors,
        num_colors,
        freezes,
        residual,
        components,
        rounds,
        p,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PreshatterCheck {
    pub colors_ok: bool,
    pub freezes_ok: bool,
    pub set_events_avoided: bool,
    pub residual_probabilities_ok: bool,
    /// `sqrt(p) (d+1) < 1`.
    pub residual_criterion: bool,
    pub residual_events: usize,
    pub max_component: usize,
}

impl PreshatterCheck {
    pub fn passed(&self) -> bool {
        self.colors_ok && self.freezes_ok && self.set_events_avoided && self.residual_probabilities_ok && self.residual_criterion
    }
}

/// Connected components of the residual dependency graph: residual events
/// joined when they share an unset variable. Events that only share fixed
/// variables are independent once those values are known.
pub fn residual_components(inst: &LllInstance, values: &[Option<u32>]) -> Vec<Vec<usize>> {
    let m = inst.num_events();
    let mut ds = DisjointSets::new(m);
    let mut residual = vec![false; m];
    for (x, evs) in inst.var_events.iter().enumerate() {
        if values[x].is_none() {
            for &e in evs {
                residual[e] = true;
                ds.union(evs[0], e);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for e in (0..m).filter(|&e| residual[e]) {
        groups.entry(ds.find(e)).or_default().push(e);
    }
    let mut comps: Vec<Vec<usize>> = groups.into_values().collect();
    comps.sort();
    comps
}

/// Re-verifies the pre-shattering guarantees from scratch: proper
/// distance-2 coloring, every freeze at probability at least `sqrt(p)`,
/// fully set events avoided, every residual event below `sqrt(p)`.
pub fn check_preshatter(inst: &LllInstance, r: &PreshatterResult) -> Result<PreshatterCheck, LllError> {
    let h2 = inst.h.power(2);
    let colors_ok = h2.edges().iter().all(|&(a, b)| r.colors[a] != r.colors[b]);
    let freezes_ok = r.freezes.iter().all(|f| reaches_threshold(&f.probability, &r.p));
    let mut set_events_avoided = true;
    let mut residual_probabilities_ok = true;
    for e in 0..inst.num_events() {
        let q = inst.event_probability(e, &r.values)?;
        if r.residual[e] {
            residual_probabilities_ok &= !reaches_threshold(&q, &r.p);
        } else {
            set_events_avoided &= q.is_zero();
        }
    }
    Ok(PreshatterCheck {
        colors_ok,
        freezes_ok,
        set_events_avoided,
        residual_probabilities_ok,
        residual_criterion: residual_criterion_holds(&r.p, inst.dependency_degree()),
        residual_events: r.residual.iter().filter(|&&b| b).count(),
        max_component: r.max_component(),
    })
}

/// A sub-instance together with its index maps into the parent.
#[derive(Clone, Debug)]
pub struct SubInstance {
    pub instance: LllInstance,
    pub events: Vec<usize>,
    pub vars: Vec<usize>,
}

impl SubInstance {
    /// Writes the sub-instance's values back into a parent assignment.
    pub fn write_back(&self, sub_values: &[u32], parent: &mut [Option<u32>]) {
        for (i, &x) in self.vars.iter().enumerate() {
            parent[x] = Some(sub_values[i]);
        }
    }
}

/// The events `events` conditioned on the set variables of `values`; only
/// the unset variables remain. A variable keeps its owner when that event is
/// kept and contains it, otherwise the lowest kept event containing it owns
/// it. Identifiers of `H` carry over.
pub fn residual_instance(inst: &LllInstance, values: &[Option<u32>], events: &[usize]) -> Result<SubInstance, LllError> {
    let mut events = events.to_vec();
    events.sort_unstable();
    events.dedup();
    let vars: Vec<usize> = events
        .iter()
        .flat_map(|&e| inst.events[e].vbl.iter().copied())
        .filter(|&x| values[x].is_none())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let vmap = |x: usize| vars.binary_search(&x).ok();
    let emap = |e: usize| events.binary_search(&e).ok();
    let mut new_events = Vec::with_capacity(events.len());
    for &e in &events {
        let ev = &inst.events[e];
        let vbl: Vec<usize> = ev.vbl.iter().filter_map(|&x| vmap(x)).collect();
        let predicate = match &ev.predicate {
            Predicate::Never => Predicate::Never,
            Predicate::AllEqual(ts) => {
                let mut keep = Vec::new();
                let mut dead = false;
                for (&x, &t) in ev.vbl.iter().zip(ts) {
                    match values[x] {
                        Some(v) => dead |= v != t,
                        None => keep.push(t),
                    }
                }
                if dead {
                    Predicate::Never
                } else {
                    Predicate::AllEqual(keep)
                }
            }
            Predicate::Table(_) => {
                let total: u128 = ev
                    .vbl
                    .iter()
                    .filter(|&&x| values[x].is_none())
                    .map(|&x| inst.variables[x].range as u128)
                    .product();
                if total > ENUMERATION_BUDGET as u128 {
                    return Err(LllError::BudgetExceeded {
                        event: e,
                        required: total,
                        budget: ENUMERATION_BUDGET,
                    });
                }
                let mut table = vec![0u8; (total as usize).div_ceil(8)];
                let mut local: Vec<Option<u32>> = values.to_vec();
                let unset: Vec<usize> = ev.vbl.iter().copied().filter(|&x| values[x].is_none()).collect();
                for idx in 0..total as u64 {
                    let mut rest = idx;
                    for &x in &unset {
                        let r = inst.variables[x].range as u64;
                        local[x] = Some((rest % r) as u32);
                        rest /= r;
                    }
                    if inst.holds(e, &local)? {
                        table[(idx / 8) as usize] |= 1 << (idx % 8);
                    }
                }
                Predicate::Table(table)
            }
        };
        let prob_override = if vbl.len() == ev.vbl.len() {
            ev.prob_override.clone()
        } else {
            None
        };
        new_events.push(Event {
            node: ev.node,
            vbl,
            predicate,
            prob_override,
        });
    }
    let variables: Vec<Variable> = vars
        .iter()
        .map(|&x| {
            let v = &inst.variables[x];
            let owner = match emap(v.owner) {
                Some(o) if inst.events[v.owner].vbl.binary_search(&x).is_ok() => o,
                _ => inst.var_events[x].iter().find_map(|&e| emap(e)).expect("variable of a kept event"),
            };
            Variable {
                owner,
                range: v.range,
                edge: v.edge,
            }
        })
        .collect();
    let ids = events.iter().map(|&e| inst.h.id(e)).collect();
    let instance = LllInstance::new(variables, new_events, Some((ids, inst.h.id_bits())))?;
    Ok(SubInstance { instance, events, vars })
}

/// Component structure of the residual set `B`: components in `H[B]` and in
/// `Z[B]`, where `Z` joins events at `H`-distance in `[2c+1, 4c+2]`.
#[derive(Clone, Debug, Serialize)]
pub struct ShatterDiagnostics {
    pub residual: usize,
    pub max_component: usize,
    pub max_z_component: usize,
    /// `ln n / ln Δ`
    pub log_delta_n: f64,
    pub z_within_log_delta_n: bool,
}

pub fn shattering_diagnostics(h: &Graph, residual: &[bool], c: u32) -> ShatterDiagnostics {
    let n = h.n();
    let b: Vec<usize> = (0..n).filter(|&v| residual[v]).collect();
    let comps = components_under(h, |v| residual[v], 1);
    let (lo, hi) = (2 * c + 1, 4 * c + 2);
    let mut ds = DisjointSets::new(n);
    for &u in &b {
        let dist = bfs_bounded(h, &[u], hi);
        for &w in &b {
            if w > u && dist[w] >= lo && dist[w] <= hi {
                ds.union(u, w);
            }
        }
    }
    let mut size = vec![0usize; n];
    for &u in &b {
        let r = ds.find(u);
        size[r] += 1;
    }
    let max_z = size.into_iter().max().unwrap_or(0);
    let delta = h.max_degree().max(2) as f64;
    let log_delta_n = (n.max(2) as f64).ln() / delta.ln();
    ShatterDiagnostics {
        residual: b.len(),
        max_component: comps.iter().map(Vec::len).max().unwrap_or(0),
        max_z_component: max_z,
        log_delta_n,
        z_within_log_delta_n: (max_z as f64) < log_delta_n,
    }
}

/// `sum_E P(E | values)` over `events`.
pub fn expected_violations(inst: &LllInstance, values: &[Option<u32>], events: impl IntoIterator<Item = usize>) -> Result<BigRational, LllError> {
    let mut s = BigRational::zero();
    for e in events {
        s += inst.event_probability(e, values)?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lll::sinkless_instance;
    use crate::workbench::generators::random_regular;

    #[test]
    fn sinkless_ten_regular_shatters() {
        let g = random_regular(1024, 10, 11).unwrap();
        let inst = sinkless_instance(&g);
        for seed in 0..3 {
            let r = preshatter(&inst, &SimConfig::for_graph(&g).with_seed(seed)).unwrap();
            let chk = check_preshatter(&inst, &r).unwrap();
            assert!(chk.passed(), "{chk:?}");
            assert!(r.num_colors <= 4 * 100);
            assert!(r.max_component() <= 80, "{}", r.max_component());
            for c in &r.components {
                let sub = residual_instance(&inst, &r.values, c).unwrap();
                assert_eq!(sub.events, *c);
                for (i, &e) in sub.events.iter().enumerate() {
                    let q = inst.event_probability(e, &r.values).unwrap();
                    let none = vec![None; sub.instance.num_vars()];
                    assert_eq!(sub.instance.event_probability(i, &none).unwrap(), q);
                }
            }
        }
    }

    #[test]
    fn residual_tables_condition_correctly() {
        let g = Graph::new(3, &[(0, 1), (0, 2), (1, 2)]).unwrap();
        let mut inst = sinkless_instance(&g);
        // rewrite event 0 as a table: holds iff both edges point at node 0
        inst.events[0].predicate = Predicate::Table(vec![0b1000]);
        let inst = LllInstance::new(inst.variables, inst.events, None).unwrap();
        let vals = vec![Some(1), None, Some(0)];
        let sub = residual_instance(&inst, &vals, &[0, 2]).unwrap();
        assert_eq!(sub.vars, vec![1]);
        assert_eq!(sub.instance.events[0].predicate, Predicate::Table(vec![0b10]));
        assert_eq!(sub.instance.events[1].predicate, Predicate::AllEqual(vec![0]));
        assert_eq!(sub.instance.variables[0].owner, 0);
        let mut back = vals.clone();
        sub.write_back(&[1], &mut back);
        assert_eq!(back, vec![Some(1), Some(1), Some(0)]);
    }

    #[test]
    fn diagnostics_on_a_path() {
        let g = crate::workbench::generators::path(20).unwrap();
        let mut res = vec![false; 20];
        for v in [0, 1, 7, 14] {
            res[v] = true;
        }
        let d = shattering_diagnostics(&g, &res, 1);
        assert_eq!(d.residual, 4);
        assert_eq!(d.max_component, 2);
        // distances 3..=6 join: 1-7 (6), 7-14 (7 no), 0-7 (7 no)
        assert_eq!(d.max_z_component, 2);
    }
}
