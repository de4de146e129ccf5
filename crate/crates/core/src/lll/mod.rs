//! Lovász Local Lemma instances over a variable set, with an exact
//! conditional-probability oracle, criterion checks and an assignment
//! validator. Events sit one per node of the dependency graph `H`, which is
//! also the communication network of every distributed solver here.

pub mod cps;
pub mod preshatter;

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::engine::EngineError;
use crate::graph::{Graph, NodeId};
use crate::math::{e_pow_times_lt_one, ratio_to_f64};

/// Default cap on the number of assignments enumerated per probability query.
pub const ENUMERATION_BUDGET: u64 = 1 << 20;

#[derive(Debug, Error)]
pub enum LllError {
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("event {event}: enumerating {required} assignments exceeds the budget of {budget}")]
    BudgetExceeded { event: usize, required: u128, budget: u64 },
    #[error("variable {var} is unset")]
    Unset { var: usize },
    #[error("variable {var} has value {value} outside range {range}")]
    OutOfRange { var: usize, value: u32, range: u32 },
    #[error("instance is not range-bounded: {0}")]
    NotRangeBounded(String),
    #[error("criterion not met: {0}")]
    Criterion(String),
    #[error("engine: {0}")]
    Engine(#[from] EngineError),
    #[error("json: {0}")]
    Json(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    /// Event (node of `H`) that samples this variable.
    pub owner: usize,
    pub range: u32,
    /// Network edge the variable lives on, if any; used by the `sinkless`
    /// predicate shorthand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Predicate {
    /// Bit `i` (little-endian bytes) tells whether the event holds at the
    /// mixed-radix index `i` of `vbl`, first variable least significant.
    Table(Vec<u8>),
    /// Holds iff `vbl[i] == targets[i]` for every `i`.
    AllEqual(Vec<u32>),
    Never,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    /// Network node hosting the event.
    pub node: usize,
    /// Variable indices, strictly increasing.
    pub vbl: Vec<usize>,
    pub predicate: Predicate,
    /// Unconditional probability supplied in closed form; used only while
    /// none of the event's variables is set.
    pub prob_override: Option<BigRational>,
}

#[derive(Clone, Debug)]
pub struct LllInstance {
    pub variables: Vec<Variable>,
    pub events: Vec<Event>,
    /// Dependency graph: events adjacent iff they share a variable.
    pub h: Graph,
    /// Events containing each variable, ascending.
    pub var_events: Vec<Vec<usize>>,
}

fn table_bit(t: &[u8], i: u64) -> bool {
    t.get((i / 8) as usize).is_some_and(|b| b >> (i % 8) & 1 == 1)
}

impl LllInstance {
    /// Checks shapes and owner locality, then builds `H`. `ids` become the
    /// identifiers of `H`'s nodes (default identifiers otherwise).
    pub fn new(variables: Vec<Variable>, events: Vec<Event>, ids: Option<(Vec<NodeId>, u32)>) -> Result<Self, LllError> {
        let nv = variables.len();
        let m = events.len();
        let bad = |s: String| Err(LllError::Invalid(s));
        for (x, v) in variables.iter().enumerate() {
            if v.range == 0 {
                return bad(format!("variable {x} has empty range"));
            }
            if v.owner >= m {
                return bad(format!("variable {x} owned by missing event {}", v.owner));
            }
        }
        let mut var_events = vec![Vec::new(); nv];
        for (e, ev) in events.iter().enumerate() {
            if ev.vbl.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("event {e}: vbl must be strictly increasing"));
            }
            for &x in &ev.vbl {
                if x >= nv {
                    return bad(format!("event {e}: unknown variable {x}"));
                }
                var_events[x].push(e);
            }
            match &ev.predicate {
                Predicate::Table(t) => {
                    let size: u128 = ev.vbl.iter().map(|&x| variables[x].range as u128).product();
                    if size > ENUMERATION_BUDGET as u128 * 8 {
                        return bad(format!("event {e}: truth table over {size} assignments is too large"));
                    }
                    if (t.len() as u128) < size.div_ceil(8) {
                        return bad(format!("event {e}: truth table has {} bytes, needs {}", t.len(), size.div_ceil(8)));
                    }
                }
                Predicate::AllEqual(ts) => {
                    if ts.len() != ev.vbl.len() {
                        return bad(format!("event {e}: {} targets for {} variables", ts.len(), ev.vbl.len()));
                    }
                }
                Predicate::Never => {}
            }
        }
        let mut edges = BTreeSet::new();
        for evs in &var_events {
            for (i, &a) in evs.iter().enumerate() {
                for &b in &evs[i + 1..] {
                    edges.insert((a, b));
                }
            }
        }
        let edges: Vec<(usize, usize)> = edges.into_iter().collect();
        let mut h = Graph::new(m, &edges).map_err(|e| LllError::Invalid(e.to_string()))?;
        if let Some((ids, bits)) = ids {
            h = h.with_ids(ids, bits).map_err(|e| LllError::Invalid(e.to_string()))?;
        }
        for (x, evs) in var_events.iter().enumerate() {
            let o = variables[x].owner;
            if let Some(&e) = evs.iter().find(|&&e| e != o && !h.has_edge(e, o)) {
                return bad(format!("variable {x}: owner {o} is not event {e} or its neighbor"));
            }
        }
        Ok(LllInstance {
            variables,
            events,
            h,
            var_events,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_events(&self) -> usize {
        self.events.len()
    }

    /// Maximum degree `d` of the dependency graph.
    pub fn dependency_degree(&self) -> usize {
        self.h.max_degree()
    }

    /// Variables owned by each event, ascending.
    pub fn owned(&self) -> Vec<Vec<usize>> {
        let mut o = vec![Vec::new(); self.num_events()];
        for (x, v) in self.variables.iter().enumerate() {
            o[v.owner].push(x);
        }
        o
    }

    /// `|vbl(E)| <= d^3 + 3d + 1` and every range at most `max(2, d^2)`.
    pub fn range_bounded(&self) -> Result<(), String> {
        let d = self.dependency_degree() as u128;
        let vmax = d * d * d + 3 * d + 1;
        let rmax = (d * d).max(2);
        for (e, ev) in self.events.iter().enumerate() {
            if ev.vbl.len() as u128 > vmax {
                return Err(format!("event {e} has {} variables, limit {vmax}", ev.vbl.len()));
            }
        }
        for (x, v) in self.variables.iter().enumerate() {
            if v.range as u128 > rmax {
                return Err(format!("variable {x} has range {}, limit {rmax}", v.range));
            }
        }
        Ok(())
    }

    /// Whether event `e` holds; every variable of `e` must be set.
    pub fn holds(&self, e: usize, values: &[Option<u32>]) -> Result<bool, LllError> {
        let ev = &self.events[e];
        for &x in &ev.vbl {
            let v = values[x].ok_or(LllError::Unset { var: x })?;
            if v >= self.variables[x].range {
                return Err(LllError::OutOfRange {
                    var: x,
                    value: v,
                    range: self.variables[x].range,
                });
            }
        }
        let local: Vec<u32> = ev.vbl.iter().map(|&x| values[x].unwrap()).collect();
        Ok(self.holds_local(e, &local))
    }

    /// Whether event `e` holds when `vals[i]` is the value of `vbl[i]`;
    /// values are assumed in range.
    pub fn holds_local(&self, e: usize, vals: &[u32]) -> bool {
        let ev = &self.events[e];
        match &ev.predicate {
            Predicate::Never => false,
            Predicate::AllEqual(ts) => vals == ts.as_slice(),
            Predicate::Table(t) => {
                let mut idx = 0u64;
                let mut stride = 1u64;
                for (&x, &v) in ev.vbl.iter().zip(vals) {
                    idx += v as u64 * stride;
                    stride *= self.variables[x].range as u64;
                }
                table_bit(t, idx)
            }
        }
    }

    /// `P(E | set variables)`, exact, with the unset variables uniform.
    pub fn event_probability(&self, e: usize, values: &[Option<u32>]) -> Result<BigRational, LllError> {
        self.event_probability_with_budget(e, values, ENUMERATION_BUDGET)
    }

    pub fn event_probability_with_budget(
        &self,
        e: usize,
        values: &[Option<u32>],
        budget: u64,
    ) -> Result<BigRational, LllError> {
        let ev = &self.events[e];
        let unset: Vec<usize> = ev.vbl.iter().copied().filter(|&x| values[x].is_none()).collect();
        if unset.is_empty() {
            return Ok(if self.holds(e, values)? {
                BigRational::one()
            } else {
                BigRational::zero()
            });
        }
        if unset.len() == ev.vbl.len() {
            if let Some(p) = &ev.prob_override {
                return Ok(p.clone());
            }
        }
        match &ev.predicate {
            Predicate::Never => Ok(BigRational::zero()),
            Predicate::AllEqual(ts) => {
                let mut den = BigInt::one();
                for (&x, &t) in ev.vbl.iter().zip(ts) {
                    let r = self.variables[x].range;
                    match values[x] {
                        Some(v) if v != t => return Ok(BigRational::zero()),
                        Some(_) => {}
                        None if t >= r => return Ok(BigRational::zero()),
                        None => den *= r,
                    }
                }
                Ok(BigRational::new(BigInt::one(), den))
            }
            Predicate::Table(t) => {
                let total: u128 = unset.iter().map(|&x| self.variables[x].range as u128).product();
                if total > budget as u128 {
                    return Err(LllError::BudgetExceeded {
                        event: e,
                        required: total,
                        budget,
                    });
                }
                let mut strides = Vec::with_capacity(ev.vbl.len());
                let mut base = 0u64;
                let mut stride = 1u64;
                for &x in &ev.vbl {
                    if let Some(v) = values[x] {
                        if v >= self.variables[x].range {
                            return Err(LllError::OutOfRange {
                                var: x,
                                value: v,
                                range: self.variables[x].range,
                            });
                        }
                        base += v as u64 * stride;
                    } else {
                        strides.push((stride, self.variables[x].range as u64));
                    }
                    stride *= self.variables[x].range as u64;
                }
                let mut digits = vec![0u64; strides.len()];
                let mut idx = base;
                let mut count = 0u64;
                loop {
                    if table_bit(t, idx) {
                        count += 1;
                    }
                    let mut i = 0;
                    loop {
                        if i == digits.len() {
                            return Ok(BigRational::new(BigInt::from(count), BigInt::from(total)));
                        }
                        digits[i] += 1;
                        idx += strides[i].0;
                        if digits[i] < strides[i].1 {
                            break;
                        }
                        idx -= strides[i].0 * digits[i];
                        digits[i] = 0;
                        i += 1;
                    }
                }
            }
        }
    }

    /// `p = max_E P(E)`.
    pub fn max_probability(&self) -> Result<BigRational, LllError> {
        let none = vec![None; self.num_vars()];
        let mut p = BigRational::zero();
        for e in 0..self.num_events() {
            p = p.max(self.event_probability(e, &none)?);
        }
        Ok(p)
    }

    /// Events that hold under a full assignment; errors on unset or
    /// out-of-range values of any event variable.
    pub fn violated(&self, values: &[Option<u32>]) -> Result<Vec<usize>, LllError> {
        let mut out = Vec::new();
        for e in 0..self.num_events() {
            if self.holds(e, values)? {
                out.push(e);
            }
        }
        Ok(out)
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, LllError> {
        let raw: RawInstance = serde_json::from_value(value.clone()).map_err(|e| LllError::Json(e.to_string()))?;
        let mut events = Vec::with_capacity(raw.events.len());
        for (e, re) in raw.events.into_iter().enumerate() {
            let predicate = match re.predicate {
                RawPredicate::Never => Predicate::Never,
                RawPredicate::AllEqual(ts) => Predicate::AllEqual(ts),
                RawPredicate::Table(hex) => Predicate::Table(parse_hex(&hex).ok_or_else(|| LllError::Json(format!("event {e}: bad hex table")))?),
                RawPredicate::Sinkless => {
                    let mut ts = Vec::with_capacity(re.vbl.len());
                    for &x in &re.vbl {
                        let edge = raw
                            .variables
                            .get(x)
                            .and_then(|v| v.edge)
                            .ok_or_else(|| LllError::Json(format!("event {e}: variable {x} has no edge")))?;
                        ts.push(sinkless_target(edge, re.node).ok_or_else(|| {
                            LllError::Json(format!("event {e}: node {} is not on edge {edge:?}", re.node))
                        })?);
                    }
                    Predicate::AllEqual(ts)
                }
            };
            let prob_override = match re.probability {
                None => None,
                Some(s) => Some(s.parse::<BigRational>().map_err(|_| LllError::Json(format!("event {e}: bad probability {s}")))?),
            };
            events.push(Event {
                node: re.node,
                vbl: re.vbl,
                predicate,
                prob_override,
            });
        }
        let ids = match raw.ids {
            None => None,
            Some(list) => {
                let ids: Option<Vec<NodeId>> = list.iter().map(|s| NodeId::parse_decimal(s)).collect();
                let ids = ids.ok_or_else(|| LllError::Json("bad identifier".into()))?;
                let bits = ids.iter().map(NodeId::bits).max().unwrap_or(1).max(1);
                Some((ids, bits))
            }
        };
        LllInstance::new(raw.variables, events, ids)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let events: Vec<serde_json::Value> = self
            .events
            .iter()
            .map(|ev| {
                let pred = match &ev.predicate {
                    Predicate::Never => serde_json::json!("never"),
                    Predicate::AllEqual(ts) => serde_json::json!({ "all_equal": ts }),
                    Predicate::Table(t) => serde_json::json!({ "table": to_hex(t) }),
                };
                let mut o = serde_json::json!({ "node": ev.node, "vbl": ev.vbl, "predicate": pred });
                if let Some(p) = &ev.prob_override {
                    o["probability"] = serde_json::json!(p.to_string());
                }
                o
            })
            .collect();
        serde_json::json!({
            "ids": self.h.ids().iter().map(|i| i.to_string()).collect::<Vec<_>>(),
            "variables": self.variables,
            "events": events,
        })
    }
}

/// Value of the edge variable that points the edge at `node`; `0` orients
/// from the smaller endpoint to the larger one.
pub fn sinkless_target(edge: (usize, usize), node: usize) -> Option<u32> {
    let (a, b) = (edge.0.min(edge.1), edge.0.max(edge.1));
    if node == b {
        Some(0)
    } else if node == a {
        Some(1)
    } else {
        None
    }
}

/// Sinkless orientation on `g`: one binary variable per edge owned by its
/// smaller endpoint, one event per node that holds when every incident edge
/// points at it. `H` coincides with `g`, identifiers included.
pub fn sinkless_instance(g: &Graph) -> LllInstance {
    let variables: Vec<Variable> = g
        .edges()
        .iter()
        .map(|&(u, v)| Variable {
            owner: u.min(v),
            range: 2,
            edge: Some((u.min(v), u.max(v))),
        })
        .collect();
    let mut vbl = vec![Vec::new(); g.n()];
    for (x, &(u, v)) in g.edges().iter().enumerate() {
        vbl[u].push(x);
        vbl[v].push(x);
    }
    let events = vbl
        .into_iter()
        .enumerate()
        .map(|(v, xs)| {
            let ts = xs.iter().map(|&x| sinkless_target(g.edges()[x], v).unwrap()).collect();
            Event {
                node: v,
                vbl: xs,
                predicate: Predicate::AllEqual(ts),
                prob_override: None,
            }
        })
        .collect();
    LllInstance::new(variables, events, Some((g.ids().to_vec(), g.id_bits()))).expect("sinkless instance is well formed")
}

#[derive(Deserialize)]
struct RawInstance {
    #[serde(default)]
    ids: Option<Vec<String>>,
    variables: Vec<Variable>,
    events: Vec<RawEvent>,
}

#[derive(Deserialize)]
struct RawEvent {
    node: usize,
    vbl: Vec<usize>,
    predicate: RawPredicate,
    #[serde(default)]
    probability: Option<String>,
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawPredicate {
    Table(String),
    AllEqual(Vec<u32>),
    Never,
    Sinkless,
}

fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_hex(s: &str) -> Option<Vec<u8>> {
    if s.len() % 2 != 0 || !s.is_ascii() {
        return None;
    }
    (0..s.len()).step_by(2).map(|i| u8::from_str_radix(&s[i..i + 2], 16).ok()).collect()
}

pub fn serialize_ratio<S: Serializer>(r: &BigRational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

/// Criterion checks against `p = max P(E)` and `d = Δ(H)`; comparisons
/// involving `e` are decided exactly with rational bounds on `e`.
#[derive(Clone, Debug, Serialize)]
pub struct CriterionReport {
    #[serde(serialize_with = "serialize_ratio")]
    pub p: BigRational,
    pub d: usize,
    /// `e p d`
    pub epd: f64,
    pub epd_ok: bool,
    /// `e p d^2`
    pub epd2: f64,
    pub epd2_ok: bool,
    /// `p (e d)^8`
    pub ped8: f64,
    pub ped8_ok: bool,
    /// `p (e d)^lambda` for the requested `lambda`.
    pub lambda: Option<u32>,
    pub ped_lambda: Option<f64>,
    pub ped_lambda_ok: Option<bool>,
    /// `p (d+1)^2 < 1`, i.e. `sqrt(p) (d+1) < 1`.
    pub residual_ok: bool,
}

fn pow_big(d: usize, k: u32) -> BigInt {
    num_traits::pow(BigInt::from(d), k as usize)
}

pub fn ped_lambda_holds(p: &BigRational, d: usize, lambda: u32) -> bool {
    e_pow_times_lt_one(&(p * BigRational::from_integer(pow_big(d, lambda))), lambda)
}

pub fn residual_criterion_holds(p: &BigRational, d: usize) -> bool {
    p * BigRational::from_integer(pow_big(d + 1, 2)) < BigRational::one()
}

pub fn check_criteria(inst: &LllInstance, lambda: Option<u32>) -> Result<CriterionReport, LllError> {
    let p = inst.max_probability()?;
    let d = inst.dependency_degree();
    let pf = ratio_to_f64(&p);
    let e = std::f64::consts::E;
    let df = d as f64;
    let times = |k: u32| p.clone() * BigRational::from_integer(pow_big(d, k));
    Ok(CriterionReport {
        epd: e * pf * df,
        epd_ok: e_pow_times_lt_one(&times(1), 1),
        epd2: e * pf * df * df,
        epd2_ok: e_pow_times_lt_one(&times(2), 1),
        ped8: pf * (e * df).powi(8),
        ped8_ok: ped_lambda_holds(&p, d, 8),
        lambda,
        ped_lambda: lambda.map(|l| pf * (e * df).powi(l as i32)),
        ped_lambda_ok: lambda.map(|l| ped_lambda_holds(&p, d, l)),
        residual_ok: residual_criterion_holds(&p, d),
        p,
        d,
    })
}

/// Events violated by `values`. Every variable of every event must be set
/// and in range.
pub fn validate_assignment(inst: &LllInstance, values: &[Option<u32>]) -> Result<Vec<usize>, LllError> {
    if values.len() != inst.num_vars() {
        return Err(LllError::Invalid(format!("{} values for {} variables", values.len(), inst.num_vars())));
    }
    inst.violated(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workbench::generators::random_regular;

    fn r(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    fn sinkless_on_star() -> (Graph, LllInstance) {
        // node 0 of degree 4
        let g = Graph::new(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        let inst = sinkless_instance(&g);
        (g, inst)
    }

    #[test]
    fn sinkless_degree_four() {
        let (_, inst) = sinkless_on_star();
        let none = vec![None; 4];
        assert_eq!(inst.event_probability(0, &none).unwrap(), r(1, 16));
        // two edges already point at node 0, two unset
        let part = vec![Some(1), Some(1), None, None];
        assert_eq!(inst.event_probability(0, &part).unwrap(), r(1, 4));
        let away = vec![Some(0), None, None, None];
        assert_eq!(inst.event_probability(0, &away).unwrap(), r(0, 1));
        assert_eq!(inst.event_probability(1, &none).unwrap(), r(1, 2));
        assert_eq!(inst.dependency_degree(), 4);
    }

    #[test]
    fn table_matches_all_equal() {
        let (_, inst) = sinkless_on_star();
        // same event as a table: holds only at index of (1,1,1,1) = 15
        let mut t = vec![0u8; 2];
        t[1] = 0x80;
        let mut ev = inst.events.clone();
        ev[0].predicate = Predicate::Table(t);
        let tab = LllInstance::new(inst.variables.clone(), ev, None).unwrap();
        for mask in 0..81u32 {
            let vals: Vec<Option<u32>> = (0..4)
                .map(|i| match (mask / 3u32.pow(i)) % 3 {
                    0 => None,
                    v => Some(v - 1),
                })
                .collect();
            assert_eq!(
                tab.event_probability(0, &vals).unwrap(),
                inst.event_probability(0, &vals).unwrap()
            );
        }
    }

    #[test]
    fn mixed_radix_order() {
        // vbl = [0 (range 3), 1 (range 2)]; holds at x0 = 2, x1 = 1 -> index 5
        let vars = vec![
            Variable { owner: 0, range: 3, edge: None },
            Variable { owner: 0, range: 2, edge: None },
        ];
        let ev = Event {
            node: 0,
            vbl: vec![0, 1],
            predicate: Predicate::Table(vec![0b0010_0000]),
            prob_override: None,
        };
        let inst = LllInstance::new(vars, vec![ev], None).unwrap();
        assert!(inst.holds(0, &[Some(2), Some(1)]).unwrap());
        assert!(!inst.holds(0, &[Some(1), Some(1)]).unwrap());
        assert_eq!(inst.event_probability(0, &[None, None]).unwrap(), r(1, 6));
        assert_eq!(inst.event_probability(0, &[None, Some(1)]).unwrap(), r(1, 3));
    }

    #[test]
    fn budget_is_enforced() {
        let vars: Vec<Variable> = (0..3).map(|_| Variable { owner: 0, range: 200, edge: None }).collect();
        let ev = Event {
            node: 0,
            vbl: vec![0, 1, 2],
            predicate: Predicate::Table(vec![0; 1_000_000]),
            prob_override: None,
        };
        let inst = LllInstance::new(vars, vec![ev], None).unwrap();
        assert!(matches!(
            inst.event_probability(0, &[None, None, None]),
            Err(LllError::BudgetExceeded { required: 8_000_000, .. })
        ));
        assert_eq!(inst.event_probability(0, &[Some(0), None, None]).unwrap(), r(0, 1));
    }

    #[test]
    fn override_applies_only_unconditioned() {
        let (_, mut inst) = sinkless_on_star();
        inst.events[0].prob_override = Some(r(1, 16));
        assert_eq!(inst.event_probability(0, &[None; 4]).unwrap(), r(1, 16));
        assert_eq!(inst.event_probability(0, &[Some(1), None, None, None]).unwrap(), r(1, 8));
    }

    #[test]
    fn criteria_examples() {
        let g = random_regular(64, 10, 1).unwrap();
        let rep = check_criteria(&sinkless_instance(&g), Some(3)).unwrap();
        assert_eq!(rep.p, r(1, 1024));
        assert_eq!(rep.d, 10);
        assert!(rep.epd_ok && rep.epd2_ok);
        assert!(!rep.ped8_ok);
        assert!(rep.residual_ok);
        assert_eq!(rep.ped_lambda_ok, Some(false));
        // 14-regular fails p (ed)^3 < 1, 17-regular passes
        assert!(!ped_lambda_holds(&r(1, 1 << 14), 14, 3));
        assert!(ped_lambda_holds(&r(1, 1 << 17), 17, 3));
        assert!(!ped_lambda_holds(&r(1, 1 << 16), 16, 3));
        // 6-regular: e 2^-6 36 > 1
        assert!(!e_pow_times_lt_one(&(r(1, 64) * r(36, 1)), 1));
    }

    #[test]
    fn empty_instance_is_vacuous() {
        let inst = LllInstance::new(vec![], vec![], None).unwrap();
        let rep = check_criteria(&inst, None).unwrap();
        assert!(rep.p.is_zero() && rep.epd_ok);
        assert!(validate_assignment(&inst, &[]).unwrap().is_empty());
    }

    #[test]
    fn validator() {
        let g = Graph::new(3, &[(0, 1), (0, 2), (1, 2)]).unwrap();
        let inst = sinkless_instance(&g);
        // 0 -> 1 -> 2 -> 0
        let mut vals = vec![Some(0), Some(1), Some(0)];
        assert!(validate_assignment(&inst, &vals).unwrap().is_empty());
        vals[0] = None;
        assert!(matches!(validate_assignment(&inst, &vals), Err(LllError::Unset { var: 0 })));
        vals[0] = Some(2);
        assert!(matches!(validate_assignment(&inst, &vals), Err(LllError::OutOfRange { var: 0, .. })));
        // all edges into node 4
        let star = sinkless_on_star().1;
        assert_eq!(validate_assignment(&star, &[Some(1); 4]).unwrap(), vec![0]);
    }

    #[test]
    fn owner_must_be_local() {
        let g = Graph::new(3, &[(0, 1), (1, 2)]).unwrap();
        let mut inst = sinkless_instance(&g);
        inst.variables[1].owner = 0;
        assert!(matches!(
            LllInstance::new(inst.variables, inst.events, None),
            Err(LllError::Invalid(_))
        ));
    }

    #[test]
    fn json_roundtrip_and_sinkless_shorthand() {
        let text = r#"{
            "variables": [{"owner": 0, "range": 2, "edge": [0, 1]}, {"owner": 1, "range": 2, "edge": [1, 2]}],
            "events": [
                {"node": 0, "vbl": [0], "predicate": "sinkless"},
                {"node": 1, "vbl": [0, 1], "predicate": "sinkless"},
                {"node": 2, "vbl": [1], "predicate": {"table": "02"}, "probability": "1/2"}
            ]
        }"#;
        let inst = LllInstance::from_json(&serde_json::from_str(text).unwrap()).unwrap();
        assert_eq!(inst.events[1].predicate, Predicate::AllEqual(vec![0, 1]));
        assert_eq!(inst.events[0].predicate, Predicate::AllEqual(vec![1]));
        let back = LllInstance::from_json(&inst.to_json()).unwrap();
        assert_eq!(back.events, inst.events);
        assert_eq!(back.variables, inst.variables);
        assert!(LllInstance::from_json(&serde_json::json!({"variables": [], "events": [{"node": 0, "vbl": [], "predicate": {"table": "zz"}}]})).is_err());
    }
}
