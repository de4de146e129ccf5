//! Linial color reduction followed by a greedy pass in color order, giving a
//! maximal independent set or a (Δ+1)-coloring of the simulated graph.

use std::sync::Arc;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};

use crate::engine::{run, EngineError, NodeCtx, NodeProgram, Payload, RoundMetrics, SimConfig};
use crate::graph::Graph;
use crate::math::{ceil_root, log2_ceil};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Goal {
    Mis,
    Coloring,
}

pub fn is_prime(x: u64) -> bool {
    if x < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= x {
        if x % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

fn next_prime(mut x: u64) -> u64 {
    while !is_prime(x) {
        x += 1;
    }
    x
}

/// Reduction steps `(q, d)` from `2^id_bits` colors; each step maps a color to
/// a pair `(a, f(a))` over `F_q` where `f` is the degree-`d` polynomial whose
/// coefficients are the base-`q` digits of the color.
pub fn linial_schedule(max_degree: usize, id_bits: u32) -> Vec<(u64, u32)> {
    let deg = max_degree.max(1) as u64;
    let mut m = BigUint::one() << id_bits.max(1);
    let mut out = Vec::new();
    loop {
        let mut best: Option<(u64, u32)> = None;
        let m_bits = m.bits() as u32;
        for d in 1..=m_bits.max(1) {
            let root = if m_bits <= 63 {
                ceil_root(m.to_u64().unwrap() as usize, d + 1) as u64
            } else {
                // ceil(2^{m_bits/(d+1)}), slightly generous
                let e = m_bits.div_ceil(d + 1);
                if e >= 63 {
                    continue;
                }
                1u64 << e
            };
            let q = next_prime((deg * d as u64 + 1).max(root).max(2));
            if best.is_none_or(|(bq, _)| q < bq) {
                best = Some((q, d));
            }
        }
        let (q, d) = best.expect("at least one candidate");
        let next = BigUint::from(q) * BigUint::from(q);
        if next >= m {
            return out;
        }
        out.push((q, d));
        m = next;
    }
}

fn digits(x: &BigUint, q: u64, count: u32) -> Vec<u64> {
    let qb = BigUint::from(q);
    let mut x = x.clone();
    (0..=count)
        .map(|_| {
            let (quot, rem) = x.div_rem(&qb);
            x = quot;
            rem.to_u64().unwrap()
        })
        .collect()
}

fn eval_poly(coef: &[u64], a: u64, q: u64) -> u64 {
    coef.iter()
        .rev()
        .fold(0u128, |acc, &c| (acc * a as u128 + c as u128) % q as u128) as u64
}

/// One reduction step for a node with color `x` among neighbor colors `ys`.
pub fn linial_step(x: &BigUint, ys: &[BigUint], q: u64, d: u32) -> BigUint {
    let fx = digits(x, q, d);
    let fys: Vec<Vec<u64>> = ys.iter().map(|y| digits(y, q, d)).collect();
    for a in 0..q {
        let v = eval_poly(&fx, a, q);
        if fys.iter().all(|fy| eval_poly(fy, a, q) != v) {
            return BigUint::from(a * q + v);
        }
    }
    unreachable!("q exceeds the number of blocked points")
}

#[derive(Clone, Debug)]
pub enum SymMsg {
    Color { value: BigUint, width: u64 },
    Decided { value: u32, width: u64 },
}

impl Payload for SymMsg {
    fn bits(&self) -> u64 {
        // one tag bit
        1 + match self {
            SymMsg::Color { width, .. } | SymMsg::Decided { width, .. } => *width,
        }
    }
}

struct Plan {
    goal: Goal,
    schedule: Vec<(u64, u32)>,
    widths: Vec<u64>,
    decision_width: u64,
}

pub struct SymProgram {
    plan: Arc<Plan>,
    color: BigUint,
    final_color: u64,
    nbr_color: Vec<u64>,
    nbr_decided: Vec<Option<u32>>,
    decided: Option<u32>,
}

impl SymProgram {
    fn try_decide(&mut self, out: &mut [Option<SymMsg>]) {
        if self.decided.is_some() {
            return;
        }
        let ready = self
            .nbr_color
            .iter()
            .zip(&self.nbr_decided)
            .all(|(&c, d)| c > self.final_color || d.is_some());
        if !ready {
            return;
        }
        let value = match self.plan.goal {
            Goal::Mis => {
                let blocked = self.nbr_decided.iter().any(|d| *d == Some(1));
                (!blocked) as u32
            }
            Goal::Coloring => {
                let mut used: Vec<u32> = self.nbr_decided.iter().flatten().copied().collect();
                used.sort_unstable();
                used.dedup();
                let mut c = 0;
                for u in used {
                    if u == c {
                        c += 1;
                    } else if u > c {
                        break;
                    }
                }
                c
            }
        };
        self.decided = Some(value);
        for slot in out.iter_mut() {
            *slot = Some(SymMsg::Decided {
                value,
                width: self.plan.decision_width,
            });
        }
    }
}

impl NodeProgram for SymProgram {
    type Msg = SymMsg;
    type Output = (u32, u64);

    fn init(&mut self, ctx: &mut NodeCtx, out: &mut [Option<SymMsg>]) {
        self.color = ctx.id.to_biguint();
        self.nbr_color = vec![0; ctx.degree()];
        self.nbr_decided = vec![None; ctx.degree()];
        for slot in out.iter_mut() {
            *slot = Some(SymMsg::Color {
                value: self.color.clone(),
                width: self.plan.widths[0],
            });
        }
    }

    fn on_round(&mut self, ctx: &mut NodeCtx, inbox: &[Option<SymMsg>], out: &mut [Option<SymMsg>]) {
        let steps = self.plan.schedule.len() as u64;
        let r = ctx.round;
        if r <= steps + 1 {
            let ys: Vec<BigUint> = inbox
                .iter()
                .map(|m| match m {
                    Some(SymMsg::Color { value, .. }) => value.clone(),
                    _ => panic!("missing color message"),
                })
                .collect();
            if r <= steps {
                let (q, d) = self.plan.schedule[r as usize - 1];
                self.color = linial_step(&self.color, &ys, q, d);
                for slot in out.iter_mut() {
                    *slot = Some(SymMsg::Color {
                        value: self.color.clone(),
                        width: self.plan.widths[r as usize],
                    });
                }
                return;
            }
            self.final_color = self.color.to_u64().expect("reduced color fits");
            for (p, y) in ys.iter().enumerate() {
                self.nbr_color[p] = y.to_u64().expect("reduced color fits");
            }
        } else {
            for (p, m) in inbox.iter().enumerate() {
                if let Some(SymMsg::Decided { value, .. }) = m {
                    self.nbr_decided[p] = Some(*value);
                }
            }
        }
        self.try_decide(out);
    }

    fn finished(&self) -> bool {
        self.decided.is_some()
    }

    fn output(&self) -> (u32, u64) {
        (self.decided.unwrap_or(u32::MAX), self.final_color)
    }
}

#[derive(Clone, Debug)]
pub struct SymmetryResult {
    /// MIS membership (0/1) or color, per node.
    pub values: Vec<u32>,
    /// Colors after the reduction steps; a proper coloring of the graph.
    pub reduced_colors: Vec<u64>,
    pub reduction_steps: usize,
    pub metrics: RoundMetrics,
}

pub fn solve(g: &Graph, goal: Goal, cfg: &SimConfig) -> Result<SymmetryResult, EngineError> {
    let schedule = linial_schedule(g.max_degree(), g.id_bits());
    let mut widths = vec![g.id_bits().max(1) as u64];
    for &(q, _) in &schedule {
        widths.push(2 * log2_ceil(q as usize) as u64);
    }
    let decision_width = match goal {
        Goal::Mis => 1,
        Goal::Coloring => log2_ceil(g.max_degree() + 1) as u64,
    };
    let plan = Arc::new(Plan {
        goal,
        schedule,
        widths,
        decision_width,
    });
    let steps = plan.schedule.len();
    let res = run(
        g,
        |_| SymProgram {
            plan: plan.clone(),
            color: BigUint::zero(),
            final_color: 0,
            nbr_color: vec![],
            nbr_decided: vec![],
            decided: None,
        },
        cfg,
    )?;
    Ok(SymmetryResult {
        values: res.outputs.iter().map(|o| o.0).collect(),
        reduced_colors: res.outputs.iter().map(|o| o.1).collect(),
        reduction_steps: steps,
        metrics: res.metrics,
    })
}

pub fn maximal_independent_set(g: &Graph, cfg: &SimConfig) -> Result<(Vec<bool>, RoundMetrics), EngineError> {
    let r = solve(g, Goal::Mis, cfg)?;
    Ok((r.values.iter().map(|&v| v == 1).collect(), r.metrics))
}

/// Proper coloring with at most `Δ+1` colors.
pub fn greedy_coloring(g: &Graph, cfg: &SimConfig) -> Result<(Vec<u32>, RoundMetrics), EngineError> {
    let r = solve(g, Goal::Coloring, cfg)?;
    Ok((r.values, r.metrics))
}

pub fn is_maximal_independent(g: &Graph, set: &[bool]) -> bool {
    (0..g.n()).all(|v| {
        let inside = g.neighbors(v).iter().filter(|&&u| set[u]).count();
        if set[v] {
            inside == 0
        } else {
            inside > 0
        }
    })
}

pub fn is_proper_coloring(g: &Graph, colors: &[u32]) -> bool {
    g.edges().iter().all(|&(u, v)| colors[u] != colors[v])
}
