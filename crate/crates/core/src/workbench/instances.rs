//! LLL instance builders: sinkless orientation, synthetic table instances
//! with an exact target probability, and small rigged fixtures.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;
use crate::lll::{sinkless_instance, Event, LllError, LllInstance, Predicate, Variable};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceKind {
    Sinkless,
    /// One event per node over its incident edge variables plus `private`
    /// variables of its own, all of range `range`. The event holds on the
    /// first `p * range^k` assignments in mixed-radix order.
    Synthetic { p: String, range: u32, private: usize },
    /// One event over one binary variable, holding on value 1.
    RiggedSingle,
    /// Two events sharing a variable of range 4.
    RiggedDouble,
    /// A cycle of `n` events over range-4 variables, each event holding on
    /// one random joint value of its two variables. Ignores the graph.
    RiggedCycle { n: usize, seed: u64 },
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("node {node} has no incident edge")]
    Isolated { node: usize },
    #[error("bad probability {0:?}")]
    BadProbability(String),
    #[error("probability {p} is not a multiple of 1/{outcomes}")]
    Inexact { p: String, outcomes: u64 },
    #[error("table with {0} entries is too large")]
    TooLarge(u64),
    #[error(transparent)]
    Lll(#[from] LllError),
}

pub fn make_instance(kind: &InstanceKind, g: &Graph) -> Result<LllInstance, InstanceError> {
    match kind {
        InstanceKind::Sinkless => {
            if let Some(node) = (0..g.n()).find(|&v| g.degree(v) == 0) {
                return Err(InstanceError::Isolated { node });
            }
            Ok(sinkless_instance(g))
        }
        InstanceKind::Synthetic { p, range, private } => synthetic(g, p, *range, *private),
        InstanceKind::RiggedSingle => Ok(LllInstance::new(
            vec![Variable { owner: 0, range: 2, edge: None }],
            vec![all_equal(0, vec![0], vec![1])],
            None,
        )?),
        InstanceKind::RiggedDouble => Ok(LllInstance::new(
            (0..3).map(|i| Variable { owner: i.min(1), range: 4, edge: None }).collect(),
            vec![all_equal(0, vec![0, 1], vec![0, 0]), all_equal(1, vec![1, 2], vec![0, 0])],
            None,
        )?),
        InstanceKind::RiggedCycle { n, seed } => rigged_cycle(*n, *seed),
    }
}

fn all_equal(node: usize, vbl: Vec<usize>, targets: Vec<u32>) -> Event {
    Event {
        node,
        vbl,
        predicate: Predicate::AllEqual(targets),
        prob_override: None,
    }
}

pub fn parse_probability(p: &str) -> Result<BigRational, InstanceError> {
    let bad = || InstanceError::BadProbability(p.to_string());
    let (num, den) = match p.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (p.trim(), "1"),
    };
    let num: BigInt = num.parse().map_err(|_| bad())?;
    let den: BigInt = den.parse().map_err(|_| bad())?;
    if den <= BigInt::from(0) || num < BigInt::from(0) || num > den {
        return Err(bad());
    }
    Ok(BigRational::new(num, den))
}

fn synthetic(g: &Graph, p: &str, range: u32, private: usize) -> Result<LllInstance, InstanceError> {
    let target = parse_probability(p)?;
    let mut variables: Vec<Variable> = g
        .edges()
        .iter()
        .map(|&(u, v)| Variable {
            owner: u.min(v),
            range,
            edge: Some((u.min(v), u.max(v))),
        })
        .collect();
    let mut vbl = vec![Vec::new(); g.n()];
    for (x, &(u, v)) in g.edges().iter().enumerate() {
        vbl[u].push(x);
        vbl[v].push(x);
    }
    let mut events = Vec::with_capacity(g.n());
    for (v, mut xs) in vbl.into_iter().enumerate() {
        for _ in 0..private {
            xs.push(variables.len());
            variables.push(Variable { owner: v, range, edge: None });
        }
        let outcomes = (range as u64)
            .checked_pow(xs.len() as u32)
            .filter(|&o| o <= 1 << 24)
            .ok_or(InstanceError::TooLarge(u64::MAX))?;
        let bad = target.clone() * BigRational::from_integer(outcomes.into());
        if !bad.is_integer() {
            return Err(InstanceError::Inexact {
                p: p.to_string(),
                outcomes,
            });
        }
        let bad = bad.to_integer().to_u64().expect("count fits");
        let mut table = vec![0u8; outcomes.div_ceil(8) as usize];
        for i in 0..bad {
            table[(i / 8) as usize] |= 1 << (i % 8);
        }
        events.push(Event {
            node: v,
            vbl: xs,
            predicate: Predicate::Table(table),
            prob_override: None,
        });
    }
    Ok(LllInstance::new(variables, events, Some((g.ids().to_vec(), g.id_bits())))?)
}

fn rigged_cycle(n: usize, seed: u64) -> Result<LllInstance, InstanceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let variables = (0..n).map(|i| Variable { owner: i, range: 4, edge: None }).collect();
    let events = (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            let mut vbl = vec![i, j];
            vbl.sort_unstable();
            vbl.dedup();
            let targets = vbl.iter().map(|_| rng.gen_range(0..4)).collect();
            all_equal(i, vbl, targets)
        })
        .collect();
    Ok(LllInstance::new(variables, events, None)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lll::check_criteria;
    use crate::workbench::generators::{path, random_regular};

    fn r(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    #[test]
    fn sinkless_probabilities() {
        let g = random_regular(32, 10, 3).unwrap();
        let inst = make_instance(&InstanceKind::Sinkless, &g).unwrap();
        for e in 0..32 {
            assert_eq!(inst.event_probability(e, &vec![None; inst.num_vars()]).unwrap(), r(1, 1024));
        }
        let lonely = Graph::new(3, &[(0, 1)]).unwrap();
        assert!(matches!(
            make_instance(&InstanceKind::Sinkless, &lonely),
            Err(InstanceError::Isolated { node: 2 })
        ));
    }

    #[test]
    fn synthetic_hits_target() {
        let kind = InstanceKind::Synthetic {
            p: "1/8".into(),
            range: 2,
            private: 3,
        };
        let inst = make_instance(&kind, &path(1).unwrap()).unwrap();
        assert_eq!(inst.max_probability().unwrap(), r(1, 8));
        let kind = InstanceKind::Synthetic {
            p: "1/16".into(),
            range: 4,
            private: 1,
        };
        let inst = make_instance(&kind, &path(4).unwrap()).unwrap();
        for e in 0..4 {
            assert_eq!(inst.event_probability(e, &vec![None; inst.num_vars()]).unwrap(), r(1, 16), "event {e}");
        }
        let kind = InstanceKind::Synthetic {
            p: "1/64".into(),
            range: 4,
            private: 1,
        };
        assert!(matches!(make_instance(&kind, &path(3).unwrap()), Err(InstanceError::Inexact { .. })));
        assert!(parse_probability("3/2").is_err());
        assert!(parse_probability("x").is_err());
    }

    #[test]
    fn rigged_fixtures() {
        let g = path(1).unwrap();
        let one = make_instance(&InstanceKind::RiggedSingle, &g).unwrap();
        assert_eq!((one.num_events(), one.num_vars()), (1, 1));
        assert_eq!(one.max_probability().unwrap(), r(1, 2));
        let two = make_instance(&InstanceKind::RiggedDouble, &g).unwrap();
        let c = check_criteria(&two, None).unwrap();
        assert_eq!((c.p.clone(), c.d), (r(1, 16), 1));
        assert!(c.residual_ok);
        let cyc = make_instance(&InstanceKind::RiggedCycle { n: 6, seed: 1 }, &g).unwrap();
        assert_eq!(cyc.dependency_degree(), 2);
        assert!(check_criteria(&cyc, None).unwrap().residual_ok);
    }
}
