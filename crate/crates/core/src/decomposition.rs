//! Network decompositions built from repeated ball carving, and their
//! validator.

use serde::Serialize;
use thiserror::Error;

use crate::carving::{carve_distance_k, carve_fast, CarveError, CarveParamsC, CarveParamsE, CarveResult};
use crate::cluster::{validate_collection, ClusterCollection, ClusterError};
use crate::engine::SimConfig;
use crate::graph::Graph;
use crate::math::{ceil_root, log2_ceil};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ClassStats {
    pub clusters: usize,
    pub nodes: usize,
    pub beta: usize,
    pub kappa: usize,
    pub beta_bound: u64,
    pub kappa_bound: u64,
    /// Unclustered nodes left after this class.
    pub residue: usize,
    pub rounds: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkDecomposition {
    pub k: usize,
    pub classes: Vec<ClusterCollection>,
    pub stats: Vec<ClassStats>,
}

impl NetworkDecomposition {
    pub fn colors(&self) -> usize {
        self.classes.len()
    }

    pub fn rounds(&self) -> u64 {
        self.stats.iter().map(|s| s.rounds).sum()
    }

    /// Class and cluster index of every node.
    pub fn assignment(&self, n: usize) -> Vec<Option<(usize, usize)>> {
        let mut a = vec![None; n];
        for (ci, cc) in self.classes.iter().enumerate() {
            for (i, c) in cc.clusters.iter().enumerate() {
                for &v in &c.members {
                    a[v] = Some((ci, i));
                }
            }
        }
        a
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "k": self.k,
            "classes": self.classes.iter().map(ClusterCollection::to_json).collect::<Vec<_>>(),
            "stats": self.stats,
        })
    }

    /// Parses the JSON form; `stats` are not read back.
    pub fn from_json(g: &Graph, value: &serde_json::Value) -> Result<Self, ClusterError> {
        let k = value["k"]
            .as_u64()
            .ok_or_else(|| ClusterError::Format("missing integer field k".into()))? as usize;
        let classes = value["classes"]
            .as_array()
            .ok_or_else(|| ClusterError::Format("missing array field classes".into()))?
            .iter()
            .map(|c| ClusterCollection::from_json(g, c))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(NetworkDecomposition {
            k,
            classes,
            stats: vec![],
        })
    }
}

#[derive(Debug, Error)]
pub enum DecompositionError {
    #[error("carving: {0}")]
    Carve(#[from] CarveError),
    #[error("iteration {iteration} clustered {clustered} of {remaining} remaining nodes, less than half")]
    InsufficientProgress {
        iteration: usize,
        clustered: usize,
        remaining: usize,
    },
    #[error("{remaining} nodes left unclustered after {classes} classes")]
    ResidueLeft { remaining: usize, classes: usize },
    #[error("partition violated: node {node} is in no class")]
    Missing { node: usize },
    #[error("partition violated: node {node} is in classes {a} and {b}")]
    Overlap { node: usize, a: usize, b: usize },
    #[error("class {class}: {source}")]
    InvalidClass {
        class: usize,
        #[source]
        source: ClusterError,
    },
    #[error("class {class}: two clusters at distance {distance}, must exceed {k}")]
    TooClose { class: usize, distance: u32, k: usize },
    #[error("lambda must be between 1 and {max}, got {lambda}")]
    BadLambda { lambda: usize, max: usize },
}

fn class_from(
    g: &Graph,
    class: usize,
    r: &CarveResult,
    beta_bound: u64,
    kappa_bound: u64,
) -> Result<ClassStats, DecompositionError> {
    let st = validate_collection(g, &r.collection).map_err(|source| DecompositionError::InvalidClass { class, source })?;
    Ok(ClassStats {
        clusters: r.collection.len(),
        nodes: r.collection.clustered(),
        beta: st.beta,
        kappa: st.kappa,
        beta_bound,
        kappa_bound,
        residue: r.dead.len(),
        rounds: r.rounds(),
    })
}

pub fn decompose_logn(g: &Graph, k: usize, cfg: &SimConfig) -> Result<NetworkDecomposition, DecompositionError> {
    decompose_logn_bounded(g, k, None, cfg)
}

/// Carves with `x = 2` on the unclustered nodes until none are left.
/// `n_bound` replaces `g.n()` in the carving parameters when larger.
pub fn decompose_logn_bounded(
    g: &Graph,
    k: usize,
    n_bound: Option<usize>,
    cfg: &SimConfig,
) -> Result<NetworkDecomposition, DecompositionError> {
    let n_param = n_bound.unwrap_or(g.n()).max(g.n());
    let params = CarveParamsE::new(n_param, 2, k);
    let mut remaining: Vec<usize> = (0..g.n()).collect();
    let mut nd = NetworkDecomposition {
        k,
        classes: vec![],
        stats: vec![],
    };
    while !remaining.is_empty() {
        let r = carve_distance_k(g, &remaining, k, 2, Some(n_param), cfg)?;
        let clustered = r.collection.clustered();
        if 2 * clustered < remaining.len() {
            return Err(DecompositionError::InsufficientProgress {
                iteration: nd.classes.len(),
                clustered,
                remaining: remaining.len(),
            });
        }
        nd.stats.push(class_from(g, nd.classes.len(), &r, params.beta_bound, params.kappa_bound)?);
        remaining = r.dead;
        nd.classes.push(r.collection);
    }
    Ok(nd)
}

/// `lambda` classes carved with `x = ceil(n^(1/lambda))`; levels-and-tokens
/// carving for `k = 1`, distance-`k` carving otherwise.
pub fn decompose_few_colors(
    g: &Graph,
    lambda: usize,
    k: usize,
    cfg: &SimConfig,
) -> Result<NetworkDecomposition, DecompositionError> {
    let n = g.n();
    let max = log2_ceil(n).max(1) as usize;
    if lambda == 0 || lambda > max {
        return Err(DecompositionError::BadLambda { lambda, max });
    }
    let x = ceil_root(n, lambda as u32).max(2) as u64;
    let (beta_bound, kappa_bound) = if k == 1 {
        let p = CarveParamsC::new(n, x);
        // each step grows the radius by at most one
        (p.phases * p.steps, 4 * p.phases)
    } else {
        let p = CarveParamsE::new(n, x, k);
        (p.beta_bound, p.kappa_bound)
    };
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut nd = NetworkDecomposition {
        k,
        classes: vec![],
        stats: vec![],
    };
    for _ in 0..lambda {
        if remaining.is_empty() {
            break;
        }
        let r = if k == 1 {
            carve_fast(g, &remaining, x, None, cfg)?
        } else {
            carve_distance_k(g, &remaining, k, x, None, cfg)?
        };
        nd.stats.push(class_from(g, nd.classes.len(), &r, beta_bound, kappa_bound)?);
        remaining = r.dead;
        nd.classes.push(r.collection);
    }
    if !remaining.is_empty() {
        return Err(DecompositionError::ResidueLeft {
            remaining: remaining.len(),
            classes: nd.classes.len(),
        });
    }
    Ok(nd)
}

#[derive(Clone, Debug, Serialize)]
pub struct DecompositionReport {
    pub colors: usize,
    pub max_beta: usize,
    pub max_kappa: usize,
    pub min_distance: Option<u32>,
}

/// Partition totality, per-class collection validity and per-class cluster
/// distance strictly above `k`.
pub fn validate_decomposition(g: &Graph, nd: &NetworkDecomposition) -> Result<DecompositionReport, DecompositionError> {
    let mut owner: Vec<Option<usize>> = vec![None; g.n()];
    for (ci, cc) in nd.classes.iter().enumerate() {
        for c in &cc.clusters {
            for &v in &c.members {
                if v >= g.n() {
                    return Err(DecompositionError::InvalidClass {
                        class: ci,
                        source: ClusterError::NodeOutOfRange { cluster: 0, node: v },
                    });
                }
                if let Some(a) = owner[v] {
                    return Err(DecompositionError::Overlap { node: v, a, b: ci });
                }
                owner[v] = Some(ci);
            }
        }
    }
    if let Some(node) = owner.iter().position(Option::is_none) {
        return Err(DecompositionError::Missing { node });
    }
    let mut report = DecompositionReport {
        colors: nd.classes.len(),
        max_beta: 0,
        max_kappa: 0,
        min_distance: None,
    };
    for (ci, cc) in nd.classes.iter().enumerate() {
        let st = validate_collection(g, cc).map_err(|source| DecompositionError::InvalidClass { class: ci, source })?;
        if let Some(d) = st.min_cluster_distance {
            if d as usize <= nd.k {
                return Err(DecompositionError::TooClose {
                    class: ci,
                    distance: d,
                    k: nd.k,
                });
            }
            report.min_distance = Some(report.min_distance.map_or(d, |m| m.min(d)));
        }
        report.max_beta = report.max_beta.max(st.beta);
        report.max_kappa = report.max_kappa.max(st.kappa);
    }
    Ok(report)
}
