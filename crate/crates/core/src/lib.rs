//! CONGEST simulation, network decomposition by ball carving, and distributed
//! Lovász Local Lemma solvers with exact validators.

pub mod cluster;
pub mod carving;
pub mod coloring;
pub mod decomposition;
pub mod derandomizer;
pub mod engine;
pub mod graph;
pub mod lll;
pub mod math;
pub mod symmetry;
pub mod workbench;

pub use graph::{bfs_distances, components_under, load_graph, power_adjacent, DistanceOracle, Graph, GraphError, NodeId};
pub use engine::{run, run_with_tape, Bandwidth, BitString, EngineError, NodeCtx, NodeProgram, Payload, RoundMetrics, SimConfig, SimResult};
