//! Shared fixtures for the benchmarks.

use netdecomp::lll::{sinkless_instance, LllInstance};
use netdecomp::workbench::generators::random_regular;
use netdecomp::Graph;

pub fn regular(n: usize, d: usize) -> Graph {
    random_regular(n, d, 1).expect("n * d is even")
}

/// Sinkless orientation on a random `d`-regular graph.
pub fn sinkless(n: usize, d: usize) -> (Graph, LllInstance) {
    let g = regular(n, d);
    let inst = sinkless_instance(&g);
    (g, inst)
}
