//! Shared workloads for the benchmarks.

use lcws::dag::{generate_irregular, generate_regular, CompDag};

/// A regular tree of the given fork depth.
pub fn regular(depth: u32) -> CompDag {
    generate_regular(depth).expect("benchmark depths fit")
}

/// An irregular tree with the default gap parameter.
pub fn irregular(depth: u32, seed: u64) -> CompDag {
    generate_irregular(depth, lcws::dag::DEFAULT_LAMBDA, seed).expect("benchmark depths fit")
}
