//! Shared fixtures for the criterion benchmarks.

use l2approx::{assemble_laplacian, examples, QuotientSpec, RingMatrix};

/// `Δ_j` of a built-in example.
pub fn laplacian(example: &str, j: usize) -> RingMatrix {
    let ex = examples::example(example).expect("built-in example");
    assemble_laplacian(&ex.complex, j).expect("Laplacian assembles")
}

/// Level `i` (0-based) of a named tower of a built-in example.
pub fn level(example: &str, tower: &str, i: usize) -> QuotientSpec {
    let ex = examples::example(example).expect("built-in example");
    ex.complex.tower(tower).expect("tower exists")[i].clone()
}
