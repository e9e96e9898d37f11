//! Criterion benchmarks for the rdpg solvers live in `benches/`.
