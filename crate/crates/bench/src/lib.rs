//! Criterion benchmarks for the fusion testbed live in `benches/`.
