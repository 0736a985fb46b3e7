//! Criterion benchmarks for the simulation hot paths live in `benches/`.
