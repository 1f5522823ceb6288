//! Benchmarks for the `egns` solver live in `benches/`.
