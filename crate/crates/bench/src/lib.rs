//! Criterion benchmarks for `dimerwork` live under `benches/`.
