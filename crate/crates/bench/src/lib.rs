//! Criterion benchmarks for the `safedeploy` crate live in `benches/`.
