//! Criterion benchmarks for the symbolic checks and the time stepper; see `benches/`.
