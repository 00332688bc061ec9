//! Criterion benchmarks for the precursor pipeline; see `benches/`.
