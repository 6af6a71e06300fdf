//! Criterion benchmarks for `focustrack-core` live under `benches/`.
