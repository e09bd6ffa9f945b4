//! Criterion benchmarks for `pfmatch` live in `benches/`.
