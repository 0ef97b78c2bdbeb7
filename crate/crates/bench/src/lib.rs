//! Criterion benchmarks for the grafourier pipeline live in `benches/`.
