//! Criterion benchmarks for the mesh, solve and diagnostics pipeline; see `benches/`.
