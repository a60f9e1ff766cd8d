//! Criterion benchmarks for the scoring, loss and ranking kernels; see
//! `benches/kernels.rs`. Run with `cargo bench -p kgsf-bench`.
