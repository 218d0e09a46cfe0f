//! Benchmark-only crate; the targets live in `benches/core_benches.rs`.
//! Run with `cargo bench -p switchq-bench`.
