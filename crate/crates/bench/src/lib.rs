//! Criterion benchmarks for the core crate; run with `cargo bench -p psdfilter-bench`.
