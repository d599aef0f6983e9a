//! Benchmark-only crate; see `benches/benches.rs`. Holds no library code.
