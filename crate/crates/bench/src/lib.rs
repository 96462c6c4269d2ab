//! Criterion benchmarks for the sampler, projection and quadrature stages.
//!
//! Run with `cargo bench -p inducement-bench`.
