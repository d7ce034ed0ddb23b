//! Benchmarks for the core kernels live in benches/.
