//! Criterion benchmarks for the quantized kernels and the search.
