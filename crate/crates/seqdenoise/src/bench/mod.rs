//! Benchmarks.
pub mod sudoku;
pub mod evenpixels;
