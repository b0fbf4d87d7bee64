//! Benchmark harness for KS matrix multiplication: the pattern grid, timed
//! runs of every backend, and the statistics computed from them.

pub mod analyze;
pub mod cli;
pub mod error;
pub mod grid;
pub mod record;
pub mod report;
pub mod runner;
pub mod verify;

pub use analyze::{analyze, fit_log_speedup, AnalysisOptions, AnalysisReport, Regression};
pub use error::{BenchError, Result};
pub use grid::{generate_grid, grid_stats, GridSpec, GridStats};
pub use record::{read_records, write_records, BenchRecord, CsvAppender, Format};
pub use runner::{run_bench, BenchConfig};
