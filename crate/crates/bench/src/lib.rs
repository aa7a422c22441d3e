//! Experiment runner for the boundary-aware optimizers in `dsbo`: seeded,
//! replicated runs written as trace files, and percentile aggregation.

pub mod aggregate;
pub mod config;
pub mod demo;
pub mod experiment;
pub mod trace_io;
