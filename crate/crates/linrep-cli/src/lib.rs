//! Experiment driver: JSON configs in, CSV/JSON artifacts out.
//!
//! Exposed as a library so tests (and other tools) can run experiments
//! in-process; the `linrep` binary is a thin command-line front end.

pub mod compare;
pub mod config;
pub mod runner;
