//! Experiment plumbing behind the `fkl` binary: configuration, field
//! construction and the analytic-versus-estimated validation suite.

pub mod config;
pub mod pipeline;
pub mod validate;
