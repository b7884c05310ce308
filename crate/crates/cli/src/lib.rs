//! Library surface of the `bundlenet` command-line tool: configuration
//! schemas, experiment runner, SVG plotting, and the output manifest.
//! The binary in `main.rs` is a thin argument-parsing wrapper.

pub mod config;
pub mod manifest;
pub mod plot;
pub mod runner;
