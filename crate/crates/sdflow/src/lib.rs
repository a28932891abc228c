//! Command-line experiments for score-difference flow: TOML configuration,
//! CSV input and output, and the experiment harness built on `sdflow-core`.

pub mod config;
pub mod harness;
pub mod io;
