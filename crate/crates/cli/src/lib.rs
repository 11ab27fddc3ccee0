//! Scenario files, run artifacts, sweeps and validation for the `rampsim` binary.

// NaN-rejecting comparisons are written `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod suites;
pub mod sweep;

pub use config::{parse_config, render_config, ConfigError, ConfigText};
pub use output::{run_scenario, RunArtifact, RunError};
pub use suites::{validate, Suite, SuiteReport};
pub use sweep::{run_sweep, SweepRow, SweepSpec, VaryKey};

/// Exit status when a run aborts on a collision.
pub const EXIT_COLLISION: u8 = 3;
/// Exit status when `validate` finds a failing suite.
pub const EXIT_VALIDATION: u8 = 4;
