//! JSON-configured batch runs of the serrin-core experiments, writing CSV,
//! JSON and SVG artifacts plus a reproducibility manifest.

pub mod config;
pub mod plot;
pub mod run;

pub use config::{Command, ConfigError, FamilyMember, RunConfig, SolverSettings};
pub use plot::{emit_plot, render_svg, PlotOutcome, PlotPoint};
pub use run::{output_dir, run, RunOptions, RunOutcome, EXIT_FAILED, EXIT_INVALID, EXIT_OK};

/// Environment variable overriding the output root.
pub const OUT_ENV: &str = "SERRIN_LAB_OUT";
