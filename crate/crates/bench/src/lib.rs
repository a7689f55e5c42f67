//! Synthetic instances, metrics and experiment grids for the frgm matchers.

pub mod experiment;
pub mod metrics;
pub mod qap;
pub mod synth;

pub use experiment::{run_experiment, CellResult, GridConfig, Method};
pub use metrics::{accuracy, mean_error};
pub use qap::qap_cross_check;
pub use synth::{gen_deformed, gen_synthetic, Instance, Template, Warp};
