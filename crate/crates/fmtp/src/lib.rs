pub mod analysis;
pub mod baselines;
pub mod benders;
pub mod bpbc;
pub mod columns;
pub mod instance_io;
pub mod lp_core;
pub mod milp_export;
pub mod model;
pub mod pricing;

/// Absolute tolerance used for cost/time comparisons throughout.
pub const EPS: f64 = 1e-6;
