//! Event-driven simulation of the d-class single-server queue under the
//! generalized c-mu rules and baseline policies, with scaled-process
//! construction and built-in self-checks.

pub mod engine;
pub mod scale;
pub mod streams;

pub use engine::{
    simulate, simulate_nonpreemptive, simulate_preemptive, simulate_static_priority, Policy,
    SimError, Trajectory,
};
pub use scale::{
    collapse_gap, scale_trajectory, systeq_residual, workload_check, workload_check_scale,
    ScaledRun,
};
pub use streams::{stream_id, RenewalStream, StreamKind};
