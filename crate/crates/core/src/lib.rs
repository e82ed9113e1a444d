//! Multiclass single-server scheduling under moderate-deviation scaling:
//! model configuration, path-space calculus, the minimizing curve, the
//! limiting differential game, event-driven simulation, and risk-sensitive
//! cost estimation.

pub mod experiment;
pub mod game;
pub mod mincurve;
pub mod model;
pub mod paths;
pub mod rscost;
pub mod sim;
