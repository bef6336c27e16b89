//! Simulation and planning of coordinated container migration and base-station handover
//! for mobile users offloading to edge servers.
//!
//! A scenario (TOML) describes base stations, servers, links, application profiles and
//! users walking fixed routes. [`sim::run`] plays it forward under one of four planners
//! and records every request, outage and control action; [`report`] turns runs into
//! delay and downtime comparisons.
//!
//! The estimators, the placement solver and the trigger scheduler are generic over
//! [`Scalar`] (`f32` or `f64`); the simulator runs on `f64`, and the aliases below name
//! the `f64` instantiations.

// `!(x > 0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
pub mod latency;
pub mod migration;
pub mod model;
pub mod orchestrator;
pub mod planner;
pub mod radio;
pub mod report;
pub mod scalar;
pub mod scenarios;
pub mod sim;

pub use error::{Error, Result};
pub use model::{load_scenario, load_scenario_file, WorldState};
pub use planner::PlannerKind;
pub use scalar::Scalar;
pub use sim::{run, RunOutput};

pub type Breakdown = latency::DelayBreakdown<f64>;
pub type Estimate = migration::MigrationEstimate<f64>;
pub type Plan = orchestrator::MigrationPlan<f64>;
pub type Problem = planner::PlacementProblem<f64>;
pub type Solution = planner::PlacementSolution<f64>;
pub type Problem32 = planner::PlacementProblem<f32>;
pub type Solution32 = planner::PlacementSolution<f32>;
