//! Planning and execution toolkit for a two-worker (robot + human) process.
//!
//! The crate is organized around a task/action split: symbolic tasks are
//! sequenced, assigned, and scheduled on flexible timelines backed by a
//! simple temporal network, while each robot task is turned into concrete
//! grid motions by a multi-goal motion planner just before execution.
//!
//! Modules:
//! - [`model`]: shared domain types (tasks, state variables, tokens,
//!   timelines, synergy coefficients, cost vectors).
//! - [`domain`]: problem construction and the mosaic benchmark family.
//! - [`temporal`]: the simple temporal network under the timelines.
//! - [`planner`]: flaw-driven plan synthesis with a Pareto fringe.
//! - [`oracle`]: brute-force references used by tests and acceptance runs.
//! - [`motion`]: grid workspace, goal graphs, multi-goal path planning.
//! - [`sim`]: discrete-event execution with a stochastic human, safety
//!   slowdowns, replanning, and collaboration metrics.
//!
//! The crate is `no_std` (with `alloc`); everything that touches files,
//! clocks, or a terminal lives in the companion CLI crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod domain;
pub mod model;
pub mod motion;
pub mod oracle;
pub mod planner;
pub mod sim;
pub mod temporal;

pub use model::{
    ControllabilityTag, CostVector, DurationInterval, FlexibleTimeline, SynergyMatrix, TaskDef,
    Token, WorkerId,
};
