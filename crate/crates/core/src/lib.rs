//! Simulation, learning and evaluation core for separation assurance between
//! heterogeneous fleets of small unmanned aircraft.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs and explicit seeds; file formats, the CLI and any
//! threading live in the `deconflict` companion crate.
//!
//! Module map:
//!
//! - [`scenario`]: waypoints, routes, fleet capability profiles, spawn law.
//! - [`sim`]: discrete-time world stepping, speed actions, NMAC/goal/timeout events.
//! - [`observation`]: normalized ownship and front-intruder observations.
//! - [`reward`]: the five-component per-step reward.
//! - [`nn`]: attention actor-critic network with hand-written reverse mode.
//! - [`ppo`]: GAE, clipped-surrogate loss, Adam and the per-fleet update loop.
//! - [`baselines`]: rule-based and uniform random controllers.
//! - [`metrics`]: NMAC classification, aggregation and time-based fairness.
//! - [`episode`]: runs one episode with any combination of fleet policies.
#![no_std]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod episode;
pub mod math;
pub mod metrics;
pub mod nn;
pub mod observation;
pub mod ppo;
pub mod reward;
pub mod scenario;
pub mod seed;
pub mod sim;

pub use episode::{run_episode, EpisodeOutcome, EpisodeSeeds, FleetPolicy, StepRecord};
pub use scenario::{FleetConfig, FleetId, ScenarioSpec};
pub use sim::{Action, AircraftState, WorldState};
