//! Age-of-information analysis of age-dependent random access under
//! frame-synchronous periodic updating.
//!
//! Every device generates a one-slot status update at each frame start and
//! contends for the shared collision channel only once its age reaches a
//! threshold, transmitting with a fixed or contention-adaptive probability.
//! The crate provides:
//!
//! - [`analytic`]: a frame-level Markov model — steady state of the tagged
//!   device's frame-start age, within-frame absorbing chains for the success
//!   slot, a two-unknown fixed point coupling them through the rival age
//!   law, and the closed-form network-wide average age.
//! - [`sim`]: a slot-accurate seeded Monte-Carlo simulator of the same
//!   protocol, plus an exhaustive per-frame oracle for cross-checking the
//!   chains.
//! - [`optimize`]: exhaustive searches for the threshold (and fixed
//!   transmit probability) minimizing the analytic average age, and the
//!   improvement over the zero-threshold baseline.

pub mod analytic;
pub mod model;
pub mod optimize;
pub mod sim;

pub use analytic::{analyze, AnalyticSolution, ModelError, SolverOptions};
pub use model::{AccessPolicy, ConfigError, ProtocolConfig};
pub use optimize::{compare_to_aira, optimize_delta, optimize_joint, SearchResult};
pub use sim::{run_once, run_replicated, SimConfig, SimReport};
