//! Receding-horizon tree search for online 3D bin packing with a lookahead queue.
//!
//! The crate is layered bottom-up:
//!
//! - [`geometry`]: heightmap bin model, feasibility, transition, rewards.
//! - [`ems`] and [`actions`]: empty maximal spaces and the candidate action set.
//! - [`heuristics`]: one-step baselines (LSAH, OnlineBPH, MACS, DBL).
//! - [`distribution`] and [`stream`]: item-type statistics and synthetic non-stationary streams.
//! - [`critic`]: terminal value estimates and policy priors.
//! - [`search`]: shift-aware PUCT planner and its ablation baselines.
//! - [`harness`]: episodes, sliding-window evaluation, shift classification, theory checks.

pub mod actions;
pub mod critic;
pub mod distribution;
pub mod ems;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod heuristics;
pub mod search;
pub mod stream;

pub use error::{Error, Result};
