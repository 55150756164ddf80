//! Reward recovery for finite MDPs from ranked sets of demonstrator
//! trajectories.
//!
//! The central piece is the sum-of-margins ordinal regression solver in
//! [`ordinal`]: given feature expectations labelled with ordinal ranks, it
//! finds a weight vector `w` (and parallel threshold hyperplanes) that
//! maximizes the total separation between consecutive rank classes. The
//! recovered `w` doubles as a linear reward function over state features.
//!
//! Supporting machinery:
//!
//! * [`mdp`] — finite MDP representation, exact policy evaluation and value
//!   iteration, and a small counterexample MDP showing why expert-only
//!   reward recovery can hide parts of the true reward.
//! * [`features`] — feature maps, exact discounted feature expectations and
//!   empirical estimates from trajectories.
//! * [`baseline`] — the classic max-margin apprenticeship-learning loop used
//!   as a comparison baseline.
//! * [`gridworld`] — the 16x16 grid comparison experiment.
//! * [`roadnet`] — synthetic road-network pipeline: driver simulation,
//!   vacancy-based ranking, vertex-cut decomposition and per-cluster solves.
//! * [`io`] — file codecs (MDP JSON, trajectory files, mu CSV, solution
//!   JSON) and run manifests.

pub mod baseline;
pub mod features;
pub mod gridworld;
pub mod io;
pub mod mdp;
pub mod opt;
pub mod ordinal;
pub mod roadnet;

mod error;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
