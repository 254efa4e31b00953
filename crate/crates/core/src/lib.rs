//! Simulation and analysis toolkit for flocking models in which each agent
//! pays attention to its neighbors by *rank* (nearest, second-nearest, ...)
//! rather than by metric distance.
//!
//! The crate covers the full pipeline:
//!
//! * [`ensemble`] / [`weights`] / [`topology`]: agent states, interaction
//!   weight families, and the rank-based communication matrix.
//! * [`graph`]: connectivity analysis of the induced digraph and consensus
//!   prediction from its left null vector.
//! * [`dynamics`]: RK4 integration with per-step topology rebuilds, switch
//!   detection, and optional bisection refinement of switch times.
//! * [`diagnostics`]: flocking indicators (max speed, velocity diameter,
//!   position fluctuation, momentum) and hull/bound checks.
//! * [`scenarios`]: built-in initial configurations, including an analytically
//!   solvable oscillator whose return map is computed to high precision.
//! * [`meanfield`]: smoothed-separation kinetic field, self-consistent
//!   particle runs, and exact 1-Wasserstein distances between empirical
//!   measures.
//! * [`hydro`]: 1-D Lagrangian hydrodynamic solver with mass-weighted ranks
//!   and an exponential velocity-diameter decay check.
//! * [`swarm`]: self-propelled swarms with Morse repulsion and rank-based
//!   attraction, plus pattern metrics (polarization, milling, clusters).
//!
//! All randomness is seeded explicitly (ChaCha); identical seeds give
//! bit-identical results.

pub mod diagnostics;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod graph;
pub mod hydro;
pub mod meanfield;
pub mod scenarios;
pub mod swarm;
pub mod topology;
pub mod weights;

mod math;

pub use ensemble::AgentEnsemble;
pub use error::{Error, Result};
pub use topology::Topology;
pub use weights::WeightFunction;
