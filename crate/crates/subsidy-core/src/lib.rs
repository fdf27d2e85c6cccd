//! Numerical toolkit for a two-firm ecosystem-subsidy dynamic game.
//!
//! An incumbent (share `m`) and an entrant (share `1 − m`) choose per-unit subsidies
//! every period.  The entrant also earns an ecosystem complementarity value
//! `Ψ_E(1 − m)` from adjacent markets.  The crate solves for the Markov perfect
//! equilibrium by value-function iteration on a share grid, simulates seeded share
//! paths, sweeps parameters for bifurcations, computes welfare geometry, and runs a
//! two-type separating-signal analysis.

pub mod bifurcation;
pub mod complementarity;
pub mod config;
pub mod error;
pub mod job;
pub mod model;
pub mod numerics;
pub mod selfcheck;
pub mod signaling;
pub mod simulate;
pub mod solver;
pub mod welfare;

pub use error::{Error, Result};
