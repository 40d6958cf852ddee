//! Singular stochastic delay equations solved pathwise as rough delay
//! equations.
//!
//! The pipeline runs from Brownian samples ([`noise`]) through delayed
//! rough-path lifts ([`roughpath`]) and controlled segments
//! ([`controlled`], [`integrate`]) to the segment solver ([`solve`]), its
//! derivative cocycle ([`linearize`]) and the long-run diagnostics in
//! [`ergodic`]. [`config`] and [`cli`] drive batch runs.

pub mod cli;
pub mod config;
pub mod controlled;
pub mod ergodic;
pub mod error;
pub mod field;
pub mod integrate;
pub mod io;
pub mod linearize;
pub mod noise;
pub mod roughpath;
pub mod solve;
