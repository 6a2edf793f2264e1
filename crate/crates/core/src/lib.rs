//! Energy-aware device-to-device LAN formation over a cellular downlink.
//!
//! The crate models one base station multicasting real-time content to `K`
//! mobile users (MUs). Instead of each MU downloading over its own cellular
//! link, the MUs take turns as the *seed* of a short-range multicast tree
//! (a D2D LAN). The pieces are:
//!
//! - [`channel`]: path loss, long-range and short-range bit rates.
//! - [`energy`]: role-based per-slot energy accounting.
//! - [`formation`]: the proposal/acceptance procedure building one tree per seed.
//! - [`lp`]: a small dense two-phase simplex solver.
//! - [`mechanism`]: seed-time scheduling with individual rationality, stage
//!   payoffs, the critical expectation value and the grim-trigger game.
//! - [`scenarios`]: multicast, optimal and MCRCD sessions plus Monte Carlo
//!   aggregation.
#![allow(clippy::needless_range_loop)]

pub mod channel;
pub mod energy;
mod error;
pub mod formation;
pub mod lp;
pub mod mechanism;
pub mod scenarios;

pub use error::{Error, Result};
