//! Ground reaction force and moment estimation from plantar pressure.
//!
//! The crate covers the whole chain: raw insole and force-plate streams are
//! cut into normalized stance samples ([`preprocess`]), training statistics
//! give an anatomical partition and a temporal activation prior ([`priors`]),
//! and a dual-path region-guided attention network ([`model`]) is trained and
//! cross-validated against CNN baselines ([`train`]). [`io`] holds the binary
//! container and checkpoint formats plus a synthetic gait generator, and
//! [`cli`] the command-line front end.

pub mod cli;
pub mod encoding;
mod error;
pub mod io;
pub mod model;
pub mod preprocess;
pub mod priors;
pub mod train;

pub use error::{Error, Result};
pub use plantar_autodiff as autodiff;
