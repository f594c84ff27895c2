//! Performance modeling, calibration, and design-space exploration for
//! multi-stage corona-discharge electrohydrodynamic (EHD) thrusters.
//!
//! A stacked EHD device accelerates air through a series of corona-discharge
//! stages. Each stage ejects ions from emitter tips into a drift gap where
//! collisions with neutral molecules produce thrust. This crate provides:
//!
//! - [`model`] — the pure forward model: single-stage and stacked force,
//!   volumetric force density, thrust efficiency, and the momentum-theory
//!   velocity cascade across stages. Strict SI units throughout.
//! - [`calibration`] — fits of onset voltage, loss factors, and the
//!   effective ion drift speed from experimental voltage/current/velocity
//!   logs, plus consistency checks against published headline figures.
//! - [`optimizer`] — exhaustive constrained sweeps over stage count, drift
//!   gap, inter-stage spacing, and drift field, reduced to the Pareto
//!   frontier between force density and average thrust efficiency.
//! - [`cli`] — the `ehdstack` command-line front end.

pub mod calibration;
pub mod cli;
pub mod error;
pub mod model;
pub mod optimizer;

pub use error::{Error, Result};
