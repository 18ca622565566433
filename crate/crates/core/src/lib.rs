//! Partial-information consumption–investment in a hidden bull/bear market
//! with expert-opinion signals.
//!
//! The pipeline runs end to end:
//!
//! * [`market`] and [`density`] define a problem instance and simulate the
//!   full-information world (regime, asset, signal marks).
//! * [`filter`] runs the Kushner–Stratonovich filter for
//!   `π_t = P[α_t = 1 | prices, signals]`.
//! * [`blr`] checks the bounded-likelihood-ratio condition on a signal pair.
//! * [`pide`] solves the dual HJB PIDE for the auxiliary value `Λ̂(t, x)`.
//! * [`strategy`] maps `Λ̂` to dual/primal values and feedback controls.
//! * [`verify`] closes the loop with Monte Carlo estimators.
//! * [`config`] and [`io`] hold the JSON/CSV plumbing used by the CLI.

pub mod blr;
pub mod config;
pub mod density;
pub mod error;
pub mod filter;
pub mod io;
pub mod market;
pub mod pide;
pub mod quadrature;
pub mod rng;
pub mod strategy;
pub mod tridiag;
pub mod verify;

pub use config::ModelConfig;
pub use density::{Density, SignalDensityPair, SignalFamily, Support};
pub use error::{Error, Result};
pub use market::{MarketParams, RegimeParams, UtilityParams, WorldPath};
pub use pide::{PideConfig, ValueSurface};
pub use verify::McReport;
