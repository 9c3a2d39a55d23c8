//! Simulation core for a decentralized spatial market in industrial byproducts.
//!
//! Sellers price with a Boltzmann bandit over a discrete grid of price
//! multipliers while buyers accept offers within a personal price tolerance.
//! Each timestep is cleared by a multi-round multilateral auction. Counterfactual
//! regret and the symbiosis index are computed here too, along with the
//! designs and estimators for variance-based sensitivity analysis.
//!
//! The crate is `no_std` and only needs `alloc`. File formats and the CLI
//! live in the `ismarket` crate.

#![no_std]

extern crate alloc;

pub mod auction;
pub mod error;
pub mod learning;
pub mod market;
pub mod metrics;
pub mod regret;
pub mod rng;
pub mod sensitivity;
pub mod simulation;
pub mod spatial;

pub use error::{Error, Result};
pub use market::{price_of, scarcity, seller_reward, Buyer, Contract, FirmLayout, MarketParams, Point, Seller};
