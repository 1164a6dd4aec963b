//! Simulation and moment analytics for the buffer-Hawkes process
//! `X = (Λ, Γ, N)`: a shot-noise limit-order intensity `Λ`, an order book
//! of depth `Γ`, and a counter `N` of executed market orders.

// `!(x < y)` rejects NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster;
pub mod config;
pub mod error;
pub mod estimate;
pub mod exact;
pub mod io;
pub mod moments;
pub mod ode;
pub mod params;
pub mod price;
pub mod quad;
pub mod rng;
pub mod scaling;
pub mod special;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use params::{validate_params, DerivedConstants, ModelParams, RawParams};
