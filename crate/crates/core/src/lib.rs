// Parameter guards of the form `!(x > 0.0)` must also reject NaN, which the
// lint's suggested rewrite would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Adversarially robust randomized query data structures.
//!
//! Randomized sketches answer isolated queries well, but an adaptive analyst
//! who sees responses can steer later queries into the sketch's blind spots.
//! This crate hardens three such structures (dynamic regression cost
//! maintenance, distance estimation, and kernel density estimation) by
//! replicating them and aggregating answers through a differentially private
//! median, and it ships an attack harness that breaks the unprotected
//! variants empirically.

pub mod attack;
pub mod cli;
pub mod constants;
pub mod io;
pub mod kde;
pub mod distance;
pub mod regression;
pub mod dp;
pub mod error;
pub mod framework;
pub mod leverage;
pub mod linalg;
pub mod rng;
pub mod transforms;

pub use error::{Error, Result};
pub use rng::SeedRng;
