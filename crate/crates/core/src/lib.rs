//! Adaptive passenger screening as a sequence of Bayesian Stackelberg games.
//!
//! Each arriving passenger is allocated a mixture over screening teams by an
//! actor-critic policy whose output layer is an α-projection onto the
//! passenger category's risk polytope, so every allocation ever executed,
//! including during exploration, respects the defender's risk bound.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod baseline;
pub mod cli;
pub mod env;
pub mod game;
pub mod harness;
pub mod projection;
pub mod rl;
pub mod rng;
pub mod stats;
