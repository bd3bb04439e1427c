//! Validation toolkit for IRL-based highway driver models: scenario
//! extraction from drone trajectory recordings, reward learning, agent
//! rollouts, and tactical/operational comparison against human behavior.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod irl;
pub mod operational;
pub mod reward;
pub mod rollout;
pub mod scenarios;
pub mod stats;
pub mod synthgen;
pub mod tactical;
pub mod trajdata;

pub use error::{Error, Result};
