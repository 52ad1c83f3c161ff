//! Simulation toolkit for dynamical measurement models of spontaneous
//! localization: Poisson-timed meter kicks on a position lattice, their
//! multiparticle mixing variant, the diffusive limits, and dense
//! master-equation oracles to check ensembles against.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod diffusive;
pub mod error;
pub mod lattice;
pub mod meter;
pub mod kick;
pub mod jump;
pub mod mixing;
pub mod oracle;
pub mod output;
pub mod verify;

pub use error::{Result, SimError};
