//! Simulator and verification toolkit for the Mean King retrodiction game
//! and the two-way quantum key distribution protocol built on it.

pub mod attack;
pub mod bases;
pub mod cli;
pub mod error;
pub mod io;
pub mod lp;
pub mod protocol;
pub mod qmath;
pub mod retrodiction;
pub mod security;

pub use error::{Error, Result};
