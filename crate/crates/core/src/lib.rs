//! Least-squares Monte Carlo pricing of American-style moving-window Asian and
//! look-back options and of issuer-callable snowball and lock-in certificates.

pub mod basis;
pub mod config;
pub mod error;
pub mod experiment;
pub mod features;
pub mod lsmc;
pub mod model;
pub mod oracles;
pub mod payoffs;
pub mod regression;
pub mod selftest;
pub mod sensitivities;

pub use error::{Error, Result};
