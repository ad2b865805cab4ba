//! Numerical laboratory for hypergeometric SLE, Loewner chains, multiple-SLE
//! pure partition functions and critical Ising interfaces.

pub mod cascade;
pub mod error;
pub mod geometry;
pub mod ising;
pub mod link_patterns;
pub mod loewner;
pub mod martingale_lab;
pub mod partition_fn;
pub mod special_fn;

pub use error::{Error, Result};
