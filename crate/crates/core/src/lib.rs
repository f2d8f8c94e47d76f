//! Data-enabled predictive control with a learned scoring function.

pub mod approx;
pub mod container;
pub mod controller;
pub mod deepc;
pub mod error;
pub mod linalg;
pub mod mpc;
pub mod plant;
pub mod score;
pub mod solver;

pub use error::{Error, Result};
