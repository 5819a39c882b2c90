//! Continual learning with B-spline (Kolmogorov–Arnold) heads.

pub mod cl;
pub mod data;
pub mod error;
pub mod experiment;
pub mod harness;
pub mod layers;
pub mod ntk;
pub mod numerics;
pub mod spline;

pub use error::{Error, Result};
