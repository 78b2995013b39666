//! Nonlinear p-Laplacian semigroups on finite weighted graphs, their
//! alpha-stable subordination, and numerical checks of the associated
//! log-Sobolev, Nash and ultracontractive bounds.

pub mod cli;
pub mod error;
pub mod functional;
pub mod quad;
pub mod subordinator;
pub mod pflow;
pub mod space;
pub mod subop;

pub use error::{Error, Result};
