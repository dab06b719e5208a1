//! Distribution privacy for queries answered through recoverable randomized
//! responses: channel constructions, querier estimators, exact and simulated
//! payoffs, and the worst-case, converse and achievability bounds.

pub mod error;
pub mod estimators;
pub mod mechanisms;
pub mod simplex;
pub mod bounds;
pub mod game;
pub mod verify;

pub use error::{Error, Result};
