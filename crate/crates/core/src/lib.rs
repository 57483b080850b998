//! Visual-inertial navigation filters on conventional and right-invariant
//! error coordinates.

pub mod audit;
pub mod camera;
pub mod config;
pub mod ekf;
pub mod error;
pub mod invariance;
pub mod lie;
pub mod msckf;
pub mod report;
pub mod sim;
pub mod state;
pub mod triangulation;
pub mod vins;

pub use error::{Error, Result};
