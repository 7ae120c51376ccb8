//! Nested conjugate-gradient solver for optimal control of advection-reaction-diffusion
//! problems where the control is the advecting velocity field.

pub mod config;
pub mod control;
pub mod error;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod optimizer;
pub mod pde;
pub mod problems;
pub mod projection;
pub mod report;
pub mod sparse;
pub mod verify;

pub use error::{Error, Result};
